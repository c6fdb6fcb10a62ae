"""Debiased confidence intervals for high-dimensional estimating equations.

Modules
-------
lp_core    L1-minimal programs ``min ||x||_1 s.t. ||Ax - b||_inf <= lam``
models     estimating equations and variance estimates for six models
kendall    Kendall's tau tables for the rank-based model
inference  estimate, debias, and build the interval
datagen    seeded synthetic designs
harness    Monte Carlo driver, cross-validation, tables
cli        command-line front end
"""

__version__ = "0.1.0"
