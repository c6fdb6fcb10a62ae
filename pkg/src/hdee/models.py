"""Affine estimating equations ``t(Z, beta) = jac @ beta - rhs`` for six models.

Supported kinds:

* ``linear``  -- Dantzig selector, ``t = X'(X beta - y) / n``
* ``ivr``     -- instrumental variables, ``t = W'(X beta - y) / n``
* ``clime``   -- one precision-matrix column, ``t = Sigma_n beta - e_m``
* ``skeptic`` -- same with the Kendall's tau correlation surrogate
* ``lda``     -- sparse discriminant direction, ``t = Sigma_pooled beta - (xbar - ybar)``
* ``var1``    -- one column of a VAR(1) transition matrix, ``t = S0 beta - S1[:, m]``

Indices (``target``, ``column``) are zero-based.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

from . import kendall
from .errors import DegenerateData, DimensionMismatch, NegativeVariance, NonFiniteInput

__all__ = [
    "EquationMatrices",
    "GraphData",
    "IvrData",
    "Kind",
    "LdaData",
    "LinearData",
    "ModelInstance",
    "VarData",
    "assemble",
    "estimate_delta",
    "estimate_delta_clime_gaussian",
    "eval_equation",
]

NEGATIVE_VARIANCE_TOL = 1e-6


class Kind(str, enum.Enum):
    LINEAR = "linear"
    IVR = "ivr"
    CLIME = "clime"
    SKEPTIC = "skeptic"
    LDA = "lda"
    VAR1 = "var1"


def _matrix(a, name) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NonFiniteInput(f"{name} contains NaN or infinite entries")
    return a


def _vector(a, name) -> np.ndarray:
    a = np.asarray(a, dtype=float).ravel()
    if not np.isfinite(a).all():
        raise NonFiniteInput(f"{name} contains NaN or infinite entries")
    return a


@dataclass(frozen=True)
class LinearData:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X, y = _matrix(self.X, "X"), _vector(self.y, "y")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def n_obs(self):
        return self.X.shape[0]


@dataclass(frozen=True)
class IvrData:
    X: np.ndarray
    W: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X, W, y = _matrix(self.X, "X"), _matrix(self.W, "W"), _vector(self.y, "y")
        if X.shape != W.shape or X.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"inconsistent shapes X {X.shape}, W {W.shape}, y {y.shape}"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "y", y)

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def n_obs(self):
        return self.X.shape[0]


@dataclass(frozen=True)
class GraphData:
    """Observations for the ``clime`` and ``skeptic`` kinds."""

    X: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "X", _matrix(self.X, "X"))

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def n_obs(self):
        return self.X.shape[0]


@dataclass(frozen=True)
class LdaData:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X, Y = _matrix(self.X, "X"), _matrix(self.Y, "Y")
        if X.shape[1] != Y.shape[1]:
            raise DimensionMismatch(f"X has {X.shape[1]} columns but Y has {Y.shape[1]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def n_obs(self):
        return self.X.shape[0] + self.Y.shape[0]


@dataclass(frozen=True)
class VarData:
    """Time-ordered rows ``X[0], ..., X[T-1]``."""

    X: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "X", _matrix(self.X, "X"))

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def n_obs(self):
        return self.X.shape[0]


Dataset = Union[LinearData, IvrData, GraphData, LdaData, VarData]

_DATA_TYPES = {
    Kind.LINEAR: LinearData,
    Kind.IVR: IvrData,
    Kind.CLIME: GraphData,
    Kind.SKEPTIC: GraphData,
    Kind.LDA: LdaData,
    Kind.VAR1: VarData,
}

_NEEDS_COLUMN = {Kind.CLIME, Kind.SKEPTIC, Kind.VAR1}


@dataclass(frozen=True)
class EquationMatrices:
    jac: np.ndarray
    rhs: np.ndarray

    @property
    def dim(self) -> int:
        return self.rhs.shape[0]


@dataclass(frozen=True)
class ModelInstance:
    """A dataset bound to one estimating equation and a target coordinate."""

    kind: Kind
    data: Dataset
    target: int = 0
    column: int | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        expected = _DATA_TYPES[kind]
        if not isinstance(self.data, expected):
            raise TypeError(f"{kind.value} model needs {expected.__name__}, got {type(self.data).__name__}")
        d = self.data.dim
        if not 0 <= self.target < d:
            raise IndexError(f"target {self.target} out of range for dimension {d}")
        if kind in _NEEDS_COLUMN:
            if self.column is None or not 0 <= self.column < d:
                raise IndexError(f"{kind.value} model needs a column index in [0, {d})")

    @property
    def dim(self) -> int:
        return self.data.dim

    @property
    def n_eff(self) -> int:
        """Sample size in the CLT scaling (``T`` for the VAR model)."""
        return self.data.n_obs

    @cached_property
    def kendall(self) -> kendall.KendallTables:
        return kendall.kendall_tables(self.data.X)

    @cached_property
    def equations(self) -> EquationMatrices:
        return _assemble(self)


def _require(n: int, what: str):
    if n < 2:
        raise DegenerateData(f"{what} must be at least 2, got {n}")


def _unit(d: int, m: int) -> np.ndarray:
    e = np.zeros(d)
    e[m] = 1.0
    return e


def _var_moments(X: np.ndarray):
    T = X.shape[0]
    S0 = X.T @ X / T
    S1 = X[:-1].T @ X[1:] / (T - 1)
    return S0, S1


def _lda_pooled(X: np.ndarray, Y: np.ndarray):
    n1, n2 = X.shape[0], Y.shape[0]
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    # (n1/n) * Xc'Xc/n1 + (n2/n) * Yc'Yc/n2
    return (Xc.T @ Xc + Yc.T @ Yc) / (n1 + n2), Xc, Yc


def _assemble(model: ModelInstance) -> EquationMatrices:
    data, kind = model.data, model.kind
    if kind is Kind.LINEAR:
        _require(data.n_obs, "n")
        n = data.n_obs
        return EquationMatrices(data.X.T @ data.X / n, data.X.T @ data.y / n)
    if kind is Kind.IVR:
        _require(data.n_obs, "n")
        n = data.n_obs
        return EquationMatrices(data.W.T @ data.X / n, data.W.T @ data.y / n)
    if kind is Kind.CLIME:
        _require(data.n_obs, "n")
        return EquationMatrices(data.X.T @ data.X / data.n_obs, _unit(data.dim, model.column))
    if kind is Kind.SKEPTIC:
        _require(data.n_obs, "n")
        return EquationMatrices(model.kendall.s_tau, _unit(data.dim, model.column))
    if kind is Kind.LDA:
        _require(data.X.shape[0], "n1")
        _require(data.Y.shape[0], "n2")
        pooled, _, _ = _lda_pooled(data.X, data.Y)
        return EquationMatrices(pooled, data.X.mean(axis=0) - data.Y.mean(axis=0))
    if kind is Kind.VAR1:
        _require(data.n_obs, "T")
        S0, S1 = _var_moments(data.X)
        return EquationMatrices(S0, S1[:, model.column].copy())
    raise ValueError(f"unknown model kind {kind}")


def assemble(model: ModelInstance) -> EquationMatrices:
    """Jacobian and offset of the model's affine estimating equation."""
    return model.equations


def eval_equation(em: EquationMatrices, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != em.dim:
        raise DimensionMismatch(f"beta has length {beta.shape[0]}, expected {em.dim}")
    return em.jac @ beta - em.rhs


def _clamp(value: float, kind: Kind) -> tuple[float, bool]:
    if value >= 0:
        return value, False
    if value < -NEGATIVE_VARIANCE_TOL:
        raise NegativeVariance(f"{kind.value} variance estimate is {value:.3g}")
    return 0.0, True


def delta_estimate(model: ModelInstance, beta_hat, v_hat) -> tuple[float, bool]:
    """Variance estimate and whether it was clamped up to zero."""
    d = model.dim
    b = _vector(beta_hat, "beta_hat")
    v = _vector(v_hat, "v_hat")
    if b.shape[0] != d or v.shape[0] != d:
        raise DimensionMismatch(f"beta_hat and v_hat must have length {d}")
    data, kind = model.data, model.kind

    if kind is Kind.LINEAR:
        em = model.equations
        resid = data.y - data.X @ b
        return float(v @ em.jac @ v * np.mean(resid**2)), False
    if kind is Kind.IVR:
        resid = data.y - data.X @ b
        return float(np.mean(((data.W @ v) * resid) ** 2)), False
    if kind is Kind.CLIME:
        X = data.X
        sigma = X.T @ X / X.shape[0]
        # v' (x x' - Sigma_n) b = (v'x)(x'b) - v' Sigma_n b
        terms = (X @ v) * (X @ b) - v @ sigma @ b
        return float(np.mean(terms**2)), False
    if kind is Kind.SKEPTIC:
        theta = model.kendall.theta_i
        terms = np.einsum("j,ijk,k->i", v, theta, b)
        return float(np.mean(terms**2)), False
    if kind is Kind.LDA:
        X, Y = data.X, data.Y
        n1, n2 = X.shape[0], Y.shape[0]
        n = n1 + n2
        Xc = X - X.mean(axis=0)
        Yc = Y - Y.mean(axis=0)
        xv, xb = Xc @ v, Xc @ b
        yv, yb = Yc @ v, Yc @ b
        value = (
            np.sum((xv * xb) ** 2) / n
            + np.sum((n / n1 * xv) ** 2) / n
            + np.sum((yv * yb) ** 2) / n
            + np.sum((n / n2 * yv) ** 2) / n
            - (v @ (X.mean(axis=0) - Y.mean(axis=0))) ** 2
        )
        return _clamp(float(value), kind)
    if kind is Kind.VAR1:
        S0 = model.equations.jac
        m = model.column
        value = (S0[m, m] - b @ S0 @ b) * (v @ S0 @ v)
        return _clamp(float(value), kind)
    raise ValueError(f"unknown model kind {kind}")


def estimate_delta(model: ModelInstance, beta_hat, v_hat) -> float:
    """Model-specific estimate of the asymptotic variance of the debiased root.

    Values in ``[-1e-6, 0)`` (possible for ``lda`` and ``var1``) are clamped to
    zero with a warning; anything more negative raises ``NegativeVariance``.
    """
    value, clamped = delta_estimate(model, beta_hat, v_hat)
    if clamped:
        warnings.warn(f"{model.kind.value} variance estimate clamped to 0", RuntimeWarning, stacklevel=2)
    return value


def estimate_delta_clime_gaussian(v_hat, beta_hat, target: int, column: int) -> float:
    """Gaussian-only variance estimate ``v_j b_m + v_m b_j``.

    Under normality Isserlis' theorem gives
    ``Var(v' x x' b) = (v' S v)(b' S b) + (v' S b)^2``; with ``v, b`` the
    ``j``-th and ``m``-th precision columns this is ``O_jj O_mm + O_jm^2``.
    """
    v = np.asarray(v_hat, dtype=float).ravel()
    b = np.asarray(beta_hat, dtype=float).ravel()
    return float(v[target] * b[column] + v[column] * b[target])
