"""Kendall's tau tables for the rank-based (SKEPTIC) covariance surrogate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateData, OutOfRange

__all__ = [
    "KendallTables",
    "kendall_tables",
    "kendall_tau",
    "leave_one_out_theta",
    "skeptic_transform",
]


@dataclass(frozen=True)
class KendallTables:
    tau: np.ndarray
    s_tau: np.ndarray
    theta_i: np.ndarray  # shape (n, d, d)


def _pair_signs(X: np.ndarray) -> np.ndarray:
    """``sign(X_ij - X_i'j)`` as an array of shape ``(d, n, n)``."""
    return np.sign(X.T[:, :, None] - X.T[:, None, :])


def _check(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d data matrix, got shape {X.shape}")
    if X.shape[0] < 2:
        raise DegenerateData(f"Kendall's tau needs n >= 2 rows, got {X.shape[0]}")
    return X


def kendall_tau(X) -> np.ndarray:
    """Pairwise Kendall's tau-a of the columns of ``X``.

    Ties contribute ``sign(0) = 0``; the diagonal is set to 1.
    """
    X = _check(X)
    n, d = X.shape
    sg = _pair_signs(X).reshape(d, n * n)
    # each unordered pair of rows appears twice in the n x n sign grid
    tau = (sg @ sg.T) / (n * (n - 1))
    np.fill_diagonal(tau, 1.0)
    return tau


def skeptic_transform(tau) -> np.ndarray:
    """``sin(pi/2 * tau)`` off the diagonal, 1 on it."""
    tau = np.asarray(tau, dtype=float)
    if np.any(np.abs(tau) > 1 + 1e-12):
        raise OutOfRange("Kendall's tau entries must lie in [-1, 1]")
    s = np.sin(0.5 * np.pi * np.clip(tau, -1.0, 1.0))
    np.fill_diagonal(s, 1.0)
    return s


def leave_one_out_theta(X, tau=None) -> np.ndarray:
    """Per-observation matrices feeding the rank-based variance estimate.

    For observation ``i``::

        tau_i[j, k] = mean over i' != i of sign((X_ij - X_i'j)(X_ik - X_i'k)) - tau[j, k]
        theta_i[j, k] = pi * cos(pi/2 * tau[j, k]) * tau_i[j, k]

    Returns an array of shape ``(n, d, d)``. The ``n`` matrices sum to zero.
    """
    X = _check(X)
    n, d = X.shape
    if tau is None:
        tau = kendall_tau(X)
    tau = np.asarray(tau, dtype=float)
    # (n, d, n) with the i' = i entry zero
    sg = _pair_signs(X).transpose(1, 0, 2)
    loo = np.matmul(sg, sg.transpose(0, 2, 1)) / (n - 1)
    loo -= tau[None, :, :]
    return np.pi * np.cos(0.5 * np.pi * tau)[None, :, :] * loo


def kendall_tables(X) -> KendallTables:
    tau = kendall_tau(X)
    return KendallTables(tau=tau, s_tau=skeptic_transform(tau), theta_i=leave_one_out_theta(X, tau))
