"""Seeded synthetic designs for every model kind.

All randomness comes from a ``numpy.random.Generator`` on PCG64 with ziggurat
normals. Replicate ``r`` of an experiment seeded with ``s`` draws from
``SeedSequence(s, spawn_key=(r,))``, so streams are disjoint and independent
of execution order.

Designs
-------
linear
    Rows of ``X`` i.i.d. ``N(0, T(rho))`` with ``T(rho)_ij = rho^|i-j|``,
    ``y = X beta* + N(0, 1)``.
ivr
    ``W`` rows i.i.d. ``N(0, T(rho))``, ``X = gamma W + E`` with
    ``E ~ N(0, noise^2 I)``, ``eps = 0.5 * mean_k E_k + eta`` with
    ``eta ~ N(0, 0.75)``. ``X`` is endogenous while ``E[W eps] = 0``.
clime
    Tridiagonal precision (unit diagonal, ``rho`` off it), ``X ~ N(0, Omega^-1)``.
skeptic
    Same precision rescaled so the latent covariance is a correlation matrix,
    then ``X_j = f(Z_j) / sqrt(E f(Z)^2)`` with ``f(t) = sign(t) |t|^alpha``.
lda
    ``X = U``, ``Y = -Sigma beta* + U`` with ``U ~ N(0, T(rho))``.
var1
    ``X_t = A' X_{t-1} + W_t``, ``W_t ~ N(0, I)``, started from the stationary law.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, special

from .errors import BadSpec, NotPositiveDefinite, Unstable
from .models import (
    EquationMatrices,
    GraphData,
    IvrData,
    Kind,
    LdaData,
    LinearData,
    VarData,
)

__all__ = [
    "BetaMode",
    "GeneratedData",
    "GeneratorSpec",
    "Truth",
    "abs_moment",
    "default_var_matrix",
    "gen_ggm",
    "gen_ivr",
    "gen_lda",
    "gen_linear",
    "gen_transelliptical",
    "gen_var1",
    "generate",
    "replicate_rng",
    "stationary_covariance",
    "toeplitz",
    "tridiagonal_precision",
]

IVR_GAMMA = 0.8
IVR_NOISE_SD = 0.6
IVR_ETA_VAR = 0.75
VAR_SCALE = 0.5
VAR_NORM_CAP = 0.9


class BetaMode(str, enum.Enum):
    DIRAC = "dirac"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters for one synthetic design.

    ``n`` is the sample size (``T`` for ``var1``); ``lda`` uses ``n1`` and
    ``n2``, which default to ``n // 2`` and ``n - n // 2``.
    """

    kind: Kind
    d: int
    n: int | None = None
    rho: float = 0.0
    beta_mode: BetaMode = BetaMode.DIRAC
    alpha_power: float = 5.0
    seed: int = 0
    n1: int | None = None
    n2: int | None = None
    # ivr design knobs
    ivr_gamma: float = IVR_GAMMA
    ivr_noise: float = IVR_NOISE_SD

    def __post_init__(self):
        try:
            kind = Kind(self.kind)
            mode = self.beta_mode
            if not isinstance(mode, BetaMode):
                mode = BetaMode(str(mode).lower())
        except ValueError as exc:
            raise BadSpec(str(exc)) from None
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "beta_mode", mode)
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise BadSpec(f"d must be a positive integer, got {self.d!r}")
        if not np.isfinite(self.rho):
            raise BadSpec("rho must be finite")
        if kind in (Kind.LINEAR, Kind.IVR, Kind.LDA) and not abs(self.rho) < 1:
            raise BadSpec(f"Toeplitz designs need |rho| < 1, got {self.rho}")
        if not self.alpha_power > 0:
            raise BadSpec(f"alpha_power must be positive, got {self.alpha_power}")
        if not 0 <= int(self.seed) < 2**64:
            raise BadSpec("seed must be a 64-bit unsigned integer")
        if kind is Kind.LDA:
            n1, n2 = self.n1, self.n2
            if n1 is None or n2 is None:
                if self.n is None:
                    raise BadSpec("lda design needs n1 and n2 (or n)")
                n1 = self.n // 2 if n1 is None else n1
                n2 = self.n - n1 if n2 is None else n2
            if n1 < 2 or n2 < 2:
                raise BadSpec(f"lda design needs n1, n2 >= 2, got {n1}, {n2}")
            object.__setattr__(self, "n1", int(n1))
            object.__setattr__(self, "n2", int(n2))
            object.__setattr__(self, "n", int(n1 + n2))
        elif self.n is None or self.n < 2:
            raise BadSpec(f"sample size must be at least 2, got {self.n!r}")


@dataclass(frozen=True)
class Truth:
    """Population quantities of a generated design.

    ``beta_star`` is the exact root of the population estimating equation for
    the chosen ``column`` (``None`` for the regression kinds, whose equation
    has no column).
    """

    beta_star: np.ndarray
    population: EquationMatrices
    column: int | None = None
    matrices: dict = field(default_factory=dict, repr=False)

    def theta_star(self, target: int) -> float:
        return float(self.beta_star[target])


@dataclass(frozen=True)
class GeneratedData:
    dataset: object
    truth: Truth
    spec: GeneratorSpec

    def theta_star(self, target: int) -> float:
        return self.truth.theta_star(target)


def replicate_rng(seed: int, replicate: int | None = None) -> np.random.Generator:
    """Generator for ``seed`` or for one replicate stream derived from it."""
    if replicate is None:
        ss = np.random.SeedSequence(int(seed))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.PCG64(ss))


def toeplitz(d: int, rho: float) -> np.ndarray:
    """``T_ij = rho^|i-j|`` (with ``0^0 = 1``)."""
    idx = np.arange(d)
    lag = np.abs(idx[:, None] - idx[None, :])
    return np.where(lag == 0, 1.0, float(rho) ** lag.astype(float))


def tridiagonal_precision(d: int, rho: float) -> np.ndarray:
    omega = np.eye(d)
    if d > 1:
        off = np.arange(d - 1)
        omega[off, off + 1] = rho
        omega[off + 1, off] = rho
    return omega


def _cholesky(S: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"{what} is not positive definite") from None


def _gaussian(rng, n: int, chol: np.ndarray) -> np.ndarray:
    return rng.standard_normal((n, chol.shape[0])) @ chol.T


def _beta_star(spec: GeneratorSpec, rng) -> np.ndarray:
    beta = np.zeros(spec.d)
    s = min(3, spec.d)
    if spec.beta_mode is BetaMode.DIRAC:
        beta[:s] = 1.0
    else:
        beta[:s] = rng.uniform(0.0, 2.0, size=s)
    return beta


def _unit(d, m):
    e = np.zeros(d)
    e[m] = 1.0
    return e


def _check_kind(spec: GeneratorSpec, *kinds: Kind):
    if spec.kind not in kinds:
        raise BadSpec(f"generator expects kind in {[k.value for k in kinds]}, got {spec.kind.value}")


def _rng(spec: GeneratorSpec, rng):
    return replicate_rng(spec.seed) if rng is None else rng


def gen_linear(spec: GeneratorSpec, rng=None, column=None) -> GeneratedData:
    _check_kind(spec, Kind.LINEAR)
    rng = _rng(spec, rng)
    sigma = toeplitz(spec.d, spec.rho)
    beta = _beta_star(spec, rng)
    X = _gaussian(rng, spec.n, _cholesky(sigma, "Toeplitz covariance"))
    y = X @ beta + rng.standard_normal(spec.n)
    truth = Truth(beta, EquationMatrices(sigma, sigma @ beta), matrices={"sigma": sigma})
    return GeneratedData(LinearData(X, y), truth, spec)


def gen_ivr(spec: GeneratorSpec, rng=None, column=None) -> GeneratedData:
    _check_kind(spec, Kind.IVR)
    rng = _rng(spec, rng)
    d, n = spec.d, spec.n
    sigma_w = toeplitz(d, spec.rho)
    beta = _beta_star(spec, rng)
    W = _gaussian(rng, n, _cholesky(sigma_w, "instrument covariance"))
    E = spec.ivr_noise * rng.standard_normal((n, d))
    eta = math.sqrt(IVR_ETA_VAR) * rng.standard_normal(n)
    X = spec.ivr_gamma * W + E
    eps = 0.5 * E.mean(axis=1) + eta
    y = X @ beta + eps
    sigma_wx = spec.ivr_gamma * sigma_w
    truth = Truth(beta, EquationMatrices(sigma_wx, sigma_wx @ beta), matrices={"sigma_w": sigma_w})
    return GeneratedData(IvrData(X, W, y), truth, spec)


def _column(spec, column) -> int:
    m = 1 if column is None else int(column)
    if not 0 <= m < spec.d:
        raise BadSpec(f"column {m} out of range for d = {spec.d}")
    return m


def gen_ggm(spec: GeneratorSpec, rng=None, column=None) -> GeneratedData:
    """Gaussian graphical design; ``column`` (zero-based, default 1) fixes the truth."""
    _check_kind(spec, Kind.CLIME, Kind.SKEPTIC)
    rng = _rng(spec, rng)
    m = _column(spec, column)
    omega = tridiagonal_precision(spec.d, spec.rho)
    _cholesky(omega, "tridiagonal precision")
    sigma = np.linalg.inv(omega)
    sigma = 0.5 * (sigma + sigma.T)
    X = _gaussian(rng, spec.n, _cholesky(sigma, "covariance"))
    truth = Truth(omega[:, m].copy(), EquationMatrices(sigma, _unit(spec.d, m)), column=m,
                  matrices={"omega": omega, "sigma": sigma})
    return GeneratedData(GraphData(X), truth, spec)


def abs_moment(p: float) -> float:
    """``E|Z|^p`` for ``Z ~ N(0, 1)``: ``2^(p/2) Gamma((p+1)/2) / sqrt(pi)``.

    For even integer ``p`` this is the double factorial ``(p-1)!!``.
    """
    if float(p).is_integer() and p % 2 == 0:
        return float(special.factorial2(int(p) - 1, exact=True)) if p > 0 else 1.0
    return 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)


def gen_transelliptical(spec: GeneratorSpec, rng=None, column=None) -> GeneratedData:
    """Gaussian copula with power marginals ``sign(t)|t|^alpha`` scaled to unit variance."""
    _check_kind(spec, Kind.SKEPTIC, Kind.CLIME)
    rng = _rng(spec, rng)
    m = _column(spec, column)
    omega0 = tridiagonal_precision(spec.d, spec.rho)
    _cholesky(omega0, "tridiagonal precision")
    sigma0 = np.linalg.inv(omega0)
    scale = 1.0 / np.sqrt(np.diag(sigma0))
    sigma = sigma0 * scale[:, None] * scale[None, :]
    sigma = 0.5 * (sigma + sigma.T)
    np.fill_diagonal(sigma, 1.0)
    # inverse of D^-1/2 S D^-1/2 is D^1/2 O D^1/2
    omega = omega0 / (scale[:, None] * scale[None, :])
    Z = _gaussian(rng, spec.n, _cholesky(sigma, "latent correlation"))
    a = spec.alpha_power
    X = np.sign(Z) * np.abs(Z) ** a / math.sqrt(abs_moment(2 * a))
    truth = Truth(omega[:, m].copy(), EquationMatrices(sigma, _unit(spec.d, m)), column=m,
                  matrices={"omega": omega, "sigma": sigma, "latent": Z})
    return GeneratedData(GraphData(X), truth, spec)


def gen_lda(spec: GeneratorSpec, rng=None, column=None, mu1=None, mu2=None) -> GeneratedData:
    """Two Gaussian classes with common Toeplitz covariance.

    By default ``mu1 = 0`` and ``mu2 = -Sigma beta*`` so the discriminant
    direction ``Sigma^-1 (mu1 - mu2)`` is the Dirac/Uniform ``beta*``.
    """
    _check_kind(spec, Kind.LDA)
    rng = _rng(spec, rng)
    d = spec.d
    sigma = toeplitz(d, spec.rho)
    if mu1 is None and mu2 is None:
        beta = _beta_star(spec, rng)
        mu1 = np.zeros(d)
        mu2 = -sigma @ beta
    else:
        mu1 = np.zeros(d) if mu1 is None else np.asarray(mu1, dtype=float)
        mu2 = np.zeros(d) if mu2 is None else np.asarray(mu2, dtype=float)
        beta = np.linalg.solve(sigma, mu1 - mu2)
    chol = _cholesky(sigma, "Toeplitz covariance")
    U = _gaussian(rng, spec.n1 + spec.n2, chol)
    X = mu1 + U[: spec.n1]
    Y = mu2 + U[spec.n1:]
    delta = mu1 - mu2
    truth = Truth(beta, EquationMatrices(sigma, delta),
                  matrices={"sigma": sigma, "mu1": mu1, "mu2": mu2, "delta": delta})
    return GeneratedData(LdaData(X, Y), truth, spec)


def default_var_matrix(d: int, rho: float) -> np.ndarray:
    """``0.5 (I + rho * superdiagonal)``, rescaled if its spectral norm exceeds 0.9."""
    band = np.eye(d)
    if d > 1:
        i = np.arange(d - 1)
        band[i, i + 1] = rho
    A = VAR_SCALE * band
    norm = np.linalg.norm(A, 2)
    if norm > VAR_NORM_CAP:
        A *= VAR_NORM_CAP / norm
    return A


def stationary_covariance(A, psi=None) -> np.ndarray:
    """``Sigma0`` solving ``Sigma0 = A' Sigma0 A + Psi``."""
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    psi = np.eye(d) if psi is None else np.asarray(psi, dtype=float)
    if np.linalg.norm(A, 2) >= 1:
        raise Unstable(f"transition matrix has spectral norm {np.linalg.norm(A, 2):.4g} >= 1")
    # scipy solves X = a X a^H + q
    S = linalg.solve_discrete_lyapunov(A.T, psi)
    return 0.5 * (S + S.T)


def gen_var1(spec: GeneratorSpec, rng=None, column=None, A=None, psi=None) -> GeneratedData:
    """Stationary Gaussian VAR(1); ``column`` (zero-based, default 1) fixes the truth ``A[:, m]``."""
    _check_kind(spec, Kind.VAR1)
    rng = _rng(spec, rng)
    d, T = spec.d, spec.n
    m = _column(spec, column)
    A = default_var_matrix(d, spec.rho) if A is None else np.asarray(A, dtype=float)
    psi = np.eye(d) if psi is None else np.asarray(psi, dtype=float)
    sigma0 = stationary_covariance(A, psi)
    chol_psi = _cholesky(psi, "innovation covariance")
    X = np.empty((T, d))
    X[0] = _cholesky(sigma0, "stationary covariance") @ rng.standard_normal(d)
    noise = _gaussian(rng, T - 1, chol_psi)
    At = A.T
    for t in range(1, T):
        X[t] = At @ X[t - 1] + noise[t - 1]
    sigma1 = sigma0 @ A
    truth = Truth(A[:, m].copy(), EquationMatrices(sigma0, sigma1[:, m].copy()), column=m,
                  matrices={"A": A, "psi": psi, "sigma0": sigma0, "sigma1": sigma1})
    return GeneratedData(VarData(X), truth, spec)


_DEFAULT = {
    Kind.LINEAR: gen_linear,
    Kind.IVR: gen_ivr,
    Kind.CLIME: gen_ggm,
    Kind.SKEPTIC: gen_transelliptical,
    Kind.LDA: gen_lda,
    Kind.VAR1: gen_var1,
}


def generate(spec: GeneratorSpec, rng=None, column=None) -> GeneratedData:
    """Dispatch to the default design for ``spec.kind``."""
    return _DEFAULT[spec.kind](spec, rng=rng, column=column)


def with_seed(spec: GeneratorSpec, seed: int) -> GeneratorSpec:
    return replace(spec, seed=seed)
