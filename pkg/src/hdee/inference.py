"""Debiased inference for one coordinate of an affine estimating equation.

Pipeline for target coordinate ``j``:

1. ``beta_hat = argmin ||b||_1  s.t. ||jac b - rhs||_inf <= lam``
2. ``v_hat    = argmin ||v||_1  s.t. ||jac' v - e_j||_inf <= lam_prime``
3. ``theta_tilde`` is the root in ``theta`` of ``v_hat' t(beta_hat with b_j := theta)``
4. ``(1 - alpha)`` interval ``theta_tilde -+ z * sqrt(delta_hat / n_eff)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Sequence, Union

import numpy as np

from . import models
from .errors import BadAlpha, DegenerateProjection, InfeasibleProgram, NumericalError
from .lp_core import DantzigProblem, LpSolution, SolverConfig, Status, min_feasible_lambda, solve_dantzig
from .models import Kind, ModelInstance

__all__ = [
    "CrossValidation",
    "Diagnostics",
    "FixedFormula",
    "FixedValue",
    "InferenceResult",
    "confidence_interval",
    "estimate_beta",
    "estimate_projection",
    "normal_quantile",
    "resolve_lambda",
    "run_inference",
    "solve_clime",
    "solve_theta",
    "solve_theta_bisection",
]

DENOMINATOR_TOL = 1e-10
ROOT_TOL = 1e-10
# a tuning value below the feasibility floor is replaced by this multiple of it
FLOOR_MARGIN = 1.1


@dataclass(frozen=True)
class FixedFormula:
    """``lam = c * sqrt(log d / n_eff)``."""

    c: float

    def __post_init__(self):
        if not self.c >= 0:
            raise ValueError(f"formula constant must be nonnegative, got {self.c}")


@dataclass(frozen=True)
class FixedValue:
    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"tuning value must be nonnegative, got {self.value}")


@dataclass(frozen=True)
class CrossValidation:
    """K-fold selection over ``grid``.

    With ``relative=True`` the grid holds multipliers of ``sqrt(log d / n_eff)``.
    """

    grid: tuple[float, ...]
    folds: int = 10
    relative: bool = False

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise ValueError("cross-validation grid must not be empty")
        if any(not g >= 0 for g in grid):
            raise ValueError("cross-validation grid values must be nonnegative")
        if self.folds < 2:
            raise ValueError(f"need at least 2 folds, got {self.folds}")
        object.__setattr__(self, "grid", grid)


TuningRule = Union[FixedFormula, FixedValue, CrossValidation]


@dataclass(frozen=True)
class Diagnostics:
    lp_status_beta: Status
    lp_status_v: Status
    residual_beta: float
    residual_v: float
    iterations_beta: int = 0
    iterations_v: int = 0
    delta_clamped: bool = False
    lam_raised: bool = False
    lam_prime_raised: bool = False


@dataclass(frozen=True)
class InferenceResult:
    beta_hat: np.ndarray
    v_hat: np.ndarray
    theta_tilde: float
    delta_hat: float
    ci_lo: float
    ci_hi: float
    alpha: float
    u_denominator: float
    n_eff: int
    lam: float
    lam_prime: float
    diagnostics: Diagnostics = field(repr=False)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_hi - self.ci_lo)

    def studentized(self, theta_star: float) -> float:
        """``sqrt(n_eff) (theta_tilde - theta_star) / sqrt(delta_hat)``."""
        if self.delta_hat <= 0:
            return math.copysign(math.inf, self.theta_tilde - theta_star) if self.theta_tilde != theta_star else 0.0
        return math.sqrt(self.n_eff) * (self.theta_tilde - theta_star) / math.sqrt(self.delta_hat)


def formula_scale(model: ModelInstance) -> float:
    d, n = model.dim, model.n_eff
    return math.sqrt(math.log(d) / n) if d > 1 else math.sqrt(1.0 / n)


def resolve_lambda(rule: TuningRule, model: ModelInstance, rng=None) -> float:
    if isinstance(rule, FixedValue):
        return rule.value
    if isinstance(rule, FixedFormula):
        return rule.c * formula_scale(model)
    if isinstance(rule, CrossValidation):
        from .harness import cross_validate_lambda

        grid = rule.grid
        if rule.relative:
            grid = tuple(g * formula_scale(model) for g in grid)
        return cross_validate_lambda(model, grid, rule.folds, rng=rng)
    raise TypeError(f"unknown tuning rule {rule!r}")


def _checked(solution: LpSolution, what: str) -> LpSolution:
    if solution.status is not Status.OPTIMAL:
        raise InfeasibleProgram(f"{what} program ended with status {solution.status.value}")
    return solution


def _beta_system(model: ModelInstance):
    em = model.equations
    return em.jac, em.rhs


def _projection_system(model: ModelInstance):
    e = np.zeros(model.dim)
    e[model.target] = 1.0
    return model.equations.jac.T, e


def _beta_program(model: ModelInstance, lam: float, config=None) -> LpSolution:
    A, b = _beta_system(model)
    return _checked(solve_dantzig(DantzigProblem(A, b, lam), config), "beta")


def _projection_program(model: ModelInstance, lam_prime: float, config=None) -> LpSolution:
    A, b = _projection_system(model)
    return _checked(solve_dantzig(DantzigProblem(A, b, lam_prime), config), "projection")


def floored(A, b, lam: float, margin: float | None = FLOOR_MARGIN) -> tuple[float, bool]:
    """``lam``, or ``margin`` times the feasibility floor when ``lam`` is below it.

    With ``margin=None`` the value is returned unchanged. The floor is
    positive only when ``b`` is outside the column space of ``A``, which
    happens for rank-deficient Jacobians (``d > n``).
    """
    if margin is None:
        return lam, False
    floor = min_feasible_lambda(A, b)
    if floor == 0 or lam > floor:
        return lam, False
    return margin * floor, True


def estimate_beta(model: ModelInstance, lam: float, config: SolverConfig | None = None) -> np.ndarray:
    """L1-minimal ``beta`` with ``||t(Z, beta)||_inf <= lam``."""
    return _beta_program(model, lam, config).x


def estimate_projection(model: ModelInstance, lam_prime: float, config: SolverConfig | None = None) -> np.ndarray:
    """L1-minimal ``v`` with ``||v' jac - e_j||_inf <= lam_prime``.

    The Jacobian of every supported equation is constant in ``beta``, so
    the program does not depend on ``beta_hat``.
    """
    return _projection_program(model, lam_prime, config).x


def _projected(model: ModelInstance, beta, v, theta: float) -> float:
    b = np.array(beta, dtype=float)
    b[model.target] = theta
    return float(v @ models.eval_equation(model.equations, b))


def solve_theta(model: ModelInstance, beta_hat, v_hat) -> float:
    """Root of the projected equation in the target coordinate (closed form)."""
    em = model.equations
    j = model.target
    b = np.asarray(beta_hat, dtype=float)
    v = np.asarray(v_hat, dtype=float)
    denom = float(v @ em.jac[:, j])
    if abs(denom) < DENOMINATOR_TOL:
        raise DegenerateProjection(f"projected Jacobian entry {denom:.3g} is numerically zero")
    theta = b[j] - float(v @ models.eval_equation(em, b)) / denom
    # one refinement pass absorbs rounding in the closed form
    theta -= _projected(model, b, v, theta) / denom
    resid = _projected(model, b, v, theta)
    if abs(resid) > ROOT_TOL:
        raise NumericalError(f"projected equation residual {resid:.3g} at the computed root")
    return theta


def solve_theta_bisection(model: ModelInstance, beta_hat, v_hat, half_width: float = 1e3, max_iter: int = 200) -> float:
    """Bracketing root of the projected equation around ``beta_hat[j]``.

    Used to cross-check :func:`solve_theta`; the map is affine in theta so the
    bracket holds a single sign change whenever the slope is nonzero.
    """
    center = float(np.asarray(beta_hat, dtype=float)[model.target])
    lo, hi = center - half_width, center + half_width
    g_lo = _projected(model, beta_hat, v_hat, lo)
    g_hi = _projected(model, beta_hat, v_hat, hi)
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    if np.sign(g_lo) == np.sign(g_hi):
        raise DegenerateProjection("projected equation has no sign change on the bracket")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        g_mid = _projected(model, beta_hat, v_hat, mid)
        if g_mid == 0:
            return mid
        if np.sign(g_mid) == np.sign(g_lo):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    # finish with the secant through the final bracket
    g_lo = _projected(model, beta_hat, v_hat, lo)
    g_hi = _projected(model, beta_hat, v_hat, hi)
    if g_hi == g_lo:
        return 0.5 * (lo + hi)
    return lo - g_lo * (hi - lo) / (g_hi - g_lo)


def normal_quantile(p: float) -> float:
    """Standard normal quantile (Wichura's AS241 via :class:`statistics.NormalDist`)."""
    return NormalDist().inv_cdf(p)


def confidence_interval(theta_tilde: float, delta_hat: float, n_eff: int, alpha: float) -> tuple[float, float]:
    if not 0 < alpha < 1:
        raise BadAlpha(f"alpha must lie in (0, 1), got {alpha}")
    if delta_hat < 0:
        raise ValueError(f"variance estimate must be nonnegative, got {delta_hat}")
    if n_eff < 1:
        raise ValueError(f"n_eff must be at least 1, got {n_eff}")
    half = normal_quantile(1 - alpha / 2) * math.sqrt(delta_hat / n_eff)
    return theta_tilde - half, theta_tilde + half


def run_inference(
    model: ModelInstance,
    lambda_rule: TuningRule,
    lambda_prime_rule: TuningRule,
    alpha: float = 0.05,
    *,
    delta_rule: str = "sample",
    solver: SolverConfig | None = None,
    rng=None,
    floor_margin: float | None = FLOOR_MARGIN,
) -> InferenceResult:
    """Estimate, debias and build a confidence interval for ``model.target``.

    ``delta_rule="gaussian"`` switches the ``clime`` variance to the
    closed-form Gaussian estimate. A tuning value for which its program is
    infeasible is raised to ``floor_margin`` times the smallest feasible
    value (see :func:`floored`); pass ``floor_margin=None`` to get
    ``InfeasibleProgram`` instead.
    """
    if not 0 < alpha < 1:
        raise BadAlpha(f"alpha must lie in (0, 1), got {alpha}")
    lam = resolve_lambda(lambda_rule, model, rng=rng)
    lam_prime = resolve_lambda(lambda_prime_rule, model, rng=rng)
    lam, lam_raised = floored(*_beta_system(model), lam, floor_margin)
    lam_prime, lam_prime_raised = floored(*_projection_system(model), lam_prime, floor_margin)

    beta_sol = _beta_program(model, lam, solver)
    v_sol = _projection_program(model, lam_prime, solver)
    beta_hat, v_hat = beta_sol.x, v_sol.x
    theta = solve_theta(model, beta_hat, v_hat)

    if delta_rule == "gaussian":
        if model.kind is not Kind.CLIME:
            raise ValueError("the gaussian variance rule only applies to clime models")
        delta, clamped = models.estimate_delta_clime_gaussian(v_hat, beta_hat, model.target, model.column), False
        if delta < 0:
            delta, clamped = 0.0, True
    elif delta_rule == "sample":
        delta, clamped = models.delta_estimate(model, beta_hat, v_hat)
    else:
        raise ValueError(f"unknown variance rule {delta_rule!r}")

    lo, hi = confidence_interval(theta, delta, model.n_eff, alpha)
    return InferenceResult(
        beta_hat=beta_hat,
        v_hat=v_hat,
        theta_tilde=theta,
        delta_hat=delta,
        ci_lo=lo,
        ci_hi=hi,
        alpha=alpha,
        u_denominator=float(v_hat @ model.equations.jac[:, model.target]),
        n_eff=model.n_eff,
        lam=lam,
        lam_prime=lam_prime,
        diagnostics=Diagnostics(
            lp_status_beta=beta_sol.status,
            lp_status_v=v_sol.status,
            residual_beta=beta_sol.residual_inf,
            residual_v=v_sol.residual_inf,
            iterations_beta=beta_sol.iterations,
            iterations_v=v_sol.iterations,
            delta_clamped=clamped,
            lam_raised=lam_raised,
            lam_prime_raised=lam_prime_raised,
        ),
    )


def solve_clime(sigma, lam: float, columns: Sequence[int] | None = None, joint: bool = False,
                config: SolverConfig | None = None) -> np.ndarray:
    """CLIME estimate ``argmin ||O||_1  s.t.  ||sigma O - I||_max <= lam``.

    The program separates over columns; by default each requested column is
    solved on its own. ``joint=True`` instead solves the whole matrix as one
    program in ``vec(O)`` through ``kron(I, sigma)`` (only sensible for small
    ``d``). Columns not requested are left as zeros.
    """
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.shape[0]
    cols = list(range(d)) if columns is None else list(columns)
    omega = np.zeros((d, d))
    if joint:
        big = np.kron(np.eye(d), sigma)
        target = np.eye(d).ravel(order="F")
        sol = _checked(solve_dantzig(DantzigProblem(big, target, lam), config), "clime")
        full = sol.x.reshape((d, d), order="F")
        omega[:, cols] = full[:, cols]
        return omega
    for m in cols:
        e = np.zeros(d)
        e[m] = 1.0
        omega[:, m] = _checked(solve_dantzig(DantzigProblem(sigma, e, lam), config), "clime").x
    return omega
