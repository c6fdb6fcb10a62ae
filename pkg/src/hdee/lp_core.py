"""L1 minimization under an L-infinity band constraint.

Every program in the package has the shape::

    minimize ||x||_1  subject to  ||A x - b||_inf <= lam

Writing ``x = u - w`` with ``u, w >= 0`` and ``r = A x - b`` gives the
bounded-variable standard form::

    minimize  sum(u) + sum(w)
    subject to  A u - A w - r = b,   u, w >= 0,   -lam <= r <= lam

which is the two-row slack form ``A x + s = b + lam``, ``-A x + s' = lam - b``
with the pair ``(s, s')`` collapsed into the single two-sided variable ``r``.

The default method is a dual simplex started from ``x = 0`` with every
``r_i`` basic, which is dual feasible, so no phase 1 is needed. A two-phase
primal simplex is available as an alternative. Both price by largest
coefficient and drop to Bland's lowest-index rule right after a degenerate
pivot, or use Bland throughout with ``pricing="bland"``.

The engine is dense and meant for desk-scale problems (a few hundred rows).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonFiniteInput, TooLarge

__all__ = [
    "DantzigProblem",
    "LpSolution",
    "SolverConfig",
    "Status",
    "check_feasibility",
    "enumerate_oracle",
    "min_feasible_lambda",
    "solve_dantzig",
]

ORACLE_MAX_DIM = 6
PIVOT_REL_TOL = 1e-9


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class DantzigProblem:
    """``min ||x||_1`` s.t. ``||A x - b||_inf <= lam``."""

    A: np.ndarray
    b: np.ndarray
    lam: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).ravel()
        lam = float(self.lam)
        if A.ndim != 2 or A.shape[0] != b.shape[0]:
            raise DimensionMismatch(
                f"A has shape {A.shape} but b has length {b.shape[0]}"
            )
        if not (np.isfinite(A).all() and np.isfinite(b).all() and np.isfinite(lam)):
            raise NonFiniteInput("A, b and lam must be finite")
        if lam < 0:
            raise ValueError(f"lam must be nonnegative, got {lam}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lam", lam)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class SolverConfig:
    tol_feas: float = 1e-9
    tol_opt: float = 1e-9
    max_iter: int | None = None
    anti_cycling: str = "bland"
    method: str = "dual"
    pricing: str = "dantzig"

    def __post_init__(self):
        if self.tol_feas <= 0 or self.tol_opt <= 0:
            raise ValueError("tolerances must be positive")
        if self.anti_cycling != "bland":
            raise ValueError(f"unknown anti-cycling rule {self.anti_cycling!r}")
        if self.method not in ("dual", "primal"):
            raise ValueError(f"unknown simplex method {self.method!r}")
        if self.pricing not in ("dantzig", "bland"):
            raise ValueError(f"unknown pricing rule {self.pricing!r}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    def iteration_cap(self, problem: DantzigProblem) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return 50 * (problem.p + problem.m)


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    residual_inf: float
    status: Status
    iterations: int = 0
    basis: tuple = field(default=(), repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def check_feasibility(problem: DantzigProblem, x) -> float:
    """Return ``||A x - b||_inf``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != problem.p:
        raise DimensionMismatch(f"x has length {x.shape[0]}, expected {problem.p}")
    if problem.m == 0:
        return 0.0
    return float(np.max(np.abs(problem.A @ x - problem.b)))


def _solution(problem, x, status, iterations, basis=()):
    x = np.asarray(x, dtype=float)
    return LpSolution(
        x=x,
        objective=float(np.sum(np.abs(x))),
        residual_inf=check_feasibility(problem, x),
        status=status,
        iterations=iterations,
        basis=tuple(basis),
    )


class _BoundedSimplex:
    """Revised primal simplex over columns ``[A, -A, -I, S]``.

    ``S`` holds one signed unit column per artificial variable. Variables are
    indexed in that order, which is also the order Bland's rule scans.

    A basis mixes structural columns (from ``+-A``) with unit columns (slacks
    ``r_i`` and artificials). With ``k`` structural columns the basis matrix
    is nonsingular iff its ``k x k`` core, the structural columns restricted
    to the rows not covered by a unit column, is. Only that core is
    factorized, so a pivot costs ``O(k^3 + k (m + p))`` with ``k <= rank(A)``.
    The core is refactorized from scratch at every pivot, so no update error
    accumulates.
    """

    def __init__(self, problem: DantzigProblem, config: SolverConfig, artificials: bool = True):
        self.A = problem.A
        self.b = problem.b
        self.m, self.p = m, p = problem.A.shape
        lam = problem.lam
        self.config = config
        self.piv_tol = 1e-11 * max(1.0, float(np.max(np.abs(self.A), initial=0.0)))
        # entries of rho' a_j below ~1e-9 ||rho||_1 ||a_j||_inf are roundoff
        colmax = np.max(np.abs(self.A), axis=0) if m else np.zeros(p)

        b = self.b
        self.art_rows = np.flatnonzero(np.abs(b) > lam) if artificials else np.zeros(0, dtype=int)
        self.art_sign = np.sign(b[self.art_rows])
        k = self.art_rows.size
        self.off_w = p
        self.off_r = 2 * p
        self.off_a = 2 * p + m
        self.ncols = 2 * p + m + k

        self.col_scale = np.ones(2 * p + m + self.art_rows.size)
        self.col_scale[:p] = colmax
        self.col_scale[p:2 * p] = colmax
        self.lo = np.zeros(self.ncols)
        self.hi = np.full(self.ncols, np.inf)
        self.lo[self.off_r:self.off_a] = -lam
        self.hi[self.off_r:self.off_a] = lam

        # row and sign of every unit column, indexed by variable - off_r
        self.unit_row = np.concatenate([np.arange(m), self.art_rows])
        self.unit_sign = np.concatenate([-np.ones(m), self.art_sign])

        # Slack r_i is basic on feasible rows; otherwise it sits at the bound
        # nearest to -b_i and an artificial carries the excess.
        self.row_unit = np.arange(self.off_r, self.off_a)
        self.at_upper = np.zeros(self.ncols, dtype=bool)
        for slot, i in enumerate(self.art_rows):
            self.row_unit[i] = self.off_a + slot
            if b[i] < 0:
                self.at_upper[self.off_r + i] = True
        self.structural: list[int] = []
        self.is_basic = np.zeros(self.ncols, dtype=bool)
        self.is_basic[self.row_unit] = True
        self.iterations = 0

    # column algebra -----------------------------------------------------

    def column(self, q: int) -> np.ndarray:
        if q < self.off_w:
            return self.A[:, q]
        if q < self.off_r:
            return -self.A[:, q - self.off_w]
        col = np.zeros(self.m)
        u = q - self.off_r
        col[self.unit_row[u]] = self.unit_sign[u]
        return col

    def apply(self, z: np.ndarray) -> np.ndarray:
        """Multiply the full constraint matrix by a full variable vector."""
        out = self.A @ (z[: self.off_w] - z[self.off_w:self.off_r])
        out = out - z[self.off_r:self.off_a]
        if self.art_rows.size:
            np.add.at(out, self.art_rows, self.art_sign * z[self.off_a:])
        return out

    def reduced_costs(self, cost: np.ndarray, y: np.ndarray) -> np.ndarray:
        nz = np.flatnonzero(y)
        yA = y[nz] @ self.A[nz]
        d = cost.copy()
        d[: self.off_w] -= yA
        d[self.off_w:self.off_r] += yA
        d[self.off_r:] -= self.unit_sign * y[self.unit_row]
        return d

    def nonbasic_values(self) -> np.ndarray:
        z = np.where(self.at_upper, self.hi, self.lo)
        z[self.is_basic] = 0.0
        return z

    def factor(self):
        S = np.asarray(self.structural, dtype=int)
        self.S = S
        self.Rc = np.flatnonzero(self.row_unit < 0)
        self.R = np.flatnonzero(self.row_unit >= 0)
        self.units = self.row_unit[self.R]
        self.s_R = self.unit_sign[self.units - self.off_r]
        signs = np.where(S < self.p, 1.0, -1.0)
        self.AS = self.A[:, S % self.p] * signs if S.size else np.zeros((self.m, 0))
        if S.size:
            self.lu = scipy.linalg.lu_factor(self.AS[self.Rc], check_finite=False)
        self.basic = np.concatenate([S, self.units])

    def solve(self, a: np.ndarray) -> np.ndarray:
        """Solve ``B z = a``; ``z`` is ordered like ``self.basic``."""
        if self.S.size:
            zS = scipy.linalg.lu_solve(self.lu, a[self.Rc], check_finite=False)
            zR = (a[self.R] - self.AS[self.R] @ zS) / self.s_R
        else:
            zS = np.zeros(0)
            zR = a[self.R] / self.s_R
        return np.concatenate([zS, zR])

    def solve_transposed(self, c: np.ndarray) -> np.ndarray:
        """Solve ``B^T y = c`` for ``c`` ordered like ``self.basic``."""
        k = self.S.size
        y = np.zeros(self.m)
        y[self.R] = c[k:] / self.s_R
        if k:
            rhs = c[:k] - self.AS[self.R].T @ y[self.R]
            y[self.Rc] = scipy.linalg.lu_solve(self.lu, rhs, trans=1, check_finite=False)
        return y

    def basic_values(self) -> np.ndarray:
        z = self.nonbasic_values()
        # nonbasic u and w sit at their lower bound 0, so only unit columns move b
        out = self.b + z[self.off_r:self.off_a]
        if self.art_rows.size:
            np.subtract.at(out, self.art_rows, self.art_sign * z[self.off_a:])
        return self.solve(out)

    def full_values(self) -> np.ndarray:
        self.factor()
        z = self.nonbasic_values()
        z[self.basic] = self.basic_values()
        return z

    def primal_x(self) -> np.ndarray:
        z = self.full_values()
        return z[: self.off_w] - z[self.off_w:self.off_r]

    # pivoting -------------------------------------------------------------

    def run(self, cost: np.ndarray, max_iter: int) -> bool:
        """Iterate until optimal (True) or the iteration cap is hit (False)."""
        tol = self.config.tol_opt
        fixed = self.hi - self.lo <= 0.0
        bland_only = self.config.pricing == "bland"
        degenerate = False
        while True:
            self.factor()
            xB = self.basic_values()
            y = self.solve_transposed(cost[self.basic])
            d = self.reduced_costs(cost, y)
            movable = ~self.is_basic & ~fixed
            eligible = movable & np.where(self.at_upper, d > tol, d < -tol)
            hits = np.flatnonzero(eligible)
            if hits.size == 0:
                return True
            if self.iterations >= max_iter:
                return False
            self.iterations += 1
            # Largest-coefficient pricing, except right after a degenerate
            # pivot where Bland's lowest index is used, so no cycle can form.
            if bland_only or degenerate:
                q = int(hits[0])
            else:
                q = int(hits[np.argmax(np.abs(d[hits]))])
            step = self.pivot(q, xB)
            degenerate = step <= tol

    def run_dual(self, cost: np.ndarray, max_iter: int) -> Status:
        """Dual simplex from a dual feasible basis.

        The leaving row is the most violated basic bound; after a degenerate
        pivot both choices fall back to lowest index (Bland) so the method
        cannot cycle.
        """
        tol_p = self.config.tol_feas
        tol_d = self.config.tol_opt
        fixed = self.hi - self.lo <= 0.0
        bland_only = self.config.pricing == "bland"
        degenerate = False
        while True:
            self.factor()
            basic = self.basic
            xB = self.basic_values()
            below = self.lo[basic] - xB
            above = xB - self.hi[basic]
            viol = np.maximum(below, above)
            rows = np.flatnonzero(viol > tol_p)
            if rows.size == 0:
                return Status.OPTIMAL
            if self.iterations >= max_iter:
                return Status.ITERATION_LIMIT
            self.iterations += 1
            if bland_only or degenerate:
                t = int(rows[np.argmin(basic[rows])])
            else:
                t = int(rows[np.argmax(viol[rows])])
            to_lower = below[t] > 0

            y = self.solve_transposed(cost[basic])
            d = self.reduced_costs(cost, y)
            e_t = np.zeros(basic.size)
            e_t[t] = 1.0
            rho = self.solve_transposed(e_t)
            alpha = self.reduced_costs(np.zeros(self.ncols), -rho)
            # x_t = xB_t - sum_j alpha_j dx_j; pick moves that push x_t back
            # toward the violated bound.
            sign = -1.0 if to_lower else 1.0
            a = sign * alpha
            movable = ~self.is_basic & ~fixed
            thresh = np.maximum(self.piv_tol, PIVOT_REL_TOL * np.abs(rho).sum() * self.col_scale)
            eligible = movable & np.where(self.at_upper, a < -thresh, a > thresh)
            cand = np.flatnonzero(eligible)
            if cand.size == 0:
                return Status.INFEASIBLE
            ratios = np.abs(d[cand]) / np.abs(a[cand])
            best = ratios.min()
            ties = cand[ratios <= best + 1e-12 * max(1.0, best)]
            q = int(ties[0]) if (bland_only or degenerate or ties.size == 1) else \
                int(ties[np.argmax(np.abs(a[ties]))])
            degenerate = best <= tol_d

            leaving = int(basic[t])
            self.at_upper[leaving] = not to_lower
            self.is_basic[leaving] = False
            self.is_basic[q] = True
            self.at_upper[q] = False
            self._swap(leaving, q)

    def _swap(self, leaving: int, q: int):
        if leaving < self.off_r:
            self.structural.remove(leaving)
        else:
            self.row_unit[self.unit_row[leaving - self.off_r]] = -1
        if q < self.off_r:
            self.structural.append(q)
        else:
            self.row_unit[self.unit_row[q - self.off_r]] = q

    def pivot(self, q: int, xB: np.ndarray) -> float:
        increasing = not self.at_upper[q]
        col = self.solve(self.column(q))
        # rate of change of the basic variables per unit move of x_q
        delta = -col if increasing else col
        basic = self.basic
        lo_b = self.lo[basic]
        hi_b = self.hi[basic]
        ratios = np.full(basic.size, np.inf)
        thresh = max(self.piv_tol, PIVOT_REL_TOL * float(np.max(np.abs(delta), initial=0.0)))
        down = delta < -thresh
        up = delta > thresh
        ratios[down] = (xB[down] - lo_b[down]) / -delta[down]
        ratios[up] = (hi_b[up] - xB[up]) / delta[up]
        np.maximum(ratios, 0.0, out=ratios)

        step_flip = self.hi[q] - self.lo[q]
        step = ratios.min() if basic.size else np.inf
        if step_flip <= step:
            if not np.isfinite(step_flip):
                raise ArithmeticError("unbounded direction in a bounded-below program")
            self.at_upper[q] = increasing
            return float(step_flip)

        ties = np.flatnonzero(ratios <= step + 1e-12 * max(1.0, step))
        t = ties[np.argmin(basic[ties])]
        leaving = int(basic[t])
        self.at_upper[leaving] = delta[t] > 0
        self.is_basic[leaving] = False
        self.is_basic[q] = True
        self.at_upper[q] = False
        self._swap(leaving, q)
        return float(step)


def solve_dantzig(problem: DantzigProblem, config: SolverConfig | None = None) -> LpSolution:
    """Solve ``min ||x||_1`` s.t. ``||A x - b||_inf <= lam``.

    Parameters
    ----------
    problem : DantzigProblem
    config : SolverConfig, optional

    Returns
    -------
    LpSolution
        ``status`` is ``Status.OPTIMAL`` when both phases finish; the
        solution is then feasible to ``tol_feas`` and its reduced costs are
        dual feasible to ``tol_opt``.
    """
    config = config or SolverConfig()
    m, p = problem.m, problem.p
    if p == 0:
        status = Status.OPTIMAL if np.all(np.abs(problem.b) <= problem.lam) else Status.INFEASIBLE
        return _solution(problem, np.zeros(0), status, 0)
    if m == 0:
        return _solution(problem, np.zeros(p), Status.OPTIMAL, 0)

    cap = config.iteration_cap(problem)
    cost = np.zeros(2 * p + m)
    cost[: 2 * p] = 1.0
    if config.method == "dual":
        # x = 0 with every r_i basic is dual feasible: all reduced costs of
        # u and w equal 1.
        lp = _BoundedSimplex(problem, config, artificials=False)
        status = lp.run_dual(cost, cap)
        return _solution(problem, lp.primal_x(), status, lp.iterations, lp.basic)

    lp = _BoundedSimplex(problem, config)

    if lp.art_rows.size:
        cost1 = np.zeros(lp.ncols)
        cost1[lp.off_a:] = 1.0
        if not lp.run(cost1, cap):
            return _solution(problem, lp.primal_x(), Status.ITERATION_LIMIT, lp.iterations, lp.basic)
        infeasibility = float(np.sum(lp.full_values()[lp.off_a:]))
        scale = max(1.0, float(np.max(np.abs(problem.b))))
        if infeasibility > config.tol_feas * scale:
            return _solution(problem, lp.primal_x(), Status.INFEASIBLE, lp.iterations, lp.basic)
        lp.hi[lp.off_a:] = 0.0
        lp.lo[lp.off_a:] = 0.0
        lp.at_upper[lp.off_a:] = False

    cost2 = np.zeros(lp.ncols)
    cost2[: lp.off_r] = 1.0
    done = lp.run(cost2, cap)
    status = Status.OPTIMAL if done else Status.ITERATION_LIMIT
    return _solution(problem, lp.primal_x(), status, lp.iterations, lp.basic)


def enumerate_oracle(problem: DantzigProblem, tol: float = 1e-9) -> LpSolution:
    """Exact solution by brute-force vertex enumeration (exponential time).

    Inside each sign orthant ``||x||_1`` is linear and the feasible cell is a
    pointed polyhedron, so the optimum sits at a point where ``p`` linearly
    independent hyperplanes from ``{a_i x = b_i +- lam} U {x_j = 0}`` meet.
    All such points are enumerated. Only for testing; capped at ``p, m <= 6``.
    """
    m, p = problem.m, problem.p
    if p > ORACLE_MAX_DIM or m > ORACLE_MAX_DIM:
        raise TooLarge(f"oracle limited to p, m <= {ORACLE_MAX_DIM}; got p={p}, m={m}")
    if p == 0:
        ok = m == 0 or np.all(np.abs(problem.b) <= problem.lam + tol)
        return _solution(problem, np.zeros(0), Status.OPTIMAL if ok else Status.INFEASIBLE, 0)

    A, b, lam = problem.A, problem.b, problem.lam
    normals = np.vstack([A, A, np.eye(p)])
    offsets = np.concatenate([b + lam, b - lam, np.zeros(p)])
    combos = np.array(list(itertools.combinations(range(normals.shape[0]), p)))
    mats = normals[combos]
    rhs = offsets[combos]
    dets = np.linalg.det(mats)
    keep = np.abs(dets) > 1e-12
    if not keep.any():
        return _solution(problem, np.zeros(p), Status.INFEASIBLE, len(combos))
    points = np.linalg.solve(mats[keep], rhs[keep][..., None])[..., 0]
    resid = np.max(np.abs(points @ A.T - b), axis=1) if m else np.zeros(len(points))
    feasible = resid <= lam + tol
    if not feasible.any():
        return _solution(problem, np.zeros(p), Status.INFEASIBLE, len(combos))
    candidates = points[feasible]
    best = candidates[np.argmin(np.abs(candidates).sum(axis=1))]
    return _solution(problem, best, Status.OPTIMAL, len(combos))


def min_feasible_lambda(A, b, rank_tol: float = 1e-10) -> float:
    """Smallest ``lam`` for which ``||A x - b||_inf <= lam`` has a solution.

    Zero whenever ``b`` lies in the column space of ``A``. Otherwise the
    Chebyshev problem ``min_w ||U w - b||_inf`` over an orthonormal basis
    ``U`` of that space is solved with HiGHS.
    """
    from scipy.optimize import linprog

    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    m = A.shape[0]
    if m == 0:
        return 0.0
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    r = int(np.sum(s > rank_tol * max(1.0, s[0] if s.size else 0.0)))
    U = U[:, :r]
    if r == m or np.max(np.abs(b - U @ (U.T @ b))) <= 1e-12 * max(1.0, np.max(np.abs(b))):
        return 0.0
    ones = np.ones((m, 1))
    A_ub = np.block([[U, -ones], [-U, -ones]])
    b_ub = np.concatenate([b, -b])
    c = np.zeros(r + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * r + [(0, None)], method="highs")
    if res.status != 0:
        raise ArithmeticError(f"feasibility floor computation failed: {res.message}")
    return float(res.fun)
