"""Monte Carlo driver: replicate loop, tuning by cross-validation, summaries, tables."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import datagen, inference
from .errors import (
    AllReplicatesFailed,
    BadAlpha,
    BadSpec,
    DegenerateData,
    HdeeError,
    InfeasibleProgram,
    NumericalError,
    TooFewSamples,
    UnsupportedModel,
)
from .inference import CrossValidation, FixedFormula, FixedValue, TuningRule
from .models import GraphData, Kind, LinearData, ModelInstance

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "ReplicateRecord",
    "config_from_dict",
    "cross_validate_lambda",
    "emit_table",
    "ks_normality",
    "load_config",
    "run_experiment",
    "run_replicate",
]

THREADS_ENV = "HDEE_THREADS"
EIGEN_FLOOR = 1e-6
# replicate streams use spawn_key (r,); fold assignment uses (r, CV_STREAM)
CV_STREAM = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation cell. ``target`` and ``column`` are zero-based here."""

    generator: datagen.GeneratorSpec
    target: int = 0
    column: int | None = None
    reps: int = 500
    alpha: float = 0.05
    lambda_rule: TuningRule = FixedFormula(0.5)
    lambda_prime_rule: TuningRule = FixedFormula(0.5)
    parallel: bool = False
    seed: int = 0
    delta_rule: str = "sample"

    def __post_init__(self):
        if not isinstance(self.reps, (int, np.integer)) or self.reps < 1:
            raise BadSpec(f"reps must be a positive integer, got {self.reps!r}")
        if not 0 < self.alpha < 1:
            raise BadAlpha(f"alpha must lie in (0, 1), got {self.alpha}")
        d = self.generator.d
        if not 0 <= self.target < d:
            raise BadSpec(f"target {self.target} out of range for d = {d}")
        if self.column is not None and not 0 <= self.column < d:
            raise BadSpec(f"column {self.column} out of range for d = {d}")
        if not 0 <= int(self.seed) < 2**64:
            raise BadSpec("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class ReplicateRecord:
    index: int
    theta_star: float
    theta_tilde: float = math.nan
    ci_lo: float = math.nan
    ci_hi: float = math.nan
    delta_hat: float = math.nan
    u: float = math.nan
    lam: float = math.nan
    lam_prime: float = math.nan
    covered: bool = False
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def length(self) -> float:
        return self.ci_hi - self.ci_lo


@dataclass(frozen=True)
class ExperimentResult:
    coverage: float
    avg_length: float
    u_samples: list
    failures: int
    per_rep: list = field(repr=False)

    @property
    def reps(self) -> int:
        return len(self.per_rep)

    @property
    def ks(self) -> float:
        return ks_normality(self.u_samples)


def _uses_column(kind: Kind) -> bool:
    return kind in (Kind.CLIME, Kind.SKEPTIC, Kind.VAR1)


def run_replicate(config: ExperimentConfig, r: int) -> ReplicateRecord:
    """Replicate ``r``: generate, fit, and compare against the truth.

    Numerical failures are recorded in the returned record rather than raised.
    """
    spec = config.generator
    column = config.column if _uses_column(spec.kind) else None
    rng = datagen.replicate_rng(config.seed, r)
    gd = datagen.generate(spec, rng=rng, column=column)
    theta_star = gd.theta_star(config.target)
    model = ModelInstance(spec.kind, gd.dataset, target=config.target, column=gd.truth.column)
    cv_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(config.seed), spawn_key=(r, CV_STREAM))))
    try:
        res = inference.run_inference(
            model,
            config.lambda_rule,
            config.lambda_prime_rule,
            config.alpha,
            delta_rule=config.delta_rule,
            rng=cv_rng,
        )
    except (NumericalError, DegenerateData) as exc:
        return ReplicateRecord(index=r, theta_star=theta_star, error=f"{type(exc).__name__}: {exc}")
    return ReplicateRecord(
        index=r,
        theta_star=theta_star,
        theta_tilde=res.theta_tilde,
        ci_lo=res.ci_lo,
        ci_hi=res.ci_hi,
        delta_hat=res.delta_hat,
        u=res.studentized(theta_star),
        lam=res.lam,
        lam_prime=res.lam_prime,
        covered=bool(res.ci_lo <= theta_star <= res.ci_hi),
    )


def _worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise BadSpec(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        return max(1, value)
    return os.cpu_count() or 1


def _replicate_task(args):
    config, r = args
    return run_replicate(config, r)


def summarize(records: Sequence[ReplicateRecord]) -> ExperimentResult:
    ok = [rec for rec in records if not rec.failed]
    failures = len(records) - len(ok)
    if not ok:
        raise AllReplicatesFailed(f"all {len(records)} replicates failed")
    covered = sum(rec.covered for rec in ok)
    return ExperimentResult(
        coverage=covered / len(ok),
        avg_length=float(np.mean([rec.length for rec in ok])),
        u_samples=[rec.u for rec in ok],
        failures=failures,
        per_rep=list(records),
    )


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentResult:
    """Run ``config.reps`` replicates and aggregate them in index order."""
    indices = range(config.reps)
    workers = min(_worker_count(), config.reps) if config.parallel else 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_replicate_task, [(config, r) for r in indices], chunksize=max(1, config.reps // (4 * workers))))
    else:
        records = []
        for r in indices:
            records.append(run_replicate(config, r))
            if progress is not None:
                progress(r, records[-1])
    return summarize(records)


# ---------------------------------------------------------------- tuning


def _folds(n: int, folds: int, rng) -> list[np.ndarray]:
    if not 2 <= folds <= n:
        raise BadSpec(f"need 2 <= folds <= n, got folds = {folds}, n = {n}")
    order = np.arange(n) if rng is None else rng.permutation(n)
    return np.array_split(order, folds)


def _pick(grid: Sequence[float], losses: np.ndarray) -> float:
    # ties (within rounding) go to the smallest lambda
    best = np.min(losses)
    tol = 1e-12 * max(1.0, abs(best))
    candidates = [g for g, loss in zip(grid, losses) if loss <= best + tol]
    return float(min(candidates))


def _gaussian_nll(S_test: np.ndarray, omega: np.ndarray) -> float:
    omega = 0.5 * (omega + omega.T)
    w, V = np.linalg.eigh(omega)
    if w.min() < EIGEN_FLOOR:
        w = np.maximum(w, EIGEN_FLOOR)
        omega = (V * w) @ V.T
    return float(np.sum(S_test * omega) - np.sum(np.log(w)))


def _graph_covariance(kind: Kind, X: np.ndarray) -> np.ndarray:
    if kind is Kind.SKEPTIC:
        from . import kendall

        return kendall.skeptic_transform(kendall.kendall_tau(X))
    return X.T @ X / X.shape[0]


def cross_validate_lambda(model: ModelInstance, grid: Sequence[float], folds: int, rng=None) -> float:
    """Grid value with the smallest average held-out loss.

    Linear models use mean squared prediction error; ``clime`` and
    ``skeptic`` use the Gaussian negative log-likelihood
    ``tr(S_test O) - logdet O`` of the full CLIME estimate fitted on the
    training folds. Folds are contiguous unless ``rng`` shuffles them.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise BadSpec("cross-validation grid must not be empty")
    if len(grid) == 1:
        return grid[0]
    kind = model.kind
    n = model.data.n_obs
    parts = _folds(n, folds, rng)
    losses = np.zeros(len(grid))
    if kind is Kind.LINEAR:
        X, y = model.data.X, model.data.y
        for test in parts:
            train = np.setdiff1d(np.arange(n), test)
            sub = ModelInstance(Kind.LINEAR, LinearData(X[train], y[train]), target=model.target)
            for g, lam in enumerate(grid):
                try:
                    b = inference.estimate_beta(sub, lam)
                except InfeasibleProgram:
                    losses[g] = math.inf
                    continue
                losses[g] += np.mean((y[test] - X[test] @ b) ** 2) / len(parts)
        return _pick(grid, losses)
    if kind in (Kind.CLIME, Kind.SKEPTIC):
        X = model.data.X
        for test in parts:
            train = np.setdiff1d(np.arange(n), test)
            S_train = _graph_covariance(kind, X[train])
            S_test = _graph_covariance(kind, X[test])
            for g, lam in enumerate(grid):
                try:
                    omega = inference.solve_clime(S_train, lam)
                except InfeasibleProgram:
                    losses[g] = math.inf
                    continue
                losses[g] += _gaussian_nll(S_test, omega) / len(parts)
        return _pick(grid, losses)
    raise UnsupportedModel(f"no cross-validation loss is defined for {kind.value} models")


# ---------------------------------------------------------------- diagnostics


def ks_normality(u_samples: Iterable[float]) -> float:
    """Kolmogorov-Smirnov distance between the sample and ``N(0, 1)``."""
    u = np.asarray(list(u_samples), dtype=float)
    u = u[np.isfinite(u)]
    if u.size < 20:
        raise TooFewSamples(f"need at least 20 finite samples, got {u.size}")
    return float(stats.kstest(u, "norm").statistic)


def _md_cell(res: ExperimentResult) -> str:
    return f"{res.coverage:.2f} ({res.avg_length:.1f})"


def emit_table(results: Sequence[tuple[str, ExperimentResult]], fmt: str = "md") -> str:
    """Render ``(label, result)`` pairs as a Markdown or CSV table."""
    if fmt == "md":
        lines = ["| setting | coverage (length) |", "|---|---|"]
        lines += [f"| {label} | {_md_cell(res)} |" for label, res in results]
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setting", "coverage", "avg_length", "reps", "failures", "ks"])
        for label, res in results:
            try:
                ks = repr(res.ks)
            except TooFewSamples:
                ks = ""
            w.writerow([label, repr(res.coverage), repr(res.avg_length), res.reps, res.failures, ks])
        return buf.getvalue()
    raise ValueError(f"unknown table format {fmt!r}")


def records_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = ["index", "theta_star", "theta_tilde", "ci_lo", "ci_hi", "delta_hat", "u", "lam", "lam_prime", "covered", "error"]
    w.writerow(names)
    for rec in result.per_rep:
        row = asdict(rec)
        w.writerow([repr(row[k]) if isinstance(row[k], float) else ("" if row[k] is None else row[k]) for k in names])
    return buf.getvalue()


# ---------------------------------------------------------------- config files

_CONFIG_KEYS = {
    "model", "n", "n1", "n2", "T", "d", "rho", "beta_mode", "alpha_power", "target",
    "column", "reps", "alpha", "lambda", "lambda_prime", "seed", "parallel",
}
_RULE_KEYS = {"type", "value", "c", "grid", "folds", "relative"}


def _rule_from_dict(obj, key: str) -> TuningRule:
    if not isinstance(obj, dict):
        raise BadSpec(f"'{key}' must be an object with a 'type' field")
    extra = set(obj) - _RULE_KEYS
    if extra:
        raise BadSpec(f"unknown field(s) in '{key}': {', '.join(sorted(extra))}")
    kind = obj.get("type")
    try:
        if kind in ("formula", "fixed_formula"):
            return FixedFormula(float(obj["c"]))
        if kind in ("value", "fixed_value", "fixed"):
            return FixedValue(float(obj["value"]))
        if kind in ("cv", "cross_validation"):
            return CrossValidation(tuple(obj["grid"]), int(obj.get("folds", 10)), bool(obj.get("relative", False)))
    except KeyError as exc:
        raise BadSpec(f"'{key}' is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise BadSpec(f"'{key}': {exc}") from None
    raise BadSpec(f"'{key}.type' must be one of formula, value, cv; got {kind!r}")


def _index(raw, key: str, default=None):
    if raw is None:
        return default
    if not isinstance(raw, int) or isinstance(raw, bool) or raw < 1:
        raise BadSpec(f"'{key}' must be a positive (1-based) integer, got {raw!r}")
    return raw - 1


def config_from_dict(obj: dict) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a parsed JSON object.

    ``target`` and ``column`` are 1-based in the document.
    """
    if not isinstance(obj, dict):
        raise BadSpec("configuration must be a JSON object")
    extra = set(obj) - _CONFIG_KEYS
    if extra:
        raise BadSpec(f"unknown configuration key(s): {', '.join(sorted(extra))}")
    for key in ("model", "d", "reps"):
        if key not in obj:
            raise BadSpec(f"missing required key '{key}'")
    try:
        kind = Kind(obj["model"])
    except ValueError:
        raise BadSpec(f"'model' must be one of {[k.value for k in Kind]}, got {obj['model']!r}") from None
    n = obj.get("T") if kind is Kind.VAR1 else obj.get("n")
    if kind is Kind.VAR1 and n is None:
        n = obj.get("n")
    reps = obj["reps"]
    if not isinstance(reps, int) or isinstance(reps, bool) or reps < 1:
        raise BadSpec(f"'reps' must be a positive integer, got {reps!r}")
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise BadSpec(f"'seed' must be a 64-bit unsigned integer, got {seed!r}")
    try:
        gen = datagen.GeneratorSpec(
            kind=kind,
            d=obj["d"],
            n=n,
            n1=obj.get("n1"),
            n2=obj.get("n2"),
            rho=float(obj.get("rho", 0.0)),
            beta_mode=obj.get("beta_mode", "dirac"),
            alpha_power=float(obj.get("alpha_power", 5.0)),
            seed=seed,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, HdeeError):
            raise
        raise BadSpec(str(exc)) from None
    default_column = 1 if _uses_column(kind) else None
    alpha = obj.get("alpha", 0.05)
    if not isinstance(alpha, (int, float)) or isinstance(alpha, bool):
        raise BadSpec(f"'alpha' must be a number, got {alpha!r}")
    parallel = obj.get("parallel", False)
    if not isinstance(parallel, bool):
        raise BadSpec(f"'parallel' must be true or false, got {parallel!r}")
    return ExperimentConfig(
        generator=gen,
        target=_index(obj.get("target"), "target", 0),
        column=_index(obj.get("column"), "column", default_column),
        reps=reps,
        alpha=float(alpha),
        lambda_rule=_rule_from_dict(obj.get("lambda", {"type": "formula", "c": 0.5}), "lambda"),
        lambda_prime_rule=_rule_from_dict(obj.get("lambda_prime", {"type": "formula", "c": 0.5}), "lambda_prime"),
        parallel=parallel,
        seed=seed,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BadSpec(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise BadSpec(f"cannot read {path}: {exc.strerror}") from None
    return config_from_dict(obj)
