"""Command-line front end.

Subcommands: ``simulate``, ``analyze``, ``gen``, ``solve``. Coordinates on the
command line and in config files are 1-based.

Exit codes: 0 success, 2 input error, 3 every replicate failed,
4 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, datagen, harness, inference
from .errors import AllReplicatesFailed, InputError, NumericalError
from .lp_core import DantzigProblem, solve_dantzig
from .models import GraphData, IvrData, Kind, LdaData, LinearData, ModelInstance, VarData

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FAILED = 3
EXIT_NUMERICAL = 4


class CsvError(InputError):
    pass


# ---------------------------------------------------------------- csv helpers


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of a comma-separated file."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CsvError(f"cannot read {path}: {exc.strerror}") from None
    rows = [r for r in rows if r]
    if not rows:
        raise CsvError(f"{path}: empty file (a header row is required)")
    header = [h.strip() for h in rows[0]]
    body = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CsvError(f"{path}, line {i}: expected {len(header)} fields, found {len(row)}")
        for k, cell in enumerate(row):
            try:
                body[i - 2, k] = float(cell)
            except ValueError:
                raise CsvError(f"{path}, line {i}, column '{header[k]}': non-numeric cell {cell!r}") from None
    if not np.isfinite(body).all():
        raise CsvError(f"{path}: NaN or infinite cells are not allowed")
    return header, body


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- dataset layout


def dataset_columns(kind: Kind, d: int) -> list[str]:
    xs = [f"x{k + 1}" for k in range(d)]
    if kind is Kind.LINEAR:
        return xs + ["y"]
    if kind is Kind.IVR:
        return xs + [f"w{k + 1}" for k in range(d)] + ["y"]
    if kind is Kind.LDA:
        return ["class"] + xs
    return xs


def dataset_rows(kind: Kind, data) -> np.ndarray:
    if kind is Kind.LINEAR:
        return np.column_stack([data.X, data.y])
    if kind is Kind.IVR:
        return np.column_stack([data.X, data.W, data.y])
    if kind is Kind.LDA:
        labels = np.r_[np.ones(data.X.shape[0]), 2 * np.ones(data.Y.shape[0])]
        return np.column_stack([labels, np.vstack([data.X, data.Y])])
    return data.X


def dataset_from_table(kind: Kind, header: list[str], body: np.ndarray):
    """Parse a CSV body laid out as :func:`dataset_columns` describes.

    ``linear`` and ``ivr`` take the response from a column named ``y`` (or
    the last column); ``ivr`` instruments are the columns whose names start
    with ``w``. ``lda`` needs a ``class`` column with labels 1 and 2.
    """
    if body.shape[0] < 2:
        raise CsvError("data must have at least 2 rows")
    names = [h.lower() for h in header]
    if kind in (Kind.LINEAR, Kind.IVR):
        iy = names.index("y") if "y" in names else len(names) - 1
        rest = [k for k in range(len(names)) if k != iy]
        if kind is Kind.LINEAR:
            return LinearData(body[:, rest], body[:, iy])
        wcols = [k for k in rest if names[k].startswith("w")]
        xcols = [k for k in rest if not names[k].startswith("w")]
        if len(wcols) != len(xcols) or not wcols:
            raise CsvError("ivr data needs equally many x and w* columns")
        return IvrData(body[:, xcols], body[:, wcols], body[:, iy])
    if kind is Kind.LDA:
        if "class" not in names:
            raise CsvError("lda data needs a 'class' column with labels 1 and 2")
        ic = names.index("class")
        labels = body[:, ic]
        if not np.isin(labels, (1.0, 2.0)).all():
            raise CsvError("lda 'class' column must contain only 1 and 2")
        feats = np.delete(body, ic, axis=1)
        return LdaData(feats[labels == 1], feats[labels == 2])
    if kind is Kind.VAR1:
        return VarData(body)
    return GraphData(body)


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args) -> int:
    config = harness.load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed, generator=replace(config.generator, seed=args.seed))
    result = harness.run_experiment(config)
    out = _out_dir(args.out)
    label = Path(args.config).stem
    formats = ["csv", "md"] if args.format is None else [args.format]
    for fmt in formats:
        (out / f"results.{fmt}").write_text(harness.emit_table([(label, result)], fmt=fmt), encoding="utf-8")
    (out / "replicates.csv").write_text(harness.records_csv(result), encoding="utf-8")
    print(harness.emit_table([(label, result)], fmt="md"), end="")
    if result.failures:
        print(f"{result.failures} of {result.reps} replicates failed and were excluded", file=sys.stderr)
    return EXIT_OK


def _rule(value, what: str):
    if value is None:
        return inference.FixedFormula(0.5)
    if value < 0:
        raise InputError(f"{what} must be nonnegative, got {value}")
    return inference.FixedValue(value)


def _index(value, d: int, what: str) -> int:
    if not 1 <= value <= d:
        raise InputError(f"{what} must lie in 1..{d}, got {value}")
    return value - 1


def cmd_analyze(args) -> int:
    if not 0 < args.alpha < 1:
        raise InputError(f"--alpha must lie in (0, 1), got {args.alpha}")
    kind = Kind(args.model)
    header, body = read_csv(args.data)
    data = dataset_from_table(kind, header, body)
    d = data.dim
    lam, lam_p = _rule(args.lam, "--lambda"), _rule(args.lam_prime, "--lambda-prime")
    needs_column = kind in (Kind.CLIME, Kind.SKEPTIC, Kind.VAR1)

    if args.all_pairs:
        if kind not in (Kind.CLIME, Kind.SKEPTIC):
            raise InputError("--all-pairs applies to the clime and skeptic models only")
        pairs = [(j, m) for j in range(d) for m in range(j + 1, d)]
    else:
        if args.target is None:
            raise InputError("--target is required")
        j = _index(args.target, d, "--target")
        if needs_column:
            if args.column is None:
                raise InputError(f"--column is required for the {kind.value} model")
            m = _index(args.column, d, "--column")
        else:
            m = None
        pairs = [(j, m)]

    rows = []
    base = None
    for j, m in pairs:
        model = ModelInstance(kind, data, target=j, column=m)
        if base is not None and kind is Kind.SKEPTIC:
            # share the Kendall tables across pairs
            model.__dict__["kendall"] = base.kendall
        base = model
        res = inference.run_inference(model, lam, lam_p, args.alpha)
        index = [j + 1] if m is None else [j + 1, m + 1]
        rows.append(index + [res.theta_tilde, res.delta_hat, res.ci_lo, res.ci_hi])

    # regression kinds have no column index
    header_out = ["target"] + (["column"] if needs_column or args.all_pairs else [])
    header_out += ["theta_tilde", "delta_hat", "ci_lo", "ci_hi"]
    if args.out is not None:
        out = _out_dir(args.out)
        write_csv(out / "analysis.csv", header_out, rows)
    if len(rows) == 1:
        theta, delta, lo, hi = rows[0][-4:]
        print(f"theta_tilde = {theta:.6g}")
        print(f"delta_hat = {delta:.6g}")
        print(f"{100 * (1 - args.alpha):g}% CI = [{lo:.6g}, {hi:.6g}]")
    else:
        print(",".join(header_out))
        for r in rows:
            print(",".join(str(x) if isinstance(x, int) else repr(float(x)) for x in r))
    return EXIT_OK


def cmd_gen(args) -> int:
    kind = Kind(args.model)
    spec = datagen.GeneratorSpec(
        kind=kind, d=args.d, n=args.n, n1=args.n1, n2=args.n2, rho=args.rho,
        beta_mode=args.beta_mode, alpha_power=args.alpha_power, seed=args.seed,
    )
    column = None
    if kind in (Kind.CLIME, Kind.SKEPTIC, Kind.VAR1):
        column = _index(args.column, args.d, "--column")
    gd = datagen.generate(spec, column=column)
    out = _out_dir(args.out)
    write_csv(out / "data.csv", dataset_columns(kind, args.d), dataset_rows(kind, gd.dataset).tolist())
    write_csv(out / "truth.csv", ["index", "beta_star"],
              [[k + 1, float(b)] for k, b in enumerate(gd.truth.beta_star)])
    print(f"wrote {out / 'data.csv'} and {out / 'truth.csv'}")
    return EXIT_OK


def cmd_solve(args) -> int:
    _, A = read_csv(args.A)
    _, b = read_csv(args.b)
    if b.ndim != 2 or b.shape[1] != 1:
        raise CsvError("b must be a single-column CSV")
    if args.lam is None:
        raise InputError("--lambda is required")
    prob = DantzigProblem(A, b[:, 0], args.lam)
    sol = solve_dantzig(prob)
    if not sol.optimal:
        raise NumericalError(f"program ended with status {sol.status.value}")
    if args.out is not None:
        out = _out_dir(args.out)
        write_csv(out / "x.csv", ["x"], [[float(v)] for v in sol.x])
    print(f"objective = {sol.objective:.12g}")
    print(f"residual = {sol.residual_inf:.6g}")
    if args.out is None:
        print("x = " + " ".join(f"{v:.12g}" for v in sol.x))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdee", description="Debiased inference for high-dimensional estimating equations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    kinds = [k.value for k in Kind]

    s = sub.add_parser("simulate", help="run a Monte Carlo experiment from a JSON config")
    s.add_argument("config", help="experiment configuration (JSON)")
    s.add_argument("--out", required=True, help="output directory for results.csv/.md and replicates.csv")
    s.add_argument("--seed", type=int, default=None, help="override the config seed")
    s.add_argument("--format", choices=["csv", "md"], default=None, help="write only this table format")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="confidence interval for one coordinate of a CSV dataset")
    a.add_argument("data", help="CSV file with a header row")
    a.add_argument("--model", required=True, choices=kinds, help="estimating equation")
    a.add_argument("--target", type=int, default=None, help="1-based coordinate j of interest")
    a.add_argument("--column", type=int, default=None, help="1-based column m (clime, skeptic, var1)")
    a.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="tuning for the estimator (default 0.5*sqrt(log d / n))")
    a.add_argument("--lambda-prime", dest="lam_prime", type=float, default=None,
                   help="tuning for the projection (default 0.5*sqrt(log d / n))")
    a.add_argument("--alpha", type=float, default=0.05, help="1 - confidence level (default 0.05)")
    a.add_argument("--all-pairs", action="store_true", help="every edge j < m (clime, skeptic)")
    a.add_argument("--out", default=None, help="directory for analysis.csv")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("gen", help="write a synthetic dataset and its truth")
    g.add_argument("--model", required=True, choices=kinds, help="design to sample")
    g.add_argument("--d", type=int, required=True, help="dimension")
    g.add_argument("--n", type=int, default=None, help="sample size (T for var1)")
    g.add_argument("--n1", type=int, default=None, help="class-1 size (lda)")
    g.add_argument("--n2", type=int, default=None, help="class-2 size (lda)")
    g.add_argument("--rho", type=float, default=0.0, help="Toeplitz or tridiagonal strength")
    g.add_argument("--beta-mode", choices=["dirac", "uniform"], default="dirac", help="true coefficient pattern")
    g.add_argument("--alpha-power", type=float, default=5.0, help="power of the skeptic marginal transform")
    g.add_argument("--column", type=int, default=2, help="1-based column m whose truth is written (default 2)")
    g.add_argument("--seed", type=int, default=0, help="random seed")
    g.add_argument("--out", required=True, help="output directory for data.csv and truth.csv")
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("solve", help="solve min ||x||_1 s.t. ||Ax - b||_inf <= lambda")
    v.add_argument("A", help="CSV matrix with a header row")
    v.add_argument("b", help="single-column CSV with a header row")
    v.add_argument("--lambda", dest="lam", type=float, required=True, help="constraint radius")
    v.add_argument("--out", default=None, help="directory for x.csv")
    v.set_defaults(func=cmd_solve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AllReplicatesFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, IndexError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
