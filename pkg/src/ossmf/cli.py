"""Command-line interface: ``gen``, ``run``, ``naive``, ``eval`` and ``bench``.

Matrices are plain CSV.  Observation files hold one observation per row
(T x L), with an optional header row; vertex files are L x K and coefficient
files K x T.  Errors print a single ``error[<code>]: <message>`` line to
stderr and exit with 2 (bad input) or 3 (numerical failure).
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from .datagen import DatasetSpec, generate, realized_snr_db
from .geometry import ContractError, SingularChartError
from .metrics import asad, evaluate_estimate
from .runner import LOG_COLUMNS, RunConfig, offline_estimate, run
from .subspace import NearOrthogonalError

EXIT_BAD_INPUT = 2
EXIT_NUMERICAL = 3
SUMMARY_COLUMNS = (
    "method",
    "repeats",
    "step_mean_s",
    "step_std_s",
    "asad_mean_deg",
    "asad_std_deg",
    "rmse_mean",
    "rmse_std",
    "updates_mean",
    "speedup",
)
# flag name -> RunConfig field
_RUN_FLAGS = {
    "eps1": "eps1",
    "eps2": "eps2",
    "eta": "eta",
    "d": "d",
    "k": "k",
    "seed": "seed",
    "init_batch": "init_batch",
    "checkpoint_every": "checkpoint_every",
    "burn_in": "burn_in",
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_BAD_INPUT):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message.replace("\n", " "))


def read_matrix(path) -> np.ndarray:
    """Load a numeric CSV, skipping a single header row if the first token is not a number."""
    path = Path(path)
    try:
        with path.open() as fh:
            first = fh.readline()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    token = first.split(",")[0].strip()
    try:
        float(token)
        skip = 0
    except ValueError:
        skip = 1
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc
    if data.size == 0 or not np.all(np.isfinite(data)):
        raise CliError(f"{path}: empty or non-finite matrix")
    return data


def write_matrix(path, a) -> None:
    np.savetxt(path, np.atleast_2d(a), delimiter=",", fmt="%.17g")


def _write_rows(handle, columns, rows) -> None:
    writer = csv.DictWriter(handle, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _out_dir(args) -> Path:
    if not args.out:
        raise CliError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override its values")
    common.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    common.add_argument("--out")
    common.add_argument("--seed", type=int)
    common.add_argument("--k", type=int)
    for name in ("eps1", "eps2", "eta", "d"):
        common.add_argument(f"--{name}", type=float)
    common.add_argument("--init-batch", type=int)
    common.add_argument("--checkpoint-every", type=int)
    common.add_argument("--burn-in", type=int, help="stop tracking the subspace after this many observations")

    data_args = _Parser(add_help=False)
    data_args.add_argument("--data")
    data_args.add_argument("--s-true")
    data_args.add_argument("--c-true")

    spec_args = _Parser(add_help=False)
    spec_args.add_argument("--l", type=int)
    spec_args.add_argument("--t", type=int)
    spec_args.add_argument("--purity", type=float)
    spec_args.add_argument("--snr-db", type=float)

    parser = _Parser(prog="ossmf", description="Online simplex-structured matrix factorization.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common, spec_args], help="write a synthetic dataset")
    sub.add_parser("run", parents=[common, data_args], help="stream a dataset through the online solver")
    sub.add_parser("naive", parents=[common, data_args], help="same stream, re-solving on all observations")
    ev = sub.add_parser("eval", parents=[common, data_args], help="score a vertex estimate")
    ev.add_argument("--estimate", help="L x K vertex CSV to score")
    bench = sub.add_parser("bench", parents=[common, spec_args], help="paired online vs. naive timing")
    bench.add_argument("--repeats", type=int, default=1)
    return parser


def resolve_config(args) -> RunConfig:
    base = RunConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise CliError(f"cannot read {args.config}: {exc.strerror}") from exc
        base = RunConfig.from_text(text)
    overrides = {field: getattr(args, flag) for flag, field in _RUN_FLAGS.items() if getattr(args, flag, None) is not None}
    return RunConfig.from_mapping(overrides, base)


def _dataset_spec(args, cfg: RunConfig) -> DatasetSpec:
    values = {"k": cfg.k, "seed": cfg.seed}
    for name in ("l", "t", "purity", "snr_db"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return DatasetSpec(**values)


def _truth(args, l: int, t: int):
    if not args.s_true and not args.c_true:
        return None
    if not (args.s_true and args.c_true):
        raise CliError("--s-true and --c-true must be given together")
    s, c = read_matrix(args.s_true), read_matrix(args.c_true)
    if s.shape[0] != l or c.shape[1] != t or s.shape[1] != c.shape[0]:
        raise CliError(f"ground truth shapes {s.shape} and {c.shape} do not fit data with L={l}, T={t}")
    return s, c


def cmd_gen(args, cfg: RunConfig) -> None:
    spec = _dataset_spec(args, cfg)
    out = _out_dir(args)
    ds = generate(spec)
    write_matrix(out / "Y.csv", ds.y_noisy.T)
    write_matrix(out / "S_true.csv", ds.s_true)
    write_matrix(out / "C_true.csv", ds.c_true)
    lines = []
    for f in fields(spec):
        v = getattr(spec, f.name)
        lines.append(f"{f.name} = {' '.join(map(str, v)) if isinstance(v, tuple) else v}")
    lines.append(f"realized_snr_db = {realized_snr_db(ds.y_clean, ds.y_noisy)!r}")
    (out / "spec.txt").write_text("\n".join(lines) + "\n")


def cmd_stream(args, cfg: RunConfig, naive: bool) -> None:
    if not args.data:
        raise CliError("--data is required")
    y = read_matrix(args.data)
    if y.shape[1] < cfg.k:
        raise CliError(f"data has L={y.shape[1]} < k={cfg.k}")
    truth = _truth(args, y.shape[1], y.shape[0])
    out = _out_dir(args)
    result = run(y, cfg, naive=naive, truth=truth)
    name = "naive" if naive else "run"
    with open(out / f"{name}_log.csv", "w") as fh:
        _write_rows(fh, LOG_COLUMNS, result.log)
    write_matrix(out / f"{name}_S_est.csv", result.estimate)


def cmd_eval(args, cfg: RunConfig) -> None:
    if not args.data or not args.estimate:
        raise CliError("--data and --estimate are required")
    y = read_matrix(args.data)
    s_est = read_matrix(args.estimate)
    truth = _truth(args, y.shape[1], y.shape[0])
    if truth is None:
        reference, c_ref, label = offline_estimate(y, cfg), None, "offline"
    else:
        (reference, c_ref), label = truth, "truth"
    if s_est.shape != reference.shape:
        raise CliError(f"estimate shape {s_est.shape} does not match reference {reference.shape}")
    if c_ref is None:
        angle, err = asad(reference, s_est), ""
    else:
        angle, err, _ = evaluate_estimate(reference, c_ref, y.T, s_est, cfg.abundance)
    row = {"reference": label, "asad_deg": angle, "rmse": err}
    _emit(args, ("reference", "asad_deg", "rmse"), [row])


def bench_rows(spec: DatasetSpec, cfg: RunConfig, repeats: int) -> list[dict]:
    """Paired online/naive runs on ``repeats`` datasets with consecutive seeds."""
    if repeats < 1:
        raise CliError("--repeats must be at least 1")
    stats = {"ossmf": [], "naive": []}
    # score the final estimate only
    cfg = replace(cfg, checkpoint_every=0)
    for r in range(repeats):
        ds = generate(DatasetSpec(**{**asdict(spec), "seed": spec.seed + r}))
        for method in stats:
            res = run(ds.y_noisy.T, cfg, naive=method == "naive", truth=(ds.s_true, ds.c_true))
            last = res.log[-1]
            stats[method].append((res.step_seconds.mean(), last["asad_deg"], last["rmse"], res.state.stats.updates))
    speedup = np.mean([s[0] for s in stats["naive"]]) / np.mean([s[0] for s in stats["ossmf"]])
    rows = []
    for method, values in stats.items():
        a = np.array(values, dtype=float)
        rows.append(
            {
                "method": method,
                "repeats": repeats,
                "step_mean_s": float(a[:, 0].mean()),
                "step_std_s": float(a[:, 0].std()),
                "asad_mean_deg": float(a[:, 1].mean()),
                "asad_std_deg": float(a[:, 1].std()),
                "rmse_mean": float(a[:, 2].mean()),
                "rmse_std": float(a[:, 2].std()),
                "updates_mean": float(a[:, 3].mean()),
                "speedup": float(speedup),
            }
        )
    return rows


def cmd_bench(args, cfg: RunConfig) -> None:
    spec = _dataset_spec(args, cfg)
    _emit(args, SUMMARY_COLUMNS, bench_rows(spec, cfg, args.repeats))


def _emit(args, columns, rows) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            _write_rows(fh, columns, rows)
    else:
        _write_rows(sys.stdout, columns, rows)


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = resolve_config(args)
        if args.print_config:
            sys.stdout.write(cfg.to_text())
            return 0
        if args.command == "gen":
            cmd_gen(args, cfg)
        elif args.command in ("run", "naive"):
            cmd_stream(args, cfg, naive=args.command == "naive")
        elif args.command == "eval":
            cmd_eval(args, cfg)
        else:
            cmd_bench(args, cfg)
    except CliError as exc:
        return _fail("bad-input" if exc.code == EXIT_BAD_INPUT else "numerical", exc, exc.code)
    except (SingularChartError, NearOrthogonalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    except (ContractError, OSError) as exc:
        return _fail("bad-input", exc, EXIT_BAD_INPUT)
    return 0


def _fail(code: str, exc: Exception, status: int) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"error[{code}]: {message}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
