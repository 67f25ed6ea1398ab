"""Command-line interface: ``mse estimate | simulate | benchmark``."""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .estimators import METHODS, ConstantEstimator, make_estimator
from .exceptions import TrsError
from .simulate import PRESETS, generate_batch, load_population
from .stochastics import make_rng
from .table import DATASETS, builtin_dataset, dumps_csv, load_tables, _jsonable
from .uncertainty import bootstrap, benchmark

log = logging.getLogger("trsmse")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


def _default_seed() -> int:
    raw = os.environ.get("MSE_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"MSE_SEED must be an integer, got {raw!r}") from None


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _manifest(command: str, args: argparse.Namespace, inputs: list[Path]) -> dict:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
              if k not in ("func",)}
    return {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "seed": args.seed,
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "inputs": {str(p): _digest(p) for p in inputs if p.exists()},
    }


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _estimators(names: list[str], args) -> list:
    out = []
    for name in names:
        if name in ("im", "llm", "qsm", "pqsm"):
            out.append(make_estimator(name, add_half=args.add_half))
        elif name == "thbm":
            out.append(make_estimator(name, K=args.K, max_iter=args.max_iter, tol=args.tol,
                                      pcond=args.pcond, mode=args.mstep, random_state=args.seed))
        else:
            out.append(make_estimator(name))
    return out


def _method_list(raw: str, allow_oracle: bool = False) -> list[str]:
    names = [m.strip().lower() for m in raw.split(",") if m.strip()]
    if names == ["all"]:
        return list(METHODS)
    valid = set(METHODS) | ({"oracle"} if allow_oracle else set())
    bad = [m for m in names if m not in valid]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown method(s): {', '.join(bad) or raw!r}")
    return names


# ---------------------------------------------------------------------------
# estimate


def cmd_estimate(args) -> int:
    inputs: list[Path] = []
    if args.dataset:
        tables = [builtin_dataset(args.dataset)]
    else:
        path = Path(args.input)
        inputs.append(path)
        tables = load_tables(path)
    methods = _method_list(args.method)
    results = []
    feasible_any = False
    for ti, table in enumerate(tables):
        for mi, est in enumerate(_estimators(methods, args)):
            stream = (ti, mi)
            res = est.estimate(table, rng=make_rng(args.seed, stream))
            entry = res.to_dict()
            if args.trace and est.method == "THBM":
                trace_path = Path(args.trace)
                if len(tables) > 1:
                    trace_path = trace_path.with_name(f"{trace_path.stem}.{ti}{trace_path.suffix}")
                _write(trace_path, est.fit_.trace_csv())
            for w in res.diagnostics.get("warnings", []):
                log.warning("%s %s: %s", table.label or f"table {ti}", res.method, w)
            if args.bootstrap:
                try:
                    rep = bootstrap(table, est, B=args.bootstrap, seed=args.seed,
                                    mode=args.bootstrap_mode, stream=stream, point=res)
                    entry["bootstrap"] = rep.to_dict()
                    if rep.ci is not None:
                        entry["ci_lower"], entry["ci_upper"] = (round(v, 2) for v in rep.ci)
                except TrsError as e:
                    entry["bootstrap"] = {"error": str(e)}
            feasible_any |= res.feasible
            results.append(entry)
    report = {"results": results}
    out = Path(args.out) if args.out else None
    _write(out, _dump(report))
    if out is not None:
        _write(_manifest_path(out), _dump(_manifest("estimate", args, inputs)))
    return EXIT_OK if feasible_any else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    spec = load_population(args.pop, N=args.n, s_literal=args.s_literal)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = {"population": spec.to_dict(), "N": spec.N, "seed": args.seed, "replicates": []}
    for r, sim in enumerate(generate_batch(spec, R=args.reps, seed=args.seed)):
        name = f"rep{r:04d}.{args.format}"
        if args.format == "json":
            text = json.dumps(sim.table.as_dict(), sort_keys=True) + "\n"
        else:
            text = dumps_csv([sim.table])
        (out / name).write_text(text)
        truth["replicates"].append({"file": name, "x0": sim.table.x0, "x000": sim.x000})
    (out / "truth.json").write_text(_dump(truth))
    inputs = [Path(args.pop)] if Path(args.pop).exists() else []
    (out / "manifest.json").write_text(_dump(_manifest("simulate", args, inputs)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark


def cmd_benchmark(args) -> int:
    spec = load_population(args.pop, N=args.n, s_literal=args.s_literal)
    names = _method_list(args.methods, allow_oracle=True)
    ests = []
    for name in names:
        ests.append(ConstantEstimator(spec.N) if name == "oracle" else _estimators([name], args)[0])

    def progress(done, total):
        log.info("replicate %d/%d", done, total)

    rep = benchmark(spec, R=args.reps, estimators=ests, seed=args.seed, B=args.B,
                    mode=args.bootstrap_mode, progress=progress)
    out = Path(args.out)
    _write(out, rep.to_csv())
    _write(out.with_suffix(".json"), rep.to_json())
    inputs = [Path(args.pop)] if Path(args.pop).exists() else []
    _write(_manifest_path(out), _dump(_manifest("benchmark", args, inputs)))
    for row in rep.rows:
        if row.failed:
            log.warning("%s: %d of %d replicates failed", row.method, row.failed, row.replicates)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _positive_int(v: str) -> int:
    i = int(v)
    if i < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return i


def _add_thbm_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("THBM")
    g.add_argument("--K", type=_positive_int, default=1000, help="E-step samples per iteration")
    g.add_argument("--max-iter", type=_positive_int, default=500)
    g.add_argument("--tol", type=float, default=1e-3)
    g.add_argument("--pcond", choices=("plugin", "posterior"), default="plugin",
                   help="beta conditional for the capture probabilities")
    g.add_argument("--mstep", choices=("expected", "latent"), default="expected",
                   help="treatment of the unobserved cell in the N update")
    p.add_argument("--add-half", action="store_true",
                   help="add 0.5 to every cell before log-linear fits")
    p.add_argument("--bootstrap-mode", choices=("nonparametric", "parametric"),
                   default="nonparametric")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mse", description="Population size estimation from three lists.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    seed = _default_seed()
    p = sub.add_parser("estimate", help="estimate population size for one or more tables")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="JSON or CSV table file")
    src.add_argument("--dataset", choices=DATASETS)
    p.add_argument("--method", default="all", help=f"one of {', '.join(METHODS)}, or all")
    p.add_argument("--bootstrap", type=_positive_int, metavar="B", help="bootstrap replicates")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--trace", help="write the THBM iteration trace as CSV")
    p.add_argument("--out", help="report path (default: stdout)")
    _add_thbm_options(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="generate simulated tables")
    p.add_argument("--pop", required=True, help=f"preset ({', '.join(PRESETS)}) or spec JSON")
    p.add_argument("--n", type=_positive_int, default=None, help="population size")
    p.add_argument("--reps", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--s-literal", action="store_true",
                   help="additive carry-over in scenarios s1/s2")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="compare estimators on simulated populations")
    p.add_argument("--pop", required=True, help=f"preset ({', '.join(PRESETS)}) or spec JSON")
    p.add_argument("--n", type=_positive_int, default=None)
    p.add_argument("--reps", type=_positive_int, default=100)
    p.add_argument("--methods", default="thbm,im,llm,qsm,pqsm,sc,mtb",
                   help="comma-separated methods; 'oracle' returns the true N")
    p.add_argument("--B", type=_positive_int, default=200, help="bootstrap replicates per table")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--s-literal", action="store_true")
    p.add_argument("--out", required=True, help="CSV path; JSON and manifest are written beside it")
    _add_thbm_options(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) if e.code in (0, None) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.command in ("estimate",) and args.method:
            _method_list(args.method)
        if args.command == "benchmark":
            _method_list(args.methods, allow_oracle=True)
        return args.func(args)
    except argparse.ArgumentTypeError as e:
        print(f"mse: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (TrsError, KeyError, ValueError, OSError) as e:
        print(f"mse: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
