"""Command-line pipeline runner.

Exit codes: 0 success, 2 invalid configuration or input files, 3 numerical
failure (solver non-convergence, norm floor breach), 4 physics heuristics
failed (unlabeled channels, rejected classifications).

Environment: ``SCATTERLAB_OUTPUT_DIR`` overrides the output directory and
``SCATTERLAB_THREADS`` caps BLAS threads (same as ``--threads``).
"""

from __future__ import annotations

import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _pin_threads(argv: list[str]) -> None:
    # must run before numpy is imported to take effect
    threads = os.environ.get("SCATTERLAB_THREADS")
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif arg.startswith("--threads="):
            threads = arg.split("=", 1)[1]
    if threads:
        for var in _THREAD_VARS:
            os.environ[var] = str(threads)


if "numpy" not in sys.modules:
    _pin_threads(sys.argv[1:])

import argparse  # noqa: E402
import csv  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
from concurrent.futures import ProcessPoolExecutor  # noqa: E402
from pathlib import Path  # noqa: E402

import jsonschema  # noqa: E402
import numpy as np  # noqa: E402

from . import pipeline  # noqa: E402
from .config import ConfigError, RunConfig, build_config, load_config  # noqa: E402
from .dynamics import NormFloorError, SnapshotWriter  # noqa: E402
from .entanglement import REPORT_SCHEMA, SeparationError  # noqa: E402
from .ising import energy_density  # noqa: E402
from .mps import MatrixProductState, StructureError  # noqa: E402
from .spectroscopy import DispersionTable, EDConvergenceError  # noqa: E402
from .stateprep import ConvergenceError  # noqa: E402

log = logging.getLogger("scatterlab")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_HEURISTIC = 4

# file name -> expected CSV header
CSV_HEADERS = {
    "energy_density.csv": ["t", "n", "E_n"],
    "dispersion.csv": ["k", "E1", "E2", "v1", "v2"],
    "sweep.csv": ["k_i_over_pi", "entropy", "antiflatness", "n_significant", "lambda_0", "lambda_1", "lambda_2"],
}

JSON_SCHEMAS = {
    "channels.json": REPORT_SCHEMA,
    "vacuum.json": {"type": "object", "required": ["energy", "variance", "L", "chi"]},
    "dispersion.json": {"type": "object", "required": ["k_grid", "coefficients", "summary"]},
    "scatter.json": {"type": "object", "required": ["t_end", "norm_sq", "chi", "midpoint", "mirror_asymmetry"]},
}
JSONL_SCHEMAS = {
    "diagnostics.jsonl": {
        "type": "object",
        "required": ["t", "norm_sq", "chi", "discarded_weight"],
        "properties": {"t": {"type": "number"}, "norm_sq": {"type": "number"}, "chi": {"type": "integer"}},
    }
}


class HeuristicFailure(RuntimeError):
    """Raised after partial output has been written."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _out(cfg: RunConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (range, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _load_vacuum(cfg: RunConfig, path: str | None) -> MatrixProductState:
    p = Path(path) if path else cfg.output_dir / "vacuum.mps"
    if p.exists():
        vac = MatrixProductState.load(p)
        if vac.length != cfg.L:
            raise ConfigError("lattice.L", f"vacuum snapshot {p} has length {vac.length}, config says {cfg.L}")
        return vac
    log.info("no vacuum snapshot at %s; computing it", p)
    vac, _ = pipeline.run_vacuum(cfg)
    vac.save(cfg.output_dir / "vacuum.mps")
    return vac


def _load_table(cfg: RunConfig, path: str | None) -> DispersionTable | None:
    p = Path(path) if path else cfg.output_dir / "dispersion.json"
    if p.exists():
        return DispersionTable.from_json(p)
    if path:
        raise ConfigError("", f"dispersion table {p} not found")
    return None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_validate(cfg: RunConfig, args) -> int:
    print(f"config OK: L={cfg.L}, g_x={cfg.couplings.g_x}, g_z={cfg.couplings.g_z}")
    if args.outputs:
        problems = check_outputs(Path(args.outputs))
        for p in problems:
            print(f"invalid output: {p}", file=sys.stderr)
        if problems:
            return EXIT_VALIDATION
        print(f"outputs in {args.outputs} OK")
    return EXIT_OK


def cmd_vacuum(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    vac, info = pipeline.run_vacuum(cfg)
    vac.save(out / "vacuum.mps")
    _write_json(out / "vacuum.json", info)
    print(f"vacuum: E/L={info['energy_density']:.12f} variance={info['variance']:.2e} chi={info['chi']}")
    return EXIT_OK


def cmd_dispersion(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    table = pipeline.run_dispersion(cfg)
    table.to_csv(out / "dispersion.csv")
    table.to_json(out / "dispersion.json")
    s = table.summary()
    k_thr = "n/a" if s["k_thr_over_pi"] is None else f"{s['k_thr_over_pi']:.4f}pi"
    m2 = "n/a" if s["m2"] is None else f"{s['m2']:.4f}"
    print(f"m1={s['m1']:.4f} m2={m2} k_thr={k_thr}")
    return EXIT_OK


def cmd_scatter(cfg: RunConfig, args) -> int:
    if cfg.left is None or cfg.schedule is None:
        raise ConfigError("wavepackets", "scatter needs 'wavepackets' and 'evolution' sections")
    out = _out(cfg)
    vac = _load_vacuum(cfg, args.vacuum)
    with SnapshotWriter(out / "energy_density.csv", out / "diagnostics.jsonl") as writer:
        try:
            result = pipeline.run_scatter(cfg, vacuum=vac, callback=writer)
        except NormFloorError as exc:
            _write_json(
                out / "scatter_failure.json",
                {"error": str(exc), "t": exc.t, "norm_sq": exc.norm_sq, "records": [r.diagnostics() for r in exc.records]},
            )
            raise
    result.final.save(out / "final_state.mps")
    _write_json(out / "scatter.json", result.summary)
    mid = result.summary["midpoint"]
    print(
        f"t={result.summary['t_end']} norm^2={result.summary['norm_sq']:.6f} chi={result.summary['chi']} "
        f"S={mid['entropy']:.4f} F={mid['antiflatness']:.3e} significant={mid['significant']}"
    )
    print(f"mirror asymmetry of E_n: {result.summary['mirror_asymmetry']:.2e}")
    return EXIT_OK


def _isolate(cfg: RunConfig, args, classify: bool) -> int:
    out = _out(cfg)
    state_path = Path(args.state) if args.state else out / "final_state.mps"
    if not state_path.exists():
        raise ConfigError("", f"final-state snapshot {state_path} not found (run 'scatter' first)")
    final = MatrixProductState.load(state_path)
    if final.length != cfg.L:
        raise ConfigError("lattice.L", f"snapshot has length {final.length}, config says {cfg.L}")
    vac = _load_vacuum(cfg, args.vacuum)
    table = _load_table(cfg, args.dispersion) if classify else None
    t_final = args.time
    if t_final is None and cfg.schedule is not None:
        t_final = cfg.schedule.t_end
    report = pipeline.run_isolation(cfg, final, vac, t_final=t_final, table=table)
    report.to_json(out / "channels.json")

    n = np.arange(cfg.L)
    columns = {"n": n, "full": energy_density(final, vac, cfg.couplings) / final.norm_sq()}
    for ch in report.channels:
        ch.state.save(out / f"{ch.state_ref}.mps")
        columns[ch.state_ref] = energy_density(ch.state, vac, cfg.couplings)
    with open(out / "channel_energy.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(columns))
        for row in zip(*columns.values()):
            w.writerow([f"{x:.12g}" if isinstance(x, float) else x for x in row])

    rows = [row for ch in report.channels for row in ch.classifications]
    if rows:
        with open(out / "classification.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "channel", "region", "velocity", "E_wp", "species", "k_over_pi", "E", "rel_error", "rejected"])
            for r in rows:
                w.writerow(
                    [
                        r["component"], r["channel"], r["region"], r.get("measured_velocity"), r.get("E_wp"),
                        r.get("chosen_species"), None if r.get("chosen_momentum") is None else r["chosen_momentum"] / np.pi,
                        r.get("chosen_energy"), r.get("relative_error"), r["rejected"],
                    ]
                )
    for ch in report.channels:
        print(f"{ch.state_ref}: label={ch.label} P={ch.probability:.4f}")
    print(f"residual={report.residual_probability:.4f} branching={report.branching_ratios()}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if report.warnings:
        raise HeuristicFailure(f"{len(report.warnings)} warnings; partial report written")
    return EXIT_OK


def cmd_isolate(cfg: RunConfig, args) -> int:
    return _isolate(cfg, args, classify=args.dispersion is not None or (cfg.output_dir / "dispersion.json").exists())


def cmd_classify(cfg: RunConfig, args) -> int:
    if _load_table(cfg, args.dispersion) is None:
        raise ConfigError("", "classification needs a dispersion table (run 'dispersion' first)")
    return _isolate(cfg, args, classify=True)


def _sweep_job(payload: tuple[dict, float, str]) -> dict:
    raw, k, out = payload
    raw = json.loads(json.dumps(raw))
    raw["wavepackets"]["left"]["k_i_over_pi"] = k
    raw["wavepackets"].pop("right", None)
    cfg = build_config(raw, out)
    result = pipeline.run_scatter(cfg)
    _out(cfg)
    result.final.save(cfg.output_dir / "final_state.mps")
    _write_json(cfg.output_dir / "scatter.json", result.summary)
    return {"k": k, **result.summary["midpoint"]}


def cmd_sweep(cfg: RunConfig, args) -> int:
    if not cfg.sweep_k:
        raise ConfigError("sweep.k_i_over_pi", "no momenta to sweep")
    if cfg.left is None or cfg.schedule is None:
        raise ConfigError("wavepackets", "sweep needs 'wavepackets' and 'evolution' sections")
    out = _out(cfg)
    user_raw = {k: v for k, v in cfg.raw.items()}
    payloads = [(user_raw, k, str(out / f"k_{k:.4f}")) for k in cfg.sweep_k]
    if cfg.sweep_jobs > 1:
        with ProcessPoolExecutor(cfg.sweep_jobs) as pool:
            results = list(pool.map(_sweep_job, payloads))
    else:
        results = [_sweep_job(p) for p in payloads]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADERS["sweep.csv"])
        for r in results:
            lam = (r["significant"] + [0.0, 0.0, 0.0])[:3]
            w.writerow([r["k"], r["entropy"], r["antiflatness"], len(r["significant"]), *lam])
            print(f"k_i={r['k']:.3f}pi S={r['entropy']:.4f} F={r['antiflatness']:.3e} significant={r['significant']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# output checker
# ---------------------------------------------------------------------------


def check_outputs(directory: Path) -> list[str]:
    """Schema problems of every recognised file under ``directory``."""
    problems = []
    if not directory.is_dir():
        return [f"{directory} is not a directory"]
    for path in sorted(directory.rglob("*")):
        name = path.name
        try:
            if name in JSON_SCHEMAS:
                jsonschema.validate(json.loads(path.read_text()), JSON_SCHEMAS[name])
            elif name in JSONL_SCHEMAS:
                for line in path.read_text().splitlines():
                    jsonschema.validate(json.loads(line), JSONL_SCHEMAS[name])
            elif name in CSV_HEADERS:
                with open(path, newline="") as fh:
                    header = next(csv.reader(fh), [])
                if header != CSV_HEADERS[name]:
                    problems.append(f"{path}: header {header} != {CSV_HEADERS[name]}")
            elif name == "channel_energy.csv":
                with open(path, newline="") as fh:
                    header = next(csv.reader(fh), [])
                if header[:2] != ["n", "full"]:
                    problems.append(f"{path}: header must start with n, full")
            elif path.suffix == ".mps":
                MatrixProductState.load(path)
        except (jsonschema.ValidationError, json.JSONDecodeError, StructureError) as exc:
            problems.append(f"{path}: {str(exc).splitlines()[0]}")
    return problems


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "validate": (cmd_validate, "check a configuration (and optionally emitted files)"),
    "vacuum": (cmd_vacuum, "ground state by two-site sweeps"),
    "dispersion": (cmd_dispersion, "particle dispersions from exact diagonalization"),
    "scatter": (cmd_scatter, "prepare two packets and evolve them"),
    "isolate": (cmd_isolate, "separate the final state into exclusive channels"),
    "classify": (cmd_classify, "isolate channels and classify every outgoing packet"),
    "sweep": (cmd_sweep, "scatter at several incoming momenta"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scatterlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("--output-dir", help="overrides output_dir (and SCATTERLAB_OUTPUT_DIR)")
        p.add_argument("--threads", type=int, help="BLAS thread count")
        if name == "validate":
            p.add_argument("--outputs", help="also schema-check the files in this directory")
        if name in ("scatter", "isolate", "classify"):
            p.add_argument("--vacuum", help="vacuum snapshot (default: <output_dir>/vacuum.mps)")
        if name in ("isolate", "classify"):
            p.add_argument("--state", help="final-state snapshot (default: <output_dir>/final_state.mps)")
            p.add_argument("--dispersion", help="dispersion JSON (default: <output_dir>/dispersion.json)")
            p.add_argument("--time", type=float, help="time of the snapshot (default: evolution.t_end)")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    output_dir = args.output_dir or os.environ.get("SCATTERLAB_OUTPUT_DIR")
    try:
        cfg = load_config(args.config, output_dir)
        handler = COMMANDS[args.command][0]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NormFloorError, ConvergenceError, EDConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HeuristicFailure as exc:
        print(f"heuristic failure: {exc}", file=sys.stderr)
        return EXIT_HEURISTIC
    except SeparationError as exc:
        print(f"heuristic failure: {exc}", file=sys.stderr)
        return EXIT_HEURISTIC


if __name__ == "__main__":
    sys.exit(main())
