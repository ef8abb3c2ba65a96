"""Command-line driver: ``run``, ``validate`` and ``sweep``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

from . import __version__, kernels
from .core import ConfigError
from .dispatch import export_layout
from .metrics import (
    attack_traffic,
    call_processing_time,
    histogram,
    records_to_tsv,
    scope_report,
    total_service_time,
)
from .scenario import (
    add_threat_overlay,
    apply_overrides,
    bundled_path,
    parse_scenario,
    read_json,
    scenario_to_doc,
)
from .simulator import BatchResult, run_batch, without_threats
from .threats import attack_impact_report, figure_columns
from .validation import format_table, run_checks

log = logging.getLogger("ng911sim")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

HISTOGRAMS = {
    "processing_min": (call_processing_time, 0.5, 0.0, 30.0),
    "service_min": (total_service_time, 1.0, 0.0, 60.0),
}


def _resolve(path: str, folder: str = "") -> Path:
    """A file path, or the name of a bundled scenario/threat file."""
    p = Path(path)
    if p.exists():
        return p
    name = path if path.endswith(".json") else f"{path}.json"
    cand = bundled_path(f"{folder}{name}")
    if cand.exists():
        return cand
    raise ConfigError(f"{path}: no such file or bundled {'threat' if folder else 'scenario'}")


def build_document(args) -> dict:
    doc = read_json(_resolve(args.scenario))
    for tp in args.threat or ():
        doc = add_threat_overlay(doc, read_json(_resolve(tp, "threats/")))
    doc = apply_overrides(doc, args.set or [])
    rep = doc.setdefault("replication", {})
    if args.seed is not None:
        rep["base_seed"] = args.seed
    if args.replications is not None:
        rep["replications"] = args.replications
    return doc


def _flatten(obj, prefix: str, out: list[tuple[str, str]]) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(v, f"{prefix}.{k}" if prefix else str(k), out)
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for k, v in enumerate(obj):
            _flatten(v, f"{prefix}.{k}", out)
    else:
        out.append((prefix, json.dumps(obj)))


def manifest_lines(sc, argv: list[str], extra: dict) -> list[str]:
    """Key-value provenance: code, seeds and every scenario parameter."""
    items = [
        ("code.version", __version__),
        ("code.kernel_backend", kernels.BACKEND),
        ("code.python", sys.version.split()[0]),
        ("command", " ".join(argv)),
        ("seeds.base_seed", str(sc.replication.base_seed)),
        ("seeds.replications", str(sc.replication.n_replications)),
        ("seeds.derivation", "SeedSequence(base_seed, spawn_key=(rep, crc32(stream)))"),
    ]
    items += [(f"run.{k}", str(v)) for k, v in extra.items()]
    flat: list[tuple[str, str]] = []
    _flatten(scenario_to_doc(sc), "scenario", flat)
    items += flat
    for k, s in enumerate(sc.dispatch.stations):
        items.append((f"stations.{s.id}", f"{s.asset} x_mi={s.x!r} y_mi={s.y!r} "
                                          f"vehicles={s.vehicles} psap={s.psap}"))
    return [f"{k}={v}" for k, v in items]


def _scopes(sc) -> list:
    return ["region"] + sc.psap_ids


def pooled_report(batch: BatchResult) -> dict:
    allrec = [r for recs in batch.replications for r in recs]
    out = {}
    for s in _scopes(batch.scenario):
        out["region" if s == "region" else f"psap{s}"] = scope_report(allrec, s)
    return out


def per_rep_summary(batch: BatchResult) -> list[dict]:
    rows = []
    for res, recs in zip(batch.results, batch.replications):
        rep = scope_report(recs)
        rows.append({
            "rep": res.rep,
            "calls": rep["calls"],
            "outcomes": rep["outcomes"],
            "processing_mean_min": rep["processing_min"]["mean"],
            "service_mean_min": rep["service_min"]["mean"],
            "fake_jobs": res.fake_jobs,
            "params_restored": res.nominal_params == res.final_params,
        })
    return rows


def _write(dirpath: Path, name: str, text: str) -> None:
    (dirpath / name).write_text(text)


def emit_run(out: Path, sc, attacked: BatchResult, baseline: BatchResult | None, argv, wall) -> dict:
    """Write every artifact into ``out`` (a fresh staging directory)."""
    report = {
        "scenario": sc.name,
        "replications": sc.replication.n_replications,
        "base_seed": sc.replication.base_seed,
        "horizon_s": sc.replication.horizon,
        "kernel_backend": kernels.BACKEND,
        "pooled": pooled_report(attacked),
        "per_replication": per_rep_summary(attacked),
    }
    if sc.threats:
        allrec = [r for res in attacked.results for r in res.records]
        report["attack"] = {
            "threats": [t.id for t in sc.threats],
            "traffic": attack_traffic(allrec),
            "paired_baseline": baseline is not None,
        }
        if baseline is not None:
            report["attack"]["impact"] = attack_impact_report(baseline, attacked)
            report["attack"]["baseline"] = pooled_report(baseline)
    for res in attacked.results:
        _write(out, f"calls_rep{res.rep}.tsv", records_to_tsv(res.records))
    allrec = [r for recs in attacked.replications for r in recs if r.provenance == "normal"]
    for metric, (fn, width, lo, hi) in HISTOGRAMS.items():
        h = histogram([fn(r) for r in allrec], width, lo, hi)
        _write(out, f"hist_{metric}.tsv", h.to_tsv())
    _write(out, "stations.tsv", export_layout(sc.dispatch.stations))
    _write(out, "scenario.json", json.dumps(scenario_to_doc(sc), indent=2) + "\n")
    _write(out, "report.json", json.dumps(report, indent=2) + "\n")
    extra = {"paired_baseline": baseline is not None}
    _write(out, "manifest.txt", "\n".join(manifest_lines(sc, argv, extra)) + "\n")
    return report


def _commit(staging: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for f in sorted(staging.iterdir()):
        os.replace(f, out / f.name)


def cmd_run(args, argv) -> int:
    sc = parse_scenario(build_document(args))
    t0 = time.perf_counter()
    attacked = run_batch(sc, workers=args.workers)
    baseline = None
    if sc.threats and not args.no_paired:
        baseline = run_batch(without_threats(sc), workers=args.workers)
    wall = time.perf_counter() - t0
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        report = emit_run(staging, sc, attacked, baseline, argv, wall)
        _commit(staging, out)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    reg = report["pooled"]["region"]
    print(f"{sc.name}: {sc.replication.n_replications} replications in {wall:.2f} s -> {out}")
    print(f"  calls={reg['calls']} processing_mean={_f(reg['processing_min']['mean'])} min "
          f"service_mean={_f(reg['service_min']['mean'])} min drop_rate={_f(reg['drop_rate'])}")
    if baseline is not None:
        d = report["attack"]["impact"]["region"]["delta"]
        print(f"  attack delta: dropped={_f(d['dropped'])} processing={_f(d['processing_min'])} min")
    return EXIT_OK


def _f(v) -> str:
    return "n/a" if v is None else f"{v:.4g}"


def cmd_validate(args, argv) -> int:
    checks = run_checks(args.completions, args.route, args.seed,
                        kernel_completions=args.kernel_completions)
    print(f"kernel backend: {kernels.BACKEND}")
    print(format_table(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_INVALID


SWEEP_COLUMNS = ("point", "processed", "dropped", "drop_rate", "processing_min", "service_min")


def sweep_table(args) -> tuple[list[list], object]:
    base_doc = build_document(args)
    base_sc = parse_scenario(base_doc)
    scope = args.scope if args.scope == "region" else int(args.scope)
    rows = []
    baseline = run_batch(without_threats(base_sc), workers=args.workers)
    cols = figure_columns(baseline.replications, scope)
    rows.append(["no-threat"] + [cols[k] for k in SWEEP_COLUMNS[1:]])
    for raw in args.values.split(","):
        sc = parse_scenario(apply_overrides(base_doc, [f"{args.param}={raw}"]))
        if sc.topology() != base_sc.topology():
            raise ConfigError(f"sweep point {args.param}={raw} changes the topology")
        b = run_batch(sc, workers=args.workers)
        cols = figure_columns(b.replications, scope)
        rows.append([f"{args.param}={raw}"] + [cols[k] for k in SWEEP_COLUMNS[1:]])
    return rows, base_sc


def cmd_sweep(args, argv) -> int:
    rows, sc = sweep_table(args)
    lines = ["\t".join(SWEEP_COLUMNS)]
    for r in rows:
        lines.append("\t".join([r[0]] + ["" if v is None else f"{v:.6g}" for v in r[1:]]))
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
        try:
            _write(staging, "sweep.tsv", text)
            _write(staging, "manifest.txt", "\n".join(manifest_lines(
                sc, argv, {"sweep.param": args.param, "sweep.values": args.values,
                           "sweep.scope": args.scope})) + "\n")
            _commit(staging, out)
        finally:
            shutil.rmtree(staging, ignore_errors=True)
    return EXIT_OK


def _scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", default="charlotte",
                   help="scenario JSON path or bundled name (default: charlotte)")
    p.add_argument("--seed", type=int, help="base seed (overrides the scenario)")
    p.add_argument("--replications", type=int, help="number of replications")
    p.add_argument("--threat", action="append", metavar="PATH",
                   help="threat overlay file or bundled name; repeatable")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE",
                   help="override a scenario field (dotted path or p_d, speed, theta, "
                        "flood_rate, patience_min); repeatable")
    p.add_argument("--workers", type=int, default=1, help="parallel replication processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ng911sim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"ng911sim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write its artifacts")
    _scenario_args(run)
    run.add_argument("--output", default="ng911sim-out", help="output directory")
    run.add_argument("--no-paired", action="store_true",
                     help="skip the paired no-threat baseline run")

    val = sub.add_parser("validate", help="oracle-versus-simulator check table")
    val.add_argument("--completions", type=int, default=1_000_000,
                     help="jobs per event-driven check (default 10**6)")
    val.add_argument("--kernel-completions", type=int, default=10_000_000,
                     help="jobs per compiled-kernel queue check (default 10**7)")
    val.add_argument("--route", choices=("both", "des", "kernel"), default="both")
    val.add_argument("--seed", type=int, default=1)

    sw = sub.add_parser("sweep", help="grid over one threat parameter")
    _scenario_args(sw)
    sw.add_argument("--param", required=True,
                    help="field to vary, e.g. flood_rate or threats.0.duration_min")
    sw.add_argument("--values", required=True, help="comma-separated grid values")
    sw.add_argument("--scope", default="region", help="region or a PSAP id")
    sw.add_argument("--output", help="directory for sweep.tsv and manifest.txt")
    return ap


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, ["ng911sim"] + argv)
    except ConfigError as exc:
        print(f"ng911sim: configuration error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        log.debug("run failed", exc_info=True)
        print(f"ng911sim: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
