"""Command-line interface: ``specmpc {run,sweep,validate,analyze,list}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .scenario import (
    SWEEP_PARAMETERS,
    Scenario,
    ScenarioError,
    load_scenario,
    parse_scenario,
    scenario_from_dict,
    shipped_scenarios,
)
from .simulate import RunArtifacts, replay_filter, run_scenario, spectrogram_gap_columns, summarize

logger = logging.getLogger("specmpc")

TRACE_COLUMNS = ("t", "bit", "vC", "iL", "duty")
AGGREGATE_COLUMNS = ("parameter", "value", "f_sw_hz", "distortion_power", "v_mean", "v_var", "v_p2p",
                     "sfdr_dc_db", "max_run")


# ---------------------------------------------------------------------------
# serialisation


def _clean(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return None if np.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def write_metrics(path: Path, metrics: dict) -> None:
    path.write_text(json.dumps({k: _clean(v) for k, v in metrics.items()}, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, columns, rows, fmt: str) -> Path:
    if fmt == "csv":
        path = path.with_suffix(".csv")
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for r in rows:
                w.writerow([repr(_clean(x)) if isinstance(x, float) else _clean(x) for x in r])
    else:
        path = path.with_suffix(".jsonl")
        with path.open("w") as fh:
            for r in rows:
                fh.write(json.dumps({c: _clean(x) for c, x in zip(columns, r)}) + "\n")
    return path


def write_traces(out: Path, art: RunArtifacts, fmt: str) -> Path:
    rows = zip(art.t.tolist(), art.bits.tolist(), art.vC.tolist(), art.iL.tolist(), art.duty.tolist())
    return _write_rows(out / "traces", TRACE_COLUMNS, rows, fmt)


def read_traces(out: Path) -> dict:
    csv_path, jl_path = out / "traces.csv", out / "traces.jsonl"
    cols = {c: [] for c in TRACE_COLUMNS}
    if csv_path.exists():
        with csv_path.open() as fh:
            for row in csv.DictReader(fh):
                for c in TRACE_COLUMNS:
                    cols[c].append(float(row[c]))
    elif jl_path.exists():
        with jl_path.open() as fh:
            for line in fh:
                rec = json.loads(line)
                for c in TRACE_COLUMNS:
                    cols[c].append(float(rec[c]))
    else:
        raise FileNotFoundError(f"no traces.csv or traces.jsonl in {out}")
    return {c: np.asarray(v) for c, v in cols.items()}


def write_spectra(out: Path, art: RunArtifacts, fmt: str) -> None:
    if art.spectrum is not None:
        s = art.spectrum
        cols = ["freq_hz", "spectral_db"]
        data = [s.freqs, s.db]
        if art.pwm_spectrum is not None and art.pwm_spectrum.freqs.size == s.freqs.size:
            cols.append("pwm_db")
            data.append(art.pwm_spectrum.db)
        _write_rows(out / "spectrum", cols, zip(*[d.tolist() for d in data]), fmt)
    if art.scenario.analysis.get("spectrogram") and art.final_filter.gaps:
        cols = spectrogram_gap_columns(art)
        if cols is not None:
            names = list(cols)
            _write_rows(out / "spectrogram_gap", names, zip(*[cols[k].tolist() for k in names]), fmt)


def save_run(art: RunArtifacts, out: Path, fmt: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.yaml").write_text(yaml.safe_dump(_plain(art.scenario.raw), sort_keys=False))
    write_traces(out, art, fmt)
    write_spectra(out, art, fmt)
    write_metrics(out / "metrics.json", art.metrics)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    if isinstance(obj, float) and np.isinf(obj):
        return "inf"
    return obj


# ---------------------------------------------------------------------------
# commands


def _with_seed(scn: Scenario, seed: Optional[int]) -> Scenario:
    if seed is None:
        return scn
    raw = dict(scn.raw)
    raw["seed"] = seed
    return scenario_from_dict(raw, source=scn.source)


def _run_point(args):
    """Worker for one sweep point (top level so it can be pickled)."""
    raw, source, parameter, value, out, fmt = args
    scn = scenario_from_dict(raw, source=source).with_parameter(parameter, value)
    art = run_scenario(scn)
    save_run(art, Path(out), fmt)
    return art.metrics


def cmd_run(args) -> int:
    scn = _with_seed(load_scenario(args.scenario), args.seed)
    if args.duration is not None:
        scn = scn.with_duration(args.duration)
    art = run_scenario(scn)
    out = Path(args.output or f"runs/{scn.name}")
    save_run(art, out, args.format)
    print(json.dumps({k: _clean(v) for k, v in art.metrics.items()}, indent=2, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    scn = _with_seed(load_scenario(args.scenario), args.seed)
    if args.duration is not None:
        scn = scn.with_duration(args.duration)
    parameter = args.parameter or (scn.sweep or {}).get("parameter")
    values = args.values if args.values is not None else (scn.sweep or {}).get("values")
    if parameter not in SWEEP_PARAMETERS or not values:
        print("sweep needs --parameter {lambda2,M,K_max} and --values (or a 'sweep' block in the scenario)",
              file=sys.stderr)
        return 2
    values = [_parse_value(v) for v in values]
    out = Path(args.output or f"runs/{scn.name}_sweep")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(scn.raw, scn.source, parameter, v, str(out / f"{parameter}={_value_text(v)}"), args.format) for v in values]
    results = []
    status = 0
    threads = max(int(args.threads or 1), 1)
    try:
        if threads == 1:
            for j in jobs:
                results.append(_run_point(j))
        else:
            with ProcessPoolExecutor(max_workers=threads) as ex:
                futures = [ex.submit(_run_point, j) for j in jobs]
                for f in futures:
                    results.append(f.result())
    except Exception as exc:  # keep whatever finished
        print(f"sweep aborted at point {len(results) + 1} of {len(jobs)}: {exc}", file=sys.stderr)
        status = 1
    rows = []
    for v, m in zip(values, results):
        rows.append([parameter, _value_text(v)] + [m.get(c) for c in AGGREGATE_COLUMNS[2:]])
    _write_rows(out / "aggregate", AGGREGATE_COLUMNS, rows, "csv")
    for r in rows:
        print(",".join("" if x is None else str(_clean(x)) for x in r))
    return status


def _parse_value(v):
    if isinstance(v, str):
        if v.lower() in ("inf", "none", "null"):
            return None
        f = float(v)
        return int(f) if f == int(f) else f
    if isinstance(v, float) and np.isinf(v):
        return None
    return v


def _value_text(v) -> str:
    return "inf" if v is None else str(v)


def cmd_validate(args) -> int:
    status = 0
    for path in args.scenario:
        try:
            load_scenario(path)
        except ScenarioError as exc:
            print(str(exc))
            status = 1
        except (OSError, FileNotFoundError) as exc:
            print(f"{path}: {exc}")
            status = 1
        else:
            print(f"{path}: ok")
    return status


def cmd_analyze(args) -> int:
    out = Path(args.run_dir)
    scn = parse_scenario((out / "scenario.yaml").read_text(), source=str(out / "scenario.yaml"))
    tr = read_traces(out)
    spec, track = replay_filter(scn)
    art = RunArtifacts(scn, tr["t"], tr["bit"].astype(np.int8), tr["vC"], tr["iL"], tr["duty"],
                       gap_track=track, final_filter=spec)
    summarize(art)
    fmt = "jsonl" if (out / "traces.jsonl").exists() else "csv"
    write_spectra(out, art, fmt)
    write_metrics(out / "metrics.json", art.metrics)
    print(json.dumps({k: _clean(v) for k, v in art.metrics.items()}, indent=2, sort_keys=True))
    return 0


def cmd_list(args) -> int:
    for name in shipped_scenarios():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specmpc", description="Spectral predictive control of a buck converter.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--output", "-o", help="output directory")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--format", choices=("csv", "jsonl"), default="csv", help="trace/spectrum file format")
        sp.add_argument("--duration", type=float, help="override the simulated duration (s)")

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario", help="scenario file or shipped scenario name")
    common(r)
    r.add_argument("--threads", type=int, default=1, help="accepted for symmetry; a single run is serial")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario for several values of one parameter")
    s.add_argument("scenario")
    s.add_argument("--parameter", choices=SWEEP_PARAMETERS)
    s.add_argument("--values", nargs="+", help="values to sweep ('inf' for no K_max)")
    s.add_argument("--threads", type=int, default=1, help="parallel worker processes")
    common(s)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check scenario files without running them")
    v.add_argument("scenario", nargs="+")
    v.set_defaults(func=cmd_validate)

    a = sub.add_parser("analyze", help="recompute metrics from a stored run directory")
    a.add_argument("run_dir")
    a.set_defaults(func=cmd_analyze)

    ls = sub.add_parser("list", help="list shipped scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
