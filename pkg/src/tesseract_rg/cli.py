"""Command-line front end: ``tesseract-rg {info,sweep,replay,cross,plot}``.

Sweep config grammar (INI style, ``#`` or ``;`` comments)::

    [experiment]
    model = phenomenological-perfect   # or -faulty, gate-based, single-shot, ising2d
    d1 = 2
    d2 = 2
    sizes = 3, 5                       # L values, or full lengths such as 3x3x5x5
    p = 0.06:0.085:0.0025              # start:stop:step (stop included) or a list
    trials = 10000
    seed = 8
    q = 0.02                           # optional, defaults to q = p
    T = 3                              # optional, defaults to 1 or the largest length
    max_cycles = 10000                 # memory models only

    [decoder]
    budget = 1000000
    exact_threshold = 24
    external_solver = python3 -m tesseract_rg.milp_solver

    [output]
    csv = results.csv                  # relative to the config file

Exit codes: 0 success, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .code import build_code, code_params
from .complex import build_lattice
from .gf2opt import InfeasibleSystem
from .harness import (
    ConfigError, ExperimentConfig, MemoryPointResult, curves_from_results, estimate_crossing,
    parse_lengths, read_csv, run_failure_sweep, run_memory_sweep, write_csv,
)
from .trials import MEMORY_MODELS, source_digest

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


class InputError(Exception):
    """Bad user input, reported as ``file:line: message``."""


# ---------------------------------------------------------------------------
# info


def _info_lengths(args) -> tuple[int, int, list[int]]:
    d1 = 2 if args.d1 is None else args.d1
    d2 = 2 if args.d2 is None else args.d2
    if args.lengths:
        lengths = list(parse_lengths(args.lengths))
        if args.d1 is None and args.d2 is None and len(lengths) != 4:
            raise InputError(f"--lengths has {len(lengths)} entries; give --d1/--d2 for non-4D codes")
    elif args.L is not None:
        lengths = [args.L] * (d1 + d2)
    else:
        raise InputError("give --L or --lengths")
    if len(lengths) != d1 + d2:
        raise InputError(f"--lengths needs d1 + d2 = {d1 + d2} entries, got {len(lengths)}")
    return d1, d2, lengths


def cmd_info(args) -> int:
    try:
        d1, d2, lengths = _info_lengths(args)
        lat = build_lattice(d1, d2, lengths)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    code = build_code(lat)
    n, k, d = code_params(code)
    xw = np.unique(np.diff(code.hx.indptr))
    zw = np.unique(np.diff(code.hz.indptr)) if code.hz.shape[0] else np.array([], dtype=int)
    deg_x = np.diff(code.hx.tocsc().indptr)
    deg_z = np.diff(code.hz.tocsc().indptr) if code.hz.shape[0] else np.zeros_like(deg_x)
    deg = deg_x + deg_z
    print(f"[[{n},{k},{d}]]")
    print(f"code ({d1},{d2}) lengths {','.join(map(str, lengths))}")
    print(f"X checks: {code.hx.shape[0]}, weights {_span(xw)}")
    print(f"Z checks: {code.hz.shape[0]}, weights {_span(zw)}")
    print(f"qubit degree: max {int(deg.max())}, min {int(deg.min())}")
    return EXIT_OK


def _span(values) -> str:
    if len(values) == 0:
        return "-"
    lo, hi = int(min(values)), int(max(values))
    return str(lo) if lo == hi else f"{lo}..{hi}"


# ---------------------------------------------------------------------------
# sweep

_SECTIONS = {
    "experiment": {"model", "d1", "d2", "sizes", "p", "q", "t", "trials", "seed", "max_cycles"},
    "decoder": {"budget", "exact_threshold", "external_solver"},
    "output": {"csv"},
}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            lines.setdefault((section, ""), no)
        elif section and re.match(r"[^#;=:\s][^=:]*[=:]", line):
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            lines.setdefault((section, key), no)
    return lines


def _grid(text: str) -> list[float]:
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError("range grid needs start:stop:step with step > 0")
        start, stop, step = parts
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    return [float(x) for x in re.split(r"[,\s]+", text) if x]


def _sizes(text: str, d1: int, d2: int) -> list[tuple[int, ...]]:
    out = []
    for tok in re.split(r"[,\s]+", text.strip()):
        if not tok:
            continue
        if "x" in tok:
            out.append(parse_lengths(tok))
        else:
            out.append((int(tok),) * (d1 + d2))
    return out


def load_config(path) -> tuple[ExperimentConfig, Path | None]:
    """Parse a sweep config; returns the config and the CSV path it names (if any)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    lines = _key_lines(text)

    def where(section, key=""):
        return f"{path}:{lines.get((section, key), lines.get((section, ''), 1))}"

    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=str(path))
    except configparser.ParsingError as exc:
        line, content = exc.errors[0]
        text_line = content.strip().strip("'\"").replace("\\n", "")
        raise InputError(f"{path}:{line}: cannot parse {text_line!r}") from None
    except configparser.Error as exc:
        line = getattr(exc, "lineno", 1)
        raise InputError(f"{path}:{line}: {exc.message.splitlines()[0]}") from None
    for section in cp.sections():
        if section not in _SECTIONS:
            raise InputError(f"{where(section)}: unknown section [{section}]")
        for key in cp[section]:
            if key not in _SECTIONS[section]:
                raise InputError(f"{where(section, key)}: unknown key {key!r} in [{section}]")
    if "experiment" not in cp:
        raise InputError(f"{path}:1: missing [experiment] section")
    ex = cp["experiment"]
    for key in ("model", "d1", "d2", "sizes", "p", "trials"):
        if key not in ex:
            raise InputError(f"{where('experiment')}: missing key {key!r}")

    def get(section, key, conv, default=None):
        if section not in cp or key not in cp[section]:
            return default
        raw = cp[section][key].strip()
        try:
            return conv(raw)
        except (ValueError, ConfigError) as exc:
            raise InputError(f"{where(section, key)}: bad value for {key}: {raw!r} ({exc})") from None

    d1 = get("experiment", "d1", int)
    d2 = get("experiment", "d2", int)
    cfg = ExperimentConfig(
        model=get("experiment", "model", str),
        d1=d1,
        d2=d2,
        sizes=get("experiment", "sizes", lambda s: _sizes(s, d1, d2)),
        p_grid=get("experiment", "p", _grid),
        trials=get("experiment", "trials", int),
        q=get("experiment", "q", float),
        T=get("experiment", "t", int),
        seed=get("experiment", "seed", int, 0),
        max_cycles=get("experiment", "max_cycles", int, 10_000),
        budget=get("decoder", "budget", int, ExperimentConfig.budget),
        exact_threshold=get("decoder", "exact_threshold", int, ExperimentConfig.exact_threshold),
        external_solver=get("decoder", "external_solver", str),
    )
    try:
        cfg.validate()
    except ConfigError as exc:
        field = _field_of(str(exc))
        raise InputError(f"{where('experiment', field)}: {exc}") from None
    out = get("output", "csv", str)
    return cfg, (path.parent / out if out else None)


def _field_of(message: str) -> str:
    for key, pattern in (("trials", "trials"), ("p", "p grid"), ("p", "p values"), ("q", "q must"),
                         ("T", "T="), ("T", "T must"), ("sizes", "size"), ("model", "model"),
                         ("max_cycles", "max_cycles"), ("d1", "d1")):
        if pattern in message:
            return key.lower()
    return ""


def _load_manifest(path: Path) -> tuple[ExperimentConfig, Path | None]:
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: {exc.msg}") from None
    try:
        cfg = ExperimentConfig.from_dict(data["config"]).validate()
    except (KeyError, TypeError, ConfigError) as exc:
        raise InputError(f"{path}:1: bad manifest config ({exc})") from None
    out = data.get("outputs", {}).get("csv")
    return cfg, (Path(out) if out else None)


def write_manifest(path, cfg: ExperimentConfig, csv_path, started: str, finished: str, threads: int) -> dict:
    data = {
        "tool": "tesseract-rg",
        "version": __version__,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "source_digest": source_digest(cfg.model),
        "started": started,
        "finished": finished,
        "threads": threads,
        "outputs": {"csv": str(csv_path)},
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n")
    return data


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def cmd_sweep(args) -> int:
    path = Path(args.config)
    if path.suffix == ".json":
        cfg, csv_path = _load_manifest(path)
    else:
        cfg, csv_path = load_config(path)
    if args.out:
        csv_path = Path(args.out)
    if csv_path is None:
        raise InputError(f"{path}: no output CSV; set [output] csv or pass --out")
    if args.trials is not None:
        cfg.trials = args.trials
    if args.timing:
        cfg.record_timing = True
    try:
        cfg.validate()
    except ConfigError as exc:
        raise InputError(f"{path}: {exc}") from None
    threads = args.threads or os.cpu_count() or 1
    started = _now()

    def show(r):
        if not args.quiet:
            tail = f"T_mem={r.mean_cycles:.4g}" if isinstance(r, MemoryPointResult) else f"p_logical={r.p_logical:.4g}"
            print(f"{r.model} L={'x'.join(map(str, r.lengths))} p={r.p:g}: {tail}", file=sys.stderr)

    run = run_memory_sweep if cfg.model in MEMORY_MODELS else run_failure_sweep
    results = run(cfg, threads=threads, cache_dir=args.cache, progress=show)
    write_csv(results, csv_path)
    manifest = Path(args.manifest) if args.manifest else csv_path.with_suffix(".manifest.json")
    write_manifest(manifest, cfg, csv_path, started, _now(), threads)
    print(f"wrote {csv_path} and {manifest}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# replay


def cmd_replay(args) -> int:
    from . import spacetime
    from .noise import MeasurementRecord
    from .rgdecoder import RGDecoder, format_trace

    try:
        record = MeasurementRecord.load(args.record)
    except OSError as exc:
        raise InputError(f"{args.record}: {exc.strerror}") from None
    except ValueError as exc:
        raise InputError(f"{args.record}: {exc}") from None
    try:
        code = build_code(build_lattice(record.d1, record.d2, record.lengths))
    except ValueError as exc:
        raise InputError(f"{args.record}: {exc}") from None
    trace: list = []
    if record.rounds == 1 and record.final_round_perfect:
        lat = code.lattice
        syndrome = np.asarray(record.outcomes[0], dtype=np.uint8)
        dec = RGDecoder(lat, budget=args.budget) if args.budget else RGDecoder(lat)
        corr = dec.decode_dense(syndrome, trace=trace)
        projected = corr
    else:
        problem = spacetime.build_spacetime_problem(code, record)
        lat = problem.lattice
        syndrome = problem.syndrome
        dec = RGDecoder(lat, budget=args.budget) if args.budget else RGDecoder(lat)
        corr = dec.decode_dense(syndrome, trace=trace)
        projected = spacetime.project_correction(problem, corr)
    print(f"record: code ({record.d1},{record.d2}) lengths {','.join(map(str, record.lengths))}, "
          f"{record.rounds} rounds, final round {'perfect' if record.final_round_perfect else 'noisy'}")
    print(f"decoding lattice: {lat!r}")
    print(f"syndrome weight {int(syndrome.sum())}")
    print(format_trace(trace))
    print(f"correction weight {int(corr.sum())}, qubit correction {np.flatnonzero(projected).tolist()}")
    print(f"exact solve fraction {dec.stats.exact_fraction:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# cross / plot


def _read_results(paths) -> list:
    out = []
    for p in paths:
        if not Path(p).exists():
            raise InputError(f"{p}: no such file")
        try:
            out.extend(read_csv(p))
        except ConfigError as exc:
            raise InputError(str(exc)) from None
    return out


def cmd_cross(args) -> int:
    results = _read_results(args.csv)
    curves = curves_from_results(results)
    if len(curves) < 2:
        raise InputError("need results for at least two system sizes")
    crossing = estimate_crossing(curves)
    if args.json:
        print(json.dumps({
            "found": crossing.found, "threshold": crossing.threshold, "spread": crossing.spread,
            "pairs": [["x".join(map(str, a)), "x".join(map(str, b)), x] for a, b, x in crossing.pairs],
            "excluded": ["x".join(map(str, s)) for s in crossing.excluded],
        }))
    else:
        print(crossing.report())
    return EXIT_OK


def _read_memory_csv(path) -> list[MemoryPointResult]:
    import csv

    out = []
    with open(path, newline="") as fh:
        for line, row in enumerate(csv.DictReader(fh), start=2):
            try:
                out.append(MemoryPointResult(
                    model=row["model"], d1=int(row["d1"]), d2=int(row["d2"]),
                    lengths=parse_lengths(row["lengths"]), p=float(row["p"]), q=float(row["q"]),
                    trials=int(row["trials"]), censored=int(row["censored"]),
                    max_cycles=int(row["max_cycles"]), mean_cycles=float(row["mean_cycles"]),
                    stderr=float(row["stderr"]), seed=int(row["seed"]), wall_time_s=float(row["wall_time_s"]),
                ))
            except (KeyError, ValueError, ConfigError) as exc:
                raise InputError(f"{path}:{line}: {exc}") from None
    return out


def cmd_plot(args) -> int:
    from .plotting import plot_failure_curves, plot_memory_curves

    path = Path(args.csv)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    header = path.read_text().split("\n", 1)[0].split(",")
    out = Path(args.out) if args.out else path.with_suffix(".svg")
    if "mean_cycles" in header:
        plot_memory_curves(_read_memory_csv(path), out, title=args.title)
    else:
        plot_failure_curves(_read_results([path]), out, title=args.title)
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tesseract-rg", description="Generalized surface codes and the RG decoder.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", help="print [[n,k,d]], check weights and qubit degree")
    p.add_argument("--d1", type=int)
    p.add_argument("--d2", type=int)
    p.add_argument("--L", type=int, help="common length of every direction")
    p.add_argument("--lengths", help="comma separated lengths, smooth directions first")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("sweep", help="run a Monte Carlo sweep from a config file or a manifest")
    p.add_argument("config")
    p.add_argument("--out", help="CSV path (overrides [output] csv)")
    p.add_argument("--manifest", help="manifest path (default: next to the CSV)")
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--trials", type=int, help="override trials per point")
    p.add_argument("--cache", help="results cache directory")
    p.add_argument("--timing", action="store_true", help="record wall time (the CSV is then not reproducible)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="decode a binary measurement record and print the RG trace")
    p.add_argument("record")
    p.add_argument("--budget", type=int, default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("cross", help="threshold estimate from failure-rate CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_cross)

    p = sub.add_parser("plot", help="SVG plot of a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--out")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InfeasibleSystem, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
