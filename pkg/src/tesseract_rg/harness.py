"""Monte Carlo sweeps, confidence intervals, threshold crossings and scaling fits.

A sweep is a grid of (system size, p) points.  Every trial draws from its own
Philox stream seeded by ``(seed, point, trial)``, so results do not depend on
how trials are split across worker processes.  Finished points can be stored
in a results cache keyed by the point parameters and a digest of the
decoding sources.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import trials as tr
from .gf2opt import DEFAULT_BUDGET, EXACT_THRESHOLD
from .trials import FAILURE_MODELS, MEMORY_MODELS, MODELS

CACHE_ENV = "TESSERACT_RESULTS_CACHE"
WILSON_Z = 1.959963984540054
CHUNK = 200

FAILURE_COLUMNS = (
    "model", "d1", "d2", "lengths", "T", "p", "q", "trials", "failures", "p_logical",
    "ci_low", "ci_high", "exact_solve_fraction", "seed", "wall_time_s",
)
MEMORY_COLUMNS = (
    "model", "d1", "d2", "lengths", "p", "q", "trials", "censored", "max_cycles",
    "mean_cycles", "stderr", "p_bar", "unencoded_cycles", "seed", "wall_time_s",
)


class ConfigError(ValueError):
    pass


def format_lengths(lengths: Sequence[int]) -> str:
    return "x".join(str(int(x)) for x in lengths)


def parse_lengths(text: str) -> tuple[int, ...]:
    parts = text.replace(",", "x").split("x")
    try:
        return tuple(int(t) for t in parts if t.strip())
    except ValueError:
        raise ConfigError(f"bad lengths {text!r}; expected integers separated by 'x' or ','") from None


def _rg_size(n: int) -> bool:
    return n >= 2 and (n - 1) & (n - 2) == 0


@dataclass
class ExperimentConfig:
    model: str
    d1: int
    d2: int
    sizes: list[tuple[int, ...]]
    p_grid: list[float]
    trials: int
    q: float | None = None
    T: int | None = None
    seed: int = 0
    budget: int = DEFAULT_BUDGET
    exact_threshold: int = EXACT_THRESHOLD
    external_solver: str | None = None
    max_cycles: int = 10_000
    record_timing: bool = False

    @classmethod
    def uniform(cls, model: str, d1: int, d2: int, Ls: Iterable[int], p_grid, trials: int, **kw) -> "ExperimentConfig":
        """Sizes with all ``d1 + d2`` lengths equal to each ``L``."""
        return cls(model, d1, d2, [(int(L),) * (d1 + d2) for L in Ls], list(p_grid), trials, **kw)

    def __post_init__(self):
        self.sizes = [tuple(int(x) for x in s) for s in self.sizes]
        self.p_grid = [float(p) for p in self.p_grid]

    def validate(self) -> "ExperimentConfig":
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.d1 < 0 or self.d2 < 1:
            raise ConfigError(f"need d1 >= 0 and d2 >= 1, got d1={self.d1}, d2={self.d2}")
        if not self.sizes:
            raise ConfigError("no system sizes given")
        for s in self.sizes:
            if len(s) != self.d1 + self.d2 or min(s) < 1:
                raise ConfigError(f"size {format_lengths(s)} needs {self.d1 + self.d2} positive lengths")
        if not self.p_grid:
            raise ConfigError("empty p grid")
        if any(b <= a for a, b in zip(self.p_grid, self.p_grid[1:])):
            raise ConfigError(f"p grid must be strictly increasing, got {self.p_grid}")
        if not all(0.0 <= p <= 1.0 for p in self.p_grid):
            raise ConfigError("p values must lie in [0, 1]")
        if self.q is not None and not 0.0 <= self.q <= 1.0:
            raise ConfigError(f"q must lie in [0, 1], got {self.q}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.T is not None and self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if self.budget < 1 or self.exact_threshold < 0 or self.max_cycles < 1:
            raise ConfigError("budget and max_cycles must be positive, exact_threshold nonnegative")
        if self.model in FAILURE_MODELS:
            for s in self.sizes:
                if not all(_rg_size(x) for x in s):
                    raise ConfigError(
                        f"size {format_lengths(s)}: the RG decoder needs every length of the form 2^N + 1 (or 2)"
                    )
                T = self.rounds(s)
                if self.model != tr.PERFECT and not _rg_size(T):
                    raise ConfigError(f"T={T} must be of the form 2^N + 1 (or 2) for space-time decoding")
        if self.model == tr.GATE and (self.d1, self.d2) != (2, 2):
            raise ConfigError("the gate-based model is defined for the tesseract code (d1 = d2 = 2)")
        if self.model in MEMORY_MODELS and self.d2 != 2:
            raise ConfigError("single-shot models need qubits on faces (d2 = 2)")
        if self.model == tr.ISING and self.d1 != 0:
            raise ConfigError("the Ising variant has d1 = 0")
        return self

    def rounds(self, lengths) -> int:
        return self.T if self.T is not None else tr.default_rounds(self.model, lengths)

    def q_for(self, p: float) -> float:
        return p if self.q is None else self.q

    def points(self) -> list[tuple[int, tuple[int, ...], float]]:
        """``(index, lengths, p)`` in sweep order: sizes outer, p inner."""
        out = []
        for i, s in enumerate(self.sizes):
            for j, p in enumerate(self.p_grid):
                out.append((i * len(self.p_grid) + j, s, p))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = [list(s) for s in self.sizes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# statistics


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = k / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def per_round_rate(p_bar, rounds):
    """Failure rate per correction cycle of a ``rounds``-cycle failure rate."""
    return (1.0 - (1.0 - 2.0 * np.asarray(p_bar, dtype=float)) ** (1.0 / rounds)) / 2.0


@dataclass
class TrialPointResult:
    model: str
    d1: int
    d2: int
    lengths: tuple[int, ...]
    T: int
    p: float
    q: float
    trials: int
    failures: int
    p_logical: float
    ci_low: float
    ci_high: float
    exact_solve_fraction: float
    seed: int
    wall_time_s: float
    invalid: int = 0

    @property
    def size(self) -> int:
        return max(self.lengths)

    @property
    def p_round(self) -> float:
        return float(per_round_rate(self.p_logical, self.size))

    def row(self) -> list[str]:
        d = asdict(self)
        d["lengths"] = format_lengths(self.lengths)
        return [_fmt(d[c]) for c in FAILURE_COLUMNS]


@dataclass
class MemoryPointResult:
    model: str
    d1: int
    d2: int
    lengths: tuple[int, ...]
    p: float
    q: float
    trials: int
    censored: int
    max_cycles: int
    mean_cycles: float
    stderr: float
    seed: int
    wall_time_s: float

    @property
    def p_bar(self) -> float:
        """Per-cycle failure rate with mean memory time ``(1 - p_bar) / p_bar``."""
        return 1.0 / (1.0 + self.mean_cycles)

    @property
    def unencoded_cycles(self) -> float:
        return math.inf if self.p == 0 else (1.0 - self.p) / self.p

    def row(self) -> list[str]:
        d = asdict(self)
        d["lengths"] = format_lengths(self.lengths)
        d["p_bar"] = self.p_bar
        d["unencoded_cycles"] = self.unencoded_cycles
        return [_fmt(d[c]) for c in MEMORY_COLUMNS]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(results: Sequence, path=None) -> str:
    """CSV text of failure or memory results; also written to ``path`` if given."""
    if not results:
        raise ValueError("no results to write")
    cols = MEMORY_COLUMNS if isinstance(results[0], MemoryPointResult) else FAILURE_COLUMNS
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in results:
        w.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path) -> list[TrialPointResult]:
    """Failure results from a CSV written by :func:`write_csv`."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(FAILURE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}:1: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                out.append(TrialPointResult(
                    model=row["model"], d1=int(row["d1"]), d2=int(row["d2"]),
                    lengths=parse_lengths(row["lengths"]), T=int(row["T"]),
                    p=float(row["p"]), q=float(row["q"]), trials=int(row["trials"]),
                    failures=int(row["failures"]), p_logical=float(row["p_logical"]),
                    ci_low=float(row["ci_low"]), ci_high=float(row["ci_high"]),
                    exact_solve_fraction=float(row["exact_solve_fraction"]),
                    seed=int(row["seed"]), wall_time_s=float(row["wall_time_s"]),
                ))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}:{line}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# execution

_RUNNERS: dict = {}


def _runner(kind: str, key: tuple):
    if (kind, key) not in _RUNNERS:
        if kind == "failure":
            model, d1, d2, lengths, T, budget, thr = key
            _RUNNERS[(kind, key)] = tr.FailureTrial(model, d1, d2, lengths, T, budget, thr)
        else:
            model, d1, d2, lengths, budget = key
            _RUNNERS[(kind, key)] = tr.MemoryTrial(model, d1, d2, lengths, budget)
    return _RUNNERS[(kind, key)]


@dataclass
class _Chunk:
    kind: str
    key: tuple
    point: int
    start: int
    stop: int
    p: float
    q: float
    seed: int
    max_cycles: int = 0
    external: str | None = None


@dataclass
class _Tally:
    failures: int = 0
    invalid: int = 0
    censored: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    solves: int = 0
    exact: int = 0
    seconds: float = 0.0
    done: int = 0

    def add(self, other: "_Tally") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))


def _run_chunk(ch: _Chunk) -> tuple[int, _Tally]:
    run = _runner(ch.kind, ch.key)
    before = (run.stats.solves, run.stats.exact_box_solves + run.stats.exact_base_solves)
    out = _Tally()
    t0 = time.perf_counter()
    with tr.external_solver(ch.external):
        for i in range(ch.start, ch.stop):
            rng = tr.trial_rng(ch.seed, ch.point, i)
            if ch.kind == "failure":
                failed, valid = run(ch.p, ch.q, rng)
                out.failures += int(failed)
                out.invalid += int(not valid)
            else:
                t, censored = run(ch.p, ch.q, rng, ch.max_cycles)
                out.censored += int(censored)
                out.total += t
                out.total_sq += float(t) * t
    out.seconds = time.perf_counter() - t0
    out.done = ch.stop - ch.start
    out.solves = run.stats.solves - before[0]
    out.exact = run.stats.exact_box_solves + run.stats.exact_base_solves - before[1]
    return ch.point, out


def _cache_path(cache_dir, key: dict) -> Path:
    digest = tr.source_digest(key["model"])
    blob = json.dumps({**key, "source": digest}, sort_keys=True)
    return Path(cache_dir) / (hashlib.sha256(blob.encode()).hexdigest() + ".json")


def _resolve_cache(cache_dir):
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV) or None
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
    return cache_dir


def _execute(chunks_by_point: dict, threads: int, on_point: Callable[[int, _Tally], None]) -> None:
    pending = {pt: len(chs) for pt, chs in chunks_by_point.items()}
    tallies = {pt: _Tally() for pt in chunks_by_point}
    flat = [c for chs in chunks_by_point.values() for c in chs]

    def collect(pt, tally):
        tallies[pt].add(tally)
        pending[pt] -= 1
        if pending[pt] == 0:
            on_point(pt, tallies[pt])

    if threads <= 1 or len(flat) <= 1:
        for c in flat:
            collect(*_run_chunk(c))
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for pt, tally in pool.map(_run_chunk, flat):
            collect(pt, tally)


def _chunks(kind, key, point, trials, p, q, seed, **kw) -> list[_Chunk]:
    return [_Chunk(kind, key, point, a, min(a + CHUNK, trials), p, q, seed, **kw) for a in range(0, trials, CHUNK)]


def run_failure_sweep(
    config: ExperimentConfig,
    threads: int = 1,
    cache_dir=None,
    progress: Callable[[TrialPointResult], None] | None = None,
) -> list[TrialPointResult]:
    """Logical failure probability at every grid point, in :meth:`ExperimentConfig.points` order."""
    config.validate()
    if config.model not in FAILURE_MODELS:
        raise ConfigError(f"{config.model!r} is a memory-time model; use run_memory_sweep")
    cache_dir = _resolve_cache(cache_dir)
    results: dict[int, TrialPointResult] = {}
    todo: dict[int, list[_Chunk]] = {}
    meta = {}
    for point, lengths, p in config.points():
        T = config.rounds(lengths)
        q = config.q_for(p)
        ckey = {
            "kind": "failure", "model": config.model, "d1": config.d1, "d2": config.d2,
            "lengths": list(lengths), "T": T, "p": p, "q": q, "trials": config.trials,
            "seed": config.seed, "point": point, "budget": config.budget,
            "exact_threshold": config.exact_threshold, "external": config.external_solver,
        }
        meta[point] = (lengths, T, p, q, ckey)
        if cache_dir is not None:
            path = _cache_path(cache_dir, ckey)
            if path.exists():
                results[point] = _failure_result(config, lengths, T, p, q, _Tally(**json.loads(path.read_text())))
                if progress:
                    progress(results[point])
                continue
        key = (config.model, config.d1, config.d2, lengths, T, config.budget, config.exact_threshold)
        todo[point] = _chunks("failure", key, point, config.trials, p, q, config.seed,
                              external=config.external_solver)

    def done(point, tally):
        lengths, T, p, q, ckey = meta[point]
        if cache_dir is not None:
            _cache_path(cache_dir, ckey).write_text(json.dumps(asdict(tally)))
        results[point] = _failure_result(config, lengths, T, p, q, tally)
        if progress:
            progress(results[point])

    _execute(todo, threads, done)
    return [results[pt] for pt, _, _ in config.points()]


def _failure_result(config, lengths, T, p, q, tally: _Tally) -> TrialPointResult:
    n = config.trials
    lo, hi = wilson_interval(tally.failures, n)
    return TrialPointResult(
        model=config.model, d1=config.d1, d2=config.d2, lengths=tuple(lengths), T=T, p=p, q=q,
        trials=n, failures=tally.failures, p_logical=tally.failures / n, ci_low=lo, ci_high=hi,
        exact_solve_fraction=1.0 if tally.solves == 0 else tally.exact / tally.solves,
        seed=config.seed, wall_time_s=round(tally.seconds, 3) if config.record_timing else 0.0,
        invalid=tally.invalid,
    )


def run_memory_sweep(
    config: ExperimentConfig,
    threads: int = 1,
    cache_dir=None,
    progress: Callable[[MemoryPointResult], None] | None = None,
) -> list[MemoryPointResult]:
    """Mean number of single-shot cycles before corruption at every grid point.

    Trials reaching ``max_cycles`` are counted at the cap and reported as
    censored.
    """
    config.validate()
    if config.model not in MEMORY_MODELS:
        raise ConfigError(f"{config.model!r} is not a single-shot model; use run_failure_sweep")
    cache_dir = _resolve_cache(cache_dir)
    results: dict[int, MemoryPointResult] = {}
    todo: dict[int, list[_Chunk]] = {}
    meta = {}
    budget = None if config.budget == DEFAULT_BUDGET else config.budget
    for point, lengths, p in config.points():
        q = config.q_for(p)
        ckey = {
            "kind": "memory", "model": config.model, "d1": config.d1, "d2": config.d2,
            "lengths": list(lengths), "p": p, "q": q, "trials": config.trials, "seed": config.seed,
            "point": point, "budget": config.budget, "max_cycles": config.max_cycles,
            "external": config.external_solver,
        }
        meta[point] = (lengths, p, q, ckey)
        if cache_dir is not None:
            path = _cache_path(cache_dir, ckey)
            if path.exists():
                results[point] = _memory_result(config, lengths, p, q, _Tally(**json.loads(path.read_text())))
                if progress:
                    progress(results[point])
                continue
        key = (config.model, config.d1, config.d2, lengths, budget)
        todo[point] = _chunks("memory", key, point, config.trials, p, q, config.seed,
                              max_cycles=config.max_cycles, external=config.external_solver)

    def done(point, tally):
        lengths, p, q, ckey = meta[point]
        if cache_dir is not None:
            _cache_path(cache_dir, ckey).write_text(json.dumps(asdict(tally)))
        results[point] = _memory_result(config, lengths, p, q, tally)
        if progress:
            progress(results[point])

    _execute(todo, threads, done)
    return [results[pt] for pt, _, _ in config.points()]


def _memory_result(config, lengths, p, q, tally: _Tally) -> MemoryPointResult:
    n = config.trials
    mean = tally.total / n
    var = max(0.0, tally.total_sq / n - mean * mean) * n / max(1, n - 1)
    return MemoryPointResult(
        model=config.model, d1=config.d1, d2=config.d2, lengths=tuple(lengths), p=p, q=q,
        trials=n, censored=tally.censored, max_cycles=config.max_cycles, mean_cycles=mean,
        stderr=math.sqrt(var / n), seed=config.seed,
        wall_time_s=round(tally.seconds, 3) if config.record_timing else 0.0,
    )


# ---------------------------------------------------------------------------
# analysis


@dataclass
class Crossing:
    found: bool
    threshold: float | None
    spread: float | None
    pairs: list[tuple[tuple[int, ...], tuple[int, ...], float | None]] = field(default_factory=list)
    excluded: list[tuple[int, ...]] = field(default_factory=list)

    def report(self) -> str:
        lines = []
        for a, b, x in self.pairs:
            val = "no crossing" if x is None else f"{x:.6g}"
            lines.append(f"  {format_lengths(a)} vs {format_lengths(b)}: {val}")
        for s in self.excluded:
            lines.append(f"  excluded smallest size {format_lengths(s)}")
        head = (f"threshold {self.threshold:.6g} +- {self.spread:.2g}" if self.found
                else "no crossing in the sampled range")
        return "\n".join([head] + lines)


def curves_from_results(results: Iterable[TrialPointResult]) -> dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]]:
    """Per-size ``(p, p_logical)`` arrays sorted by p."""
    by: dict[tuple[int, ...], list[tuple[float, float]]] = {}
    for r in results:
        by.setdefault(tuple(r.lengths), []).append((r.p, r.p_logical))
    out = {}
    for s, pts in by.items():
        pts.sort()
        out[s] = (np.array([a for a, _ in pts]), np.array([b for _, b in pts]))
    return out


def _size_key(lengths) -> tuple:
    return (max(lengths), sum(lengths), tuple(lengths))


def pair_crossing(small: tuple[np.ndarray, np.ndarray], large: tuple[np.ndarray, np.ndarray]) -> float | None:
    """Where the larger size's curve drops below the smaller's.

    Curves are compared in ``log p_logical`` at their common p values and
    interpolated linearly in p.  With several sign changes the median root
    is returned.
    """
    pa, ya = small
    pb, yb = large
    common = np.intersect1d(pa, pb)
    if common.size == 0:
        return None
    ya = ya[np.searchsorted(pa, common)]
    yb = yb[np.searchsorted(pb, common)]
    keep = (ya > 0) & (yb > 0)
    ps, diff = common[keep], np.log(ya[keep]) - np.log(yb[keep])
    roots = []
    for i in range(ps.size):
        if diff[i] == 0.0:
            roots.append(float(ps[i]))
        elif i + 1 < ps.size and diff[i] > 0 > diff[i + 1]:
            t = diff[i] / (diff[i] - diff[i + 1])
            roots.append(float(ps[i] + t * (ps[i + 1] - ps[i])))
    if not roots:
        return None
    return float(np.median(roots))


def estimate_crossing(curves: dict) -> Crossing:
    """Threshold from pairwise crossings of per-size failure curves.

    ``curves`` maps a size (lengths tuple) to ``(p, p_logical)`` arrays.
    With three or more sizes the smallest is dropped.  The estimate is the
    mean over pairs and the spread is half the range of pair crossings.
    Any pair that never crosses gives a ``found=False`` result.
    """
    if len(curves) < 2:
        raise ValueError("need at least two system sizes")
    sizes = sorted(curves, key=_size_key)
    excluded = []
    if len(sizes) >= 3:
        excluded = [sizes[0]]
        sizes = sizes[1:]
    pairs = []
    for i in range(len(sizes)):
        for j in range(i + 1, len(sizes)):
            pairs.append((sizes[i], sizes[j], pair_crossing(curves[sizes[i]], curves[sizes[j]])))
    xs = [x for _, _, x in pairs if x is not None]
    if len(xs) < len(pairs):
        return Crossing(False, None, None, pairs, excluded)
    return Crossing(True, float(np.mean(xs)), float((max(xs) - min(xs)) / 2), pairs, excluded)


@dataclass
class ScalingFit:
    a: float
    b: float
    b_stderr: float
    points: int


def fit_scaling(p, p_logical) -> ScalingFit:
    """Least-squares fit of ``p_logical = a p^b`` on log-log axes (zero rates skipped)."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(p_logical, dtype=float)
    keep = (p > 0) & (y > 0)
    if keep.sum() < 3:
        raise ValueError(f"need at least 3 points with nonzero failure rate, got {int(keep.sum())}")
    x, y = np.log(p[keep]), np.log(y[keep])
    xm = x.mean()
    sxx = ((x - xm) ** 2).sum()
    b = ((x - xm) * (y - y.mean())).sum() / sxx
    c = y.mean() - b * xm
    n = x.size
    ssr = ((y - c - b * x) ** 2).sum()
    se = math.sqrt(ssr / (n - 2) / sxx) if n > 2 else 0.0
    return ScalingFit(float(math.exp(c)), float(b), se, int(n))
