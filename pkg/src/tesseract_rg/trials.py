"""Single Monte Carlo trials: sample, decode, judge.

Everything that decides a trial outcome lives here (together with the
decoder modules), so a digest of these sources identifies the numbers a
sweep produces.
"""

from __future__ import annotations

import hashlib
import os
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import noise, spacetime
from .code import build_code, crosses_logical
from .complex import build_lattice
from .gf2opt import DEFAULT_BUDGET, EXACT_THRESHOLD, SOLVER_ENV
from .rgdecoder import RGDecoder, SolveStats
from .singleshot import IsingDecoder, SingleShotDecoder, memory_trial

PERFECT = "phenomenological-perfect"
FAULTY = "phenomenological-faulty"
GATE = "gate-based"
SINGLE_SHOT = "single-shot"
ISING = "ising2d"
FAILURE_MODELS = (PERFECT, FAULTY, GATE)
MEMORY_MODELS = (SINGLE_SHOT, ISING)
MODELS = FAILURE_MODELS + MEMORY_MODELS

# modules whose code determines the trial outcomes of each model
_CORE = ("_kernels.py", "complex.py", "code.py", "gf2opt.py", "rgdecoder.py", "trials.py")
_DIGEST_MODULES = {
    PERFECT: _CORE,
    FAULTY: _CORE + ("noise.py", "spacetime.py"),
    GATE: _CORE + ("noise.py", "spacetime.py"),
    SINGLE_SHOT: _CORE + ("singleshot.py",),
    ISING: _CORE + ("singleshot.py",),
}


def _digest(names) -> str:
    h = hashlib.sha256()
    here = Path(__file__).parent
    for name in names:
        h.update(name.encode())
        h.update((here / name).read_bytes())
    return h.hexdigest()


# taken at import so that the digest describes the code actually running
_DIGESTS = {model: _digest(names) for model, names in _DIGEST_MODULES.items()}


def source_digest(model: str) -> str:
    return _DIGESTS[model]


def trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    """Independent stream per (master seed, grid point, trial)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, point, trial])))


@contextmanager
def external_solver(command: str | None):
    if not command:
        yield
        return
    old = os.environ.get(SOLVER_ENV)
    os.environ[SOLVER_ENV] = command
    try:
        yield
    finally:
        if old is None:
            del os.environ[SOLVER_ENV]
        else:
            os.environ[SOLVER_ENV] = old


def default_rounds(model: str, lengths) -> int:
    """Rounds of syndrome measurement: one without measurement errors, else the code size."""
    return 1 if model in (PERFECT, SINGLE_SHOT, ISING) else int(max(lengths))


class FailureTrial:
    """Sample one error configuration, decode it and report (failed, valid).

    ``valid`` is whether the decoder output has exactly the decoded syndrome
    as its boundary.
    """

    def __init__(self, model: str, d1: int, d2: int, lengths, T: int,
                 budget: int = DEFAULT_BUDGET, exact_threshold: int = EXACT_THRESHOLD):
        if model not in FAILURE_MODELS:
            raise ValueError(f"{model!r} is not a failure-probability model; choose from {FAILURE_MODELS}")
        self.model = model
        self.code = build_code(build_lattice(d1, d2, lengths))
        self.T = T
        if model == PERFECT:
            lat = self.code.lattice
        else:
            lat = spacetime.spacetime_lattice(self.code, T)
        self.decoder = RGDecoder(lat, budget=budget, exact_threshold=exact_threshold)
        self.schedule = noise.build_gate_schedule(self.code) if model == GATE else None

    @property
    def stats(self) -> SolveStats:
        return self.decoder.stats

    def __call__(self, p: float, q: float, rng: np.random.Generator) -> tuple[bool, bool]:
        code = self.code
        if self.model == PERFECT:
            lat = code.lattice
            err = (rng.random(lat.counts[lat.d2]) < p).astype(np.uint8)
            syn = lat.boundary_dense(lat.d2, err)
            corr = self.decoder.decode_dense(syn)
            valid = np.array_equal(lat.boundary_dense(lat.d2, corr), syn)
            return crosses_logical(code, err ^ corr), valid
        if self.model == FAULTY:
            history, record = noise.sample_phenomenological(code, p, q, self.T, rng)
            err = history.total_qubit_error()
        else:
            record, err = noise.simulate_gate_based(code, self.schedule, p, self.T, rng)
        problem = spacetime.build_spacetime_problem(code, record)
        corr = self.decoder.decode_dense(problem.syndrome)
        st = problem.lattice
        valid = np.array_equal(st.boundary_dense(st.d2, corr), problem.syndrome)
        if not valid:
            return True, False
        return crosses_logical(code, err ^ spacetime.project_correction(problem, corr, check=False)), True


class MemoryTrial:
    """Run single-shot cycles until the residual error is uncorrectable."""

    def __init__(self, model: str, d1: int, d2: int, lengths, budget: int | None = None):
        if model not in MEMORY_MODELS:
            raise ValueError(f"{model!r} is not a memory-time model; choose from {MEMORY_MODELS}")
        code = build_code(build_lattice(d1, d2, lengths))
        self.decoder = IsingDecoder(code) if model == ISING else SingleShotDecoder(code, budget)

    @property
    def stats(self) -> SolveStats:
        rg = getattr(getattr(self.decoder, "surface", None), "rg", None)
        return rg.stats if rg is not None else SolveStats()

    def __call__(self, p: float, q: float, rng: np.random.Generator, max_cycles: int) -> tuple[int, bool]:
        return memory_trial(self.decoder, p, q, rng, max_cycles)
