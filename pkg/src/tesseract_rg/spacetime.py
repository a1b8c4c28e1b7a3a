"""Faulty syndrome histories as minimal-surface problems one dimension up.

Time is appended as the last direction.  A space-time ``d2``-cell is either
a spatial qubit cell at time ``t`` (a qubit error in round ``t``) or a
spatial check cell times ``[t, t+1]`` (a measurement error in round ``t``).
Check cells are spatial check cells at time ``t`` and spatial
``(d2-2)``-cells times ``[t, t+1]``.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .code import CssCode
from .complex import Chain, CodeLattice, build_lattice
from .noise import ErrorHistory, MeasurementRecord

QUBIT, MEASUREMENT = 0, 1


@dataclass
class CellMap:
    """For every space-time cell of one dimension: kind, spatial index, round."""

    kind: np.ndarray
    space: np.ndarray
    time: np.ndarray


@dataclass
class SpaceTimeProblem:
    lattice: CodeLattice
    syndrome: np.ndarray
    faces: CellMap
    checks: CellMap
    rounds: int
    num_qubits: int

    def syndrome_chain(self) -> Chain:
        return Chain.from_dense(self.lattice.d2 - 1, self.syndrome)


def spacetime_lattice(code: CssCode, T: int, final_round_perfect: bool = True) -> CodeLattice:
    """Spatial lattice times ``[0, T-1]`` (smooth ends), or ``[0, T]`` with a rough top."""
    lat = code.lattice
    if T < 1:
        raise ValueError(f"need at least one round, got T={T}")
    ext = lat.extents + ((T - 1) if final_round_perfect else T,)
    lo = lat.rough_lo + (False,)
    hi = lat.rough_hi + (not final_round_perfect,)
    lengths = None if lat.lengths is None else tuple(lat.lengths) + (T,)
    return CodeLattice(ext, lo, hi, lat.d2, d1=lat.d1 + 1, lengths=lengths)


def _cell_map(st: CodeLattice, space: CodeLattice, k: int) -> CellMap:
    coords, mask = st.cell_coords(k)
    D = space.D
    kind = mask[:, D].astype(np.int8)
    sidx = np.full(coords.shape[0], -1, dtype=np.int64)
    for dirs in st.orientations(k):
        sel = np.flatnonzero(np.all(mask == np.isin(np.arange(D + 1), dirs), axis=1))
        sdirs = tuple(d for d in dirs if d != D)
        sidx[sel] = space._index_array(sdirs, coords[sel, :D])
    if np.any(sidx < 0):
        raise AssertionError("space-time cell without a spatial counterpart")
    return CellMap(kind, sidx, coords[:, D].copy())


_MAP_CACHE: "weakref.WeakKeyDictionary[CssCode, dict]" = weakref.WeakKeyDictionary()


def _maps(code: CssCode, T: int, final_round_perfect: bool):
    per_code = _MAP_CACHE.setdefault(code, {})
    key = (T, final_round_perfect)
    if key not in per_code:
        st = spacetime_lattice(code, T, final_round_perfect)
        per_code[key] = (st, _cell_map(st, code.lattice, st.d2), _cell_map(st, code.lattice, st.d2 - 1))
    return per_code[key]


def build_spacetime_problem(code: CssCode, record: MeasurementRecord) -> SpaceTimeProblem:
    """Space-time syndrome of a record.

    Spatial check at round ``t``: ``tau(t) - tau(t-1)`` with ``tau(-1) = 0``.
    Time-like check over a ``(d2-2)``-cell ``v`` between ``t`` and ``t+1``:
    the parity of ``tau_e(t)`` over the check cells ``e`` containing ``v``.
    """
    lat = code.lattice
    tau = np.asarray(record.outcomes, dtype=np.uint8)
    ne = lat.counts[lat.d2 - 1]
    if tau.ndim != 2 or tau.shape[1] != ne:
        raise ValueError(f"record has {tau.shape[-1]} checks per round, the code has {ne}")
    T = tau.shape[0]
    st, faces, checks = _maps(code, T, record.final_round_perfect)
    diff = tau.copy()
    diff[1:] ^= tau[:-1]
    t = np.minimum(checks.time, T - 1)
    syn = diff[t, checks.space]
    if lat.d2 >= 2:
        # parity of tau over the check cells around each (d2-2)-cell
        cob = lat.cob[lat.d2 - 2]
        valid = cob >= 0
        around = np.zeros((T, lat.counts[lat.d2 - 2]), dtype=np.uint8)
        for j in range(cob.shape[1]):
            rows = np.flatnonzero(valid[:, j])
            around[:, rows] ^= tau[:, cob[rows, j]]
        timelike = checks.kind == MEASUREMENT
        syn[timelike] = around[t[timelike], checks.space[timelike]]
    return SpaceTimeProblem(st, syn.astype(np.uint8), faces, checks, T, lat.num_qubits)


def history_chain(problem: SpaceTimeProblem, history: ErrorHistory) -> np.ndarray:
    """Space-time face vector of a sampled error history."""
    f = problem.faces
    T = problem.rounds
    t = np.minimum(f.time, T - 1)
    out = np.zeros(f.kind.size, dtype=np.uint8)
    q = f.kind == QUBIT
    out[q] = history.qubit_errors[t[q], f.space[q]]
    out[~q] = history.meas_errors[t[~q], f.space[~q]]
    return out


def project_correction(problem: SpaceTimeProblem, correction: np.ndarray | Chain, check: bool = True) -> np.ndarray:
    """Spatial face vector: the parity over rounds of the qubit-type correction faces."""
    if isinstance(correction, Chain):
        correction = correction.to_dense(problem.lattice.counts[problem.lattice.d2])
    corr = np.asarray(correction, dtype=np.uint8)
    if check and np.any(problem.lattice.boundary_dense(problem.lattice.d2, corr) != problem.syndrome):
        raise ValueError("correction boundary does not match the space-time syndrome")
    f = problem.faces
    sel = np.flatnonzero((f.kind == QUBIT) & (corr != 0))
    return (np.bincount(f.space[sel], minlength=problem.num_qubits) & 1).astype(np.uint8)


def reference_lattice(code: CssCode, T: int) -> tuple[CodeLattice, tuple[int, ...]]:
    """The ``(d1+1, d2)`` code lattice with time as an extra smooth direction.

    Returns the lattice and the permutation ``perm`` with space-time
    direction ``i`` corresponding to reference direction ``perm[i]``.
    """
    lat = code.lattice
    d1 = lat.d1
    if lat.lengths is None:
        raise ValueError("reference lattice needs the code lengths")
    lengths = list(lat.lengths[:d1]) + [T] + list(lat.lengths[d1:])
    ref = build_lattice(d1 + 1, lat.d2, lengths)
    D = lat.D
    perm = tuple(list(range(d1)) + [d + 1 for d in range(d1, D)] + [d1])
    return ref, perm


def isomorphic_under(a: CodeLattice, b: CodeLattice, perm) -> bool:
    """Whether relabelling direction ``i`` of ``a`` as ``perm[i]`` maps ``a`` onto ``b``.

    Compares cell sets and every boundary incidence of the built dimensions.
    """
    perm = np.asarray(perm)
    if a.D != b.D or sorted(perm.tolist()) != list(range(a.D)) or set(a.dims) != set(b.dims):
        return False
    if any(a.counts[k] != b.counts[k] for k in a.dims):
        return False
    image = {}
    for k in a.dims:
        coords, mask = a.cell_coords(k)
        pc = np.zeros_like(coords)
        pm = np.zeros_like(mask)
        pc[:, perm] = coords
        pm[:, perm] = mask
        idx = np.full(coords.shape[0], -1, dtype=np.int64)
        for dirs in a.orientations(k):
            sel = np.flatnonzero(np.all(mask == np.isin(np.arange(a.D), dirs), axis=1))
            bdirs = tuple(sorted(int(perm[d]) for d in dirs))
            idx[sel] = b._index_array(bdirs, pc[sel])
        if np.any(idx < 0) or np.unique(idx).size != idx.size:
            return False
        image[k] = idx
    for k in a.bnd:
        A = a.boundary_matrix(k).tocoo()
        B = b.boundary_matrix(k).tocsr()
        mapped = B[image[k - 1][A.row], image[k][A.col]]
        if A.nnz != B.nnz or not np.all(np.asarray(mapped).ravel() == 1):
            return False
    return True
