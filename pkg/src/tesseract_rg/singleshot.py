"""Single-shot decoding: close the measured syndrome curve, then fill it with a surface.

Only qubits on faces are supported (``d2 = 2``): syndrome curves live on
edges and their endpoints (defects) on vertices.  Defects are paired by an
exact minimum-weight perfect matching in which every defect may instead
run to the nearest rough boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .code import CssCode, crosses_logical
from .complex import Chain, CodeLattice
from .gf2opt import BinarySystem, Elimination, min_weight_coset
from .rgdecoder import RGDecoder, rg_level

BOUNDARY = -1


class MatchingError(RuntimeError):
    """The defects admit no perfect matching (e.g. an odd count with no rough boundary)."""


@dataclass
class DefectSet:
    """Endpoints of a syndrome curve.

    ``vertices`` are vertex indices, ``coords`` their coordinates and
    ``boundary_distance`` the edge count of the shortest path to a rough
    boundary (``inf`` when the lattice has none).
    """

    vertices: np.ndarray
    coords: np.ndarray
    boundary_distance: np.ndarray

    def __len__(self) -> int:
        return int(self.vertices.size)

    def distance_matrix(self) -> np.ndarray:
        c = self.coords
        return np.abs(c[:, None, :] - c[None, :, :]).sum(axis=2)


def _need_faces(lattice: CodeLattice) -> None:
    if lattice.d2 != 2:
        raise ValueError("single-shot decoding needs qubits on faces (d2 = 2)")


def _boundary_distance(lattice: CodeLattice, coords: np.ndarray) -> np.ndarray:
    dist = np.full(coords.shape[0], np.inf)
    for i in range(lattice.D):
        if lattice.rough_lo[i]:
            dist = np.minimum(dist, coords[:, i])
        if lattice.rough_hi[i]:
            dist = np.minimum(dist, lattice.extents[i] - coords[:, i])
    return dist


def _dense_edges(lattice: CodeLattice, e) -> np.ndarray:
    if isinstance(e, Chain):
        if e.dim != 1:
            raise ValueError(f"expected an edge chain, got dimension {e.dim}")
        return e.to_dense(lattice.counts[1])
    e = np.asarray(e, dtype=np.uint8)
    if e.shape != (lattice.counts[1],):
        raise ValueError(f"edge vector has shape {e.shape}, expected ({lattice.counts[1]},)")
    return e


def extract_defects(lattice: CodeLattice, e_synd) -> DefectSet:
    _need_faces(lattice)
    e = _dense_edges(lattice, e_synd)
    verts = np.flatnonzero(lattice.boundary_dense(1, e))
    allc, _ = lattice.cell_coords(0)
    coords = allc[verts]
    return DefectSet(verts, coords, _boundary_distance(lattice, coords))


def match_defects(defects: DefectSet) -> list[tuple[int, int]]:
    """Minimum-weight pairing; ``(i, BOUNDARY)`` sends defect ``i`` to the boundary.

    Built on a complete graph of the defects plus one boundary node per
    defect; boundary nodes pair with each other at no cost.  Pairs are
    returned sorted by defect position.
    """
    m = len(defects)
    if m == 0:
        return []
    dist = defects.distance_matrix()
    bd = defects.boundary_distance
    finite_b = np.isfinite(bd)
    if not finite_b.any() and m % 2:
        raise MatchingError("odd number of defects and no rough boundary: no perfect matching")
    big = int(dist.max(initial=0) + (bd[finite_b].max() if finite_b.any() else 0)) + 1
    G = nx.Graph()
    G.add_nodes_from(range(2 * m))
    for i in range(m):
        for j in range(i + 1, m):
            G.add_edge(i, j, weight=big - int(dist[i, j]))
        if finite_b[i]:
            G.add_edge(i, m + i, weight=big - int(bd[i]))
            for j in range(i + 1, m):
                if finite_b[j]:
                    G.add_edge(m + i, m + j, weight=big)
    mate = nx.max_weight_matching(G, maxcardinality=True)
    pairs = []
    for a, b in mate:
        a, b = min(a, b), max(a, b)
        if a >= m:
            continue
        pairs.append((a, BOUNDARY if b >= m else b))
    covered = {x for p in pairs for x in p if x != BOUNDARY}
    if len(covered) != m:
        raise MatchingError("no perfect matching of the defects exists")
    return sorted(pairs)


def matching_cost(defects: DefectSet, pairs) -> float:
    dist = defects.distance_matrix()
    return float(sum(defects.boundary_distance[a] if b == BOUNDARY else dist[a, b] for a, b in pairs))


def brute_force_matching_cost(defects: DefectSet) -> float:
    """Optimal pairing cost by dynamic programming over defect subsets (small inputs)."""
    m = len(defects)
    dist = defects.distance_matrix()
    bd = defects.boundary_distance
    full = (1 << m) - 1
    best = np.full(1 << m, np.inf)
    best[0] = 0.0
    for mask in range(1, full + 1):
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        cand = best[rest] + bd[i]
        r = rest
        while r:
            j = (r & -r).bit_length() - 1
            r &= r - 1
            cand = min(cand, best[rest & ~(1 << j)] + dist[i, j])
        best[mask] = cand
    return float(best[full])


def _walk(lattice: CodeLattice, start: np.ndarray, direction: int, steps: int, out: np.ndarray) -> np.ndarray:
    """Toggle ``|steps|`` edges from ``start`` along ``direction``; returns the end vertex."""
    v = start.copy()
    sign = 1 if steps > 0 else -1
    for _ in range(abs(steps)):
        base = v.copy()
        if sign < 0:
            base[direction] -= 1
        idx = lattice._index_array((direction,), base[None, :])[0]
        if idx < 0:
            raise AssertionError(f"path left the lattice at {base.tolist()}")
        out[idx] ^= 1
        v[direction] += sign
    return v


def _path_to_boundary(lattice: CodeLattice, v: np.ndarray, out: np.ndarray) -> None:
    best = None
    for i in range(lattice.D):
        if lattice.rough_lo[i] and (best is None or v[i] < best[0]):
            best = (v[i], i, -1)
        if lattice.rough_hi[i] and (best is None or lattice.extents[i] - v[i] < best[0]):
            best = (lattice.extents[i] - v[i], i, 1)
    if best is None:
        raise ValueError("lattice has no rough boundary")
    dist, i, sign = best
    _walk(lattice, v, i, sign * int(dist), out)


def repair_syndrome(lattice: CodeLattice, e_synd) -> np.ndarray:
    """Edges ``e_cor`` with ``e_synd + e_cor`` closed, from a minimum-weight defect pairing.

    Pairs are joined by straight segments taken direction by direction
    (lowest direction first); boundary pairs by a straight run to the
    closest rough hyperplane (lowest direction, then the low side, on ties).
    """
    defects = extract_defects(lattice, e_synd)
    out = np.zeros(lattice.counts[1], dtype=np.uint8)
    for a, b in match_defects(defects):
        va = defects.coords[a]
        if b == BOUNDARY:
            _path_to_boundary(lattice, va, out)
            continue
        vb = defects.coords[b]
        v = va.copy()
        for i in range(lattice.D):
            v = _walk(lattice, v, i, int(vb[i] - v[i]), out)
    return out


class SurfaceFinder:
    """Minimum-weight face set with a given closed boundary.

    Uses the RG decoder when the lattice sizes allow it and the exact coset
    solver on the whole lattice otherwise.
    """

    def __init__(self, lattice: CodeLattice, budget: int | None = None):
        _need_faces(lattice)
        self.lattice = lattice
        kw = {} if budget is None else {"budget": budget}
        self.budget = budget
        try:
            rg_level(lattice)
            usable = True
        except ValueError:
            usable = False
        self.rg = RGDecoder(lattice, **kw) if usable else None
        self._matrix = None
        self._elim = None

    def __call__(self, curve: np.ndarray) -> np.ndarray:
        if self.rg is not None:
            return self.rg.decode_dense(curve)
        if self._matrix is None:
            self._matrix = self.lattice.boundary_matrix(2)
            self._elim = Elimination(self._matrix)
        w = np.ones(self.lattice.counts[2], dtype=np.int64)
        kw = {} if self.budget is None else {"budget": self.budget}
        return min_weight_coset(BinarySystem(self._matrix, curve, w), elimination=self._elim, **kw).x


@dataclass
class CycleResult:
    state: np.ndarray
    corrupted: bool
    e_cor_weight: int
    f_cor_weight: int


class SingleShotDecoder:
    """Repair-then-fill decoder with the perfect-measurement corruption test."""

    def __init__(self, code: CssCode, budget: int | None = None):
        self.code = code
        self.lattice = code.lattice
        self.surface = SurfaceFinder(code.lattice, budget)

    def correct(self, e_synd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(e_cor, f_cor)`` for a measured (possibly open) syndrome curve."""
        e_cor = repair_syndrome(self.lattice, e_synd)
        f_cor = self.surface(e_synd ^ e_cor)
        return e_cor, f_cor

    def corrupted(self, residual: np.ndarray) -> bool:
        """Whether the perfect-measurement decoder fails on ``residual``."""
        syn = self.lattice.boundary_dense(2, residual)
        if not syn.any():
            return crosses_logical(self.code, residual)
        return crosses_logical(self.code, residual ^ self.surface(syn))

    def cycle(self, state: np.ndarray, p: float, q: float, rng: np.random.Generator) -> CycleResult:
        lat = self.lattice
        state = state ^ (rng.random(lat.counts[2]) < p).astype(np.uint8)
        e_synd = lat.boundary_dense(2, state) ^ (rng.random(lat.counts[1]) < q).astype(np.uint8)
        e_cor, f_cor = self.correct(e_synd)
        state = state ^ f_cor
        return CycleResult(state, self.corrupted(state), int(e_cor.sum()), int(f_cor.sum()))


def single_shot_cycle(code: CssCode, state: np.ndarray, p: float, q: float, rng: np.random.Generator,
                      decoder: SingleShotDecoder | None = None) -> CycleResult:
    return (decoder or SingleShotDecoder(code)).cycle(state, p, q, rng)


def memory_trial(decoder, p: float, q: float, rng: np.random.Generator, max_cycles: int) -> tuple[int, bool]:
    """Cycles completed before the first corruption, and whether the cap was hit first."""
    state = np.zeros(decoder.lattice.counts[2], dtype=np.uint8)
    for t in range(max_cycles):
        res = decoder.cycle(state, p, q, rng)
        if res.corrupted:
            return t, False
        state = res.state
    return max_cycles, True


# ---------------------------------------------------------------------------
# two-dimensional Ising variant


class IsingDecoder:
    """Single-shot decoder for the planar code with all four sides rough.

    Every closed curve bounds exactly two face sets, complements of each
    other; the smaller one is chosen, and on a tie the one holding the
    corner face at the origin.
    """

    def __init__(self, code: CssCode):
        lat = code.lattice
        if lat.d2 != 2 or sum(n > 0 for n in lat.extents) != 2:
            raise ValueError("the Ising decoder needs a two-dimensional lattice with qubits on faces")
        self.code = code
        self.lattice = lat
        self._elim = Elimination(lat.boundary_matrix(2))
        self._all = np.zeros(lat.counts[2], dtype=np.uint8)
        self._all[code.logical_z.support] = 1
        self._origin = int(np.intersect1d(code.logical_z.support, code.logical_x.support)[0])

    def fill(self, curve: np.ndarray) -> np.ndarray:
        a = self._elim.particular(curve)
        b = a ^ self._all
        wa, wb = int(a.sum()), int(b.sum())
        if wa != wb:
            return a if wa < wb else b
        return a if a[self._origin] else b

    def correct(self, e_synd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        e_cor = repair_syndrome(self.lattice, e_synd)
        return e_cor, self.fill(e_synd ^ e_cor)

    def corrupted(self, residual: np.ndarray) -> bool:
        syn = self.lattice.boundary_dense(2, residual)
        return crosses_logical(self.code, residual ^ self.fill(syn))

    def cycle(self, state, p, q, rng) -> CycleResult:
        lat = self.lattice
        state = state ^ (rng.random(lat.counts[2]) < p).astype(np.uint8)
        e_synd = lat.boundary_dense(2, state) ^ (rng.random(lat.counts[1]) < q).astype(np.uint8)
        e_cor, f_cor = self.correct(e_synd)
        state = state ^ f_cor
        return CycleResult(state, self.corrupted(state), int(e_cor.sum()), int(f_cor.sum()))


def ising2d_decode(code: CssCode, e_synd) -> np.ndarray:
    """Face correction for a measured syndrome on the 2D Ising variant."""
    dec = IsingDecoder(code)
    return dec.correct(_dense_edges(code.lattice, e_synd))[1]
