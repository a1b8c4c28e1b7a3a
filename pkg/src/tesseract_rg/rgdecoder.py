"""Renormalization-group decoder for surface-like Z logicals (qubits on faces).

Each level clears the syndrome from every edge outside the even sublattice
by solving small overlapping box problems in a fixed order, then identifies
what is left with a syndrome on a lattice of half the size.  The smallest
lattice is solved as a single coset problem.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .complex import Chain, CodeLattice, lattice_from_extents
from .gf2opt import DEFAULT_BUDGET, EXACT_THRESHOLD, BinarySystem, Elimination, InfeasibleSystem, min_weight_coset


# ---------------------------------------------------------------------------
# lattice sizes


def rg_level(lattice: CodeLattice) -> int:
    """The ``N`` with every non-degenerate direction of size ``2^N (+1 if rough at the top)``."""
    levels = set()
    for n, hi in zip(lattice.extents, lattice.rough_hi):
        if n == 0 and not hi:
            continue
        m = n - 1 if hi else n
        if m < 1 or m & (m - 1):
            raise ValueError(
                f"extent {n} is not a supported size; lattice extents {lattice.extents} "
                "must be 2^N (smooth) or 2^N+1 (rough) in every direction"
            )
        levels.add(m.bit_length() - 1)
    if len(levels) != 1:
        raise ValueError(f"directions of lattice {lattice.extents} are at different scales {sorted(levels)}")
    return levels.pop()


def coarse_lattice(lattice: CodeLattice) -> CodeLattice:
    ext = []
    for n, hi in zip(lattice.extents, lattice.rough_hi):
        if n == 0:
            ext.append(0)
        elif hi:
            ext.append((n - 1) // 2 + 1)
        else:
            ext.append(n // 2)
    return lattice_from_extents(ext, lattice.rough_lo, lattice.rough_hi, lattice.d2)


# ---------------------------------------------------------------------------
# coarse-graining maps


@dataclass
class CoarseMaps:
    """Embedding of a lattice of half the size into the even sublattice.

    ``edge_ptr/edge_idx`` send each small-lattice edge to its 1-2 images,
    ``face_ptr/face_idx`` each small-lattice face to its 1-4 images (CSR).
    The first image of an edge is the one at the doubled base point.
    """

    small: CodeLattice
    large: CodeLattice
    edge_ptr: np.ndarray
    edge_idx: np.ndarray
    face_ptr: np.ndarray
    face_idx: np.ndarray

    def matrix(self, k: int) -> sp.csr_matrix:
        ptr, idx = (self.edge_ptr, self.edge_idx) if k == 1 else (self.face_ptr, self.face_idx)
        n_small = ptr.size - 1
        cols = np.repeat(np.arange(n_small), np.diff(ptr))
        data = np.ones(idx.size, dtype=np.uint8)
        return sp.csr_matrix((data, (idx, cols)), shape=(self.large.counts[k], n_small))

    def lift_faces(self, small_faces: np.ndarray) -> np.ndarray:
        sel = np.flatnonzero(small_faces)
        idx = np.concatenate([self.face_idx[self.face_ptr[s] : self.face_ptr[s + 1]] for s in sel]) if sel.size else np.zeros(0, np.int64)
        return (np.bincount(idx, minlength=self.large.counts[2]) & 1).astype(np.uint8)

    def lift_edges(self, small_edges: np.ndarray) -> np.ndarray:
        sel = np.flatnonzero(small_edges)
        idx = np.concatenate([self.edge_idx[self.edge_ptr[s] : self.edge_ptr[s + 1]] for s in sel]) if sel.size else np.zeros(0, np.int64)
        return (np.bincount(idx, minlength=self.large.counts[1]) & 1).astype(np.uint8)

    def pull_syndrome(self, large_edges: np.ndarray) -> np.ndarray:
        """Small-lattice syndrome whose image is ``large_edges``.

        ``large_edges`` must live on the even sublattice and take equal values
        on both images of every small edge.
        """
        first = large_edges[self.edge_idx[self.edge_ptr[:-1]]]
        last = large_edges[self.edge_idx[self.edge_ptr[1:] - 1]]
        if np.any(first != last):
            bad = int(np.flatnonzero(first != last)[0])
            raise RuntimeError(f"syndrome is not in the image of the edge embedding (small edge {bad})")
        return first.astype(np.uint8)

    def pull_weights(self, large_w: np.ndarray) -> np.ndarray:
        sums = np.add.reduceat(large_w[self.face_idx], self.face_ptr[:-1])
        sums[np.diff(self.face_ptr) == 0] = 0
        return sums.astype(np.int64)


def _subdivide(small: CodeLattice, large: CodeLattice, k: int) -> tuple[np.ndarray, np.ndarray]:
    coords, mask = small.cell_coords(k)
    rows_all, idx_all, pat_all = [], [], []
    top = np.array(small.extents) - 1
    for dirs in small.orientations(k):
        sel = np.flatnonzero(np.all(mask == np.isin(np.arange(small.D), dirs), axis=1))
        c = coords[sel]
        for p, pattern in enumerate(itertools.product((0, 1), repeat=len(dirs))):
            base = 2 * c
            ok = np.ones(sel.size, dtype=bool)
            for i, s in zip(dirs, pattern):
                if s:
                    base[:, i] += 1
                    if small.rough_hi[i]:
                        ok &= c[:, i] != top[i]
            idx = large._index_array(tuple(dirs), base[ok])
            if np.any(idx < 0):
                raise RuntimeError(f"coarse {k}-cell maps outside lattice {large.extents}")
            rows_all.append(sel[ok])
            idx_all.append(idx)
            pat_all.append(np.full(idx.size, p))
    rows = np.concatenate(rows_all)
    idx = np.concatenate(idx_all)
    pat = np.concatenate(pat_all)
    order = np.lexsort((pat, rows))
    ptr = np.zeros(small.counts[k] + 1, dtype=np.int64)
    np.add.at(ptr, rows + 1, 1)
    return np.cumsum(ptr), idx[order].astype(np.int64)


def build_coarse_maps(large: CodeLattice) -> CoarseMaps:
    if rg_level(large) < 1:
        raise ValueError(f"lattice {large.extents} is already the smallest size")
    small = coarse_lattice(large)
    ep, ei = _subdivide(small, large, 1)
    fp, fi = _subdivide(small, large, 2)
    return CoarseMaps(small, large, ep, ei, fp, fi)


# ---------------------------------------------------------------------------
# boxes


@dataclass
class Box:
    center: tuple[int, ...]
    edges: np.ndarray
    faces: np.ndarray
    order: int


def coarse_edge_mask(lattice: CodeLattice) -> np.ndarray:
    """Edges whose base point is even in every direction transverse to the edge."""
    coords, mask = lattice.cell_coords(1)
    return np.all(mask | (coords % 2 == 0), axis=1)


def _center_values(lattice: CodeLattice) -> list[np.ndarray]:
    out = []
    for n in lattice.extents:
        out.append(np.array([0]) if n == 0 else np.arange(1, n + 1, 2))
    return out


def build_boxes(lattice: CodeLattice) -> list[Box]:
    """Boxes around all-odd vertices in increasing mixed-radix order (last direction most significant)."""
    D = lattice.D
    coords, mask = lattice.cell_coords(1)
    coarse = coarse_edge_mask(lattice)
    fine = np.flatnonzero(~coarse)
    radix = max(lattice.extents) + 2
    weights = radix ** np.arange(D, dtype=np.int64)
    centers_ok = _center_values(lattice)

    pairs_e, pairs_c = [], []
    c = coords[fine]
    m = mask[fine]
    for signs in itertools.product((-1, 1), repeat=D):
        v = c.copy()
        for j in range(D):
            if lattice.extents[j] == 0:
                continue
            even = c[:, j] % 2 == 0
            step = np.where(m[:, j], 1, signs[j])
            v[:, j] = np.where(even, c[:, j] + step, c[:, j])
        ok = np.ones(fine.size, dtype=bool)
        for j in range(D):
            ok &= np.isin(v[:, j], centers_ok[j])
        pairs_e.append(fine[ok])
        pairs_c.append(v[ok] @ weights)
    pe = np.concatenate(pairs_e)
    pc = np.concatenate(pairs_c)
    uniq = np.unique(np.stack([pc, pe], axis=1), axis=0)
    orders, starts = np.unique(uniq[:, 0], return_index=True)
    rank_of = {int(o): r for r, o in enumerate(orders)}

    maxrank = np.full(lattice.counts[1], -1, dtype=np.int64)
    edge_rank = np.array([rank_of[int(o)] for o in uniq[:, 0]], dtype=np.int64)
    np.maximum.at(maxrank, uniq[:, 1], edge_rank)
    if np.any(maxrank[fine] < 0):
        raise RuntimeError("some edge off the even sublattice is not covered by any box")

    bnd2 = lattice.bnd[2]
    cob1 = lattice.cob[1]
    boxes = []
    bounds = list(starts) + [uniq.shape[0]]
    for r, o in enumerate(orders):
        edges = np.sort(uniq[bounds[r] : bounds[r + 1], 1])
        cand = np.unique(cob1[edges].ravel())
        cand = cand[cand >= 0]
        fe = bnd2[cand]
        valid = fe >= 0
        fe_safe = np.where(valid, fe, 0)
        good = ~valid | coarse[fe_safe] | (maxrank[fe_safe] >= r)
        faces = cand[np.all(good, axis=1)]
        center = tuple(int(x) for x in (int(o) // weights) % radix)
        if faces.size == 0:
            continue
        boxes.append(Box(center, edges.astype(np.int64), faces.astype(np.int64), int(o)))
    return boxes


# ---------------------------------------------------------------------------
# packed per-level data for the compiled reduction loop


@dataclass
class _Packed:
    e_off: np.ndarray
    e_ids: np.ndarray
    f_off: np.ndarray
    f_ids: np.ndarray
    vp_off: np.ndarray
    vptr: np.ndarray
    vc_off: np.ndarray
    vcon: np.ndarray
    cp_off: np.ndarray
    cptr: np.ndarray
    cv_off: np.ndarray
    cvar: np.ndarray
    kp_off: np.ndarray
    kptr: np.ndarray
    ki_off: np.ndarray
    kidx: np.ndarray
    t_off: np.ndarray
    t_words: np.ndarray
    trans: np.ndarray
    p_off: np.ndarray
    piv: np.ndarray
    ranks: np.ndarray


def _offsets(parts: list[np.ndarray]) -> np.ndarray:
    off = np.zeros(len(parts) + 1, dtype=np.int64)
    off[1:] = np.cumsum([p.size for p in parts])
    return off


def _cat(parts: list[np.ndarray], dtype) -> np.ndarray:
    return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)


def _pack_boxes(lattice: CodeLattice, boxes: list[Box]) -> _Packed:
    bnd2 = lattice.bnd[2]
    local = np.full(lattice.counts[1], -1, dtype=np.int64)
    lists = {k: [] for k in ("e", "f", "vptr", "vcon", "cptr", "cvar", "kptr", "kidx", "trans", "piv")}
    t_words, ranks = [], []
    for box in boxes:
        local[box.edges] = np.arange(box.edges.size)
        fe = bnd2[box.faces]
        loc = np.where(fe >= 0, local[np.where(fe >= 0, fe, 0)], -1)
        r, c = np.nonzero(loc >= 0)
        A = sp.csr_matrix(
            (np.ones(r.size, dtype=np.uint8), (loc[r, c], r)), shape=(box.edges.size, box.faces.size)
        )
        A.sum_duplicates()
        A.sort_indices()
        local[box.edges] = -1
        elim = Elimination(A)
        csc = A.tocsc()
        lists["e"].append(box.edges)
        lists["f"].append(box.faces)
        lists["vptr"].append(csc.indptr.astype(np.int64))
        lists["vcon"].append(csc.indices.astype(np.int64))
        lists["cptr"].append(A.indptr.astype(np.int64))
        lists["cvar"].append(A.indices.astype(np.int64))
        lists["kptr"].append(elim.kptr)
        lists["kidx"].append(elim.kidx.astype(np.int64))
        lists["trans"].append(elim.trans.ravel())
        lists["piv"].append(elim.pivots.astype(np.int64))
        t_words.append(elim.trans.shape[1])
        ranks.append(elim.rank)
    return _Packed(
        _offsets(lists["e"]), _cat(lists["e"], np.int64),
        _offsets(lists["f"]), _cat(lists["f"], np.int64),
        _offsets(lists["vptr"]), _cat(lists["vptr"], np.int64),
        _offsets(lists["vcon"]), _cat(lists["vcon"], np.int64),
        _offsets(lists["cptr"]), _cat(lists["cptr"], np.int64),
        _offsets(lists["cvar"]), _cat(lists["cvar"], np.int64),
        _offsets(lists["kptr"]), _cat(lists["kptr"], np.int64),
        _offsets(lists["kidx"]), _cat(lists["kidx"], np.int64),
        _offsets(lists["trans"]), np.array(t_words, dtype=np.int64), _cat(lists["trans"], np.uint64),
        _offsets(lists["piv"]), _cat(lists["piv"], np.int64),
        np.array(ranks, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# decoder


@dataclass
class SolveStats:
    box_solves: int = 0
    exact_box_solves: int = 0
    nodes: int = 0
    base_solves: int = 0
    exact_base_solves: int = 0

    @property
    def solves(self) -> int:
        return self.box_solves + self.base_solves

    @property
    def exact_fraction(self) -> float:
        total = self.solves
        return 1.0 if total == 0 else (self.exact_box_solves + self.exact_base_solves) / total

    def merge(self, other: "SolveStats") -> None:
        self.box_solves += other.box_solves
        self.exact_box_solves += other.exact_box_solves
        self.nodes += other.nodes
        self.base_solves += other.base_solves
        self.exact_base_solves += other.exact_base_solves


@dataclass
class RGLevel:
    lattice: CodeLattice
    boxes: list[Box]
    maps: CoarseMaps
    coarse: np.ndarray
    packed: _Packed


@dataclass
class TraceStep:
    """Syndrome before, partial correction and reduced syndrome at one level."""

    extents: tuple[int, ...]
    syndrome: np.ndarray
    correction: np.ndarray
    reduced: np.ndarray


class RGDecoder:
    """Decoder bound to one lattice; precomputes maps, boxes and eliminations."""

    def __init__(self, lattice: CodeLattice, budget: int = DEFAULT_BUDGET, exact_threshold: int = EXACT_THRESHOLD):
        if lattice.d2 != 2:
            raise ValueError("the RG decoder needs qubits on faces (d2 = 2)")
        self.lattice = lattice
        self.budget = int(budget)
        self.exact_threshold = int(exact_threshold)
        self.levels: list[RGLevel] = []
        lat = lattice
        while rg_level(lat) >= 1:
            maps = build_coarse_maps(lat)
            boxes = build_boxes(lat)
            self.levels.append(RGLevel(lat, boxes, maps, coarse_edge_mask(lat), _pack_boxes(lat, boxes)))
            lat = maps.small
        self.base = lat
        self.base_matrix = lat.boundary_matrix(2)
        self.base_elim = Elimination(self.base_matrix)
        self.stats = SolveStats()

    def reduce(self, level: int, syndrome: np.ndarray, weights: np.ndarray):
        """One coarse-graining step: returns ``(f_cg, reduced_syndrome, reduced_weights)``.

        ``syndrome`` and ``weights`` are not modified.
        """
        lv = self.levels[level]
        syn = np.ascontiguousarray(syndrome, dtype=np.uint8).copy()
        w = np.ascontiguousarray(weights, dtype=np.int64).copy()
        fcg = np.zeros(lv.lattice.counts[2], dtype=np.uint8)
        stats = np.zeros(4, dtype=np.int64)
        P = lv.packed
        ok = K.reduce_boxes(
            syn, w, fcg, lv.lattice.bnd[2],
            P.e_off, P.e_ids, P.f_off, P.f_ids, P.vp_off, P.vptr, P.vc_off, P.vcon,
            P.cp_off, P.cptr, P.cv_off, P.cvar, P.kp_off, P.kptr, P.ki_off, P.kidx,
            P.t_off, P.t_words, P.trans, P.p_off, P.piv, P.ranks,
            self.budget, self.exact_threshold, stats,
        )
        if not ok:
            box = lv.boxes[int(stats[3])]
            raise InfeasibleSystem(
                -1, [int(e) for e in box.edges],
                f"box centred at {tuple(int(c) for c in box.center)} has no local solution; "
                "the syndrome is not a boundary",
            )
        self.stats.box_solves += int(stats[0])
        self.stats.exact_box_solves += int(stats[1])
        self.stats.nodes += int(stats[2])
        if np.any(syn[~lv.coarse]):
            raise RuntimeError("syndrome left off the even sublattice after box reduction")
        return fcg, lv.maps.pull_syndrome(syn), lv.maps.pull_weights(w)

    def _solve_base(self, syndrome: np.ndarray, weights: np.ndarray) -> np.ndarray:
        sol = min_weight_coset(
            BinarySystem(self.base_matrix, syndrome, weights),
            budget=self.budget, exact_threshold=self.exact_threshold, elimination=self.base_elim,
        )
        self.stats.base_solves += 1
        self.stats.exact_base_solves += int(sol.optimal)
        self.stats.nodes += sol.nodes_explored
        return sol.x

    def decode_dense(self, syndrome: np.ndarray, weights: np.ndarray | None = None, trace: list | None = None) -> np.ndarray:
        syn = np.asarray(syndrome, dtype=np.uint8)
        if syn.shape != (self.lattice.counts[1],):
            raise ValueError(f"syndrome has shape {syn.shape}, expected ({self.lattice.counts[1]},)")
        w = np.ones(self.lattice.counts[2], dtype=np.int64) if weights is None else np.asarray(weights, np.int64)
        return self._decode(0, syn, w, trace)

    def _decode(self, level: int, syn: np.ndarray, w: np.ndarray, trace) -> np.ndarray:
        if level == len(self.levels):
            return self._solve_base(syn, w)
        lv = self.levels[level]
        if not syn.any() and (w >= 0).all():
            return np.zeros(lv.lattice.counts[2], dtype=np.uint8)
        fcg, red, wred = self.reduce(level, syn, w)
        if trace is not None:
            trace.append(TraceStep(lv.lattice.extents, syn.copy(), fcg.copy(), red.copy()))
        fred = self._decode(level + 1, red, wred, trace)
        return fcg ^ lv.maps.lift_faces(fred)

    def decode(self, syndrome: Chain, trace: list | None = None) -> Chain:
        dense = syndrome.to_dense(self.lattice.counts[1])
        if 0 in self.lattice.dims and self.lattice.boundary_dense(1, dense).any():
            raise ValueError("syndrome is not closed")
        return Chain.from_dense(2, self.decode_dense(dense, trace=trace))


def decode_rg(lattice: CodeLattice, syndrome: Chain, **kwargs) -> Chain:
    return RGDecoder(lattice, **kwargs).decode(syndrome)


def reduce_syndrome(lattice: CodeLattice, syndrome: Chain, weights: np.ndarray | None = None):
    """Single coarse-graining step on ``lattice``; see :meth:`RGDecoder.reduce`."""
    dec = RGDecoder(lattice)
    w = np.ones(lattice.counts[2], dtype=np.int64) if weights is None else weights
    return dec.reduce(0, syndrome.to_dense(lattice.counts[1]), w)


def format_trace(trace: list[TraceStep], lattice_levels: list[CodeLattice] | None = None) -> str:
    lines = []
    for step in trace:
        lines.append(
            f"extents={step.extents} syndrome_edges={np.flatnonzero(step.syndrome).tolist()} "
            f"correction_faces={np.flatnonzero(step.correction).tolist()} "
            f"reduced_edges={np.flatnonzero(step.reduced).tolist()}"
        )
    return "\n".join(lines)
