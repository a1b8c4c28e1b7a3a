"""Hypercubic cell complexes with rough and smooth boundaries.

A lattice is the set of axis-aligned unit cells ``o_I(v)`` contained in a box
``U`` but not contained in the union ``B`` of its rough boundary hyperplanes.
Directions are 0-based internally; direction ``i`` spans vertex coordinates
``0..extent[i]`` and carries a rough boundary at its low and/or high end.

Cells of one dimension are indexed densely: first by orientation (sorted
direction tuple, lexicographic), then by base vertex (row-major, direction 0
most significant).  Every orientation block is a product of coordinate ranges,
so index <-> cell conversion is a constant-time stride computation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Cell",
    "Chain",
    "CodeLattice",
    "build_lattice",
    "lattice_from_extents",
    "boundary",
    "coboundary",
    "dualize",
    "dual_to_primal",
    "dump_lattice",
]


@dataclass(frozen=True, order=True)
class Cell:
    """Axis-aligned unit cell with base vertex ``base`` spanning ``dirs``."""

    dirs: tuple[int, ...]
    base: tuple[int, ...]

    def __post_init__(self) -> None:
        if tuple(sorted(set(self.dirs))) != tuple(self.dirs):
            raise ValueError(f"dirs must be strictly increasing, got {self.dirs}")

    @property
    def dim(self) -> int:
        return len(self.dirs)

    def intervals(self) -> list[tuple[int, int]]:
        """Interval representation ``[(a_i, b_i)]`` with ``b_i - a_i <= 1``."""
        return [(v, v + (i in self.dirs)) for i, v in enumerate(self.base)]

    def contains(self, other: "Cell") -> bool:
        """Geometric inclusion ``other ⊂ self``."""
        return all(
            a <= c and d <= b
            for (a, b), (c, d) in zip(self.intervals(), other.intervals())
        )


@dataclass(frozen=True)
class Chain:
    """Sparse GF(2) chain: a sorted, duplicate-free set of cell indices."""

    dim: int
    support: np.ndarray

    def __post_init__(self) -> None:
        s = np.unique(np.asarray(self.support, dtype=np.int64))
        object.__setattr__(self, "support", s)

    @classmethod
    def empty(cls, dim: int) -> "Chain":
        return cls(dim, np.empty(0, dtype=np.int64))

    @classmethod
    def from_dense(cls, dim: int, bits: np.ndarray) -> "Chain":
        return cls(dim, np.flatnonzero(np.asarray(bits) & 1))

    def to_dense(self, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=np.uint8)
        out[self.support] = 1
        return out

    def __add__(self, other: "Chain") -> "Chain":
        if other.dim != self.dim:
            raise ValueError(f"cannot add a {self.dim}-chain and a {other.dim}-chain")
        return Chain(self.dim, np.setxor1d(self.support, other.support, assume_unique=True))

    def __len__(self) -> int:
        return int(self.support.size)

    def __bool__(self) -> bool:
        return self.support.size > 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Chain):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.support, other.support)

    def __hash__(self) -> int:
        return hash((self.dim, self.support.tobytes()))

    def __repr__(self) -> str:
        return f"Chain(dim={self.dim}, support={self.support.tolist()})"

    def dot(self, other: "Chain") -> int:
        """GF(2) inner product ``<self, other>``."""
        return int(np.intersect1d(self.support, other.support, assume_unique=True).size & 1)


@dataclass(frozen=True)
class _Block:
    dirs: tuple[int, ...]
    lo: np.ndarray
    shape: tuple[int, ...]
    strides: np.ndarray
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


class CodeLattice:
    """Relative cell complex ``(U, B)`` restricted to the dimensions a code needs.

    ``extents[i]`` is the largest vertex coordinate in direction ``i``;
    ``rough_lo[i]`` / ``rough_hi[i]`` flag boundary hyperplanes
    ``v_i = 0`` / ``v_i = extents[i]`` that belong to ``B``.
    ``qubit_dim`` is the cell dimension carrying qubits (``d2``).
    """

    def __init__(
        self,
        extents: Sequence[int],
        rough_lo: Sequence[bool],
        rough_hi: Sequence[bool],
        qubit_dim: int,
        d1: int | None = None,
        lengths: Sequence[int] | None = None,
    ) -> None:
        if not (len(extents) == len(rough_lo) == len(rough_hi)):
            raise ValueError("extents and boundary flags must have equal length")
        if any(n < 0 for n in extents):
            raise ValueError(f"extents must be non-negative, got {list(extents)}")
        if qubit_dim < 1:
            raise ValueError("qubit cells need dimension >= 1")
        self.D = len(extents)
        if qubit_dim > self.D:
            raise ValueError(f"qubit dimension {qubit_dim} exceeds lattice dimension {self.D}")
        self.extents = tuple(int(n) for n in extents)
        self.rough_lo = tuple(bool(r) for r in rough_lo)
        self.rough_hi = tuple(bool(r) for r in rough_hi)
        self.d2 = qubit_dim
        self.d1 = self.D - qubit_dim if d1 is None else d1
        self.lengths = tuple(lengths) if lengths is not None else None
        self.dims = tuple(range(max(0, qubit_dim - 2), min(self.D, qubit_dim + 1) + 1))

        self._blocks: dict[int, list[_Block]] = {}
        self._block_by_dirs: dict[tuple[int, ...], _Block] = {}
        self.counts: dict[int, int] = {}
        for k in self.dims:
            offset = 0
            blocks = []
            for dirs in itertools.combinations(range(self.D), k):
                lo, hi = self._ranges(dirs)
                if np.any(hi < lo):
                    continue
                shape = tuple(int(x) for x in hi - lo + 1)
                strides = np.ones(self.D, dtype=np.int64)
                for i in range(self.D - 2, -1, -1):
                    strides[i] = strides[i + 1] * shape[i + 1]
                blk = _Block(dirs, lo, shape, strides, offset)
                blocks.append(blk)
                self._block_by_dirs[dirs] = blk
                offset += blk.size
            self._blocks[k] = blocks
            self.counts[k] = offset

        self.bnd: dict[int, np.ndarray] = {}
        self.cob: dict[int, np.ndarray] = {}
        for k in self.dims:
            if k - 1 in self.dims:
                self.bnd[k] = self._build_boundary(k)
        for k in self.dims:
            if k + 1 in self.bnd:
                self.cob[k] = _invert_incidence(self.bnd[k + 1], self.counts[k], 2 * (self.D - k))
        for arr in list(self.bnd.values()) + list(self.cob.values()):
            arr.setflags(write=False)

    # -- geometry -----------------------------------------------------------

    def _ranges(self, dirs: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        lo = np.zeros(self.D, dtype=np.int64)
        hi = np.zeros(self.D, dtype=np.int64)
        for i in range(self.D):
            if i in dirs:
                lo[i], hi[i] = 0, self.extents[i] - 1
            else:
                lo[i] = 1 if self.rough_lo[i] else 0
                hi[i] = self.extents[i] - 1 if self.rough_hi[i] else self.extents[i]
        return lo, hi

    def _coords(self, blk: _Block) -> np.ndarray:
        grids = np.indices(blk.shape, dtype=np.int64).reshape(self.D, -1).T
        return grids + blk.lo

    def _index_array(self, dirs: tuple[int, ...], coords: np.ndarray) -> np.ndarray:
        """Vectorized cell lookup; -1 where the cell is not in the lattice."""
        blk = self._block_by_dirs.get(dirs)
        out = np.full(coords.shape[0], -1, dtype=np.int64)
        if blk is None:
            return out
        rel = coords - blk.lo
        ok = np.all((rel >= 0) & (rel < np.array(blk.shape)), axis=1)
        out[ok] = blk.offset + rel[ok] @ blk.strides
        return out

    def _build_boundary(self, k: int) -> np.ndarray:
        out = np.full((self.counts[k], 2 * k), -1, dtype=np.int32)
        for blk in self._blocks[k]:
            coords = self._coords(blk)
            rows = slice(blk.offset, blk.offset + blk.size)
            for j, i in enumerate(blk.dirs):
                sub = tuple(d for d in blk.dirs if d != i)
                out[rows, 2 * j] = self._index_array(sub, coords)
                shifted = coords.copy()
                shifted[:, i] += 1
                out[rows, 2 * j + 1] = self._index_array(sub, shifted)
        return out

    # -- indexing -----------------------------------------------------------

    def num_cells(self, k: int) -> int:
        return self.counts.get(k, 0)

    @property
    def num_qubits(self) -> int:
        return self.counts[self.d2]

    def index(self, cell: Cell) -> int:
        """Index of ``cell``; raises ``KeyError`` if it is not in the lattice."""
        idx = self._index_array(tuple(cell.dirs), np.array([cell.base], dtype=np.int64))[0]
        if idx < 0:
            raise KeyError(f"{cell} is not a cell of this lattice")
        return int(idx)

    def find(self, cell: Cell) -> int:
        """Index of ``cell`` or -1."""
        if cell.dim not in self.counts or len(cell.base) != self.D:
            return -1
        return int(self._index_array(tuple(cell.dirs), np.array([cell.base], dtype=np.int64))[0])

    def cell(self, k: int, index: int) -> Cell:
        for blk in self._blocks[k]:
            if blk.offset <= index < blk.offset + blk.size:
                rel = np.unravel_index(index - blk.offset, blk.shape)
                base = tuple(int(r + l) for r, l in zip(rel, blk.lo))
                return Cell(blk.dirs, base)
        raise IndexError(f"no {k}-cell with index {index}")

    def cells(self, k: int) -> Iterator[Cell]:
        for blk in self._blocks[k]:
            for row in self._coords(blk):
                yield Cell(blk.dirs, tuple(int(x) for x in row))

    def cell_coords(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Base coordinates ``(n_k, D)`` and orientation masks ``(n_k, D)`` of all k-cells."""
        coords = np.zeros((self.counts[k], self.D), dtype=np.int64)
        mask = np.zeros((self.counts[k], self.D), dtype=bool)
        for blk in self._blocks[k]:
            rows = slice(blk.offset, blk.offset + blk.size)
            coords[rows] = self._coords(blk)
            mask[rows, list(blk.dirs)] = True
        return coords, mask

    def orientations(self, k: int) -> list[tuple[int, ...]]:
        return [blk.dirs for blk in self._blocks[k]]

    # -- operators ----------------------------------------------------------

    def boundary_matrix(self, k: int) -> sp.csr_matrix:
        """``∂_k`` as an ``(n_{k-1}, n_k)`` 0/1 sparse matrix."""
        inc = self.bnd[k]
        cols, pos = np.nonzero(inc >= 0)
        rows = inc[cols, pos]
        data = np.ones(rows.size, dtype=np.uint8)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.counts[k - 1], self.counts[k]))

    def boundary_dense(self, k: int, x: np.ndarray) -> np.ndarray:
        idx = self.bnd[k][np.flatnonzero(x)].ravel()
        idx = idx[idx >= 0]
        return (np.bincount(idx, minlength=self.counts[k - 1]) & 1).astype(np.uint8)

    def coboundary_dense(self, k: int, x: np.ndarray) -> np.ndarray:
        idx = self.cob[k][np.flatnonzero(x)].ravel()
        idx = idx[idx >= 0]
        return (np.bincount(idx, minlength=self.counts[k + 1]) & 1).astype(np.uint8)

    def __repr__(self) -> str:
        kinds = "".join("R" if (lo or hi) else "S" for lo, hi in zip(self.rough_lo, self.rough_hi))
        return f"CodeLattice(D={self.D}, extents={self.extents}, boundary={kinds}, counts={self.counts})"


def _invert_incidence(bnd: np.ndarray, n_rows: int, width: int) -> np.ndarray:
    cells, pos = np.nonzero(bnd >= 0)
    targets = bnd[cells, pos]
    order = np.argsort(targets, kind="stable")
    targets, cells = targets[order], cells[order]
    out = np.full((n_rows, width), -1, dtype=np.int32)
    starts = np.searchsorted(targets, np.arange(n_rows))
    slot = np.arange(targets.size) - starts[targets]
    out[targets, slot] = cells
    return out


def build_lattice(d1: int, d2: int, lengths: Sequence[int]) -> CodeLattice:
    """Lattice of the ``(d1, d2)``-surface code.

    The first ``d1`` directions are smooth with ``U_i = [0, L_i - 1]``; the
    remaining ``d2`` are rough with ``U_i = [0, L_i]`` and both end
    hyperplanes in ``B``.
    """
    if d1 < 0:
        raise ValueError(f"d1 must be >= 0, got {d1}")
    if d2 < 1:
        raise ValueError(f"d2 must be >= 1 (qubits live on d2-cells), got {d2}")
    lengths = [int(x) for x in lengths]
    if len(lengths) != d1 + d2:
        raise ValueError(f"expected {d1 + d2} lengths, got {len(lengths)}")
    if any(x < 1 for x in lengths):
        raise ValueError(f"lengths must be positive, got {lengths}")
    extents = [L - 1 for L in lengths[:d1]] + lengths[d1:]
    rough = [False] * d1 + [True] * d2
    return CodeLattice(extents, rough, rough, d2, d1=d1, lengths=lengths)


def lattice_from_extents(
    extents: Sequence[int], rough_lo: Sequence[bool], rough_hi: Sequence[bool], qubit_dim: int
) -> CodeLattice:
    """Lattice with arbitrary per-direction boundary flags (e.g. a rough time end)."""
    return CodeLattice(extents, rough_lo, rough_hi, qubit_dim)


def _check_dim(lattice: CodeLattice, dim: int, table: dict, op: str) -> None:
    if dim not in table:
        raise ValueError(f"{op} is not defined on {dim}-chains of this lattice")


def boundary(lattice: CodeLattice, chain: Chain) -> Chain:
    """Mod-2 boundary, keeping only boundary cells that survive the quotient by B."""
    _check_dim(lattice, chain.dim, lattice.bnd, "boundary")
    idx = lattice.bnd[chain.dim][chain.support].ravel()
    idx = idx[idx >= 0]
    vals, counts = np.unique(idx, return_counts=True)
    return Chain(chain.dim - 1, vals[counts & 1 == 1])


def coboundary(lattice: CodeLattice, chain: Chain) -> Chain:
    """Transpose of :func:`boundary`."""
    _check_dim(lattice, chain.dim, lattice.cob, "coboundary")
    idx = lattice.cob[chain.dim][chain.support].ravel()
    idx = idx[idx >= 0]
    vals, counts = np.unique(idx, return_counts=True)
    return Chain(chain.dim + 1, vals[counts & 1 == 1])


def _is_tesseract_family(lattice: CodeLattice) -> bool:
    return lattice.D == 4 and lattice.d2 == 2 and lattice.rough_lo == (False, False, True, True)


def dualize(lattice: CodeLattice, cell: Cell) -> Cell:
    """Duality map ``o_I(v) -> o_{All \\ I}(v + sum_{i in I} a_i)``.

    Sends edges to cubes and faces to faces of the dual complex
    ``U* = [0,L]^2 x [1,L]^2`` (rough in directions 0, 1) and reverses inclusion.
    """
    if not _is_tesseract_family(lattice):
        raise ValueError("dualize is defined for the 4D tesseract family only")
    if cell.dim not in (1, 2, 3):
        raise ValueError(f"dualize supports cells of dimension 1..3, got {cell.dim}")
    base = list(cell.base)
    for i in cell.dirs:
        base[i] += 1
    dirs = tuple(i for i in range(4) if i not in cell.dirs)
    return Cell(dirs, tuple(base))


def dual_to_primal(cell: Cell) -> Cell:
    """Rotate a dual-complex cell back onto the primal tesseract complex.

    Directions ``(2, 3, 0, 1)`` of the dual become ``(0, 1, 2, 3)`` and the
    (formerly rough) directions are shifted down by one.
    """
    perm = (2, 3, 0, 1)
    base = [cell.base[perm[n]] for n in range(4)]
    base[0] -= 1
    base[1] -= 1
    inv = {old: new for new, old in enumerate(perm)}
    return Cell(tuple(sorted(inv[d] for d in cell.dirs)), tuple(base))


def dump_lattice(lattice: CodeLattice, k: int) -> str:
    """Text dump, one cell per line: ``index dim dirs base``."""
    lines = []
    for n, c in enumerate(lattice.cells(k)):
        dirs = ",".join(str(d + 1) for d in c.dirs)
        base = ",".join(str(x) for x in c.base)
        lines.append(f"{n} {c.dim} {dirs} {base}")
    return "\n".join(lines) + "\n"
