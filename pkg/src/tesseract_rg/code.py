"""Stabilizers, logical operators and parameters of a generalized surface code."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .complex import Cell, Chain, CodeLattice, boundary
from .gf2opt import rank


@dataclass(frozen=True, eq=False)
class CssCode:
    """CSS code on the ``d2``-cells of a lattice.

    X checks are coboundaries of ``(d2-1)``-cells, Z checks are boundaries of
    ``(d2+1)``-cells.  ``hx`` / ``hz`` hold one check per row.
    """

    lattice: CodeLattice
    logical_x: Chain
    logical_z: Chain

    @cached_property
    def hx(self) -> sp.csr_matrix:
        return self.lattice.boundary_matrix(self.lattice.d2)

    @cached_property
    def hz(self) -> sp.csr_matrix:
        lat = self.lattice
        if lat.d2 + 1 not in lat.bnd:
            return sp.csr_matrix((0, lat.num_qubits), dtype=np.uint8)
        return lat.boundary_matrix(lat.d2 + 1).T.tocsr()

    @property
    def x_checks(self) -> list[Chain]:
        d = self.lattice.d2
        return [Chain(d, self.hx.indices[self.hx.indptr[r] : self.hx.indptr[r + 1]]) for r in range(self.hx.shape[0])]

    @property
    def z_checks(self) -> list[Chain]:
        d = self.lattice.d2
        hz = self.hz
        return [Chain(d, hz.indices[hz.indptr[r] : hz.indptr[r + 1]]) for r in range(hz.shape[0])]

    @property
    def num_qubits(self) -> int:
        return self.lattice.num_qubits


def _rough_dirs(lattice: CodeLattice) -> tuple[int, ...]:
    return tuple(i for i in range(lattice.D) if lattice.rough_lo[i] or lattice.rough_hi[i])


def _product_chain(lattice: CodeLattice, dirs: tuple[int, ...], ranges: list[range]) -> Chain:
    idx = [lattice.index(Cell(dirs, base)) for base in itertools.product(*ranges)]
    return Chain(lattice.d2, np.array(idx, dtype=np.int64))


def logical_operators(lattice: CodeLattice) -> tuple[Chain, Chain]:
    """Product-form logical pair ``(X, Z)``.

    Both consist of faces spanned by the rough directions.  X is translated
    over the smooth directions at rough coordinate 0; Z is translated over
    the rough directions at smooth coordinate 0.  They share the single
    qubit at the origin.
    """
    rough = _rough_dirs(lattice)
    if len(rough) != lattice.d2:
        raise ValueError(f"expected {lattice.d2} rough directions, found {len(rough)}")
    xr, zr = [], []
    for i in range(lattice.D):
        n = lattice.extents[i]
        if i in rough:
            xr.append(range(0, 1))
            zr.append(range(0, n))
        else:
            xr.append(range(0, n + 1))
            zr.append(range(0, 1))
    return _product_chain(lattice, rough, xr), _product_chain(lattice, rough, zr)


def build_code(lattice: CodeLattice) -> CssCode:
    lx, lz = logical_operators(lattice)
    return CssCode(lattice, lx, lz)


def code_params(code: CssCode) -> tuple[int, int, int]:
    """``(n, k, d)`` with ``k`` from GF(2) ranks and ``d`` from the product logicals."""
    n = code.num_qubits
    k = n - rank(code.hx) - (rank(code.hz) if code.hz.shape[0] else 0)
    d = min(len(code.logical_x), len(code.logical_z))
    return n, k, d


def is_logical_z_failure(code: CssCode, residual: Chain) -> bool:
    """True iff a closed Z-type face chain anticommutes with the X logical."""
    if residual.dim != code.lattice.d2:
        raise ValueError(f"residual must be a {code.lattice.d2}-chain, got dimension {residual.dim}")
    if boundary(code.lattice, residual):
        raise ValueError("residual has a nonzero boundary; it does not return to the code space")
    return residual.dot(code.logical_x) == 1


def crosses_logical(code: CssCode, residual_dense: np.ndarray) -> bool:
    """Dense-vector failure test without the boundary check (hot path)."""
    return bool(np.count_nonzero(residual_dense[code.logical_x.support]) & 1)
