"""GF(2) linear algebra and the minimum-weight coset solver.

The coset problem is ``min w.x  s.t.  A x = b (mod 2)`` with integer,
possibly negative, weights.  The solver first eliminates ``A``, then either
walks the whole coset (few free variables) or runs a constraint-driven
branch and bound with a node budget.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels as K

EXACT_THRESHOLD = 24
DEFAULT_BUDGET = 1_000_000
SOLVER_ENV = "TESSERACT_COSET_SOLVER"


class InfeasibleSystem(ValueError):
    """Raised when ``A x = b`` has no solution over GF(2).

    ``row`` is the first echelon row whose right-hand side is nonzero, and
    ``constraints`` lists the original constraint indices summing to it.
    """

    def __init__(self, row: int, constraints: list[int], detail: str | None = None):
        self.row = row
        self.constraints = constraints
        shown = constraints[:12]
        more = "" if len(constraints) <= 12 else f" ... ({len(constraints)} total)"
        if detail is None:
            detail = f"pivot row {row} reduces to 0 = 1 (sum of constraints {shown}{more})"
        else:
            detail = f"{detail} (constraints {shown}{more})"
        super().__init__(f"infeasible GF(2) system: {detail}")


def _as_dense(A) -> np.ndarray:
    if sp.issparse(A):
        A = A.toarray()
    return (np.asarray(A) & 1).astype(np.uint8)


@dataclass
class BinarySystem:
    A: sp.csr_matrix
    b: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        A = sp.csr_matrix(self.A)
        A.data = A.data.astype(np.int64) & 1
        A.eliminate_zeros()
        self.A = A.astype(np.uint8)
        self.b = np.asarray(self.b, dtype=np.uint8) & 1
        self.w = np.asarray(self.w, dtype=np.int64)
        m, n = self.A.shape
        if self.b.shape != (m,):
            raise ValueError(f"b has shape {self.b.shape}, expected ({m},)")
        if self.w.shape != (n,):
            raise ValueError(f"w has shape {self.w.shape}, expected ({n},)")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def residual(self, x: np.ndarray) -> np.ndarray:
        return (self.A @ np.asarray(x, dtype=np.int64) + self.b) % 2


@dataclass
class CosetSolution:
    x: np.ndarray
    objective: int
    optimal: bool
    nodes_explored: int


class Elimination:
    """Reduced echelon form of a fixed matrix, reusable across right-hand sides."""

    def __init__(self, A):
        dense = _as_dense(A)
        self.m, self.n = dense.shape
        rows = K.pack_rows(dense)
        trans = K.pack_rows(np.eye(self.m, dtype=np.uint8)) if self.m else np.zeros((0, 1), np.uint64)
        self.rank, self.pivots = K.rref_inplace(rows, trans, self.n)
        self.rows = rows
        self.trans = trans
        self.kptr, self.kidx = K.kernel_csr(rows, self.rank, self.pivots, self.n)

    @property
    def n_free(self) -> int:
        return self.n - self.rank

    def particular(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.uint8) & 1
        x = np.zeros(self.n, dtype=np.uint8)
        if self.m == 0:
            return x
        bp = K.pack_rows(b[None, :])[0]
        bad = K.apply_trans(self.trans, bp, self.rank, self.pivots, self.n, x)
        if bad >= 0:
            cons = np.flatnonzero(K.unpack_rows(self.trans[bad : bad + 1], self.m)[0])
            raise InfeasibleSystem(int(bad), cons.tolist())
        return x

    def kernel(self) -> np.ndarray:
        out = np.zeros((self.n_free, self.n), dtype=np.uint8)
        for f in range(self.n_free):
            out[f, self.kidx[self.kptr[f] : self.kptr[f + 1]]] = 1
        return out


def rank(A) -> int:
    return int(Elimination(A).rank)


def solve_particular(A, b) -> np.ndarray:
    """One solution of ``A x = b``; raises :class:`InfeasibleSystem` if none."""
    return Elimination(A).particular(b)


def kernel_basis(A) -> np.ndarray:
    """Rows form a basis of ``{x : A x = 0}``."""
    return Elimination(A).kernel()


def csr_adjacency(A: sp.spmatrix):
    """(var -> constraints, constraint -> vars) CSR index arrays."""
    csr = sp.csr_matrix(A)
    csr.sort_indices()
    csc = sp.csc_matrix(A)
    csc.sort_indices()
    return (
        csc.indptr.astype(np.int64),
        csc.indices.astype(np.int64),
        csr.indptr.astype(np.int64),
        csr.indices.astype(np.int64),
    )


def min_weight_coset(
    system: BinarySystem,
    budget: int = DEFAULT_BUDGET,
    exact_threshold: int = EXACT_THRESHOLD,
    elimination: Elimination | None = None,
) -> CosetSolution:
    """Minimise ``w.x`` over the solutions of ``A x = b``.

    Returns the global optimum with ``optimal=True`` when the coset was
    enumerated or the branch and bound finished within ``budget`` nodes,
    otherwise the best assignment found.
    """
    m, n = system.shape
    if n == 0 or (not system.b.any() and (system.w >= 0).all()):
        if system.b.any():
            raise InfeasibleSystem(int(np.flatnonzero(system.b)[0]), [int(np.flatnonzero(system.b)[0])])
        return CosetSolution(np.zeros(n, dtype=np.uint8), 0, True, 0)

    external = os.environ.get(SOLVER_ENV)
    if external:
        x = solve_external(system, external)
        return CosetSolution(x, int(system.w @ x), True, 0)

    elim = elimination if elimination is not None else Elimination(system.A)
    x = elim.particular(system.b)
    vptr, vcon, cptr, cvar = csr_adjacency(system.A)
    nodes, optimal = K.coset_core(
        x, system.w, system.b.copy(), vptr, vcon, cptr, cvar,
        elim.kptr, elim.kidx, int(budget), int(exact_threshold),
    )
    return CosetSolution(x, int(system.w @ x.astype(np.int64)), bool(optimal), int(nodes))


# ---------------------------------------------------------------------------
# external solver exchange
#
# Instance file, one record per line:
#   vars <n>
#   slacks <s>
#   min <w_0> ... <w_{n-1}>
#   row <b> <k> <var_1> ... <var_k> <slack_index>
# Each "row" states  x_{var_1} + ... + x_{var_k} - 2 * s_{slack_index} = b,
# with x binary and s a nonnegative integer.  The solver command receives the
# instance path and the output path as its two final arguments and must write
# one line per variable: "<index> <0|1>" (slack values may be omitted).
# ---------------------------------------------------------------------------


def write_instance(system: BinarySystem, path: str) -> None:
    csr = system.A
    lines = [f"vars {system.shape[1]}", f"slacks {system.shape[0]}"]
    lines.append("min " + " ".join(str(int(v)) for v in system.w))
    for r in range(system.shape[0]):
        cols = csr.indices[csr.indptr[r] : csr.indptr[r + 1]]
        lines.append(f"row {int(system.b[r])} {len(cols)} " + " ".join(map(str, cols)) + f" {r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_instance(path: str) -> BinarySystem:
    n = 0
    w = None
    rows, cols, b = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "vars":
                n = int(parts[1])
            elif parts[0] == "min":
                w = np.array([int(t) for t in parts[1:]], dtype=np.int64)
            elif parts[0] == "row":
                k = int(parts[2])
                r = len(b)
                b.append(int(parts[1]))
                for t in parts[3 : 3 + k]:
                    rows.append(r)
                    cols.append(int(t))
    A = sp.csr_matrix((np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=(len(b), n))
    return BinarySystem(A, np.array(b), w if w is not None else np.zeros(n, dtype=np.int64))


def read_assignment(path: str, n: int) -> np.ndarray:
    x = np.zeros(n, dtype=np.uint8)
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) == 2:
                i = int(parts[0])
                if 0 <= i < n:
                    x[i] = int(parts[1]) & 1
    return x


def solve_external(system: BinarySystem, command: str) -> np.ndarray:
    with tempfile.TemporaryDirectory() as tmp:
        inst = os.path.join(tmp, "instance.txt")
        out = os.path.join(tmp, "assignment.txt")
        write_instance(system, inst)
        subprocess.run(shlex.split(command) + [inst, out], check=True)
        x = read_assignment(out, system.shape[1])
    if system.residual(x).any():
        raise RuntimeError(f"external solver {command!r} returned an assignment violating the constraints")
    return x
