"""Reference external coset solver using HiGHS through ``scipy.optimize.milp``.

Usage::

    TESSERACT_COSET_SOLVER="python3 -m tesseract_rg.milp_solver" tesseract-rg sweep ...

Reads an instance written by :func:`tesseract_rg.gf2opt.write_instance` and
writes the optimal assignment.
"""

from __future__ import annotations

import sys

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp

from .gf2opt import BinarySystem, read_instance


def solve(system: BinarySystem) -> np.ndarray:
    m, n = system.shape
    A = system.A.astype(np.float64)
    slack = -2.0 * sp.identity(m, format="csr")
    M = sp.hstack([A, slack], format="csr")
    deg = np.asarray(system.A.sum(axis=1)).ravel()
    c = np.concatenate([system.w.astype(np.float64), np.zeros(m)])
    bounds = Bounds(np.zeros(n + m), np.concatenate([np.ones(n), np.floor(deg / 2.0)]))
    b = system.b.astype(np.float64)
    res = milp(c, constraints=LinearConstraint(M, b, b), integrality=np.ones(n + m), bounds=bounds)
    if res.x is None:
        raise RuntimeError(f"MILP solver failed: {res.message}")
    return np.rint(res.x[:n]).astype(np.uint8)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: python3 -m tesseract_rg.milp_solver INSTANCE OUTPUT", file=sys.stderr)
        return 2
    x = solve(read_instance(argv[0]))
    with open(argv[1], "w") as fh:
        fh.writelines(f"{i} {int(v)}\n" for i, v in enumerate(x))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
