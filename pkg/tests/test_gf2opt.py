import itertools
import sys

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from tesseract_rg import milp_solver
from tesseract_rg.gf2opt import (
    SOLVER_ENV, BinarySystem, Elimination, InfeasibleSystem, kernel_basis, min_weight_coset,
    rank, read_instance, solve_particular, write_instance,
)

from conftest import tesseract


def brute_force(A, b, w):
    best = None
    for bits in itertools.product((0, 1), repeat=A.shape[1]):
        x = np.array(bits)
        if np.array_equal(A @ x % 2, b):
            c = int(w @ x)
            best = c if best is None else min(best, c)
    return best


@st.composite
def systems(draw):
    m = draw(st.integers(1, 10))
    n = draw(st.integers(1, 12))
    A = np.array(draw(st.lists(st.lists(st.integers(0, 1), min_size=n, max_size=n), min_size=m, max_size=m)), dtype=np.uint8)
    x0 = np.array(draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    w = np.array(draw(st.lists(st.integers(-3, 6), min_size=n, max_size=n)))
    return A, A @ x0 % 2, w


@settings(max_examples=200, deadline=None)
@given(systems(), st.sampled_from([0, 24]))
def test_coset_minimum_matches_brute_force(system, threshold):
    A, b, w = system
    sol = min_weight_coset(BinarySystem(A, b, w), exact_threshold=threshold)
    assert np.array_equal(A @ sol.x % 2, b)
    assert sol.optimal
    assert sol.objective == brute_force(A, b, w)


@settings(max_examples=50, deadline=None)
@given(systems())
def test_kernel_and_rank(system):
    A, b, _ = system
    K = kernel_basis(A)
    assert not np.any(A @ K.T % 2)
    assert K.shape[0] == A.shape[1] - rank(A)
    assert rank(K) == K.shape[0]
    x = solve_particular(A, b)
    assert np.array_equal(A @ x % 2, b)


def test_identity():
    I = np.eye(6, dtype=np.uint8)
    assert rank(I) == 6
    b = np.array([1, 0, 1, 1, 0, 0])
    assert np.array_equal(solve_particular(I, b), b)
    sol = min_weight_coset(BinarySystem(I, b, np.ones(6)))
    assert sol.objective == 3 and sol.optimal


def test_rank_of_tesseract_checks():
    c = tesseract(2)
    assert rank(c.hx) == 16
    assert Elimination(c.hx).n_free == 33 - 16


def test_infeasible_system_is_reported():
    A = np.array([[1, 1], [1, 1]])
    with pytest.raises(InfeasibleSystem) as exc:
        solve_particular(A, np.array([1, 0]))
    assert "infeasible" in str(exc.value)
    assert exc.value.constraints
    with pytest.raises(InfeasibleSystem):
        min_weight_coset(BinarySystem(A, np.array([0, 1]), np.ones(2)))
    with pytest.raises(ValueError):
        BinarySystem(A, np.array([0, 1, 1]), np.ones(2))


def test_empty_syndrome_gives_zero():
    c = tesseract(2)
    sol = min_weight_coset(BinarySystem(c.hx, np.zeros(c.hx.shape[0]), np.ones(33)))
    assert sol.objective == 0 and not sol.x.any()


def test_budget_only_limits_optimality():
    # a 40-variable repetition-like system that needs branching
    rng = np.random.default_rng(3)
    A = (rng.random((20, 40)) < 0.15).astype(np.uint8)
    b = A @ rng.integers(0, 2, 40) % 2
    w = rng.integers(1, 5, 40)
    system = BinarySystem(A, b, w)
    full = min_weight_coset(system, exact_threshold=0)
    small = min_weight_coset(system, budget=1, exact_threshold=0)
    assert full.optimal
    assert np.array_equal(A @ small.x % 2, b)
    assert small.objective >= full.objective
    assert small.nodes_explored <= full.nodes_explored
    assert full.objective == int(w @ milp_solver.solve(system))


def test_instance_roundtrip(tmp_path):
    A = sp.csr_matrix(np.array([[1, 0, 1], [0, 1, 1]], dtype=np.uint8))
    system = BinarySystem(A, np.array([1, 0]), np.array([2, 1, -1]))
    path = tmp_path / "inst.txt"
    write_instance(system, str(path))
    text = path.read_text().splitlines()
    assert text[:3] == ["vars 3", "slacks 2", "min 2 1 -1"]
    assert text[3] == "row 1 2 0 2 0"
    back = read_instance(str(path))
    assert (back.A != system.A).nnz == 0
    assert np.array_equal(back.b, system.b) and np.array_equal(back.w, system.w)


def test_external_solver(monkeypatch):
    rng = np.random.default_rng(8)
    A = (rng.random((8, 12)) < 0.3).astype(np.uint8)
    b = A @ rng.integers(0, 2, 12) % 2
    w = rng.integers(1, 4, 12)
    expected = brute_force(A, b, w)
    monkeypatch.setenv(SOLVER_ENV, f"{sys.executable} -m tesseract_rg.milp_solver")
    sol = min_weight_coset(BinarySystem(A, b, w))
    assert sol.objective == expected
