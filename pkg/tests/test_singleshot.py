import numpy as np
import pytest
import scipy.sparse as sp

from tesseract_rg import milp_solver
from tesseract_rg.code import crosses_logical
from tesseract_rg.complex import Cell, Chain
from tesseract_rg.gf2opt import BinarySystem, min_weight_coset
from tesseract_rg.singleshot import (
    BOUNDARY, DefectSet, IsingDecoder, MatchingError, SingleShotDecoder, _boundary_distance,
    brute_force_matching_cost, extract_defects, ising2d_decode, match_defects, matching_cost,
    memory_trial, repair_syndrome,
)

from conftest import code, lattice, tesseract


def edge(lat, d, base):
    return lat.index(Cell((d,), tuple(base)))


def edges(lat, items):
    out = np.zeros(lat.counts[1], dtype=np.uint8)
    for d, base in items:
        out[edge(lat, d, base)] ^= 1
    return out


def defects_at(lat, verts):
    coords, _ = lat.cell_coords(0)
    return DefectSet(np.asarray(verts), coords[verts], _boundary_distance(lat, coords[verts]))


def min_weight_example():
    # U-shaped five-edge curve in a smooth plane of the L=5 code
    lat = lattice(2, 2, (5, 5, 5, 5))
    curve = edges(lat, [(1, (0, 0, 2, 2)), (0, (0, 1, 2, 2)), (0, (1, 1, 2, 2)), (0, (2, 1, 2, 2)), (1, (3, 0, 2, 2))])
    return lat, curve


def test_closed_syndrome_has_no_defects():
    lat = lattice(2, 2, (3, 3, 3, 3))
    face = np.zeros(lat.counts[2], dtype=np.uint8)
    face[11] = 1
    assert len(extract_defects(lat, lat.boundary_dense(2, face))) == 0
    assert not repair_syndrome(lat, lat.boundary_dense(2, face)).any()


def test_single_edge_defects():
    lat = lattice(2, 2, (5, 5, 5, 5))
    e = edges(lat, [(0, (1, 1, 2, 2))])
    d = extract_defects(lat, e)
    assert d.coords.tolist() == [[1, 1, 2, 2], [2, 1, 2, 2]]
    assert d.boundary_distance.tolist() == [2, 2]
    cor = repair_syndrome(lat, e)
    assert cor.sum() == 1
    assert not lat.boundary_dense(1, e ^ cor).any()
    assert extract_defects(lat, Chain(1, [edge(lat, 0, (1, 1, 2, 2))])).coords.shape == (2, 4)


def test_adjacent_defects_pair_up():
    lat = lattice(2, 2, (5, 5, 5, 5))
    d = defects_at(lat, [lat.index(Cell((), (1, 1, 2, 2))), lat.index(Cell((), (2, 1, 2, 2)))])
    pairs = match_defects(d)
    assert pairs == [(0, 1)] and matching_cost(d, pairs) == 1


def test_defect_near_boundary_goes_to_boundary():
    lat = lattice(2, 2, (5, 5, 5, 5))
    d = defects_at(lat, [lat.index(Cell((), (0, 0, 1, 2))), lat.index(Cell((), (3, 3, 3, 3)))])
    pairs = match_defects(d)
    assert (0, BOUNDARY) in pairs
    assert matching_cost(d, pairs) == brute_force_matching_cost(d) == 3


def test_matching_is_exact_on_random_instances():
    lat = lattice(2, 2, (5, 5, 5, 5))
    rng = np.random.default_rng(21)
    for _ in range(100):
        m = int(rng.integers(1, 11))
        d = defects_at(lat, rng.choice(lat.counts[0], m, replace=False))
        pairs = match_defects(d)
        assert sorted(x for p in pairs for x in p if x != BOUNDARY) == list(range(m))
        assert matching_cost(d, pairs) == brute_force_matching_cost(d)


def test_odd_defects_without_boundary():
    d = DefectSet(np.arange(3), np.array([[0, 0], [1, 0], [3, 0]]), np.full(3, np.inf))
    with pytest.raises(MatchingError):
        match_defects(d)
    even = DefectSet(np.arange(2), np.array([[0, 0], [2, 0]]), np.full(2, np.inf))
    assert match_defects(even) == [(0, 1)]


def test_repair_closes_random_curves(rng):
    lat = lattice(2, 2, (5, 5, 5, 5))
    for _ in range(20):
        e = (rng.random(lat.counts[1]) < 0.02).astype(np.uint8)
        cor = repair_syndrome(lat, e)
        assert not lat.boundary_dense(1, e ^ cor).any()
        d = extract_defects(lat, e)
        if len(d) <= 12:
            assert cor.sum() == brute_force_matching_cost(d)


def test_two_step_decoder_is_suboptimal_on_example():
    lat, curve = min_weight_example()
    d = extract_defects(lat, curve)
    assert d.coords.tolist() == [[0, 0, 2, 2], [3, 0, 2, 2]]
    e_cor, f_cor = SingleShotDecoder(tesseract(5)).correct(curve)
    assert (e_cor.sum(), f_cor.sum()) == (3, 3)
    assert np.array_equal(lat.boundary_dense(2, f_cor), curve ^ e_cor)
    joint = sp.hstack([lat.boundary_matrix(2), sp.identity(lat.counts[1], format="csr", dtype=np.uint8)]).tocsr()
    x = milp_solver.solve(BinarySystem(joint, curve, np.ones(joint.shape[1], dtype=np.int64)))
    assert x.sum() == 5
    assert e_cor.sum() + f_cor.sum() == 6


def test_odd_even_two_measurement_errors():
    # two measurement errors run from the rough boundary to the midpoint of a rough direction
    c = tesseract(4)
    lat = c.lattice
    e_synd = edges(lat, [(2, (0, 0, 0, 2)), (2, (0, 0, 1, 2))])
    d = extract_defects(lat, e_synd)
    assert d.coords.tolist() == [[0, 0, 2, 2]]
    assert d.boundary_distance.tolist() == [2]

    v = np.array([0, 0, 2, 2])
    repairs = {
        "dir2-low": [(2, (0, 0, 0, 2)), (2, (0, 0, 1, 2))],
        "dir2-high": [(2, (0, 0, 2, 2)), (2, (0, 0, 3, 2))],
        "dir3-low": [(3, (0, 0, 2, 0)), (3, (0, 0, 2, 1))],
        "dir3-high": [(3, (0, 0, 2, 2)), (3, (0, 0, 2, 3))],
    }
    for name, items in repairs.items():
        cor = edges(lat, items)
        assert cor.sum() == brute_force_matching_cost(d) == 2
        assert not lat.boundary_dense(1, e_synd ^ cor).any(), name

    # the deterministic tie-break undoes the errors
    dec = SingleShotDecoder(c)
    e_cor, f_cor = dec.correct(e_synd)
    assert np.array_equal(e_cor, edges(lat, repairs["dir2-low"]))
    assert not f_cor.any()

    # an equally short repair leaves a curve across the code whose two filling halves tie
    curve = e_synd ^ edges(lat, repairs["dir2-high"])
    low = np.zeros(lat.counts[2], dtype=np.uint8)
    high = np.zeros(lat.counts[2], dtype=np.uint8)
    for x2 in range(4):
        for x3 in range(4):
            (low if x3 < 2 else high)[lat.index(Cell((2, 3), (0, 0, x2, x3)))] = 1
    best = min_weight_coset(BinarySystem(lat.boundary_matrix(2), curve, np.ones(lat.counts[2])))
    for half in (low, high):
        assert np.array_equal(lat.boundary_dense(2, half), curve)
        assert half.sum() == best.objective == 8
    assert np.array_equal(low ^ high, c.logical_z.to_dense(c.num_qubits))
    assert crosses_logical(c, low) != crosses_logical(c, high)
    assert dec.corrupted(low) or dec.corrupted(high)
    assert v.tolist() == d.coords[0].tolist()


def test_zero_noise_never_corrupts(rng):
    dec = SingleShotDecoder(tesseract(3))
    assert memory_trial(dec, 0.0, 0.0, rng, 50) == (50, True)
    idec = IsingDecoder(code(0, 2, (4, 4)))
    assert memory_trial(idec, 0.0, 0.0, rng, 50) == (50, True)


def test_low_noise_memory_at_L3():
    dec = SingleShotDecoder(tesseract(3))
    cycles, censored = memory_trial(dec, 1e-3, 1e-3, np.random.default_rng(2), 1000)
    assert censored and cycles == 1000


def test_cycle_result(rng):
    dec = SingleShotDecoder(tesseract(3))
    res = dec.cycle(np.zeros(dec.lattice.counts[2], dtype=np.uint8), 0.02, 0.02, rng)
    assert res.state.shape == (dec.lattice.counts[2],)
    assert isinstance(res.corrupted, bool)
    assert res.e_cor_weight >= 0 and res.f_cor_weight >= 0


def test_surface_finder_without_rg_sizes(rng):
    # L=4 is not an RG size; the exact solver fills curves instead
    dec = SingleShotDecoder(tesseract(4))
    assert dec.surface.rg is None
    lat = dec.lattice
    err = (rng.random(lat.counts[2]) < 0.01).astype(np.uint8)
    syn = lat.boundary_dense(2, err)
    assert np.array_equal(lat.boundary_dense(2, dec.surface(syn)), syn)


def test_rejects_edge_qubits():
    with pytest.raises(ValueError):
        extract_defects(lattice(1, 1, (3, 3)), np.zeros(lattice(1, 1, (3, 3)).counts[1], dtype=np.uint8))


def ising():
    c = code(0, 2, (4, 4))
    return c, IsingDecoder(c)


def test_ising_empty_and_small_loop():
    c, dec = ising()
    lat = c.lattice
    assert not dec.fill(np.zeros(lat.counts[1], dtype=np.uint8)).any()
    face = np.zeros(lat.counts[2], dtype=np.uint8)
    face[lat.index(Cell((0, 1), (1, 1)))] = 1
    face[lat.index(Cell((0, 1), (2, 1)))] = 1
    assert np.array_equal(dec.fill(lat.boundary_dense(2, face)), face)
    assert not ising2d_decode(c, Chain.empty(1)).any()


def test_ising_tie_goes_to_origin_side():
    c, dec = ising()
    lat = c.lattice
    left = np.zeros(lat.counts[2], dtype=np.uint8)
    for x in range(2):
        for y in range(4):
            left[lat.index(Cell((0, 1), (x, y)))] = 1
    curve = lat.boundary_dense(2, left)
    assert curve.any()
    for _ in range(3):
        assert np.array_equal(dec.fill(curve), left)
    right = left ^ c.logical_z.to_dense(c.num_qubits)
    assert np.array_equal(dec.fill(lat.boundary_dense(2, right)), left)


def test_ising_rejects_other_lattices():
    with pytest.raises(ValueError):
        IsingDecoder(tesseract(2))
