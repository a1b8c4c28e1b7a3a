import numpy as np
import pytest

from tesseract_rg.complex import Chain
from tesseract_rg.noise import ErrorHistory, MeasurementRecord, sample_phenomenological
from tesseract_rg.spacetime import (
    MEASUREMENT, QUBIT, build_spacetime_problem, history_chain, isomorphic_under, project_correction,
    reference_lattice, spacetime_lattice,
)

from conftest import code, tesseract


def record_of(c, hist):
    lat = c.lattice
    cum = np.bitwise_xor.accumulate(hist.qubit_errors, axis=0)
    sigma = np.stack([lat.boundary_dense(2, cum[t]) for t in range(hist.rounds)])
    return MeasurementRecord(sigma ^ hist.meas_errors, True, 2, 2, tuple(lat.lengths))


def empty_history(c, T):
    lat = c.lattice
    return ErrorHistory(np.zeros((T, lat.counts[2]), np.uint8), np.zeros((T, lat.counts[1]), np.uint8))


def face_at(problem, kind, space, t):
    f = problem.faces
    return int(np.flatnonzero((f.kind == kind) & (f.space == space) & (f.time == t))[0])


def test_empty_record():
    c = tesseract(3)
    pr = build_spacetime_problem(c, record_of(c, empty_history(c, 3)))
    assert not pr.syndrome.any()
    assert not pr.syndrome_chain()


def test_single_qubit_error():
    c = tesseract(3)
    hist = empty_history(c, 3)
    hist.qubit_errors[1, 20] = 1
    pr = build_spacetime_problem(c, record_of(c, hist))
    face = np.zeros(pr.lattice.counts[2], np.uint8)
    face[face_at(pr, QUBIT, 20, 1)] = 1
    assert np.array_equal(pr.syndrome, pr.lattice.boundary_dense(2, face))
    assert pr.syndrome.sum() == c.lattice.boundary_dense(2, np.eye(c.num_qubits, dtype=np.uint8)[20]).sum()


def test_single_measurement_error():
    c = tesseract(3)
    lat = c.lattice
    hist = empty_history(c, 3)
    bulk = int(np.flatnonzero(np.asarray(lat.boundary_matrix(1).sum(axis=0)).ravel() == 2)[0])
    hist.meas_errors[0, bulk] = 1
    pr = build_spacetime_problem(c, record_of(c, hist))
    assert pr.syndrome.sum() == 4
    ch = pr.checks
    on = np.flatnonzero(pr.syndrome)
    space_like = on[ch.kind[on] == 0]
    assert sorted(ch.time[space_like].tolist()) == [0, 1]
    assert set(ch.space[space_like].tolist()) == {bulk}
    assert np.sum(ch.kind[on] == MEASUREMENT) == 2


def test_sampled_histories_close(rng):
    c = tesseract(3)
    for _ in range(20):
        hist, rec = sample_phenomenological(c, 0.05, 0.05, 3, rng)
        pr = build_spacetime_problem(c, rec)
        assert not pr.lattice.boundary_dense(1, pr.syndrome).any()
        assert np.array_equal(pr.lattice.boundary_dense(2, history_chain(pr, hist)), pr.syndrome)
        assert np.array_equal(project_correction(pr, history_chain(pr, hist)), hist.total_qubit_error())


def test_projection_cases():
    c = tesseract(3)
    pr = build_spacetime_problem(c, record_of(c, empty_history(c, 3)))
    n = pr.lattice.counts[2]
    one = np.zeros(n, np.uint8)
    one[face_at(pr, QUBIT, 9, 0)] = 1
    assert np.flatnonzero(project_correction(pr, one, check=False)).tolist() == [9]
    one[face_at(pr, QUBIT, 9, 2)] = 1
    assert not project_correction(pr, one, check=False).any()
    rim = np.zeros(n, np.uint8)
    rim[face_at(pr, MEASUREMENT, 4, 0)] = 1
    assert not project_correction(pr, rim, check=False).any()
    with pytest.raises(ValueError):
        project_correction(pr, rim)
    assert not project_correction(pr, Chain.empty(2)).any()


def test_record_size_mismatch():
    c = tesseract(3)
    with pytest.raises(ValueError, match="checks per round"):
        build_spacetime_problem(c, MeasurementRecord(np.zeros((2, 5), np.uint8)))
    with pytest.raises(ValueError):
        spacetime_lattice(c, 0)


@pytest.mark.parametrize("d1,lengths,T", [(2, (3, 3, 3, 3), 3), (2, (2, 2, 2, 2), 4), (1, (3, 3, 3), 2), (1, (3, 3), 3)])
def test_isomorphic_to_higher_code(d1, lengths, T):
    c = code(d1, len(lengths) - d1, lengths)
    st = spacetime_lattice(c, T)
    ref, perm = reference_lattice(c, T)
    assert ref.d1 == d1 + 1
    assert isomorphic_under(st, ref, perm)
    assert not isomorphic_under(st, ref, tuple(range(st.D)))


def test_rough_time_top():
    c = tesseract(2)
    st = spacetime_lattice(c, 3, final_round_perfect=False)
    assert st.extents[-1] == 3 and st.rough_hi[-1]
