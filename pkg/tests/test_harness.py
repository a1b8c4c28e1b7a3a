import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tesseract_rg.code import crosses_logical
from tesseract_rg.harness import (
    CACHE_ENV, ConfigError, ExperimentConfig, MemoryPointResult, TrialPointResult, estimate_crossing,
    fit_scaling, format_lengths, pair_crossing, parse_lengths, per_round_rate, read_csv,
    run_failure_sweep, run_memory_sweep, wilson_interval, write_csv,
)
from tesseract_rg.rgdecoder import RGDecoder
from tesseract_rg.trials import FAULTY, ISING, PERFECT, SINGLE_SHOT, trial_rng

from conftest import tesseract


@pytest.fixture(autouse=True)
def no_cache(monkeypatch):
    monkeypatch.delenv(CACHE_ENV, raising=False)


def synthetic_curves(p_star=0.05, grid=None):
    grid = np.round(np.arange(0.03, 0.0701, 0.0025), 6) if grid is None else grid
    curves = {}
    for L, b in ((3, 2.0), (5, 3.0), (9, 5.0)):
        curves[(L,) * 4] = (grid, 0.1 * (grid / p_star) ** b)
    return curves


def synthetic_results(p_star=0.05):
    out = []
    for lengths, (ps, ys) in synthetic_curves(p_star).items():
        for p, y in zip(ps, ys):
            out.append(TrialPointResult(PERFECT, 2, 2, lengths, 1, float(p), float(p), 1000, int(round(y * 1000)),
                                        float(y), 0.0, 1.0, 1.0, 0, 0.0))
    return out


def test_zero_noise_never_fails():
    cfg = ExperimentConfig.uniform(PERFECT, 2, 2, [2, 3], [0.0], 50)
    assert [r.failures for r in run_failure_sweep(cfg)] == [0, 0]
    cfg = ExperimentConfig.uniform(FAULTY, 2, 2, [2], [0.0], 20)
    assert run_failure_sweep(cfg)[0].p_logical == 0.0


def test_sweep_is_reproducible_and_thread_independent():
    cfg = ExperimentConfig.uniform(PERFECT, 2, 2, [2], [0.05, 0.1], 450, seed=3)
    a = write_csv(run_failure_sweep(cfg))
    b = write_csv(run_failure_sweep(cfg, threads=2))
    assert a == b
    other = ExperimentConfig.uniform(PERFECT, 2, 2, [2], [0.05, 0.1], 450, seed=4)
    assert write_csv(run_failure_sweep(other)) != a


def test_trial_streams_are_distinct():
    x = trial_rng(0, 0, 0).random(4)
    assert np.array_equal(x, trial_rng(0, 0, 0).random(4))
    assert not np.array_equal(x, trial_rng(0, 0, 1).random(4))
    assert not np.array_equal(x, trial_rng(0, 1, 0).random(4))


def test_results_cache(tmp_path):
    cfg = ExperimentConfig.uniform(PERFECT, 2, 2, [2], [0.08], 100, seed=2)
    first = run_failure_sweep(cfg, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("*.json"))) == 1
    again = run_failure_sweep(cfg, cache_dir=tmp_path)
    assert write_csv(first) == write_csv(again)


def test_minimum_failure_weight_is_two_at_L2():
    # the L=2 decoder corrects every single error and fails on some pairs, so p_logical ~ p^2
    c = tesseract(2)
    lat = c.lattice
    dec = RGDecoder(lat)
    fails = {}
    for w in (1, 2):
        n = 0
        for s in itertools.combinations(range(c.num_qubits), w):
            e = np.zeros(c.num_qubits, dtype=np.uint8)
            e[list(s)] = 1
            n += crosses_logical(c, e ^ dec.decode_dense(lat.boundary_dense(2, e)))
        fails[w] = n
    assert fails[1] == 0 and fails[2] > 0
    ps = np.geomspace(1e-4, 1e-3, 5)
    series = fails[2] * ps**2 * (1 - ps) ** (c.num_qubits - 2)
    assert fit_scaling(ps, series).b == pytest.approx(2.0, abs=0.3)


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0.03 < hi < 0.04
    lo, hi = wilson_interval(100, 100)
    assert hi == 1.0
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


@given(st.integers(1, 10_000), st.data())
def test_wilson_contains_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


def test_per_round_rate():
    assert per_round_rate(0.0, 5) == 0.0
    r = float(per_round_rate(0.1, 3))
    # three independent cycles with rate r flip the logical an odd number of times
    odd = 3 * r * (1 - r) ** 2 + r**3
    assert odd == pytest.approx(0.1, abs=1e-12)
    res = TrialPointResult(FAULTY, 2, 2, (3, 3, 3, 3), 3, 0.01, 0.01, 10, 1, 0.1, 0, 1, 1, 0, 0)
    assert res.p_round == pytest.approx(r, abs=1e-12)


def test_synthetic_crossing():
    cr = estimate_crossing(synthetic_curves(0.05))
    assert cr.found
    assert cr.threshold == pytest.approx(0.05, abs=0.0025)
    assert cr.excluded == [(3, 3, 3, 3)]
    assert "threshold" in cr.report()


def test_no_crossing():
    grid = np.array([0.01, 0.02, 0.03])
    curves = {(3,): (grid, grid * 0.5), (5,): (grid, grid * 0.2)}
    cr = estimate_crossing(curves)
    assert not cr.found and cr.threshold is None
    assert "no crossing" in cr.report()
    with pytest.raises(ValueError):
        estimate_crossing({(3,): (grid, grid)})


def test_pair_crossing_interpolates():
    p = np.array([0.1, 0.2])
    small = (p, np.array([0.2, 0.4]))
    large = (p, np.array([0.1, 0.8]))
    x = pair_crossing(small, large)
    assert 0.1 < x < 0.2
    assert pair_crossing((np.array([0.1]), np.array([0.1])), (np.array([0.2]), np.array([0.1]))) is None


def test_fit_scaling_exact():
    p = np.array([0.001, 0.002, 0.005, 0.01])
    fit = fit_scaling(p, 3.0 * p**2.5)
    assert fit.a == pytest.approx(3.0) and fit.b == pytest.approx(2.5)
    assert fit.b_stderr == pytest.approx(0.0, abs=1e-9) and fit.points == 4
    with pytest.raises(ValueError):
        fit_scaling(p, [0, 0, 1e-3, 1e-2])


def test_csv_roundtrip(tmp_path):
    results = synthetic_results()
    path = tmp_path / "out.csv"
    text = write_csv(results, path)
    assert text.splitlines()[0].startswith("model,d1,d2,lengths,T,p,q,trials,failures,p_logical")
    back = read_csv(path)
    assert [(r.lengths, r.p, r.failures) for r in back] == [(r.lengths, r.p, r.failures) for r in results]


def test_csv_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("model,d1\nx,1\n")
    with pytest.raises(ConfigError, match="bad.csv:1"):
        read_csv(path)
    good = write_csv(synthetic_results()[:2]).splitlines()
    good[2] = good[2].replace(",2,2,", ",two,2,", 1)
    path.write_text("\n".join(good) + "\n")
    with pytest.raises(ConfigError, match="bad.csv:3"):
        read_csv(path)
    with pytest.raises(ValueError):
        write_csv([])


def test_lengths_text():
    assert format_lengths((3, 3, 5)) == "3x3x5"
    assert parse_lengths("3x3x5") == parse_lengths("3,3,5") == (3, 3, 5)
    with pytest.raises(ConfigError):
        parse_lengths("3xa")


@pytest.mark.parametrize("change,match", [
    ({"trials": 0}, "trials"),
    ({"model": "nope"}, "unknown model"),
    ({"p_grid": [0.2, 0.1]}, "increasing"),
    ({"p_grid": [1.5]}, r"\[0, 1\]"),
    ({"sizes": [(4, 4, 4, 4)]}, "2\\^N"),
    ({"sizes": [(3, 3)]}, "lengths"),
    ({"q": 2.0}, "q must"),
    ({"model": FAULTY, "T": 4}, "T=4"),
    ({"model": SINGLE_SHOT, "d2": 1, "sizes": [(3, 3, 3)], "d1": 2}, "faces"),
    ({"model": ISING}, "d1 = 0"),
])
def test_config_validation(change, match):
    base = dict(model=PERFECT, d1=2, d2=2, sizes=[(3, 3, 3, 3)], p_grid=[0.01], trials=10)
    base.update(change)
    with pytest.raises(ConfigError, match=match):
        ExperimentConfig(**base).validate()


def test_config_dict_roundtrip():
    cfg = ExperimentConfig.uniform(FAULTY, 2, 2, [3], [0.01, 0.02], 10, q=0.01, seed=5)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({**cfg.to_dict(), "colour": 1})
    assert cfg.rounds((3, 3, 3, 3)) == 3 and cfg.q_for(0.02) == 0.01
    assert [pt for pt, _, _ in cfg.points()] == [0, 1]


def test_memory_sweep_censoring():
    cfg = ExperimentConfig.uniform(ISING, 0, 2, [3], [0.0, 0.2], 20, max_cycles=30, seed=1)
    zero, high = run_memory_sweep(cfg)
    assert zero.censored == 20 and zero.mean_cycles == 30
    assert high.censored < 20 and high.mean_cycles < 30
    assert high.p_bar == pytest.approx(1 / (1 + high.mean_cycles))
    assert high.unencoded_cycles == pytest.approx(4.0)
    assert zero.unencoded_cycles == math.inf
    text = write_csv([zero, high])
    assert text.splitlines()[0].split(",")[-4:] == ["p_bar", "unencoded_cycles", "seed", "wall_time_s"]


def test_sweeps_reject_wrong_model():
    with pytest.raises(ConfigError):
        run_memory_sweep(ExperimentConfig.uniform(PERFECT, 2, 2, [2], [0.01], 1))
    with pytest.raises(ConfigError):
        run_failure_sweep(ExperimentConfig.uniform(ISING, 0, 2, [3], [0.01], 1))


def test_timing_is_opt_in():
    cfg = ExperimentConfig.uniform(PERFECT, 2, 2, [2], [0.05], 20)
    assert run_failure_sweep(cfg)[0].wall_time_s == 0.0
    cfg.record_timing = True
    assert run_failure_sweep(cfg)[0].wall_time_s >= 0.0


def test_memory_result_row():
    r = MemoryPointResult(SINGLE_SHOT, 2, 2, (3, 3, 3, 3), 0.01, 0.01, 10, 0, 100, 9.0, 1.0, 0, 0.0)
    assert r.p_bar == pytest.approx(0.1)
    assert r.row()[3] == "3x3x3x3"
