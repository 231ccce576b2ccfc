import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svcaft.mcmc import McmcConfig
from svcaft.simulation import (
    ScenarioSpec,
    compute_metrics,
    generate_dataset,
    rand_index,
    rand_index_bruteforce,
    replicate_msd,
    run_study,
    simulate_replicate,
    true_betas,
    write_replicates_csv,
    write_study_csv,
)
from svcaft.spatial import SpatialLayout, louisiana_regions

from conftest import path_layout


def grid_layout():
    # per-axis mean 0 and sd 1, so units 1 and 2 sit at normalised (0,0) and (1,1)
    a = np.sqrt(1.5)
    v = np.array([-1.0, 0.0, 1.0, a, -a])
    return SpatialLayout(5, np.column_stack([v, v]) * 3.0 + 7.0, path_layout(5).adjacency)


def test_smooth_generator():
    lay = grid_layout()
    norm = lay.normalized_centroids()
    assert np.allclose(norm[1], [0, 0]) and np.allclose(norm[2], [1, 1])
    B = true_betas(ScenarioSpec("smooth"), lay)
    assert np.allclose(B[1], [0.6, 0.35, -0.5])
    assert np.allclose(B[2], [0.8, 0.55, -0.3])


def test_smooth_uses_no_rng():
    lay = grid_layout()
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    true_betas(ScenarioSpec("smooth"), lay, rng)
    assert rng.bit_generator.state == state


def test_null_generator(louisiana):
    B = true_betas(ScenarioSpec("null"), louisiana)
    assert B.shape == (64, 3) and np.all(B == [0.6, 0.35, -0.5])


def test_random_generator_variance(louisiana):
    rng = np.random.default_rng(1)
    D = np.vstack([true_betas(ScenarioSpec("random"), louisiana, rng) for _ in range(50)]) - [0.6, 0.35, -0.5]
    assert np.allclose(D.var(axis=0), 0.1, rtol=0.1)
    with pytest.raises(ValueError):
        true_betas(ScenarioSpec("random"), louisiana)


def test_regional_generator(louisiana):
    reg = louisiana_regions(louisiana)
    B = true_betas(ScenarioSpec("regional", region_map=reg), louisiana)
    for r in range(3):
        rows = B[reg == r]
        assert np.all(rows == rows[0])
    assert np.allclose(B[reg == 1][0] - B[reg == 0][0], 0.5)
    assert np.allclose(B[reg == 2][0] - B[reg == 0][0], -0.5)
    with pytest.raises(ValueError):
        true_betas(ScenarioSpec("regional"), louisiana)


def test_no_censoring_limit(louisiana):
    spec = ScenarioSpec("null", n_per_unit=5, censor_rate=1e-9)
    d = generate_dataset(spec, louisiana, true_betas(spec, louisiana), np.random.default_rng(2))
    assert d.event.all()
    assert d.n_records == 320 and d.p == 3 and np.all(d.unit_counts == 5)


def test_dataset_deterministic(louisiana):
    spec = ScenarioSpec("null", n_per_unit=10, seed=4)
    _, a = simulate_replicate(spec, louisiana, 3)
    _, b = simulate_replicate(spec, louisiana, 3)
    assert a.same_data(b)
    _, c = simulate_replicate(spec, louisiana, 4)
    assert not a.same_data(c)


def test_null_data_ols_recovers_beta(louisiana):
    spec = ScenarioSpec("null", censor_rate=1e-9)
    d = generate_dataset(spec, louisiana, true_betas(spec, louisiana), np.random.default_rng(5))
    coef = np.linalg.lstsq(d.X, np.log(d.time), rcond=None)[0]
    assert np.allclose(coef, [0.6, 0.35, -0.5], atol=0.05)


def test_metrics_hand_values():
    truth = np.array([[0.6]])
    fits = [{"point": [[0.5]], "hpd_lo": [[0.4]], "hpd_hi": [[0.65]]},
            {"point": [[0.7]], "hpd_lo": [[0.65]], "hpd_hi": [[0.9]]}]
    m = compute_metrics(truth, fits)
    assert m.mab[0] == pytest.approx(0.1)
    assert m.mmse[0] == pytest.approx(0.01)
    assert m.msd[0] == pytest.approx(0.1414, abs=1e-4)
    assert m.mcr[0] == pytest.approx(0.5)


def test_metrics_perfect_and_translation():
    rng = np.random.default_rng(6)
    truth = rng.normal(size=(4, 2))
    perfect = [{"point": truth, "hpd_lo": truth - 1, "hpd_hi": truth + 1}] * 3
    m = compute_metrics(truth, perfect)
    assert np.all(m.mab == 0) and np.all(m.mmse == 0) and np.all(m.mcr == 1)
    fits = [{"point": truth + rng.normal(size=truth.shape), "hpd_lo": truth, "hpd_hi": truth} for _ in range(5)]
    shifted = [dict(f, point=f["point"] + 3.0) for f in fits]
    assert np.allclose(compute_metrics(truth, shifted).msd, compute_metrics(truth, fits).msd)
    assert np.all(compute_metrics(truth, shifted).mab > compute_metrics(truth, fits).mab)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), widen=st.floats(0, 2))
def test_mcr_monotone_under_widening(seed, widen):
    rng = np.random.default_rng(seed)
    truth = rng.normal(size=(5, 2))
    fits = []
    for _ in range(3):
        c = truth + rng.normal(size=truth.shape)
        w = rng.uniform(0, 1, truth.shape)
        fits.append({"point": c, "hpd_lo": c - w, "hpd_hi": c + w})
    wide = [dict(f, hpd_lo=f["hpd_lo"] - widen, hpd_hi=f["hpd_hi"] + widen) for f in fits]
    assert np.all(compute_metrics(truth, wide).mcr >= compute_metrics(truth, fits).mcr)
    m = compute_metrics(truth, fits)
    assert np.all(m.mab >= 0) and np.all(m.msd >= 0) and np.all((0 <= m.mcr) & (m.mcr <= 1))


def test_msd_needs_two_replicates():
    one = [{"point": [[1.0]], "hpd_lo": [[0.0]], "hpd_hi": [[2.0]]}]
    assert np.isnan(compute_metrics(np.array([[1.0]]), one).msd[0])
    with pytest.raises(ValueError):
        replicate_msd(one)


def test_rand_index_examples():
    assert rand_index([0, 1, 2, 2], [5, 7, 9, 9]) == 1.0
    assert rand_index([1, 1], [1, 2]) == 0.0
    assert rand_index([1, 1, 2], [1, 2, 2]) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        rand_index([1], [1])


def test_rand_index_property_1000_partitions():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(2, 15))
        k = int(rng.integers(1, 5))
        a, b = rng.integers(0, k, n), rng.integers(0, k + 1, n)
        ri = rand_index(a, b)
        assert ri == rand_index(b, a)
        assert ri == pytest.approx(rand_index_bruteforce(a, b))
        relabel = rng.permutation(10)
        assert ri == rand_index(relabel[a], b) == rand_index(a, relabel[b])
        assert 0.0 <= ri <= 1.0


# -- study harness ------------------------------------------------------------------

TINY = McmcConfig(30, 10, 1, seed=1)


def test_study_table_shape(louisiana, tmp_path):
    spec = ScenarioSpec("null", n_per_unit=3, seed=2)
    st_ = run_study(spec, louisiana, ["gp", "car", "dp"], 2, TINY)
    rows = st_.table_rows()
    assert len(rows) == 9
    assert list(rows[0]) == ["prior", "coef", "mab", "mmse", "msd", "mcr", "point_estimate"]
    write_study_csv(st_, tmp_path / "s.csv")
    write_replicates_csv(st_, tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as f:
        assert len(list(csv.DictReader(f))) == 3 * 2 * 3


def test_study_single_replicate_flags_msd(louisiana):
    st_ = run_study(ScenarioSpec("null", n_per_unit=2), louisiana, ["car"], 1, TINY)
    assert all(np.isnan(r["msd"]) for r in st_.table_rows())


def test_study_regional_has_rand_index(louisiana):
    spec = ScenarioSpec("regional", n_per_unit=3, region_map=louisiana_regions(louisiana))
    st_ = run_study(spec, louisiana, ["dp", "car"], 1, TINY)
    rows = st_.table_rows()
    assert "rand_index" in rows[0]
    dp_rows = [r for r in rows if r["prior"] == "dp"]
    assert 0 <= dp_rows[0]["rand_index"] <= 1
    assert np.isnan([r for r in rows if r["prior"] == "car"][0]["rand_index"])


def test_study_reproducible(louisiana):
    spec = ScenarioSpec("random", n_per_unit=2, seed=8)
    a = run_study(spec, louisiana, ["car"], 2, TINY).table_rows()
    b = run_study(spec, louisiana, ["car"], 2, TINY).table_rows()
    assert a == b


def test_study_failure_reports_seed(louisiana, monkeypatch):
    import svcaft.simulation as sim

    def bad(*a, **k):
        raise FloatingPointError("boom")
    monkeypatch.setattr(sim, "run_chain", bad)
    with pytest.raises(RuntimeError, match="replicate 0 .*seed"):
        run_study(ScenarioSpec("null", n_per_unit=2), louisiana, ["car"], 1, TINY)
