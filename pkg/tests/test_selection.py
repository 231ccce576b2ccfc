import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from svcaft.selection import (
    StreamingCPO,
    compare,
    cpo_from_loglik,
    lpml,
    log_cpo_from_loglik,
    write_ranking_csv,
)


def naive_cpo(dens_column):
    return 1.0 / np.mean(1.0 / np.asarray(dens_column))


def test_cpo_examples():
    assert cpo_from_loglik(np.full(7, math.log(0.3))) == pytest.approx(0.3)
    assert cpo_from_loglik(np.log([1.0, 1 / 3])) == pytest.approx(0.5)
    assert cpo_from_loglik([0.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cpo_from_loglik([])
    with pytest.raises(ValueError):
        cpo_from_loglik([0.0, -np.inf])


def test_lpml_examples():
    assert lpml(np.zeros((4, 3))).lpml == pytest.approx(0.0)
    two = np.log([[1.0, 1.0], [1 / 3, 1 / 3]])
    assert lpml(two).lpml == pytest.approx(-1.38629, abs=1e-5)


finite = st.floats(-30, 5)


@settings(max_examples=80)
@given(arrays(float, st.tuples(st.integers(1, 40), st.integers(1, 6)), elements=finite))
def test_log_space_matches_naive(L):
    rep = lpml(L)
    naive = np.array([naive_cpo(np.exp(L[:, i])) for i in range(L.shape[1])])
    assert np.allclose(rep.cpo, naive, rtol=1e-10)
    assert rep.lpml == pytest.approx(np.log(naive).sum(), rel=1e-10, abs=1e-10)
    # harmonic mean never exceeds the largest density
    assert np.all(rep.cpo <= np.exp(L).max(axis=0) * (1 + 1e-12))


@settings(max_examples=40)
@given(arrays(float, st.tuples(st.integers(2, 30), st.integers(1, 5)), elements=finite), st.randoms())
def test_lpml_row_permutation_invariant(L, rnd):
    perm = list(range(L.shape[0]))
    rnd.shuffle(perm)
    assert lpml(L[perm]).lpml == pytest.approx(lpml(L).lpml, rel=1e-12, abs=1e-12)


def test_unstable_flag():
    # record 0: one draw with a tiny density dominates the inverse-CPO sum
    L = np.log(np.array([[1e-9, 0.5], [0.5, 0.5], [0.5, 0.5]]))
    rep = lpml(L)
    assert rep.n_unstable == 1


def test_extreme_values_no_overflow():
    L = np.array([[-800.0], [-1.0]])
    assert np.isfinite(log_cpo_from_loglik(L[:, 0]))
    assert log_cpo_from_loglik(L[:, 0]) == pytest.approx(-800 + math.log(2), abs=1e-9)


def test_streaming_matches_batch_and_merges():
    rng = np.random.default_rng(0)
    L = rng.normal(-2, 1, size=(50, 8))
    a, b = StreamingCPO(8), StreamingCPO(8)
    for row in L[:20]:
        a.update(row)
    for row in L[20:]:
        b.update(row)
    ref = lpml(L)
    m = a.merge(b).report()
    assert m.lpml == pytest.approx(ref.lpml, rel=1e-12)
    assert m.n_unstable == ref.n_unstable
    with pytest.raises(ValueError):
        StreamingCPO(2).report()


def test_compare_ordering(tmp_path):
    A = lpml(np.full((3, 2), -5.0))
    B = lpml(np.full((3, 2), -2.5))
    r = compare([("A", A), ("B", B)])
    assert [lbl for _, lbl, _ in r] == ["B", "A"]
    r = compare([("zeta", A), ("alpha", A), ("mid", B)])
    assert [(k, lbl) for k, lbl, _ in r] == [(1, "mid"), (2, "alpha"), (3, "zeta")]
    write_ranking_csv(r, tmp_path / "rank.csv")
    lines = (tmp_path / "rank.csv").read_text().splitlines()
    assert lines[0] == "rank,label,lpml,n_unstable"
    assert lines[1].startswith("1,mid,")


def test_compare_errors():
    A = lpml(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        compare([("A", A)])
    with pytest.raises(ValueError):
        compare([("A", A), ("B", lpml(np.zeros((3, 4))))])


@settings(max_examples=30)
@given(st.lists(st.tuples(st.sampled_from("abcdefg"), st.floats(-100, 0)), min_size=2, max_size=7,
                unique_by=lambda t: t[0]))
def test_compare_total_order(items):
    reps = [(lbl, lpml(np.full((2, 1), v / 1.0))) for lbl, v in items]
    ranked = compare(reps)
    for (_, l1, r1), (_, l2, r2) in zip(ranked, ranked[1:]):
        assert r1.lpml > r2.lpml or (r1.lpml == r2.lpml and l1 < l2)
