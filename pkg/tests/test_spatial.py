import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svcaft.model import DomainError
from svcaft.spatial import (
    IngestionError,
    SpatialLayout,
    car_logdet,
    car_precision,
    default_phi,
    gp_correlation,
    gp_covariance,
    load_layout,
    load_region_map,
    louisiana_regions,
    rho_bounds,
)

from conftest import path_layout, random_layout


def two_node(d=1.0):
    return SpatialLayout(2, [[0.0, 0.0], [d, 0.0]], [[0, 1], [1, 0]])


def test_rho_bounds_small_graphs():
    b = rho_bounds(two_node())
    assert (b.low, b.high) == pytest.approx((-1.0, 1.0))
    b = rho_bounds(path_layout(3))
    # eigenvalues of the 3-path are -sqrt2, 0, sqrt2
    assert (b.low, b.high) == pytest.approx((-0.70711, 0.70711), abs=1e-5)


def test_rho_bounds_louisiana(louisiana):
    b = rho_bounds(louisiana)
    assert louisiana.n_units == 64
    assert round(b.low, 3) == -0.358 and round(b.high, 3) == 0.175


def test_rho_bounds_empty_graph():
    with pytest.raises(DomainError):
        rho_bounds(SpatialLayout(3, np.zeros((3, 2)), np.zeros((3, 3))))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12))
def test_rho_bounds_reciprocal_eigs(seed, n):
    lay = random_layout(np.random.default_rng(seed), n)
    lam = np.linalg.eigvalsh(lay.adjacency)
    b = rho_bounds(lay)
    assert b.low < 0 < b.high
    assert b.low * lam[0] == pytest.approx(1.0, abs=1e-10)
    assert b.high * lam[-1] == pytest.approx(1.0, abs=1e-10)


def test_car_precision_examples():
    Q = car_precision(two_node(), 0.5, 1.0)
    assert np.allclose(Q, [[1, -0.5], [-0.5, 1]])
    assert np.allclose(car_precision(path_layout(4), 0.0, 2.5), np.eye(4) / 2.5)
    Q = car_precision(path_layout(3), 0.7, 2.0)
    np.linalg.cholesky(Q)
    assert np.all(np.linalg.eigvalsh(Q) > 0)


def test_car_precision_names_bound():
    lay = path_layout(3)
    with pytest.raises(DomainError, match="upper"):
        car_precision(lay, 0.8, 1.0)
    with pytest.raises(DomainError, match="lower"):
        car_precision(lay, -0.8, 1.0)
    with pytest.raises(DomainError):
        car_precision(lay, 0.1, 0.0)


def test_car_cholesky_property_20_graphs():
    """Cholesky succeeds strictly inside the bounds and fails just outside."""
    rng = np.random.default_rng(2024)
    for _ in range(20):
        lay = random_layout(rng, int(rng.integers(3, 15)))
        b = rho_bounds(lay)
        for rho in rng.uniform(b.low, b.high, 10) * (1 - 1e-6):
            np.linalg.cholesky(car_precision(lay, rho, float(rng.uniform(0.1, 3))))
        I, W = np.eye(lay.n_units), lay.adjacency
        for rho in (b.low - 1e-9, b.high + 1e-9):
            with pytest.raises(DomainError):
                car_precision(lay, rho, 1.0)
            # the raw matrix itself has lost positive definiteness
            assert np.linalg.eigvalsh(I - rho * W).min() <= 1e-12


@pytest.mark.parametrize("rho", [-0.3, 0.0, 0.1, 0.17])
def test_car_logdet_matches_dense(louisiana, rho):
    dense = np.linalg.slogdet(np.eye(64) - rho * louisiana.adjacency)[1]
    assert car_logdet(louisiana.eigenvalues, rho) == pytest.approx(dense, abs=1e-8)


def test_gp_covariance_examples():
    lay1 = SpatialLayout(1, [[0.3, 0.2]], [[0]])
    T = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert np.allclose(gp_covariance(lay1, 1.0, T), T)
    d, phi = 2.0, 0.7
    K = gp_covariance(two_node(d), phi, [[1.0]], normalize=False)
    e = math.exp(-phi * d)
    assert np.allclose(K, [[1, e], [e, 1]])
    K = gp_covariance(two_node(1.0), 1e6, np.eye(2), normalize=False)
    assert np.allclose(K, np.eye(4))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5), p=st.integers(1, 3),
       phi=st.floats(0.05, 5.0))
def test_gp_covariance_is_bruteforce_kronecker(seed, n, p, phi):
    rng = np.random.default_rng(seed)
    lay = SpatialLayout(n, rng.normal(size=(n, 2)) * 3, np.zeros((n, n)))
    A = rng.normal(size=(p, p))
    T = A @ A.T + p * np.eye(p)
    H = gp_correlation(lay, phi, normalize=False)
    K = gp_covariance(lay, phi, T, normalize=False)
    ref = np.empty((n * p, n * p))
    for i in range(n):
        for k in range(n):
            for a in range(p):
                for b in range(p):
                    ref[i * p + a, k * p + b] = H[i, k] * T[a, b]
    assert np.array_equal(K, ref)
    assert np.array_equal(K, K.T)
    off = H[~np.eye(n, dtype=bool)]
    assert np.all(np.diag(H) == 1.0) and np.all((off > 0) & (off <= 1))


def test_gp_duplicate_centroids_jitter(caplog):
    lay = SpatialLayout(2, [[1.0, 1.0], [1.0, 1.0]], np.zeros((2, 2)))
    with caplog.at_level(logging.WARNING):
        H = gp_correlation(lay, 1.0)
    assert "jitter" in caplog.text
    np.linalg.cholesky(H)


def test_gp_covariance_rejects_bad_T():
    with pytest.raises(DomainError):
        gp_covariance(two_node(), 1.0, [[1.0, 2.0], [2.0, 1.0]])


def test_default_phi_effective_range(louisiana):
    d = louisiana.distances()
    phi = default_phi(louisiana)
    assert math.exp(-phi * d.max()) == pytest.approx(math.exp(-3))


# -- ingestion ----------------------------------------------------------------

CENT = "unit,lon,lat\nA,0,0\nB,1,0\nC,0,1\n"


def test_edge_list_symmetrised():
    lay = load_layout("unit,lon,lat\nA,0,0\nB,1,0\n", "unit_a,unit_b\nA,B\n")
    assert lay.adjacency.tolist() == [[0, 1], [1, 0]]
    assert lay.names == ["A", "B"]


def test_dense_matrix():
    lay = load_layout(CENT, ",A,B,C\nA,0,1,0\nB,1,0,1\nC,0,1,0\n")
    assert np.array_equal(lay.adjacency, path_layout(3).adjacency)


@pytest.mark.parametrize("adj,msg", [
    ("unit_a,unit_b\nA,B\nC,C\n", ":3: self-loop"),
    ("unit_a,unit_b\nA,B\nA,Z\n", ":3: unknown unit 'Z'"),
    (",A,B,C\nA,0,1,0\nB,0,0,0\nC,0,0,0\n", "asymmetric"),
    (",A,B,C\nA,1,0,0\nB,0,0,0\nC,0,0,0\n", ":2: self-loop"),
    (",A,B,C\nA,0,1\nB,1,0,0\nC,0,0,0\n", ":2: ragged"),
])
def test_adjacency_errors(adj, msg):
    with pytest.raises(IngestionError, match=msg):
        load_layout(CENT, adj)


def test_centroid_errors():
    with pytest.raises(IngestionError, match=":1:"):
        load_layout("name,x,y\nA,0,0\n", "unit_a,unit_b\n")
    with pytest.raises(IngestionError, match=":3: duplicate"):
        load_layout("unit,lon,lat\nA,0,0\nA,1,1\n", "unit_a,unit_b\n")


def test_files_on_disk(tmp_path):
    c = tmp_path / "c.csv"
    a = tmp_path / "a.csv"
    c.write_text(CENT)
    a.write_text("unit_a,unit_b\nA,B\nB,C\n")
    lay = load_layout(c, a)
    assert lay.n_units == 3
    r = tmp_path / "r.csv"
    r.write_text("unit,region\nA,0\nB,1\nC,1\n")
    assert load_region_map(r, lay).tolist() == [0, 1, 1]
    r.write_text("unit,region\nA,0\nB,1\n")
    with pytest.raises(IngestionError, match="cover"):
        load_region_map(r, lay)


def test_louisiana_regions(louisiana):
    reg = louisiana_regions(louisiana)
    assert reg.shape == (64,)
    assert sorted(np.unique(reg).tolist()) == [0, 1, 2]
