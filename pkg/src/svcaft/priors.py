"""Prior specifications and Gibbs update kernels.

All four model variants share the same data-augmentation scheme: censored
log-times are imputed from their truncated-normal full conditional, after
which every coefficient block has a Gaussian full conditional.

Kernels operate on a :class:`Workspace` holding the data, layout-derived
matrices and cached sufficient statistics, and mutate a :class:`ChainState`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import cho_solve, solve_triangular
from numba import njit
from scipy.special import log_ndtr, logsumexp

from .model import (
    LOG_SQRT_2PI,
    AugmentedState,
    ContractError,
    DomainError,
    SurvivalDataset,
    UnitParameters,
    sample_upper_truncated_normal,
)
from .spatial import (
    RhoBounds,
    SpatialLayout,
    car_logdet,
    default_phi,
    exp_correlation,
    gp_correlation,
    rho_bounds,
)

KINDS = ("pooled", "gp", "car", "dp")
LABEL_UPDATES = ("observed", "collapsed", "conditional")
# exp(-800) underflows to 0.0 in float64
PRUNE_NATS = 800.0


class SamplerError(RuntimeError):
    """Numerical failure inside an update kernel."""


@dataclass
class GPSettings:
    phi: float | None = None  # None -> 3 / max distance
    sample_phi: bool = False
    phi_range: tuple[float, float] | None = None
    phi_grid: int = 50
    mu_beta_prior_sd: float = 100.0
    t_diag_ig: tuple[float, float] = (1.0, 1.0)
    normalize_coords: bool = True


@dataclass
class CARSettings:
    tau2_ig: tuple[float, float] = (1.0, 1.0)


@dataclass
class DPSettings:
    max_clusters: int = 20
    alpha: float = 1.0
    base_mu: np.ndarray | None = None  # zeros(p)
    base_sigma_diag: np.ndarray | None = None  # 100 * ones(p)
    label_update: str = "observed"


@dataclass
class PriorSpec:
    kind: str = "car"
    sigma_ig: tuple[float, float] = (1.0, 1.0)
    gp: GPSettings = field(default_factory=GPSettings)
    car: CARSettings = field(default_factory=CARSettings)
    dp: DPSettings = field(default_factory=DPSettings)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in KINDS:
            raise ValueError(f"unknown prior kind '{self.kind}', expected one of {KINDS}")
        for name, (a, b) in (("sigma_ig", self.sigma_ig), ("car.tau2_ig", self.car.tau2_ig),
                             ("gp.t_diag_ig", self.gp.t_diag_ig)):
            if not (a > 0 and b > 0):
                raise ValueError(f"{name} shape and scale must be positive")
        if self.dp.max_clusters < 1:
            raise ValueError("dp.max_clusters must be >= 1")
        if not self.dp.alpha > 0:
            raise ValueError("dp.alpha must be positive")
        if self.dp.label_update not in LABEL_UPDATES:
            raise ValueError(f"dp.label_update must be one of {LABEL_UPDATES}")
        if self.gp.sample_phi:
            lo, hi = self.gp.phi_range or (None, None)
            if lo is None or not (0 < lo < hi):
                raise ValueError("gp.phi_range must satisfy 0 < lo < hi when sampling phi")
        if self.gp.phi is not None and not self.gp.phi > 0:
            raise ValueError("gp.phi must be positive")


@dataclass
class ChainState:
    params: UnitParameters
    augmented: AugmentedState
    rho: float = 0.0
    tau2: np.ndarray | None = None
    mu_beta: np.ndarray | None = None
    t_diag: np.ndarray | None = None
    phi: float | None = None
    z: np.ndarray | None = None
    V: np.ndarray | None = None
    pi: np.ndarray | None = None
    cluster_beta: np.ndarray | None = None


def inv_gamma(shape, scale, rng: np.random.Generator):
    """Draw from IG(shape, scale) as scale / Gamma(shape, 1)."""
    return np.asarray(scale) / rng.gamma(shape)


def mvn_from_precision(Q: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(Q^{-1} b, Q^{-1})."""
    try:
        L = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise SamplerError("conditional precision is not positive definite") from None
    mean = cho_solve((L, True), b)
    return mean + solve_triangular(L.T, rng.standard_normal(b.shape[0]), lower=False)


class Workspace:
    """Data, layout-derived matrices and sufficient statistics for one chain.

    For the pooled kind every record is mapped onto a single working unit,
    so the CAR kernels run unchanged on a 1-unit graph with rho fixed at 0.
    """

    def __init__(self, data: SurvivalDataset, layout: SpatialLayout | None, spec: PriorSpec,
                 rho_grid: int = 50):
        self.data = data
        self.layout = layout
        self.spec = spec
        self.kind = spec.kind
        self.p = data.p
        self.pooled = spec.kind == "pooled"
        if layout is not None and layout.n_units != data.n_units:
            raise ContractError("layout and dataset disagree on the number of units")
        if self.pooled:
            self.n = 1
            self.unit = np.zeros(data.n_records, dtype=np.int64)
            self.W = np.zeros((1, 1))
        else:
            self.n = data.n_units
            self.unit = data.unit
            if layout is None:
                if spec.kind in ("gp", "car"):
                    raise ContractError(f"{spec.kind} prior needs a spatial layout")
                self.W = np.zeros((self.n, self.n))
            else:
                self.W = layout.adjacency
        N = data.n_records
        self.X = data.X
        self.log_time = np.log(data.time)
        self.cens = ~data.event
        self.cens_idx = np.flatnonzero(self.cens)
        self.log_cens = self.log_time[self.cens]
        self.M = sparse.csr_matrix(
            (np.ones(N), (self.unit, np.arange(N))), shape=(self.n, N)
        )
        self.counts = np.bincount(self.unit, minlength=self.n).astype(float)
        self.order = np.argsort(self.unit, kind="stable")
        self.starts = np.concatenate(([0], np.cumsum(self.counts).astype(np.int64)))
        self.gram = np.einsum("ij,ik->ijk", self.X, self.X).reshape(N, self.p * self.p)
        self.gram = np.asarray(self.M @ self.gram).reshape(self.n, self.p, self.p)

        self.bounds: RhoBounds | None = None
        self.rho_grid_values = None
        if self.kind == "car":
            self.bounds = rho_bounds(layout)
            self.eig = layout.eigenvalues
            self.rho_grid_values = rho_grid_points(self.bounds, rho_grid)
            self._rho_logdet = car_logdet(self.eig, self.rho_grid_values)

        if self.kind == "gp":
            g = spec.gp
            self.dist = layout.distances(g.normalize_coords)
            self.phi0 = g.phi if g.phi is not None else default_phi(layout, g.normalize_coords)
            self._set_gp_phi(self.phi0)
            if g.sample_phi:
                lo, hi = g.phi_range
                self.phi_grid_values = np.linspace(lo, hi, g.phi_grid + 2)[1:-1] \
                    if g.phi_grid > 1 else np.array([(lo + hi) / 2])
                Hs = [self._corr(ph) for ph in self.phi_grid_values]
                self._phi_Hinv = np.stack([np.linalg.inv(H) for H in Hs])
                self._phi_logdet = np.array([np.linalg.slogdet(H)[1] for H in Hs])

        if self.kind == "dp":
            d = spec.dp
            self.C = d.max_clusters
            self.base_mu = np.zeros(self.p) if d.base_mu is None else np.asarray(d.base_mu, float)
            bs = np.full(self.p, 100.0) if d.base_sigma_diag is None else np.asarray(d.base_sigma_diag, float)
            if self.base_mu.shape != (self.p,) or bs.shape != (self.p,) or np.any(bs <= 0):
                raise ValueError("dp base measure must have length p with positive variances")
            self.base_sd = np.sqrt(bs)
            self.base_prec = np.diag(1.0 / bs)
            self.base_h = self.base_mu / bs

    def _corr(self, phi):
        if self.layout.n_units == 1:
            return np.ones((1, 1))
        H = exp_correlation(self.dist, phi)
        if np.linalg.cond(H) > 1e12:
            H = gp_correlation(self.layout, phi, self.spec.gp.normalize_coords)
        return H

    def _set_gp_phi(self, phi):
        self.phi = phi
        H = self._corr(phi)
        self.Hinv = np.linalg.inv(H)
        self.Hinv = 0.5 * (self.Hinv + self.Hinv.T)
        self.Hinv_1 = self.Hinv.sum(axis=1)

    # -- sufficient statistics of the completed log-times --------------------
    def completed_logtime(self, state: ChainState) -> np.ndarray:
        y = self.log_time.copy()
        y[self.cens_idx] = state.augmented.latent_logtime
        return y

    def unit_xty(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.M @ (self.X * y[:, None]))

    def unit_yy(self, y: np.ndarray) -> np.ndarray:
        return self.M @ (y * y)

    def linear_predictor(self, beta: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ij->i", self.X, beta[self.unit])


def rho_grid_points(bounds: RhoBounds, size: int) -> np.ndarray:
    if size < 1:
        raise ValueError("rho grid needs at least one point")
    if size == 1:
        return np.array([0.5 * (bounds.low + bounds.high)])
    return np.linspace(bounds.low, bounds.high, size + 2)[1:-1]


# -- data augmentation --------------------------------------------------------

def impute_latent(state: ChainState, ws: Workspace, rng: np.random.Generator) -> None:
    if ws.cens_idx.size == 0:
        return
    idx = ws.cens_idx
    u = ws.unit[idx]
    mu = np.einsum("ij,ij->i", ws.X[idx], state.params.beta[u])
    state.augmented.latent_logtime = sample_upper_truncated_normal(
        mu, state.params.sigma[u], ws.log_cens, rng
    )


# -- Dirichlet process pieces -------------------------------------------------

def stick_breaking_weights(V) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim != 1 or V.size == 0:
        raise DomainError("V must be a non-empty vector")
    if np.any((V < 0) | (V > 1)) or np.any(np.isnan(V)):
        raise DomainError("stick variables must lie in [0, 1]")
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - V[:-1])))
    pi = V * remaining
    pi[-1] = max(0.0, 1.0 - pi[:-1].sum())
    return pi


def sample_stick_variables(z, alpha: float, C: int, rng: np.random.Generator) -> np.ndarray:
    z = np.asarray(z, dtype=np.int64)
    if z.size and (z.min() < 0 or z.max() >= C):
        raise ContractError("cluster labels out of range")
    m = np.bincount(z, minlength=C).astype(float)
    m_after = m[::-1].cumsum()[::-1] - m
    V = rng.beta(1.0 + m[:-1], alpha + m_after[:-1]) if C > 1 else np.empty(0)
    # Beta draws can round to exactly 0 or 1 for extreme counts
    V = np.clip(V, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return np.concatenate((V, [1.0]))


def unit_cluster_loglik(ws: Workspace, y: np.ndarray, sigma: np.ndarray,
                        cluster_beta: np.ndarray) -> np.ndarray:
    """(n, C) matrix of complete-data unit log-likelihoods under each cluster's beta."""
    yy = ws.unit_yy(y)
    xty = ws.unit_xty(y)
    quad = np.einsum("cj,ijk,ck->ic", cluster_beta, ws.gram, cluster_beta)
    cross = xty @ cluster_beta.T
    ssr = yy[:, None] - 2.0 * cross + quad
    s2 = sigma ** 2
    return (-0.5 * ssr / s2[:, None]
            - (ws.counts * (np.log(sigma) + LOG_SQRT_2PI))[:, None])


@njit(cache=True)
def _log_upper_tail(z):
    """log(1 - Phi(z)), accurate for large z via the asymptotic series."""
    if z < 30.0:
        return np.log(0.5 * math.erfc(z / math.sqrt(2.0)))
    z2 = z * z
    series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)
    return -0.5 * z2 - np.log(z) - 0.5 * np.log(2.0 * np.pi) + np.log(series)


@njit(cache=True)
def _observed_unit_loglik(order, starts, log_time, event, XB, sigma, logpi, prune):
    """Observed-data log-likelihood of every unit under every cluster's beta.

    With ``prune`` > 0 the censored terms (all <= 0) are skipped for clusters
    whose event-only bound plus log pi already sits ``prune`` nats below the
    best complete value; those entries are returned as -inf.  Their weights
    would underflow to exactly zero anyway.
    """
    n = starts.shape[0] - 1
    C = XB.shape[1]
    out = np.zeros((n, C))
    h = 0.5 * np.log(2.0 * np.pi)
    r2 = 1.0 / math.sqrt(2.0)
    for u in range(n):
        inv = 1.0 / sigma[u]
        ls = np.log(sigma[u])
        for k in range(starts[u], starts[u + 1]):
            r = order[k]
            if event[r]:
                for c in range(C):
                    z = (log_time[r] - XB[r, c]) * inv
                    out[u, c] += -0.5 * z * z - ls - h - log_time[r]
        best = -np.inf
        for c in range(C):
            if prune > 0.0 and out[u, c] + logpi[c] < best - prune:
                out[u, c] = -np.inf
                continue
            acc = out[u, c]
            for k in range(starts[u], starts[u + 1]):
                r = order[k]
                if not event[r]:
                    acc += _log_upper_tail((log_time[r] - XB[r, c]) * inv)
            out[u, c] = acc
            if acc + logpi[c] > best:
                best = acc + logpi[c]
    return out


def unit_cluster_observed_loglik(ws: Workspace, sigma: np.ndarray, cluster_beta: np.ndarray,
                                 logpi: np.ndarray | None = None, prune: float = 0.0) -> np.ndarray:
    """(n, C) observed-data unit log-likelihoods (density for events, survival for censored)."""
    B = np.ascontiguousarray(cluster_beta, dtype=float)
    if logpi is None:
        logpi = np.zeros(B.shape[0])
    return _observed_unit_loglik(ws.order, ws.starts, ws.log_time, ~ws.cens, ws.X @ B.T,
                                 np.ascontiguousarray(sigma, dtype=float), logpi, prune)


def sample_cluster_labels(state: ChainState, ws: Workspace, rng: np.random.Generator,
                          log_offset: float = 0.0, observed: bool = False) -> np.ndarray:
    """Draw every z_i from weights pi_c * exp(unit loglik under beta_c), independently.

    With ``observed`` the censored records enter through their survival
    probability instead of the imputed log-times.
    """
    if observed:
        with np.errstate(divide="ignore"):
            logpi = np.log(state.pi)
        ll = unit_cluster_observed_loglik(ws, state.params.sigma, state.cluster_beta,
                                          logpi, PRUNE_NATS)
    else:
        ll = unit_cluster_loglik(ws, ws.completed_logtime(state), state.params.sigma,
                                 state.cluster_beta)
    with np.errstate(divide="ignore"):
        logw = np.log(state.pi)[None, :] + ll + log_offset
    norm = logsumexp(logw, axis=1, keepdims=True)
    if np.any(~np.isfinite(norm)):
        raise SamplerError("all cluster weights are zero for some unit")
    prob = np.exp(logw - norm)
    cdf = np.cumsum(prob, axis=1)
    u = rng.random(ws.n)[:, None] * cdf[:, -1:]
    z = (u > cdf).sum(axis=1)
    return np.minimum(z, prob.shape[1] - 1).astype(np.int64)


@njit(cache=True)
def _chol_logev(P, h):
    """h' P^{-1} h - log det P for one small SPD matrix (in-place free)."""
    p = P.shape[0]
    L = np.zeros((p, p))
    logdet = 0.0
    for j in range(p):
        s = P[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 0.0:
            return -np.inf
        L[j, j] = np.sqrt(s)
        logdet += 2.0 * np.log(L[j, j])
        for i in range(j + 1, p):
            s = P[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    quad = 0.0
    w = np.zeros(p)
    for i in range(p):
        s = h[i]
        for k in range(i):
            s -= L[i, k] * w[k]
        w[i] = s / L[i, i]
        quad += w[i] * w[i]
    return quad - logdet


@njit(cache=True)
def _collapsed_label_sweep(z, P, h, G, xty, const, logpi, counts, u):
    n = z.shape[0]
    C = P.shape[0]
    p = P.shape[1]
    ev = np.empty(C)
    for c in range(C):
        ev[c] = _chol_logev(P[c], h[c])
    Pw = np.empty((p, p))
    hw = np.empty(p)
    ev_with = np.empty(C)
    logw = np.empty(C)
    for i in range(n):
        c_old = z[i]
        P[c_old] -= G[i]
        h[c_old] -= xty[i]
        ev[c_old] = _chol_logev(P[c_old], h[c_old])
        m = -np.inf
        for c in range(C):
            if counts[i] > 0:
                Pw[:, :] = P[c] + G[i]
                hw[:] = h[c] + xty[i]
                ev_with[c] = _chol_logev(Pw, hw)
                logw[c] = logpi[c] + const[i] + 0.5 * (ev_with[c] - ev[c])
            else:
                logw[c] = logpi[c]
            if logw[c] > m:
                m = logw[c]
        if not np.isfinite(m):
            return i
        total = 0.0
        for c in range(C):
            logw[c] = np.exp(logw[c] - m)
            total += logw[c]
        target = u[i] * total
        acc = 0.0
        c_new = C - 1
        for c in range(C):
            acc += logw[c]
            if target < acc:
                c_new = c
                break
        z[i] = c_new
        P[c_new] += G[i]
        h[c_new] += xty[i]
        ev[c_new] = _chol_logev(P[c_new], h[c_new])
    return -1


def sample_cluster_labels_collapsed(state: ChainState, ws: Workspace,
                                    rng: np.random.Generator) -> np.ndarray:
    """Sequential label update with the cluster coefficients integrated out.

    Each z_i is drawn given the other labels, pi, sigma and the completed
    log-times, using the normal-normal marginal likelihood of unit i's data
    under each cluster. Must be followed by a cluster_beta draw.
    """
    y = ws.completed_logtime(state)
    s2 = state.params.sigma ** 2
    xty = ws.unit_xty(y) / s2[:, None]
    G = ws.gram / s2[:, None, None]
    yy = ws.unit_yy(y) / s2
    const = -0.5 * ws.counts * np.log(2 * np.pi * s2) - 0.5 * yy
    C = ws.C
    z = state.z.copy()
    P = np.broadcast_to(ws.base_prec, (C, ws.p, ws.p)).copy()
    h = np.broadcast_to(ws.base_h, (C, ws.p)).copy()
    np.add.at(P, z, G)
    np.add.at(h, z, xty)
    with np.errstate(divide="ignore"):
        logpi = np.log(state.pi)
    bad = _collapsed_label_sweep(z, P, h, G, xty, const, logpi, ws.counts, rng.random(ws.n))
    if bad >= 0:
        raise SamplerError(f"all cluster weights are zero for unit {bad}")
    return z


def update_cluster_betas(state: ChainState, ws: Workspace, rng: np.random.Generator) -> np.ndarray:
    """Conjugate draws for occupied clusters, base-measure draws for empty ones."""
    y = ws.completed_logtime(state)
    s2 = state.params.sigma ** 2
    xty = ws.unit_xty(y) / s2[:, None]
    G = ws.gram / s2[:, None, None]
    C, p = ws.C, ws.p
    out = ws.base_mu + ws.base_sd * rng.standard_normal((C, p))
    occupied = np.unique(state.z)
    for c in occupied:
        members = state.z == c
        Q = ws.base_prec + G[members].sum(axis=0)
        b = ws.base_h + xty[members].sum(axis=0)
        out[c] = mvn_from_precision(Q, b, rng)
    return out


# -- CAR / pooled -------------------------------------------------------------

def update_car_coefficients(state: ChainState, ws: Workspace, rng: np.random.Generator) -> np.ndarray:
    """Column-wise exact Gaussian draw of each coefficient across all units."""
    beta = state.params.beta.copy()
    y = ws.completed_logtime(state)
    s2 = state.params.sigma ** 2
    eta = ws.linear_predictor(beta)
    R = np.eye(ws.n) - state.rho * ws.W
    for j in range(ws.p):
        xj = ws.X[:, j]
        r = y - eta + xj * beta[ws.unit, j]
        d = ws.gram[:, j, j] / s2
        b = (ws.M @ (xj * r)) / s2
        Q = R / state.tau2[j] + np.diag(d)
        new = mvn_from_precision(Q, b, rng)
        eta += xj * (new - beta[:, j])[ws.unit]
        beta[:, j] = new
    return beta


def update_rho(state: ChainState, ws: Workspace, rng: np.random.Generator) -> float:
    """Griddy-Gibbs draw of rho from its exact conditional on the grid."""
    grid = ws.rho_grid_values
    if grid.size == 1:
        return float(grid[0])
    B = state.params.beta
    bWb = np.einsum("ij,ik,kj->j", B, ws.W, B)
    logp = 0.5 * ws.p * ws._rho_logdet + grid * np.sum(bWb / (2.0 * state.tau2))
    prob = np.exp(logp - logsumexp(logp))
    return float(grid[rng.choice(grid.size, p=prob / prob.sum())])


def update_tau2(state: ChainState, ws: Workspace, rng: np.random.Generator) -> np.ndarray:
    a, b = ws.spec.car.tau2_ig
    B = state.params.beta
    R = np.eye(ws.n) - state.rho * ws.W
    quad = np.einsum("ij,ik,kj->j", B, R, B)
    return inv_gamma(a + ws.n / 2.0, b + quad / 2.0, rng)


# -- Gaussian process ---------------------------------------------------------

def update_gp_coefficients(state: ChainState, ws: Workspace, rng: np.random.Generator) -> np.ndarray:
    """Joint draw of the stacked (unit-major) n*p coefficient vector."""
    n, p = ws.n, ws.p
    y = ws.completed_logtime(state)
    s2 = state.params.sigma ** 2
    Tinv = 1.0 / state.t_diag
    Q = np.kron(ws.Hinv, np.diag(Tinv))
    idx = np.arange(n * p).reshape(n, p)
    for i in range(n):
        Q[np.ix_(idx[i], idx[i])] += ws.gram[i] / s2[i]
    b = (ws.unit_xty(y) / s2[:, None]).reshape(-1)
    b += np.kron(ws.Hinv_1, Tinv * state.mu_beta)
    return mvn_from_precision(Q, b, rng).reshape(n, p)


def update_gp_hyper(state: ChainState, ws: Workspace, rng: np.random.Generator) -> None:
    g = ws.spec.gp
    B = state.params.beta
    n = ws.n
    # mu_beta | B, T
    s0 = g.mu_beta_prior_sd
    one_Hinv_1 = ws.Hinv_1.sum()
    prec = 1.0 / s0 ** 2 + one_Hinv_1 / state.t_diag
    mean = (ws.Hinv_1 @ B) / state.t_diag / prec
    state.mu_beta = mean + rng.standard_normal(ws.p) / np.sqrt(prec)
    # T diagonal | B, mu
    D = B - state.mu_beta
    q = np.einsum("ij,ik,kj->j", D, ws.Hinv, D)
    a, bb = g.t_diag_ig
    state.t_diag = inv_gamma(a + n / 2.0, bb + q / 2.0, rng)
    if g.sample_phi:
        qg = np.einsum("ij,gik,kj->gj", D, ws._phi_Hinv, D)
        logp = -0.5 * ws.p * ws._phi_logdet - 0.5 * (qg / state.t_diag).sum(axis=1)
        prob = np.exp(logp - logsumexp(logp))
        k = rng.choice(prob.size, p=prob / prob.sum())
        ws.Hinv = ws._phi_Hinv[k]
        ws.Hinv_1 = ws.Hinv.sum(axis=1)
        ws.phi = float(ws.phi_grid_values[k])
    state.phi = ws.phi


# -- shared ------------------------------------------------------------------

def unit_ssr(state: ChainState, ws: Workspace, y: np.ndarray | None = None) -> np.ndarray:
    """Per-unit sum of squared residuals of the completed log-times."""
    if y is None:
        y = ws.completed_logtime(state)
    r = y - ws.linear_predictor(state.params.beta)
    return ws.M @ (r * r)


def update_sigma(state: ChainState, ws: Workspace, rng: np.random.Generator) -> np.ndarray:
    a0, b0 = ws.spec.sigma_ig
    s2 = inv_gamma(a0 + ws.counts / 2.0, b0 + unit_ssr(state, ws) / 2.0, rng)
    return np.sqrt(s2)


def update_hyperparameters(state: ChainState, ws: Workspace, rng: np.random.Generator) -> ChainState:
    """Sigma plus the prior-specific hyperparameter block."""
    state.params.sigma = update_sigma(state, ws, rng)
    if ws.kind in ("car", "pooled"):
        state.tau2 = update_tau2(state, ws, rng)
        if ws.kind == "car":
            state.rho = update_rho(state, ws, rng)
    elif ws.kind == "gp":
        update_gp_hyper(state, ws, rng)
    elif ws.kind == "dp":
        state.V = sample_stick_variables(state.z, ws.spec.dp.alpha, ws.C, rng)
        state.pi = stick_breaking_weights(state.V)
    return state


def update_coefficients(state: ChainState, ws: Workspace, rng: np.random.Generator) -> None:
    if ws.kind in ("car", "pooled"):
        state.params.beta = update_car_coefficients(state, ws, rng)
    elif ws.kind == "gp":
        state.params.beta = update_gp_coefficients(state, ws, rng)
    else:
        mode = ws.spec.dp.label_update
        if mode == "collapsed":
            state.z = sample_cluster_labels_collapsed(state, ws, rng)
        elif mode == "conditional":
            state.z = sample_cluster_labels(state, ws, rng)
        state.cluster_beta = update_cluster_betas(state, ws, rng)
        state.params.beta = state.cluster_beta[state.z]


def initial_state(ws: Workspace, rng: np.random.Generator) -> ChainState:
    """Zeros for beta, ones for sigma, rho = 0, a single occupied DP cluster."""
    n, p = ws.n, ws.p
    params = UnitParameters(np.zeros((n, p)), np.ones(n))
    aug = AugmentedState(ws.log_cens + 0.01)
    state = ChainState(params, aug)
    if ws.kind in ("car", "pooled"):
        state.rho = 0.0
        state.tau2 = np.ones(p)
    elif ws.kind == "gp":
        state.mu_beta = np.zeros(p)
        state.t_diag = np.ones(p)
        state.phi = ws.phi
    else:
        state.z = np.zeros(n, dtype=np.int64)
        state.V = sample_stick_variables(state.z, ws.spec.dp.alpha, ws.C, rng)
        state.pi = stick_breaking_weights(state.V)
        state.cluster_beta = ws.base_mu + ws.base_sd * rng.standard_normal((ws.C, p))
        state.cluster_beta[0] = 0.0
        state.params.beta = state.cluster_beta[state.z]
    return state
