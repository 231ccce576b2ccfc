"""Sweep schedule, burn-in/thinning, draw storage and posterior summaries."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import SurvivalDataset, record_log_likelihoods
from .priors import (
    ChainState,
    PriorSpec,
    SamplerError,
    Workspace,
    impute_latent,
    sample_cluster_labels,
    initial_state as _initial_state,
    update_coefficients,
    update_hyperparameters,
)
from .selection import StreamingCPO
from .spatial import SpatialLayout

logger = logging.getLogger(__name__)

LOGLIK_MODES = ("full", "stream", "none")


@dataclass
class McmcConfig:
    n_iter: int = 20000
    n_burnin: int = 5000
    thin: int = 1
    seed: int = 0
    n_chains: int = 1
    rho_grid: int = 50
    loglik: str = "full"

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 <= self.n_burnin < self.n_iter:
            raise ValueError("need 0 <= n_burnin < n_iter")
        if self.n_iter - self.n_burnin < self.thin:
            raise ValueError("n_iter - n_burnin must be at least thin")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.loglik not in LOGLIK_MODES:
            raise ValueError(f"loglik must be one of {LOGLIK_MODES}")

    @property
    def n_kept(self) -> int:
        return kept_count(self.n_iter, self.n_burnin, self.thin)


def kept_count(n_iter: int, n_burnin: int, thin: int) -> int:
    return (n_iter - n_burnin) // thin


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based stream (Philox) so chains seeded seed+k are independent."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class PosteriorSamples:
    draws: np.ndarray
    param_index: dict[str, int]
    loglik_matrix: np.ndarray | None = None
    cpo_stream: StreamingCPO | None = None
    kind: str = ""
    n_units: int = 0
    p: int = 0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return sorted(self.param_index, key=self.param_index.get)

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.param_index[name]]

    def beta_draws(self) -> np.ndarray:
        """(kept, n_units, p) view of the unit coefficient draws."""
        k = self.param_index["beta[0,0]"]
        return self.draws[:, k:k + self.n_units * self.p].reshape(-1, self.n_units, self.p)

    def cluster_draws(self) -> np.ndarray | None:
        if "z[0]" not in self.param_index:
            return None
        k = self.param_index["z[0]"]
        return self.draws[:, k:k + self.n_units].astype(np.int64)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(self.names)
            for row in self.draws:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "PosteriorSamples":
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        names = rows[0]
        draws = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        return cls(draws.reshape(-1, len(names)), {nm: k for k, nm in enumerate(names)})


def _param_names(kind: str, n: int, p: int, C: int = 0) -> list[str]:
    names = [f"beta[{i},{j}]" for i in range(n) for j in range(p)]
    names += [f"sigma[{i}]" for i in range(n)]
    if kind in ("car", "pooled"):
        if kind == "car":
            names.append("rho")
        names += [f"tau2[{j}]" for j in range(p)]
    elif kind == "gp":
        names += [f"mu_beta[{j}]" for j in range(p)]
        names += [f"t_diag[{j}]" for j in range(p)]
        names.append("phi")
    elif kind == "dp":
        names += [f"z[{i}]" for i in range(n)]
        names.append("n_clusters")
    return names


def _flatten(state: ChainState, ws: Workspace, n_units: int) -> np.ndarray:
    beta, sigma = state.params.beta, state.params.sigma
    if ws.pooled:
        beta = np.broadcast_to(beta, (n_units, ws.p))
        sigma = np.broadcast_to(sigma, (n_units,))
    parts = [beta.reshape(-1), sigma]
    if ws.kind in ("car", "pooled"):
        if ws.kind == "car":
            parts.append([state.rho])
        parts.append(state.tau2)
    elif ws.kind == "gp":
        parts += [state.mu_beta, state.t_diag, [state.phi]]
    else:
        parts += [state.z, [np.unique(state.z).size]]
    return np.concatenate([np.asarray(x, dtype=float).reshape(-1) for x in parts])


def initial_state(data: SurvivalDataset, layout: SpatialLayout | None, spec: PriorSpec,
                  rng: np.random.Generator, rho_grid: int = 50) -> ChainState:
    return _initial_state(Workspace(data, layout, spec, rho_grid), rng)


def sweep(state: ChainState, ws: Workspace, rng: np.random.Generator) -> None:
    """Impute censored log-times, then coefficients, then sigma and hyperparameters."""
    if ws.kind == "dp" and ws.spec.dp.label_update == "observed":
        # labels drawn with the latent times integrated out, so they go first
        state.z = sample_cluster_labels(state, ws, rng, observed=True)
        state.params.beta = state.cluster_beta[state.z]
    impute_latent(state, ws, rng)
    update_coefficients(state, ws, rng)
    update_hyperparameters(state, ws, rng)


def run_chain(data: SurvivalDataset, layout: SpatialLayout | None, spec: PriorSpec,
              cfg: McmcConfig, chain_index: int = 0) -> PosteriorSamples:
    seed = cfg.seed + chain_index
    rng = make_rng(seed)
    ws = Workspace(data, layout, spec, cfg.rho_grid)
    state = _initial_state(ws, rng)
    n_units = data.n_units
    names = _param_names(spec.kind, n_units, data.p)
    draws = np.empty((cfg.n_kept, len(names)))
    loglik = np.empty((cfg.n_kept, data.n_records)) if cfg.loglik == "full" else None
    stream = StreamingCPO(data.n_records) if cfg.loglik == "stream" else None
    k = 0
    for it in range(cfg.n_iter):
        try:
            sweep(state, ws, rng)
        except (SamplerError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise SamplerError(f"chain seed={seed} failed at iteration {it}: {exc}") from exc
        if it >= cfg.n_burnin and (it - cfg.n_burnin + 1) % cfg.thin == 0 and k < cfg.n_kept:
            draws[k] = _flatten(state, ws, n_units)
            if loglik is not None or stream is not None:
                ll = record_log_likelihoods(data, state.params.beta, state.params.sigma, ws.unit)
                if loglik is not None:
                    loglik[k] = ll
                else:
                    stream.update(ll)
            k += 1
    return PosteriorSamples(
        draws=draws,
        param_index={nm: c for c, nm in enumerate(names)},
        loglik_matrix=loglik,
        cpo_stream=stream,
        kind=spec.kind,
        n_units=n_units,
        p=data.p,
        seed=seed,
        meta={"n_iter": cfg.n_iter, "n_burnin": cfg.n_burnin, "thin": cfg.thin},
    )


def _run_one(args):
    return run_chain(*args)


def run_chains(data, layout, spec, cfg: McmcConfig, workers: int = 1) -> list[PosteriorSamples]:
    """Independent chains seeded seed, seed+1, ...; optionally in worker processes."""
    jobs = [(data, layout, spec, cfg, c) for c in range(cfg.n_chains)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def combine_chains(chains: list[PosteriorSamples]) -> PosteriorSamples:
    if len(chains) == 1:
        return chains[0]
    first = chains[0]
    ll = None
    if all(c.loglik_matrix is not None for c in chains):
        ll = np.vstack([c.loglik_matrix for c in chains])
    stream = None
    if all(c.cpo_stream is not None for c in chains):
        stream = chains[0].cpo_stream
        for c in chains[1:]:
            stream = stream.merge(c.cpo_stream)
    return PosteriorSamples(
        np.vstack([c.draws for c in chains]), dict(first.param_index), ll, stream,
        first.kind, first.n_units, first.p, first.seed, dict(first.meta, n_chains=len(chains)),
    )


# -- summaries -----------------------------------------------------------------

def hpd_interval(draws, level: float = 0.95) -> tuple[float, float]:
    """Shortest window over sorted draws holding ceil(level * m) of them.

    Ties go to the lowest starting index.
    """
    x = np.sort(np.asarray(draws, dtype=float))
    m = x.size
    k = min(m, math.ceil(level * m - 1e-9))
    k = max(k, 1)
    widths = x[k - 1:] - x[:m - k + 1]
    s = int(np.argmin(widths))
    return float(x[s]), float(x[s + k - 1])


@dataclass
class ParamSummary:
    mean: float
    sd: float
    hpd_lo: float
    hpd_hi: float


def summarize(samples, level: float = 0.95) -> dict[str, ParamSummary]:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if isinstance(samples, PosteriorSamples):
        draws, names = samples.draws, samples.names
    else:
        draws = np.asarray(samples, dtype=float)
        draws = draws.reshape(draws.shape[0], -1)
        names = [str(i) for i in range(draws.shape[1])]
    if draws.shape[0] < 10:
        raise ValueError("need at least 10 kept draws to summarise")
    out = {}
    for c, nm in enumerate(names):
        col = draws[:, c]
        lo, hi = hpd_interval(col, level)
        out[nm] = ParamSummary(float(col.mean()), float(col.std(ddof=1)), lo, hi)
    return out


def beta_hpd(samples: PosteriorSamples, level: float = 0.95):
    """Posterior mean and HPD bounds of the unit coefficients, each (n_units, p)."""
    B = samples.beta_draws()
    mean = B.mean(axis=0)
    lo = np.empty_like(mean)
    hi = np.empty_like(mean)
    for i in range(B.shape[1]):
        for j in range(B.shape[2]):
            lo[i, j], hi[i, j] = hpd_interval(B[:, i, j], level)
    return mean, lo, hi


def modal_clusters(samples: PosteriorSamples) -> np.ndarray | None:
    Z = samples.cluster_draws()
    if Z is None:
        return None
    return np.array([np.bincount(Z[:, i]).argmax() for i in range(Z.shape[1])], dtype=np.int64)


def write_summary_csv(summary: dict[str, ParamSummary], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["param", "mean", "sd", "hpd_lo", "hpd_hi"])
        for nm, s in summary.items():
            w.writerow([nm, repr(s.mean), repr(s.sd), repr(s.hpd_lo), repr(s.hpd_hi)])
