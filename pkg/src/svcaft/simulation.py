"""Scenario generators, replicate metrics and the simulation-study harness."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .mcmc import McmcConfig, beta_hpd, make_rng, modal_clusters, run_chain
from .model import SurvivalDataset
from .priors import PriorSpec
from .spatial import SpatialLayout

logger = logging.getLogger(__name__)

SCENARIOS = ("null", "smooth", "random", "regional")
BASE_BETA = (0.6, 0.35, -0.5)


@dataclass
class ScenarioSpec:
    kind: str = "null"
    base_beta: tuple[float, ...] = BASE_BETA
    n_per_unit: int = 100
    censor_rate: float = 1.0
    perturb_var: float = 0.1
    sigma_gen: float = 1.0
    smooth_scale: float = 0.1
    region_map: np.ndarray | None = None
    region_betas: dict[int, np.ndarray] | None = None
    region_offset: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in SCENARIOS:
            raise ValueError(f"unknown scenario '{self.kind}', expected one of {SCENARIOS}")
        self.base_beta = tuple(float(b) for b in self.base_beta)
        if self.n_per_unit < 1 or not self.censor_rate > 0 or not self.sigma_gen > 0:
            raise ValueError("n_per_unit, censor_rate and sigma_gen must be positive")

    @property
    def p(self) -> int:
        return len(self.base_beta)

    def default_region_betas(self) -> dict[int, np.ndarray]:
        base = np.array(self.base_beta)
        d = self.region_offset
        return {0: base, 1: base + d, 2: base - d}


@dataclass
class MetricsReport:
    mab: np.ndarray
    mmse: np.ndarray
    msd: np.ndarray
    mcr: np.ndarray
    mean_point_estimates: np.ndarray
    rand_index: float | None = None
    n_replicates: int = 0


def true_betas(spec: ScenarioSpec, layout: SpatialLayout, rng: np.random.Generator | None = None) -> np.ndarray:
    n, base = layout.n_units, np.array(spec.base_beta)
    if spec.kind == "null":
        return np.tile(base, (n, 1))
    if spec.kind == "smooth":
        c = layout.normalized_centroids()
        return base + spec.smooth_scale * (c[:, 0] + c[:, 1])[:, None]
    if spec.kind == "random":
        if rng is None:
            raise ValueError("random scenario needs an rng")
        return base + rng.normal(0.0, np.sqrt(spec.perturb_var), size=(n, spec.p))
    if spec.region_map is None:
        raise ValueError("regional scenario requires a region_map")
    betas = spec.region_betas or spec.default_region_betas()
    rm = np.asarray(spec.region_map)
    missing = set(np.unique(rm)) - set(betas)
    if missing:
        raise ValueError(f"no coefficient vector for regions {sorted(missing)}")
    return np.array([np.asarray(betas[r], dtype=float) for r in rm])


def generate_dataset(spec: ScenarioSpec, layout: SpatialLayout, betas: np.ndarray,
                     rng: np.random.Generator) -> SurvivalDataset:
    n, p = layout.n_units, spec.p
    betas = np.asarray(betas, dtype=float)
    if betas.shape != (n, p):
        raise ValueError(f"betas shape {betas.shape} does not match ({n}, {p})")
    m = spec.n_per_unit
    unit = np.repeat(np.arange(n), m)
    X = np.column_stack([np.ones(n * m), rng.standard_normal((n * m, p - 1))])
    logT = np.einsum("ij,ij->i", X, betas[unit]) + spec.sigma_gen * rng.standard_normal(n * m)
    C = rng.exponential(1.0 / spec.censor_rate, size=n * m)
    T = np.exp(logT)
    event = T <= C
    time = np.where(event, T, C)
    # guard against exp underflow and zero exponential draws
    time = np.maximum(time, np.finfo(float).tiny)
    return SurvivalDataset(unit, time, event, X, n, unit_names=layout.names,
                           covariate_names=[f"x{j}" for j in range(1, p)])


def compute_metrics(truth: np.ndarray, fits) -> MetricsReport:
    """Per-coefficient MAB, MMSE, MSD, MCR averaged over units.

    ``fits`` is a sequence of dicts with (n, p) arrays ``point``, ``hpd_lo``
    and ``hpd_hi``.  With a single replicate MSD is NaN.
    """
    truth = np.asarray(truth, dtype=float)
    P = np.stack([np.asarray(f["point"], float) for f in fits])
    lo = np.stack([np.asarray(f["hpd_lo"], float) for f in fits])
    hi = np.stack([np.asarray(f["hpd_hi"], float) for f in fits])
    if P.shape[1:] != truth.shape or lo.shape != P.shape or hi.shape != P.shape:
        raise ValueError("replicate matrices must all match the truth's shape")
    err = P - truth
    mab = np.abs(err).mean(axis=(0, 1))
    mmse = (err ** 2).mean(axis=(0, 1))
    R = P.shape[0]
    msd = P.std(axis=0, ddof=1).mean(axis=0) if R >= 2 else np.full(truth.shape[1], np.nan)
    covered = (lo <= truth) & (truth <= hi)
    mcr = covered.mean(axis=(0, 1))
    return MetricsReport(mab, mmse, msd, mcr, P.mean(axis=(0, 1)), n_replicates=R)


def replicate_msd(fits) -> np.ndarray:
    P = np.stack([np.asarray(f["point"], float) for f in fits])
    if P.shape[0] < 2:
        raise ValueError("MSD needs at least two replicates")
    return P.std(axis=0, ddof=1).mean(axis=0)


def rand_index(a, b) -> float:
    """Fraction of unit pairs on which two partitions agree."""
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.size != b.size:
        raise ValueError("partitions must have equal length")
    n = a.size
    if n < 2:
        raise ValueError("rand index needs at least two items")
    same_a = a[:, None] == a[None, :]
    same_b = b[:, None] == b[None, :]
    iu = np.triu_indices(n, 1)
    return float(np.mean(same_a[iu] == same_b[iu]))


def rand_index_bruteforce(a, b) -> float:
    pairs = list(combinations(range(len(a)), 2))
    agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in pairs)
    return agree / len(pairs)


# -- study harness --------------------------------------------------------------

@dataclass
class ReplicateResult:
    prior: str
    replicate: int
    seed: int
    point: np.ndarray
    hpd_lo: np.ndarray
    hpd_hi: np.ndarray
    truth: np.ndarray
    rand_index: float | None = None
    lpml: float | None = None


@dataclass
class StudyResult:
    scenario: ScenarioSpec
    reports: dict[str, MetricsReport]
    replicates: list[ReplicateResult] = field(default_factory=list)

    def table_rows(self) -> list[dict]:
        rows = []
        include_ri = any(r.rand_index is not None for r in self.reports.values())
        for prior, rep in self.reports.items():
            for j in range(rep.mab.size):
                row = {
                    "prior": prior, "coef": j,
                    "mab": rep.mab[j], "mmse": rep.mmse[j], "msd": rep.msd[j], "mcr": rep.mcr[j],
                }
                if include_ri:
                    row["rand_index"] = rep.rand_index if rep.rand_index is not None else float("nan")
                row["point_estimate"] = rep.mean_point_estimates[j]
                rows.append(row)
        return rows


def replicate_seed(base_seed: int, r: int) -> int:
    return int(np.random.SeedSequence([base_seed, r]).generate_state(1)[0])


def simulate_replicate(scenario: ScenarioSpec, layout: SpatialLayout, r: int):
    """Truth and dataset for replicate r; identical across priors."""
    rng = make_rng(replicate_seed(scenario.seed, r))
    truth = true_betas(scenario, layout, rng)
    return truth, generate_dataset(scenario, layout, truth, rng)


def _fit_replicate(args) -> ReplicateResult:
    scenario, layout, prior, r, cfg, level = args
    truth, data = simulate_replicate(scenario, layout, r)
    chain_cfg = McmcConfig(cfg.n_iter, cfg.n_burnin, cfg.thin,
                           replicate_seed(cfg.seed, r), 1, cfg.rho_grid, cfg.loglik)
    samples = run_chain(data, layout, prior, chain_cfg)
    point, lo, hi = beta_hpd(samples, level)
    ri = None
    if prior.kind == "dp" and scenario.kind == "regional":
        ri = rand_index(modal_clusters(samples), scenario.region_map)
    lp = None
    if samples.loglik_matrix is not None:
        from .selection import lpml
        lp = lpml(samples.loglik_matrix).lpml
    return ReplicateResult(prior.kind, r, chain_cfg.seed, point, lo, hi, truth, ri, lp)


def run_study(scenario: ScenarioSpec, layout: SpatialLayout, priors, n_replicates: int,
              cfg: McmcConfig, level: float = 0.95, workers: int = 1) -> StudyResult:
    priors = [p if isinstance(p, PriorSpec) else PriorSpec(kind=p) for p in priors]
    if scenario.kind == "regional" and scenario.region_map is None:
        raise ValueError("regional scenario requires a region_map")
    if n_replicates < 1:
        raise ValueError("need at least one replicate")
    cfg = McmcConfig(cfg.n_iter, cfg.n_burnin, cfg.thin, cfg.seed, 1, cfg.rho_grid,
                     "none" if cfg.loglik == "full" else cfg.loglik)
    jobs = [(scenario, layout, pr, r, cfg, level) for pr in priors for r in range(n_replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_replicate, jobs))
    else:
        results = []
        for job in jobs:
            try:
                results.append(_fit_replicate(job))
            except Exception as exc:
                pr, r = job[2], job[3]
                raise RuntimeError(
                    f"replicate {r} ({pr.kind}) failed; chain seed "
                    f"{replicate_seed(cfg.seed, r)}, data seed {replicate_seed(scenario.seed, r)}: {exc}"
                ) from exc
    reports = {}
    for pr in priors:
        mine = [res for res in results if res.prior == pr.kind]
        truth = np.stack([m.truth for m in mine])
        # per-replicate truths differ only for the random scenario
        rep = _metrics_per_truth(truth, mine)
        ris = [m.rand_index for m in mine if m.rand_index is not None]
        rep.rand_index = float(np.mean(ris)) if ris else None
        if n_replicates < 2:
            logger.warning("single replicate: MSD is undefined and reported as NaN")
        reports[pr.kind] = rep
    return StudyResult(scenario, reports, results)


def _metrics_per_truth(truth: np.ndarray, mine: list[ReplicateResult]) -> MetricsReport:
    fits = [{"point": m.point, "hpd_lo": m.hpd_lo, "hpd_hi": m.hpd_hi} for m in mine]
    if np.all(truth == truth[0]):
        return compute_metrics(truth[0], fits)
    # random scenario: bias and coverage against each replicate's own truth
    err = np.stack([m.point - m.truth for m in mine])
    cov = np.stack([(m.hpd_lo <= m.truth) & (m.truth <= m.hpd_hi) for m in mine])
    P = np.stack([m.point for m in mine])
    R = len(mine)
    msd = P.std(axis=0, ddof=1).mean(axis=0) if R >= 2 else np.full(P.shape[2], np.nan)
    return MetricsReport(np.abs(err).mean(axis=(0, 1)), (err ** 2).mean(axis=(0, 1)), msd,
                         cov.mean(axis=(0, 1)), P.mean(axis=(0, 1)), n_replicates=R)


def write_study_csv(study: StudyResult, path) -> None:
    rows = study.table_rows()
    if not rows:
        return
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in row.items()})


def write_replicates_csv(study: StudyResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["prior", "replicate", "seed", "coef", "abs_bias", "sq_err", "coverage", "rand_index"])
        for res in study.replicates:
            err = res.point - res.truth
            cov = (res.hpd_lo <= res.truth) & (res.truth <= res.hpd_hi)
            for j in range(err.shape[1]):
                w.writerow([res.prior, res.replicate, res.seed, j,
                            repr(float(np.abs(err[:, j]).mean())),
                            repr(float((err[:, j] ** 2).mean())),
                            repr(float(cov[:, j].mean())),
                            "" if res.rand_index is None else repr(res.rand_index)])
