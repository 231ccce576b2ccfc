"""Censored survival data and the log-normal AFT likelihood.

Log survival time at unit ``i`` is modelled as ``x @ beta_i + sigma_i * eps``
with standard normal ``eps``.  Censored records contribute the survival
function, observed events the density.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """Inputs violate a structural precondition (shapes, record kind)."""


@dataclass(frozen=True)
class SurvivalRecord:
    unit_index: int
    time: float
    event: bool
    covariates: tuple[float, ...]

    def __post_init__(self):
        if not self.time > 0:
            raise DomainError(f"survival time must be positive, got {self.time}")
        if len(self.covariates) == 0 or self.covariates[0] != 1.0:
            raise ContractError("first covariate entry must be the intercept 1")


@dataclass
class SurvivalDataset:
    """Records stored column-wise.

    ``X`` carries the intercept in column 0.  ``event`` is True when the
    event was observed; for censored rows ``time`` is the censoring time.
    """

    unit: np.ndarray
    time: np.ndarray
    event: np.ndarray
    X: np.ndarray
    n_units: int
    unit_names: list[str] | None = None
    covariate_names: list[str] | None = None
    _unit_counts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.unit = np.asarray(self.unit, dtype=np.int64).reshape(-1)
        self.time = np.asarray(self.time, dtype=float).reshape(-1)
        self.event = np.asarray(self.event, dtype=bool).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else np.ones((0, 1))
        self.X = X
        N = self.unit.size
        if not (self.time.size == self.event.size == X.shape[0] == N):
            raise ContractError("record columns have inconsistent lengths")
        if X.shape[1] < 1:
            raise ContractError("covariate dimension p must be >= 1")
        if N and not np.all(X[:, 0] == 1.0):
            raise ContractError("first covariate column must be the intercept 1")
        if N and (self.unit.min() < 0 or self.unit.max() >= self.n_units):
            raise ContractError("unit index out of range")
        if np.any(~(self.time > 0)):
            raise DomainError("survival times must be positive")
        self._unit_counts = np.bincount(self.unit, minlength=self.n_units)

    @classmethod
    def from_records(cls, records: Sequence[SurvivalRecord], n_units: int, p: int | None = None):
        if p is None:
            if not records:
                raise ContractError("p is required for an empty dataset")
            p = len(records[0].covariates)
        for r in records:
            if len(r.covariates) != p:
                raise ContractError("covariate length differs from dataset p")
        X = np.array([r.covariates for r in records], dtype=float).reshape(len(records), p)
        return cls(
            unit=np.array([r.unit_index for r in records], dtype=np.int64),
            time=np.array([r.time for r in records], dtype=float),
            event=np.array([r.event for r in records], dtype=bool),
            X=X,
            n_units=n_units,
        )

    @property
    def n_records(self) -> int:
        return int(self.unit.size)

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    @property
    def unit_counts(self) -> np.ndarray:
        return self._unit_counts

    @property
    def records(self) -> Iterator[SurvivalRecord]:
        for k in range(self.n_records):
            yield self.record(k)

    def record(self, k: int) -> SurvivalRecord:
        return SurvivalRecord(
            int(self.unit[k]), float(self.time[k]), bool(self.event[k]), tuple(self.X[k].tolist())
        )

    def same_data(self, other: "SurvivalDataset") -> bool:
        return (
            self.n_units == other.n_units
            and np.array_equal(self.unit, other.unit)
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.event, other.event)
            and np.array_equal(self.X, other.X)
        )


@dataclass
class UnitParameters:
    beta: np.ndarray  # (n_units, p)
    sigma: np.ndarray  # (n_units,)

    def __post_init__(self):
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if self.sigma.size != self.beta.shape[0]:
            raise ContractError("sigma length must equal number of beta rows")
        if np.any(~(self.sigma > 0)):
            raise DomainError("all sigma entries must be positive")


@dataclass
class AugmentedState:
    """Latent log event times for the censored records, in dataset order."""

    latent_logtime: np.ndarray


def _check_sigma(sigma):
    if np.any(~(np.asarray(sigma) > 0)):
        raise DomainError("sigma must be positive")


def log_likelihood_record(record: SurvivalRecord, beta_i, sigma_i: float) -> float:
    _check_sigma(sigma_i)
    if not record.time > 0:
        raise DomainError("time must be positive")
    logt = np.log(record.time)
    z = (logt - float(np.dot(record.covariates, beta_i))) / sigma_i
    if record.event:
        return float(-np.log(sigma_i) - logt - 0.5 * z * z - LOG_SQRT_2PI)
    return float(log_ndtr(-z))


def record_log_likelihoods(data: SurvivalDataset, beta: np.ndarray, sigma: np.ndarray,
                           unit: np.ndarray | None = None) -> np.ndarray:
    """Observed-data log-likelihood of every record (vectorised).

    ``unit`` overrides the row lookup into ``beta``/``sigma`` (used by the
    pooled model, where every record maps to row 0).
    """
    u = data.unit if unit is None else unit
    logt = np.log(data.time)
    s = sigma[u]
    z = (logt - np.einsum("ij,ij->i", data.X, beta[u])) / s
    out = np.empty_like(z)
    ev = data.event
    out[ev] = -np.log(s[ev]) - logt[ev] - 0.5 * z[ev] ** 2 - LOG_SQRT_2PI
    out[~ev] = log_ndtr(-z[~ev])
    return out


def total_log_likelihood(data: SurvivalDataset, params: UnitParameters) -> float:
    if params.beta.shape != (data.n_units, data.p):
        raise ContractError(
            f"beta shape {params.beta.shape} does not match ({data.n_units}, {data.p})"
        )
    if data.n_records == 0:
        return 0.0
    return float(record_log_likelihoods(data, params.beta, params.sigma).sum())


def sample_upper_truncated_normal(mean, sd, lower, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(mean, sd^2) restricted to (lower, inf), stable deep in the tail.

    Inverts the upper tail in log space: z = -Phi^{-1}(u * Phi(-a)).
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    a = (np.asarray(lower, dtype=float) - mean) / sd
    shape = np.broadcast(mean, sd, a).shape
    logu = np.log(rng.random(shape))
    z = -ndtri_exp(logu + log_ndtr(-a))
    # rounding can land exactly on the boundary for very large a
    z = np.maximum(z, np.nextafter(a, np.inf))
    draw = mean + sd * z
    lower = np.broadcast_to(np.asarray(lower, dtype=float), shape)
    bump = draw <= lower
    if np.any(bump):
        draw = np.where(bump, np.nextafter(lower, np.inf), draw)
    return draw


def impute_censored_logtime(record: SurvivalRecord, beta_i, sigma_i: float,
                            rng: np.random.Generator) -> float:
    if record.event:
        raise ContractError("imputation requested for an observed event record")
    _check_sigma(sigma_i)
    mu = float(np.dot(record.covariates, beta_i))
    return float(sample_upper_truncated_normal(mu, sigma_i, np.log(record.time), rng))
