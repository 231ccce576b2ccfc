"""Conditional predictive ordinates and LPML model comparison."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp


@dataclass
class CpoReport:
    cpo: np.ndarray
    lpml: float
    n_unstable: int
    log_cpo: np.ndarray | None = None

    @property
    def n_records(self) -> int:
        return int(self.cpo.size)


def log_cpo_from_loglik(loglik_column) -> float:
    ll = np.asarray(loglik_column, dtype=float).reshape(-1)
    if ll.size == 0:
        raise ValueError("loglik column is empty")
    if not np.all(np.isfinite(ll)):
        raise ValueError("loglik entries must be finite")
    return float(-(logsumexp(-ll) - np.log(ll.size)))


def cpo_from_loglik(loglik_column) -> float:
    """Harmonic-mean CPO estimate, evaluated in log space."""
    return float(np.exp(log_cpo_from_loglik(loglik_column)))


def _unstable(neg_ll: np.ndarray, norm: np.ndarray) -> int:
    max_weight = np.exp(neg_ll.max(axis=0) - norm)
    return int(np.sum(max_weight > 0.5))


def lpml(loglik_matrix) -> CpoReport:
    """LPML from a (draws x records) matrix of observed-data log-likelihoods.

    A record counts as unstable when a single draw carries more than half of
    its inverse-CPO weight.
    """
    L = np.asarray(loglik_matrix, dtype=float)
    if L.ndim != 2 or L.shape[0] == 0:
        raise ValueError("loglik matrix must be 2-d with at least one draw")
    if not np.all(np.isfinite(L)):
        raise ValueError("loglik entries must be finite")
    T = L.shape[0]
    norm = logsumexp(-L, axis=0)
    log_cpo = np.log(T) - norm
    return CpoReport(np.exp(log_cpo), float(log_cpo.sum()), _unstable(-L, norm), log_cpo)


class StreamingCPO:
    """Running inverse-CPO accumulator for runs too long to keep the loglik matrix."""

    def __init__(self, n_records: int):
        self.n_records = n_records
        self.count = 0
        self._lse = np.full(n_records, -np.inf)
        self._max = np.full(n_records, -np.inf)

    def update(self, loglik_row) -> None:
        neg = -np.asarray(loglik_row, dtype=float)
        self._lse = np.logaddexp(self._lse, neg)
        self._max = np.maximum(self._max, neg)
        self.count += 1

    def merge(self, other: "StreamingCPO") -> "StreamingCPO":
        out = StreamingCPO(self.n_records)
        out._lse = np.logaddexp(self._lse, other._lse)
        out._max = np.maximum(self._max, other._max)
        out.count = self.count + other.count
        return out

    def report(self) -> CpoReport:
        if self.count == 0:
            raise ValueError("no draws accumulated")
        log_cpo = np.log(self.count) - self._lse
        return CpoReport(np.exp(log_cpo), float(log_cpo.sum()),
                         _unstable(self._max[None, :], self._lse), log_cpo)


def compare(fit_reports: Sequence[tuple[str, CpoReport]]) -> list[tuple[int, str, CpoReport]]:
    """Rank fits by descending LPML; equal LPMLs are ordered by label."""
    if len(fit_reports) < 2:
        raise ValueError("need at least two fits to compare")
    sizes = {r.n_records for _, r in fit_reports}
    if len(sizes) != 1:
        raise ValueError("fits were made on datasets of different sizes and are not comparable")
    ordered = sorted(fit_reports, key=lambda t: (-t[1].lpml, t[0]))
    return [(k + 1, label, rep) for k, (label, rep) in enumerate(ordered)]


def write_ranking_csv(ranking, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["rank", "label", "lpml", "n_unstable"])
        for rank, label, rep in ranking:
            w.writerow([rank, label, repr(rep.lpml), rep.n_unstable])
