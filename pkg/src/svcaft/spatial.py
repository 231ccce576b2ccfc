"""Spatial layouts, CAR precision matrices and GP covariances."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .model import DomainError

logger = logging.getLogger(__name__)

GP_JITTER = 1e-8


class IngestionError(ValueError):
    """Malformed layout input; message carries file name and line number."""


@dataclass
class SpatialLayout:
    n_units: int
    centroids: np.ndarray
    adjacency: np.ndarray
    names: list[str] | None = None

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=float).reshape(self.n_units, -1)
        W = np.asarray(self.adjacency, dtype=float)
        if W.shape != (self.n_units, self.n_units):
            raise ValueError("adjacency must be n_units x n_units")
        if not np.array_equal(W, W.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(W) != 0):
            raise ValueError("adjacency must have zero diagonal")
        if not np.all((W == 0) | (W == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids must be finite")
        self.adjacency = W
        self._eig = None

    @property
    def eigenvalues(self) -> np.ndarray:
        if self._eig is None:
            self._eig = np.linalg.eigvalsh(self.adjacency)
        return self._eig

    def normalized_centroids(self) -> np.ndarray:
        """Coordinates shifted and scaled to mean 0, sd 1 per axis."""
        c = self.centroids
        sd = c.std(axis=0)
        sd[sd == 0] = 1.0
        return (c - c.mean(axis=0)) / sd

    def distances(self, normalize: bool = True) -> np.ndarray:
        c = self.normalized_centroids() if normalize else self.centroids
        if self.n_units == 1:
            return np.zeros((1, 1))
        return squareform(pdist(c))

    def index_of(self, name: str) -> int:
        if self.names is None:
            raise KeyError(name)
        return self.names.index(name)


@dataclass(frozen=True)
class RhoBounds:
    low: float
    high: float

    def contains(self, rho: float) -> bool:
        return self.low < rho < self.high


def rho_bounds(layout: SpatialLayout) -> RhoBounds:
    if not np.any(layout.adjacency):
        raise DomainError("adjacency has no edges; CAR rho bounds are undefined")
    lam = layout.eigenvalues
    return RhoBounds(1.0 / lam[0], 1.0 / lam[-1])


def car_precision(layout: SpatialLayout, rho: float, tau2: float) -> np.ndarray:
    """Joint CAR precision (I - rho W) / tau2."""
    if not tau2 > 0:
        raise DomainError("tau2 must be positive")
    if np.any(layout.adjacency):
        b = rho_bounds(layout)
        if not rho > b.low:
            raise DomainError(f"rho={rho} not above lower bound 1/lambda_min={b.low}")
        if not rho < b.high:
            raise DomainError(f"rho={rho} not below upper bound 1/lambda_max={b.high}")
    elif rho != 0:
        raise DomainError("rho must be 0 for a graph without edges")
    n = layout.n_units
    return (np.eye(n) - rho * layout.adjacency) / tau2


def car_logdet(eigenvalues: np.ndarray, rho) -> np.ndarray:
    """log det(I - rho W) from the adjacency spectrum; vectorised over rho."""
    rho = np.asarray(rho, dtype=float)
    return np.log1p(-np.multiply.outer(rho, eigenvalues)).sum(axis=-1)


def exp_correlation(dist: np.ndarray, phi: float) -> np.ndarray:
    if not phi > 0:
        raise DomainError("phi must be positive")
    return np.exp(-phi * dist)


def gp_correlation(layout: SpatialLayout, phi: float, normalize: bool = True) -> np.ndarray:
    """H(phi) with 1e-8 diagonal jitter added when it is numerically singular."""
    H = exp_correlation(layout.distances(normalize), phi)
    if layout.n_units > 1:
        d = layout.distances(normalize)
        off = d[~np.eye(layout.n_units, dtype=bool)]
        if off.min() < 1e-12 or np.linalg.cond(H) > 1e12:
            logger.warning("duplicate or near-duplicate centroids; adding %.0e jitter to H", GP_JITTER)
            H = H + GP_JITTER * np.eye(layout.n_units)
    return H


def gp_covariance(layout: SpatialLayout, phi: float, T, normalize: bool = True) -> np.ndarray:
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if not np.allclose(T, T.T):
        raise DomainError("T must be symmetric")
    try:
        np.linalg.cholesky(T)
    except np.linalg.LinAlgError:
        raise DomainError("T must be positive definite") from None
    return np.kron(gp_correlation(layout, phi, normalize), T)


def default_phi(layout: SpatialLayout, normalize: bool = True) -> float:
    """Effective-range heuristic: correlation e^-3 at the largest distance."""
    d = layout.distances(normalize)
    dmax = d.max()
    return 3.0 / dmax if dmax > 0 else 1.0


# -- ingestion ---------------------------------------------------------------

def _read_text(source) -> tuple[str, str]:
    if isinstance(source, (str, Path)) and Path(source).exists():
        return Path(source).read_text(encoding="utf-8"), str(source)
    if hasattr(source, "read"):
        return source.read(), getattr(source, "name", "<stream>")
    if isinstance(source, str):
        return source, "<string>"
    raise IngestionError(f"cannot read layout source {source!r}")


def _read_centroids(source):
    text, label = _read_text(source)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0][:3]] != ["unit", "lon", "lat"]:
        raise IngestionError(f"{label}:1: centroid header must be 'unit,lon,lat'")
    names, coords = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise IngestionError(f"{label}:{lineno}: expected 3 fields, got {len(row)}")
        name = row[0].strip()
        if name in names:
            raise IngestionError(f"{label}:{lineno}: duplicate unit '{name}'")
        try:
            coords.append((float(row[1]), float(row[2])))
        except ValueError:
            raise IngestionError(f"{label}:{lineno}: non-numeric coordinate") from None
        names.append(name)
    return names, np.array(coords, dtype=float).reshape(-1, 2)


def _read_adjacency(source, names: list[str]) -> np.ndarray:
    text, label = _read_text(source)
    rows = [r for r in csv.reader(io.StringIO(text))]
    if not rows:
        raise IngestionError(f"{label}:1: empty adjacency file")
    index = {nm: k for k, nm in enumerate(names)}
    n = len(names)
    W = np.zeros((n, n))
    header = [h.strip() for h in rows[0]]
    if header == ["unit_a", "unit_b"]:
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise IngestionError(f"{label}:{lineno}: edge lines need exactly 2 fields")
            a, b = row[0].strip(), row[1].strip()
            for nm in (a, b):
                if nm not in index:
                    raise IngestionError(f"{label}:{lineno}: unknown unit '{nm}'")
            if a == b:
                raise IngestionError(f"{label}:{lineno}: self-loop on '{a}'")
            W[index[a], index[b]] = W[index[b], index[a]] = 1.0
        return W
    # dense matrix: header row of unit names, first column unit names
    col_names = header[1:]
    if sorted(col_names) != sorted(names):
        raise IngestionError(f"{label}:1: matrix header must list every centroid unit")
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(col_names) + 1:
            raise IngestionError(f"{label}:{lineno}: ragged matrix row")
        a = row[0].strip()
        if a not in index:
            raise IngestionError(f"{label}:{lineno}: unknown unit '{a}'")
        seen.add(a)
        for nm, cell in zip(col_names, row[1:]):
            cell = cell.strip()
            if cell not in ("0", "1"):
                raise IngestionError(f"{label}:{lineno}: entries must be 0 or 1")
            if cell == "1":
                if nm == a:
                    raise IngestionError(f"{label}:{lineno}: self-loop on '{a}'")
                W[index[a], index[nm]] = 1.0
    if len(seen) != n:
        raise IngestionError(f"{label}: matrix is missing rows for some units")
    if not np.array_equal(W, W.T):
        i, j = np.argwhere(W != W.T)[0]
        raise IngestionError(
            f"{label}:{2 + i}: asymmetric matrix ('{names[i]}','{names[j]}')"
        )
    return W


def load_layout(centroid_source, adjacency_source) -> SpatialLayout:
    """Read a centroid CSV and an adjacency edge list or dense 0/1 matrix."""
    names, coords = _read_centroids(centroid_source)
    W = _read_adjacency(adjacency_source, names)
    return SpatialLayout(len(names), coords, W, names)


def load_region_map(source, layout: SpatialLayout) -> np.ndarray:
    text, label = _read_text(source)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0][:2]] != ["unit", "region"]:
        raise IngestionError(f"{label}:1: region header must be 'unit,region'")
    out = np.full(layout.n_units, -1, dtype=np.int64)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            k = layout.index_of(row[0].strip())
        except (KeyError, ValueError):
            raise IngestionError(f"{label}:{lineno}: unknown unit '{row[0]}'") from None
        out[k] = int(row[1])
    if np.any(out < 0):
        raise IngestionError(f"{label}: region map does not cover every unit")
    return out


def _data_file(name: str):
    return resources.files("svcaft").joinpath("data").joinpath(name)


def louisiana_layout() -> SpatialLayout:
    """The 64 Louisiana parishes (2016 Census cartographic boundaries, queen contiguity)."""
    with resources.as_file(_data_file("louisiana_centroids.csv")) as c, \
            resources.as_file(_data_file("louisiana_adjacency.csv")) as a:
        return load_layout(c, a)


def louisiana_regions(layout: SpatialLayout | None = None) -> np.ndarray:
    layout = layout or louisiana_layout()
    with resources.as_file(_data_file("louisiana_regions.csv")) as r:
        return load_region_map(r, layout)
