"""Survival CSV ingestion, run configuration and result files."""
from __future__ import annotations

import configparser
import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .mcmc import McmcConfig
from .model import SurvivalDataset
from .priors import CARSettings, DPSettings, GPSettings, PriorSpec
from .simulation import ScenarioSpec
from .spatial import SpatialLayout

ZERO_TIME_ADJUSTMENT = 0.0001


class DataError(ValueError):
    """Malformed input data; message carries file name and line number."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _data_lines(path):
    """Yield (line number, row) skipping '#' echo lines and blank lines."""
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or (row[0].startswith("#")) or all(not c.strip() for c in row):
                continue
            yield lineno, row


def load_survival_csv(path, adjust_zero: bool = False, layout: SpatialLayout | None = None,
                      unit_names: list[str] | None = None) -> SurvivalDataset:
    """Read ``unit,time,event,x1,...``; the intercept column is prepended.

    ``event`` is 1 for an observed event and 0 for right censoring.  Units are
    resolved against the layout names when a layout is given, otherwise in
    order of first appearance.  Zero times are rejected unless ``adjust_zero``
    is set, in which case they become 0.0001.
    """
    path = Path(path)
    rows = _data_lines(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    header = [h.strip() for h in header]
    if header[:3] != ["unit", "time", "event"]:
        raise DataError(f"{path}:{lineno}: header must start with 'unit,time,event'")
    cov_names = header[3:]
    names = list(layout.names) if layout is not None and layout.names else (
        list(unit_names) if unit_names is not None else None)
    fixed = names is not None
    index = {nm: k for k, nm in enumerate(names or [])}
    units, times, events, covs = [], [], [], []
    for lineno, row in rows:
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        name = row[0].strip()
        if name not in index:
            if fixed:
                raise DataError(f"{path}:{lineno}: unknown unit '{name}'")
            index[name] = len(index)
        try:
            t = float(row[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}: time is not a number") from None
        if not np.isfinite(t) or t < 0:
            raise DataError(f"{path}:{lineno}: negative or non-finite time {row[1]!r}")
        if t == 0:
            if not adjust_zero:
                raise DataError(f"{path}:{lineno}: zero survival time (use the zero-time adjustment flag)")
            t = ZERO_TIME_ADJUSTMENT
        ev = row[2].strip()
        if ev not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: event must be 0 or 1, got {ev!r}")
        try:
            x = [float(v) for v in row[3:]]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric covariate") from None
        units.append(index[name])
        times.append(t)
        events.append(ev == "1")
        covs.append(x)
    n_units = len(index)
    X = np.column_stack([np.ones(len(units)), np.array(covs, dtype=float).reshape(len(units), len(cov_names))])
    ordered = sorted(index, key=index.get)
    return SurvivalDataset(np.array(units, dtype=np.int64), np.array(times), np.array(events, dtype=bool),
                           X, n_units, unit_names=ordered, covariate_names=cov_names)


def write_survival_csv(data: SurvivalDataset, path, echo: str | None = None) -> None:
    names = data.unit_names or [str(i) for i in range(data.n_units)]
    covs = data.covariate_names or [f"x{j}" for j in range(1, data.p)]
    with open(path, "w", newline="", encoding="utf-8") as f:
        if echo:
            f.write(f"# {echo}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["unit", "time", "event", *covs])
        for k in range(data.n_records):
            w.writerow([names[data.unit[k]], repr(float(data.time[k])), int(data.event[k]),
                        *[repr(float(v)) for v in data.X[k, 1:]]])


# -- run configuration ---------------------------------------------------------

@dataclass
class RunConfig:
    survival: Path | None = None
    centroids: Path | None = None
    adjacency: Path | None = None
    regions: Path | None = None
    boundaries: Path | None = None
    boundary_key: str = "unit"
    adjust_zero: bool = False
    prior: PriorSpec = field(default_factory=PriorSpec)
    priors: list[str] = field(default_factory=lambda: ["gp", "car", "dp"])
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    replicates: int = 10
    level: float = 0.95
    workers: int = 1
    output: Path = Path("out")
    write_draws: bool = False
    louisiana: bool = False

    def echo(self) -> dict:
        return {
            "prior": self.prior.kind,
            "seed": self.mcmc.seed,
            "n_iter": self.mcmc.n_iter,
            "n_burnin": self.mcmc.n_burnin,
            "thin": self.mcmc.thin,
            "n_chains": self.mcmc.n_chains,
            "rho_grid": self.mcmc.rho_grid,
            "survival": str(self.survival) if self.survival else None,
            "adjust_zero": self.adjust_zero,
        }

    def echo_line(self, **extra) -> str:
        d = dict(self.echo(), **extra)
        return " ".join(f"{k}={v}" for k, v in d.items())


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _pair(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise ConfigError(f"expected two comma-separated numbers, got {text!r}")
    return v[0], v[1]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# section -> key -> converter
_SCHEMA = {
    "data": {"survival": Path, "centroids": Path, "adjacency": Path, "regions": Path,
             "boundaries": Path, "boundary_key": str, "adjust_zero": _bool, "louisiana": _bool},
    "prior": {"kind": str, "sigma_ig": _pair, "priors": str},
    "gp": {"phi": float, "sample_phi": _bool, "phi_range": _pair, "phi_grid": int,
           "mu_beta_prior_sd": float, "t_diag_ig": _pair, "normalize_coords": _bool},
    "car": {"tau2_ig": _pair},
    "dp": {"max_clusters": int, "alpha": float, "base_mu": _floats, "base_sigma_diag": _floats,
           "label_update": str},
    "mcmc": {"n_iter": int, "n_burnin": int, "thin": int, "seed": int, "n_chains": int,
             "rho_grid": int, "loglik": str},
    "scenario": {"kind": str, "base_beta": _floats, "n_per_unit": int, "censor_rate": float,
                 "perturb_var": float, "sigma_gen": float, "region_offset": float, "seed": int,
                 "replicates": int, "level": float, "workers": int},
    "output": {"dir": Path, "write_draws": _bool},
}


def parse_settings(pairs: dict[str, dict[str, str]]) -> RunConfig:
    """Build a RunConfig from {section: {key: text}} (config file plus overrides)."""
    vals: dict[str, dict] = {}
    for section, items in pairs.items():
        if section == "DEFAULT":
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, text in items.items():
            conv = _SCHEMA[section].get(key)
            if conv is None:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            try:
                vals.setdefault(section, {})[key] = conv(text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    try:
        data = vals.get("data", {})
        pr = dict(vals.get("prior", {}))
        priors_list = pr.pop("priors", None)
        gp = GPSettings(**vals.get("gp", {}))
        dp_vals = dict(vals.get("dp", {}))
        for k in ("base_mu", "base_sigma_diag"):
            if k in dp_vals:
                dp_vals[k] = np.array(dp_vals[k])
        prior = PriorSpec(gp=gp, car=CARSettings(**vals.get("car", {})), dp=DPSettings(**dp_vals), **pr)
        mcmc = McmcConfig(**vals.get("mcmc", {}))
        sc = dict(vals.get("scenario", {}))
        extra = {k: sc.pop(k) for k in ("replicates", "level", "workers") if k in sc}
        scenario = ScenarioSpec(**sc)
        out = vals.get("output", {})
        cfg = RunConfig(prior=prior, mcmc=mcmc, scenario=scenario, **data, **extra,
                        output=out.get("dir", Path("out")), write_draws=out.get("write_draws", False))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if priors_list is not None:
        cfg.priors = [p.strip().lower() for p in priors_list.split(",") if p.strip()]
    for path_attr in ("survival", "centroids", "adjacency", "regions", "boundaries"):
        p = getattr(cfg, path_attr)
        if p is not None and not Path(p).exists():
            raise ConfigError(f"[data] {path_attr}: file not found: {p}")
    if not 0 < cfg.level < 1:
        raise ConfigError("level must lie in (0, 1)")
    return cfg


def read_config(path=None, overrides: dict[str, dict[str, str]] | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base = path.parent
    else:
        base = Path(".")
    pairs = {s: dict(cp.items(s)) for s in cp.sections()}
    for sec, items in (overrides or {}).items():
        pairs.setdefault(sec, {}).update(items)
    # relative data paths in a config file resolve against the file's directory
    for key in ("survival", "centroids", "adjacency", "regions", "boundaries"):
        v = pairs.get("data", {}).get(key)
        if v and path is not None and not Path(v).is_absolute() and \
                key not in (overrides or {}).get("data", {}):
            pairs["data"][key] = str(base / v)
    return parse_settings(pairs)


# -- outputs -----------------------------------------------------------------------

def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"not serialisable: {type(o)}")


def write_unit_estimates(path, names, mean, lo, hi, echo: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# {echo}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["unit", "coef", "mean", "hpd_lo", "hpd_hi"])
        for i, nm in enumerate(names):
            for j in range(mean.shape[1]):
                w.writerow([nm, j, repr(float(mean[i, j])), repr(float(lo[i, j])), repr(float(hi[i, j]))])


def write_clusters(path, names, labels, echo: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# {echo}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["unit", "cluster"])
        for nm, z in zip(names, labels):
            w.writerow([nm, int(z)])


def write_map_geojson(path, layout: SpatialLayout, names, mean, lo, hi, clusters=None,
                      boundaries=None, boundary_key: str = "unit", echo: dict | None = None) -> None:
    """Per-unit attributes as GeoJSON; polygons come from ``boundaries`` when given."""
    geoms = {}
    if boundaries is not None:
        with open(boundaries, encoding="utf-8") as f:
            gj = json.load(f)
        for feat in gj.get("features", []):
            key = str(feat.get("properties", {}).get(boundary_key))
            geoms[key] = feat.get("geometry")
    features = []
    for i, nm in enumerate(names):
        props = {"unit": nm}
        for j in range(mean.shape[1]):
            props[f"beta{j}_mean"] = float(mean[i, j])
            props[f"beta{j}_hpd_lo"] = float(lo[i, j])
            props[f"beta{j}_hpd_hi"] = float(hi[i, j])
        if clusters is not None:
            props["cluster"] = int(clusters[i])
        geom = geoms.get(nm) or {"type": "Point",
                                 "coordinates": [float(layout.centroids[i, 0]), float(layout.centroids[i, 1])]}
        features.append({"type": "Feature", "properties": props, "geometry": geom})
    write_json({"type": "FeatureCollection", "features": features, "config": echo or {}}, path)
