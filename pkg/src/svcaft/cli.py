"""Command-line interface: fit, compare, simulate, summarize.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 sampler error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .mcmc import (
    PosteriorSamples,
    beta_hpd,
    combine_chains,
    modal_clusters,
    run_chains,
    summarize,
    write_summary_csv,
)
from .model import ContractError, DomainError
from .priors import PriorSpec, SamplerError
from .selection import compare, lpml, write_ranking_csv
from .simulation import run_study, simulate_replicate, write_replicates_csv, write_study_csv
from .spatial import IngestionError, load_layout, load_region_map, louisiana_layout, louisiana_regions

logger = logging.getLogger("svcaft")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SAMPLER = 0, 1, 2, 3


def _overrides(args) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}

    def put(sec, key, val):
        if val is not None:
            out.setdefault(sec, {})[key] = str(val)

    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise io.ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, val = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        put(sec.strip(), key.strip(), val.strip())
    put("data", "survival", getattr(args, "data", None))
    put("data", "centroids", getattr(args, "centroids", None))
    put("data", "adjacency", getattr(args, "adjacency", None))
    put("data", "regions", getattr(args, "regions", None))
    put("data", "boundaries", getattr(args, "boundaries", None))
    if getattr(args, "louisiana", False):
        put("data", "louisiana", "true")
    if getattr(args, "adjust_zero", False):
        put("data", "adjust_zero", "true")
    put("prior", "kind", getattr(args, "prior", None))
    put("prior", "priors", getattr(args, "priors", None))
    put("mcmc", "n_iter", args.n_iter)
    put("mcmc", "n_burnin", args.burnin)
    put("mcmc", "thin", args.thin)
    put("mcmc", "seed", args.seed)
    put("mcmc", "n_chains", getattr(args, "chains", None))
    put("scenario", "kind", getattr(args, "scenario", None))
    put("scenario", "replicates", getattr(args, "replicates", None))
    put("scenario", "workers", getattr(args, "workers", None))
    put("output", "dir", args.out)
    if getattr(args, "draws", False):
        put("output", "write_draws", "true")
    return out


def _layout(cfg: io.RunConfig):
    if cfg.louisiana:
        return louisiana_layout()
    if cfg.centroids is None or cfg.adjacency is None:
        return None
    return load_layout(cfg.centroids, cfg.adjacency)


def _load_data(cfg: io.RunConfig, layout):
    if cfg.survival is None:
        raise io.ConfigError("[data] survival is required")
    return io.load_survival_csv(cfg.survival, cfg.adjust_zero, layout)


def _fit(cfg: io.RunConfig, data, layout, spec: PriorSpec, outdir: Path | None, write: bool = True):
    t0 = time.perf_counter()
    chains = run_chains(data, layout, spec, cfg.mcmc, workers=cfg.workers)
    samples = combine_chains(chains)
    runtime = time.perf_counter() - t0
    rep = samples.cpo_stream.report() if samples.cpo_stream is not None else (
        lpml(samples.loglik_matrix) if samples.loglik_matrix is not None else None)
    if not write:
        return samples, rep
    names = data.unit_names or [str(i) for i in range(data.n_units)]
    echo = cfg.echo_line(prior=spec.kind)
    mean, lo, hi = beta_hpd(samples, cfg.level)
    outdir.mkdir(parents=True, exist_ok=True)
    io.write_unit_estimates(outdir / "unit_estimates.csv", names, mean, lo, hi, echo)
    clusters = modal_clusters(samples)
    if clusters is not None:
        io.write_clusters(outdir / "clusters.csv", names, clusters, echo)
    if layout is not None:
        io.write_map_geojson(outdir / "map_data.geojson", layout, names, mean, lo, hi, clusters,
                             cfg.boundaries, cfg.boundary_key, dict(cfg.echo(), prior=spec.kind))
    if cfg.write_draws:
        samples.to_csv(outdir / "draws.csv")
    summ = summarize(samples, cfg.level)
    sd = {k: v for k, v in summ.items()}
    report = {
        "config": dict(cfg.echo(), prior=spec.kind),
        "n_units": data.n_units,
        "p": data.p,
        "n_records": data.n_records,
        "kept_draws": int(samples.draws.shape[0]),
        "runtime_seconds": runtime,
        "lpml": None if rep is None else rep.lpml,
        "n_unstable_cpo": None if rep is None else rep.n_unstable,
        "units": [
            {"unit": nm,
             "beta": [{"mean": mean[i, j], "sd": sd[f"beta[{i},{j}]"].sd,
                       "hpd_lo": lo[i, j], "hpd_hi": hi[i, j]} for j in range(data.p)],
             "sigma": sd[f"sigma[{i}]"]}
            for i, nm in enumerate(names)
        ],
        "hyperparameters": {k: v for k, v in summ.items()
                            if not (k.startswith("beta[") or k.startswith("sigma[") or k.startswith("z["))},
        "clusters": None if clusters is None else dict(zip(names, clusters.tolist())),
    }
    io.write_json(report, outdir / "fit_report.json")
    return samples, rep


def cmd_fit(args) -> int:
    cfg = io.read_config(args.config, _overrides(args))
    layout = _layout(cfg)
    data = _load_data(cfg, layout)
    _, rep = _fit(cfg, data, layout, cfg.prior, Path(cfg.output))
    msg = f"fit {cfg.prior.kind}: {data.n_records} records, {data.n_units} units"
    if rep is not None:
        msg += f", LPML {rep.lpml:.2f}"
    print(msg)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfgs = []
    if args.configs:
        for path in args.configs:
            cfgs.append(io.read_config(path, _overrides(args)))
    else:
        base = io.read_config(args.config, _overrides(args))
        for kind in base.priors:
            c = io.read_config(args.config, _overrides(args))
            c.prior = PriorSpec(kind, c.prior.sigma_ig, c.prior.gp, c.prior.car, c.prior.dp)
            cfgs.append(c)
    if len(cfgs) < 2:
        raise io.ConfigError("compare needs at least two priors")
    datasets = []
    for c in cfgs:
        layout = _layout(c)
        datasets.append((c, layout, _load_data(c, layout)))
    ref = datasets[0][2]
    for c, _, d in datasets[1:]:
        if not d.same_data(ref):
            raise io.DataError(f"dataset for prior '{c.prior.kind}' differs from the first entry")
    reports = []
    for c, layout, d in datasets:
        if c.mcmc.loglik == "none":
            raise io.ConfigError("compare needs per-record log-likelihoods (mcmc.loglik != none)")
        sub = Path(cfgs[0].output) / c.prior.kind
        _, rep = _fit(c, d, layout, c.prior, sub)
        reports.append((c.prior.kind, rep))
    ranking = compare(reports)
    out = Path(cfgs[0].output)
    out.mkdir(parents=True, exist_ok=True)
    write_ranking_csv(ranking, out / "ranking.csv")
    for rank, label, rep in ranking:
        print(f"{rank}. {label}: LPML {rep.lpml:.2f} ({rep.n_unstable} unstable CPOs)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = io.read_config(args.config, _overrides(args))
    layout = _layout(cfg) or louisiana_layout()
    sc = cfg.scenario
    if args.seed is not None and "seed" not in (_overrides(args).get("scenario") or {}):
        sc.seed = args.seed
    if sc.kind == "regional" and sc.region_map is None:
        sc.region_map = load_region_map(cfg.regions, layout) if cfg.regions else louisiana_regions(layout)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    if getattr(args, "dataset_only", False):
        _, data = simulate_replicate(sc, layout, 0)
        io.write_survival_csv(data, out / "simulated.csv", echo=f"scenario={sc.kind} seed={sc.seed}")
        print(f"wrote {out / 'simulated.csv'}")
        return EXIT_OK
    study = run_study(sc, layout, cfg.priors, cfg.replicates, cfg.mcmc, cfg.level, cfg.workers)
    write_study_csv(study, out / "study.csv")
    write_replicates_csv(study, out / "replicates.csv")
    io.write_json({"config": cfg.echo(), "scenario": sc.kind, "scenario_seed": sc.seed,
                   "replicates": cfg.replicates, "priors": cfg.priors}, out / "study_config.json")
    for row in study.table_rows():
        print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


def cmd_summarize(args) -> int:
    try:
        samples = PosteriorSamples.from_csv(args.draws)
    except (OSError, ValueError, IndexError) as exc:
        raise io.DataError(f"{args.draws}: {exc}") from None
    summ = summarize(samples, args.level)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_summary_csv(summ, out)
    print(f"wrote {out} ({len(summ)} parameters)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="svcaft", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, with_data=True):
        p.add_argument("-c", "--config", help="INI config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config key (repeatable)")
        if with_data:
            p.add_argument("--data", help="survival CSV (unit,time,event,x1,...)")
            p.add_argument("--adjust-zero", action="store_true",
                           help="replace zero survival times by 0.0001 instead of failing")
        p.add_argument("--centroids")
        p.add_argument("--adjacency")
        p.add_argument("--louisiana", action="store_true", help="use the bundled 64-parish layout")
        p.add_argument("--n-iter", type=int)
        p.add_argument("--burnin", type=int)
        p.add_argument("--thin", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("fit", help="fit one prior")
    common(p)
    p.add_argument("--prior", choices=["pooled", "gp", "car", "dp"])
    p.add_argument("--chains", type=int)
    p.add_argument("--boundaries", help="GeoJSON with unit polygons for map_data.geojson")
    p.add_argument("--draws", action="store_true", help="also write draws.csv")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="rank priors by LPML on one dataset")
    common(p)
    p.add_argument("--priors", help="comma list, e.g. car,gp,dp,pooled")
    p.add_argument("--configs", nargs="+", help="one config file per prior instead of --priors")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="run a simulation study")
    common(p, with_data=False)
    p.add_argument("--scenario", choices=["null", "smooth", "random", "regional"])
    p.add_argument("--priors", help="comma list of priors to fit")
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--regions", help="CSV unit,region for the regional scenario")
    p.add_argument("--dataset-only", action="store_true", help="write one simulated dataset and stop")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("summarize", help="summaries from a draws CSV")
    p.add_argument("draws")
    p.add_argument("-o", "--output", default="summary.csv")
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_summarize)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except io.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (io.DataError, IngestionError, DomainError, ContractError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SamplerError, np.linalg.LinAlgError) as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return EXIT_SAMPLER


if __name__ == "__main__":
    sys.exit(main())
