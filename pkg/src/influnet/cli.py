"""Command-line entry point: ``influnet <command> ...``.

Config files use INI syntax (``[section]`` headers, ``key = value`` lines,
``#`` or ``;`` comments). ``fit`` and ``coverage`` read::

    [hyper]
    a_omega = 1
    b_omega = 1
    a_sigma = 1
    b_sigma = 1

    [sampler]
    n_samples = 5000
    warmup = 5000
    thin = 10
    p = 2
    # optional: proposal_sd_O, proposal_sd_u, adapt, target_accept_O, target_accept_u

Exit codes: 0 success, 2 usage/config/input error, 3 numeric failure,
4 internal invariant breach. Logs go to stderr; data only to ``--out``.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import analysis, diffusion, graph, mcmc, ppc, scenarios
from .model import (Hyperparams, LatentState, load_state, posterior_correlation_OI,
                    reparameterize, save_state)

log = logging.getLogger("influnet")

EXIT_USAGE, EXIT_NUMERIC, EXIT_INTERNAL = 2, 3, 4
SCHEMA_MAJOR = 1


class UsageError(Exception):
    pass


def _clean(obj):
    """JSON-safe copy: NaN/inf -> None, numpy scalars/arrays -> Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=False) + "\n")


def _check_schema(meta: dict, name: str) -> None:
    schema = str(meta.get("schema", ""))
    kind, _, ver = schema.partition("/")
    if kind != name:
        raise UsageError(f"expected a {name} file, found schema {schema!r}")
    if not ver.split(".")[0].isdigit() or int(ver.split(".")[0]) != SCHEMA_MAJOR:
        raise UsageError(f"unsupported {name} schema version {ver!r}")


def _load_network(path) -> graph.DirectedNetwork:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"edge list not found: {p}")
    with p.open(encoding="utf-8") as fh:
        try:
            net = graph.load_edge_list(fh)
        except graph.GraphError as e:
            raise UsageError(f"{p}: {e}") from e
    if net.n == 0:
        raise UsageError(f"{p}: no edges")
    return net


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# config


HYPER_KEYS = ("a_omega", "b_omega", "a_sigma", "b_sigma")
SAMPLER_REQUIRED = ("n_samples", "warmup", "thin", "p")
SAMPLER_OPTIONAL = {"proposal_sd_O": float, "proposal_sd_u": float, "adapt": None,
                    "target_accept_O": float, "target_accept_u": float, "init_u_var": float}


def read_config(path, seed: int) -> tuple[Hyperparams, mcmc.SamplerConfig, str]:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config not found: {p}")
    text = p.read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise UsageError(f"{p}: {e}") from e

    def get(section, key, conv):
        if not cp.has_section(section):
            raise UsageError(f"config is missing section [{section}]")
        if not cp.has_option(section, key):
            raise UsageError(f"config is missing key {section}.{key}")
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except ValueError as e:
            raise UsageError(f"config key {section}.{key}: bad value {raw!r}") from e

    try:
        hyper = Hyperparams(*(get("hyper", k, float) for k in HYPER_KEYS))
    except ValueError as e:
        raise UsageError(f"invalid hyperparameters: {e}") from e
    kw = {k: get("sampler", k, int) for k in SAMPLER_REQUIRED}
    for k, conv in SAMPLER_OPTIONAL.items():
        if cp.has_option("sampler", k):
            kw[k] = cp.getboolean("sampler", k) if conv is None else get("sampler", k, conv)
    try:
        config = mcmc.SamplerConfig(seed=seed, **kw)
    except ValueError as e:
        raise UsageError(f"invalid sampler settings: {e}") from e
    return hyper, config, hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# commands


def cmd_stats(args) -> int:
    net = graph.giant_component(_load_network(args.edges))
    stats = graph.describe(net)
    fga = graph.fast_greedy_communities(net)
    names = net.labels or [str(i) for i in range(net.n)]
    out = {"schema": "network-stats/1", "n": net.n, "edges": net.m, **stats,
           "communities": {"k": fga["partition"].k, "modularity": fga["modularity"],
                           "labels": dict(zip(names, fga["partition"].labels.tolist()))}}
    _write_json(Path(args.out), out)
    return 0


def cmd_fit(args) -> int:
    net = _load_network(args.edges)
    if args.giant:
        net = graph.giant_component(net)
    hyper, config, chash = read_config(args.config, args.seed)
    out = _out_dir(args.out)
    samples = mcmc.run_sampler(net, hyper, config)
    if not np.all(np.isfinite(samples.log_lik_trace)):
        log.error("non-finite log-likelihood in trace")
        return EXIT_NUMERIC
    mcmc.write_draws(samples, out / "draws.csv")
    ids = list(net.labels) if net.labels else list(range(net.n))
    (out / "ids.txt").write_text("\n".join(map(str, ids)) + "\n")
    dic = mcmc.compute_dic(samples, net) if len(samples) >= 2 else None
    U_bar, _ = mcmc.aligned_mean_positions(samples.U)
    mean_state = LatentState(samples.O.mean(axis=0), U_bar,
                             float(samples.omega2.mean()), float(samples.sigma2.mean()))
    save_state(mean_state, out / "posterior_mean.csv", ids)
    ppc_rho = None
    if len(samples) >= 2 and net.n >= 2:
        rho = posterior_correlation_OI(samples.draws)
        finite = rho[np.isfinite(rho)]
        if finite.size >= 2:
            lo, hi = ppc.credible_interval(finite, 0.95)
            ppc_rho = {"interval": [lo, hi], "contains_zero": bool(lo <= 0 <= hi)}
    manifest = {
        "schema": "fit-manifest/1",
        "seed": args.seed,
        "config_hash": chash,
        "config": {"hyper": asdict(hyper), "sampler": asdict(config)},
        "n": net.n, "p": config.p, "edges": net.m,
        "draws": len(samples),
        "acceptance_rates": samples.acceptance_rates,
        "ess": mcmc.chain_diagnostics(samples),
        "dic": dic,
        "rho_O_I": ppc_rho,
        "latent_pca_share": _pca_share(U_bar),
    }
    _write_json(out / "manifest.json", manifest)
    return 0


def _pca_share(U):
    try:
        return analysis.pca_variance_share(U).tolist()
    except (ValueError, graph.UndefinedStatistic):
        return None


def _load_fit(fit_dir, net) -> tuple[mcmc.PosteriorSamples, dict]:
    d = Path(fit_dir)
    mpath = d / "manifest.json"
    if not mpath.is_file():
        raise UsageError(f"fit manifest not found: {mpath}")
    meta = json.loads(mpath.read_text())
    _check_schema(meta, "fit-manifest")
    if meta["n"] != net.n:
        raise UsageError(f"fit has n={meta['n']} but network has n={net.n}")
    try:
        samples = mcmc.read_draws(d / "draws.csv", net.n, int(meta["p"]))
    except ValueError as e:
        raise UsageError(str(e)) from e
    return samples, meta


def cmd_ppc(args) -> int:
    net = _load_network(args.edges)
    if args.giant:
        net = graph.giant_component(net)
    samples, _ = _load_fit(args.fit, net)
    stats = [s.strip() for s in args.stats.split(",") if s.strip()]
    unknown = [s for s in stats if s not in graph.STATISTICS]
    if unknown:
        raise UsageError(f"unknown statistic {unknown[0]!r}; choose from {sorted(graph.STATISTICS)}")
    rng = np.random.default_rng(args.seed)
    result = ppc.posterior_predictive_check(samples, net, stats, rng)
    out = _out_dir(args.out)
    summary = ppc.write_ppc(result, out / "ppc.csv", out / "ppc_summary.json")
    _write_json(out / "ppc_summary.json", summary)
    return 0


def cmd_coverage(args) -> int:
    hyper, config, chash = read_config(args.config, args.seed)
    reps = []
    for r in range(args.reps):
        rng = np.random.default_rng([args.seed, r])
        truth = ppc.sample_prior_state(args.n, config.p, hyper, rng)
        cfg = mcmc.SamplerConfig(**{**asdict(config), "seed": int(rng.integers(2 ** 63))})
        reps.append(ppc.coverage_experiment(truth, hyper, cfg, args.level, rng))
        log.info("coverage rep %d: O=%.3f u=%.3f", r, reps[-1]["coverage_O"], reps[-1]["coverage_u"])
    out = {"schema": "coverage/1", "seed": args.seed, "config_hash": chash, "n": args.n,
           "level": args.level, "replicates": reps,
           "coverage_O": float(np.mean([r["coverage_O"] for r in reps])),
           "coverage_u": float(np.mean([r["coverage_u"] for r in reps]))}
    _write_json(Path(args.out), out)
    return 0


def _parse_seeds(spec: str, net) -> np.ndarray:
    names = list(net.labels) if net.labels else [str(i) for i in range(net.n)]
    index = {str(v): i for i, v in enumerate(names)}
    st = np.full(net.n, diffusion.State.I, dtype=np.int64)
    for item in spec.split(","):
        if not item.strip():
            continue
        state, _, vid = item.partition("=")
        if vid.strip() not in index:
            raise UsageError(f"unknown vertex id {vid.strip()!r} in --initial")
        try:
            st[index[vid.strip()]] = diffusion.State[state.strip().upper()]
        except KeyError as e:
            raise UsageError(f"unknown state {state!r} in --initial") from e
    return st


def cmd_diffuse(args) -> int:
    net = _load_network(args.edges)
    try:
        state, ids = load_state(args.state)
    except (OSError, KeyError, ValueError) as e:
        raise UsageError(f"cannot read state {args.state}: {e}") from e
    names = [str(x) for x in (net.labels or range(net.n))]
    if ids != names:
        for k, (a, b) in enumerate(zip(ids, names)):
            if a != b:
                raise UsageError(f"state row {k + 1} has id {a!r}, network has {b!r}")
        raise UsageError(f"state has {len(ids)} rows, network has {net.n} vertices")
    view = reparameterize(state)
    params = diffusion.DiffusionParams(state.O, view.I, view.tau, net)
    init = _parse_seeds(args.initial, net)
    stopping = diffusion.StoppingRule(args.band, args.stable_jumps)
    rng = np.random.default_rng(args.seed)
    trace = diffusion.run_cascade(params, init, stopping, args.engine, rng)
    out = _out_dir(args.out)
    diffusion.write_trace(trace, out / "trace.csv")
    summary = diffusion.write_summary(trace, out / "summary.json")
    _write_json(out / "summary.json", {**summary, "seed": args.seed, "engine": args.engine})
    return 0


def cmd_grid(args) -> int:
    cfg = scenarios.GridConfig(n=args.n, replicates=args.replicates, master_seed=args.seed,
                               engine=args.engine)
    records = scenarios.run_experiment_grid(cfg, workers=args.threads)
    scenarios.write_grid_csv(records, args.out)
    return 0


def cmd_anova(args) -> int:
    try:
        records = scenarios.read_grid_csv(args.grid)
    except FileNotFoundError as e:
        raise UsageError(f"grid file not found: {args.grid}") from e
    except ValueError as e:
        raise UsageError(str(e)) from e
    responses = ["log_total_time", "log_reach"] if args.response == "both" else [args.response]
    reports = [analysis.anova_report(analysis.nested_anova(records, r)) for r in responses]
    _write_json(Path(args.out), {"schema": "anova/1", "coding": analysis.CODING, "reports": reports})
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="influnet", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--seed", type=int, default=0, help="master RNG seed (default 0)")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--threads", type=int, default=1, help="worker processes where supported")

    p = sub.add_parser("stats", help="descriptive statistics of the giant component")
    p.add_argument("edges", help="edge-list CSV (source,target)")
    common(p, "output JSON path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("fit", help="run the MCMC sampler")
    p.add_argument("edges")
    p.add_argument("config", help="INI config with [hyper] and [sampler]")
    p.add_argument("--giant", action="store_true", help="restrict to the giant component first")
    common(p, "output directory (draws.csv, manifest.json, posterior_mean.csv)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ppc", help="posterior-predictive check from a fit directory")
    p.add_argument("edges")
    p.add_argument("fit", help="directory written by `fit`")
    p.add_argument("--stats", default="density,transitivity,assortativity,degree_sd",
                   help="comma-separated statistic names")
    p.add_argument("--giant", action="store_true")
    common(p, "output directory (ppc.csv, ppc_summary.json)")
    p.set_defaults(func=cmd_ppc)

    p = sub.add_parser("coverage", help="interval coverage on data simulated from the prior")
    p.add_argument("config")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--level", type=float, default=0.95)
    common(p, "output JSON path")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("diffuse", help="simulate one cascade")
    p.add_argument("edges")
    p.add_argument("state", help="latent state CSV (id,O,u_1..u_p) with JSON sidecar")
    p.add_argument("--initial", required=True, help="initial non-I states, e.g. S=alice,R=bob")
    p.add_argument("--engine", choices=sorted(diffusion.ENGINES), default="race")
    p.add_argument("--band", type=float, default=0.05, help="stability band as a fraction of n")
    p.add_argument("--stable-jumps", type=int, default=None, help="stable jumps to stop (default 3n)")
    common(p, "output directory (trace.csv, summary.json)")
    p.set_defaults(func=cmd_diffuse)

    p = sub.add_parser("grid", help="run the 12-scenario x replicates experiment grid")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--replicates", type=int, default=4)
    p.add_argument("--engine", choices=sorted(diffusion.ENGINES), default="race")
    common(p, "output CSV path")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("anova", help="nested ANOVA of a grid CSV")
    p.add_argument("grid")
    p.add_argument("--response", choices=["log_total_time", "log_reach", "both"], default="both")
    common(p, "output JSON path")
    p.set_defaults(func=cmd_anova)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as e:
        log.error("%s", e)
        return EXIT_USAGE
    except (scenarios.CalibrationError, scenarios.ScenarioError, FloatingPointError) as e:
        log.error("numeric failure: %s", e)
        return EXIT_NUMERIC
    except (diffusion.InvalidJump, AssertionError) as e:
        log.error("internal invariant breach: %s", e)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
