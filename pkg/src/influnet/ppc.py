"""Posterior-predictive checks and frequentist coverage of credible intervals."""

from __future__ import annotations

import json
import math
from dataclasses import replace

import numpy as np
from scipy.optimize import brentq

from . import graph
from .graph import DirectedNetwork, UndefinedStatistic
from .mcmc import PosteriorSamples, SamplerConfig, aligned_mean_positions, procrustes_align, run_sampler
from .model import Hyperparams, LatentState, expit, logit_matrix


def edge_probabilities(state: LatentState) -> np.ndarray:
    prob = expit(logit_matrix(state))
    np.fill_diagonal(prob, 0.0)
    return prob


def simulate_network(state: LatentState, rng) -> DirectedNetwork:
    """Independent Bernoulli edge for every ordered pair i != j."""
    prob = edge_probabilities(state)
    return DirectedNetwork.from_adjacency(rng.random(prob.shape) < prob)


def sample_prior_state(n: int, p: int, hyper: Hyperparams, rng) -> LatentState:
    """Draw (omega2, sigma2, O, U) from the hierarchical prior."""
    omega2 = hyper.b_omega / rng.gamma(hyper.a_omega)
    sigma2 = hyper.b_sigma / rng.gamma(hyper.a_sigma)
    O = math.sqrt(omega2) * rng.standard_normal(n)
    U = math.sqrt(sigma2) * rng.standard_normal((n, p))
    return LatentState(O, U, omega2, sigma2)


def case_study_like_state(rng, n: int = 634, n_edges: float = 745.0,
                          n_influencers: int = 60) -> LatentState:
    """Synthetic truth shaped like a sparse retweet influence network.

    A small core of influencers with capacity around -3.5 and a periphery
    around -8; latent positions lie near one diagonal with two camps of
    opposite sign. Capacities are shifted jointly so the expected edge count
    equals ``n_edges``.
    """
    k = min(n_influencers, n)
    O = np.r_[rng.normal(-3.5, 0.5, k), rng.normal(-8.0, 1.0, n - k)]
    t = rng.choice([-1.0, 1.0], n) * rng.gamma(4.0, 0.4, n)
    U = np.column_stack([t, t]) / math.sqrt(2) + rng.normal(0.0, 0.15, (n, 2))

    def excess(shift):
        return edge_probabilities(LatentState(O + shift, U)).sum() - n_edges

    return LatentState(O + brentq(excess, -20.0, 20.0), U)


def credible_interval(draws, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed percentile interval.

    Quantiles use linear interpolation between order statistics at position
    ``q * (B - 1)`` (numpy's default rule); every interval in this package
    goes through here.
    """
    draws = np.asarray(draws, dtype=np.float64)
    if draws.shape[0] < 2:
        raise ValueError("need at least 2 draws")
    lo, hi = np.quantile(draws, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return lo, hi


def tail_probability(replicates, observed: float) -> float:
    """Two-sided posterior-predictive p-value, ignoring missing replicates."""
    r = np.asarray(replicates, dtype=np.float64)
    r = r[~np.isnan(r)]
    if r.size == 0 or observed is None or not np.isfinite(observed):
        return float("nan")
    upper = np.mean(r >= observed)
    lower = np.mean(r <= observed)
    return float(min(1.0, 2.0 * min(upper, lower)))


def _evaluate(name: str, net: DirectedNetwork) -> float:
    try:
        return float(graph.STATISTICS[name](net))
    except UndefinedStatistic:
        return float("nan")


def posterior_predictive_check(samples: PosteriorSamples, net: DirectedNetwork, statistics,
                               rng) -> dict:
    """Simulate one network per kept draw and compare statistics with ``net``.

    Returns ``{name: {"replicates", "observed", "tail_probability",
    "n_missing"}}``; replicates where a statistic is undefined are NaN.
    """
    statistics = list(statistics)
    unknown = [s for s in statistics if s not in graph.STATISTICS]
    if unknown:
        raise KeyError(f"unknown statistics: {unknown}")
    reps = {s: np.empty(len(samples)) for s in statistics}
    for b in range(len(samples)):
        sim = simulate_network(samples.draw(b), rng)
        for s in statistics:
            reps[s][b] = _evaluate(s, sim)
    out = {}
    for s in statistics:
        obs = _evaluate(s, net)
        out[s] = {
            "replicates": reps[s],
            "observed": obs,
            "tail_probability": tail_probability(reps[s], obs),
            "n_missing": int(np.isnan(reps[s]).sum()),
        }
    return out


def coverage_experiment(truth: LatentState, hyper: Hyperparams, config: SamplerConfig,
                        level: float = 0.95, rng=None) -> dict:
    """Simulate data from ``truth``, refit, and report interval coverage.

    Coverage of u is coordinate-wise after rotating the truth into the
    frame of the Procrustes-aligned posterior mean.
    """
    if not 0 < level <= 1:
        raise ValueError("level must lie in (0, 1]")
    if rng is None:
        rng = np.random.default_rng([config.seed, 1])
    net = simulate_network(truth, rng)
    samples = run_sampler(net, hyper, replace(config, p=truth.p))
    lo, hi = credible_interval(samples.O, level)
    cov_O = float(np.mean((truth.O >= lo) & (truth.O <= hi)))
    U_bar, aligned = aligned_mean_positions(samples.U)
    lo_u, hi_u = credible_interval(aligned, level)
    t_u = procrustes_align(U_bar, truth.U)
    cov_u = float(np.mean((t_u >= lo_u) & (t_u <= hi_u)))
    return {"coverage_O": cov_O, "coverage_u": cov_u, "n_edges": net.m,
            "acceptance": samples.acceptance_rates}


def write_ppc(result: dict, csv_path, json_path) -> dict:
    """Replicates as long-format CSV plus a JSON summary."""
    with open(csv_path, "w") as fh:
        fh.write("statistic,replicate_index,value\n")
        for name, r in result.items():
            for k, v in enumerate(r["replicates"]):
                fh.write(f"{name},{k},{'' if np.isnan(v) else repr(float(v))}\n")
    summary = {"schema": "ppc-summary/1", "statistics": {
        name: {"observed": r["observed"], "tail_probability": r["tail_probability"],
               "n_missing": r["n_missing"], "n_replicates": int(len(r["replicates"]))}
        for name, r in result.items()}}
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary
