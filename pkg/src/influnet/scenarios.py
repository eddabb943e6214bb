"""Synthetic diffusion scenarios: parameter laws, similarity matrices, planted
two-community networks, degree calibration and initiator selection.
"""

from __future__ import annotations

import csv
import functools
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import special, stats

from .diffusion import DiffusionParams, State, StoppingRule, cascade_summaries, run_cascade
from .graph import DirectedNetwork, Partition, modularity

log = logging.getLogger(__name__)

O_DISTS = ("constant_calibrated", "gamma_shifted")
I_DISTS = ("constant_2", "gamma")
REGIMES = ("low", "high")
RULES = ("random", "max_capacity")

# Gamma laws as (shape, rate)
CAPACITY_GAMMA = (3.0, 0.75)
SUSCEPTIBILITY_GAMMA = (14 / 5, 7 / 5)
CONSTANT_CAPACITY = 4.0
CONSTANT_SUSCEPTIBILITY = 2.0

LOW_MODULARITY_MAX = 0.001
HIGH_MODULARITY_MIN = 0.05
# kappa tried on successive attempts in the high-modularity regime
HIGH_KAPPA_GRID = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)


class CalibrationError(RuntimeError):
    pass


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    n: int = 1000
    o_dist: str = "gamma_shifted"
    i_dist: str = "gamma"
    modularity_regime: str = "low"
    initiator_rule: str = "random"
    kappa: float = 0.0
    seed: int = 0
    spec_id: int = 0
    target_degree: float = 10.0

    def __post_init__(self):
        if self.o_dist not in O_DISTS:
            raise ValueError(f"o_dist must be one of {O_DISTS}")
        if self.i_dist not in I_DISTS:
            raise ValueError(f"i_dist must be one of {I_DISTS}")
        if self.modularity_regime not in REGIMES:
            raise ValueError(f"modularity_regime must be one of {REGIMES}")
        if self.initiator_rule not in RULES:
            raise ValueError(f"initiator_rule must be one of {RULES}")
        if self.initiator_rule == "max_capacity" and self.o_dist == "constant_calibrated":
            raise ValueError("max_capacity initiators need non-constant capacities")
        if not 0 <= self.kappa < 1:
            raise ValueError("kappa must lie in [0, 1)")
        if self.n < 4:
            raise ValueError("n must be >= 4")


@dataclass
class ExperimentRecord:
    spec_id: int
    replicate: int
    o_dist: str
    i_dist: str
    modularity_regime: str
    initiator_rule: str
    total_time: float
    reach: float
    realized_modularity: float
    realized_avg_degree: float
    kappa: float = float("nan")
    k_star: float = float("nan")
    n_jumps: int = 0
    stop_reason: str = ""


@dataclass
class ScenarioNetwork:
    net: DirectedNetwork
    groups: Partition
    O: np.ndarray
    I: np.ndarray
    tau: np.ndarray
    kappa: float
    k_star: float
    modularity: float
    attempts: int


def two_groups(n: int) -> Partition:
    """First half of the vertices in group 0, the rest in group 1."""
    return Partition(np.repeat([0, 1], [n // 2, n - n // 2]))


# ---------------------------------------------------------------------------
# parameter laws


def _capacity_base(spec: ScenarioSpec, rng) -> np.ndarray:
    """Capacities before the -k* shift."""
    if spec.o_dist == "constant_calibrated":
        return np.full(spec.n, CONSTANT_CAPACITY)
    shape, rate = CAPACITY_GAMMA
    return rng.gamma(shape, 1.0 / rate, spec.n)


def sample_capacities(spec: ScenarioSpec, k_star: float, rng) -> np.ndarray:
    return _capacity_base(spec, rng) - k_star


def sample_susceptibilities(spec: ScenarioSpec, rng) -> np.ndarray:
    if spec.i_dist == "constant_2":
        return np.full(spec.n, CONSTANT_SUSCEPTIBILITY)
    shape, rate = SUSCEPTIBILITY_GAMMA
    return rng.gamma(shape, 1.0 / rate, spec.n)


def sample_tau_matrix(n: int, kappa: float, groups, rng) -> np.ndarray:
    """Symmetric similarities: 1 - 2B within a group, -1 + 2B across, with
    B ~ Beta(1 - kappa, 1) drawn once per unordered pair. Diagonal is 0."""
    if not 0 <= kappa < 1:
        raise ValueError("kappa must lie in [0, 1)")
    labels = np.asarray(getattr(groups, "labels", groups))
    iu, ju = np.triu_indices(n, k=1)
    b = rng.beta(1.0 - kappa, 1.0, len(iu))
    same = labels[iu] == labels[ju]
    vals = np.where(same, 1.0 - 2.0 * b, -1.0 + 2.0 * b)
    tau = np.zeros((n, n))
    tau[iu, ju] = vals
    tau[ju, iu] = vals
    return tau


# ---------------------------------------------------------------------------
# calibration


def expected_average_degree(k_star: float, base_O: np.ndarray, I: np.ndarray, tau: np.ndarray) -> float:
    """2 E[#edges] / n for capacities ``base_O - k_star``."""
    n = len(base_O)
    eta = (base_O - k_star)[:, None] + tau * I[None, :]
    p = special.expit(eta)
    np.fill_diagonal(p, 0.0)
    return 2.0 * float(p.sum()) / n


@functools.lru_cache(maxsize=None)
def _ppf_table(shape: float, rate: float) -> tuple[np.ndarray, np.ndarray]:
    z = np.linspace(-20.0, 20.0, 40_001)
    return z, stats.gamma.ppf(special.expit(z), shape, scale=1.0 / rate)


def _gamma_ppf(u, shape: float, rate: float) -> np.ndarray:
    """Gamma quantiles by interpolation on a logit-spaced table."""
    z, q = _ppf_table(shape, rate)
    pos = np.clip((np.log(u) - np.log1p(-u) - z[0]) / (z[1] - z[0]), 0.0, len(z) - 1.000001)
    k = pos.astype(np.int64)
    w = pos - k
    return (1.0 - w) * q[k] + w * q[k + 1]


def calibrate_k_star(spec: ScenarioSpec, rng, n_pairs: int = 2_000_000, tol: float = 0.01,
                     bracket=(-20.0, 20.0), tau_override=None) -> float:
    """Find the shift k* giving expected average total degree ``spec.target_degree``.

    The expected degree is 2 (n - 1) E[expit(O_i + tau_ij I_j)] over one
    ordered pair drawn from the scenario's laws. It is estimated from
    ``n_pairs`` (capacity, susceptibility, similarity) triples, fixed once so
    the objective is smooth and decreasing in k*, then solved by bisection.
    ``tau_override`` replaces the similarity draws by a constant.
    """
    n = spec.n
    sizes = np.bincount(two_groups(n).labels)
    p_same = float(np.sum(sizes * (sizes - 1))) / (n * (n - 1))
    # Latin hypercube + inverse CDFs: stratifying the capacity tail matters,
    # since a few large capacities dominate the expected degree
    u = stats.qmc.LatinHypercube(d=4, seed=rng).random(n_pairs)
    if spec.o_dist == "constant_calibrated":
        base = np.full(n_pairs, CONSTANT_CAPACITY)
    else:
        base = _gamma_ppf(u[:, 0], *CAPACITY_GAMMA)
    if spec.i_dist == "constant_2":
        I = np.full(n_pairs, CONSTANT_SUSCEPTIBILITY)
    else:
        I = _gamma_ppf(u[:, 1], *SUSCEPTIBILITY_GAMMA)
    if tau_override is None:
        b = stats.beta.ppf(u[:, 2], 1.0 - spec.kappa, 1.0)
        tau = np.where(u[:, 3] < p_same, 1.0 - 2.0 * b, -1.0 + 2.0 * b)
    else:
        tau = np.full(n_pairs, float(tau_override))
    shifted = base + tau * I

    def f(k):
        return 2.0 * (n - 1) * float(np.mean(special.expit(shifted - k)))

    lo, hi = bracket
    target = spec.target_degree
    f_lo, f_hi = f(lo), f(hi)
    if not f_hi <= target <= f_lo:
        raise CalibrationError(f"target degree {target} not bracketed: f({lo})={f_lo:.4g}, f({hi})={f_hi:.4g}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        if abs(val - target) <= tol or hi - lo < 1e-10:
            return mid
        if val > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# networks and initiators


def _kappa_schedule(spec: ScenarioSpec, attempt: int) -> float:
    if spec.modularity_regime == "low":
        return spec.kappa
    grid = [k for k in HIGH_KAPPA_GRID if k >= spec.kappa] or [spec.kappa]
    return grid[min(attempt, len(grid) - 1)]


def in_band(regime: str, q: float) -> bool:
    return q < LOW_MODULARITY_MAX if regime == "low" else q > HIGH_MODULARITY_MIN


def generate_scenario_network(spec: ScenarioSpec, rng, max_retries: int = 50,
                              calibration_pairs: int = 2_000_000) -> ScenarioNetwork:
    """Planted two-community network whose group-partition modularity falls
    in the regime's band.

    Each attempt picks kappa (fixed in the low regime, rising along
    ``HIGH_KAPPA_GRID`` in the high regime), calibrates k* for it, draws
    O, I, tau and Bernoulli edges with probability expit(O_i + tau_ij I_j).
    """
    groups = two_groups(spec.n)
    k_cache: dict[float, float] = {}
    history = []
    for attempt in range(max_retries):
        kappa = _kappa_schedule(spec, attempt)
        sk = replace(spec, kappa=kappa)
        if kappa not in k_cache:
            k_cache[kappa] = calibrate_k_star(sk, rng, n_pairs=calibration_pairs)
        k_star = k_cache[kappa]
        O = sample_capacities(sk, k_star, rng)
        I = sample_susceptibilities(sk, rng)
        tau = sample_tau_matrix(spec.n, kappa, groups, rng)
        prob = special.expit(O[:, None] + tau * I[None, :])
        np.fill_diagonal(prob, 0.0)
        net = DirectedNetwork.from_adjacency(rng.random(prob.shape) < prob)
        q = modularity(net, groups)
        history.append((kappa, q))
        if in_band(spec.modularity_regime, q):
            return ScenarioNetwork(net, groups, O, I, tau, kappa, k_star, q, attempt + 1)
    raise ScenarioError(f"{spec.modularity_regime} modularity band not met in {max_retries} "
                        f"attempts; (kappa, Q) tried: {history[-5:]}")


def select_initiators(spec: ScenarioSpec, O, groups, rng) -> tuple[int, int]:
    """(seed in S, seed in R). Globally chosen in the low regime, one per
    community (group 0 -> S, group 1 -> R) in the high regime."""
    O = np.asarray(O)
    labels = np.asarray(getattr(groups, "labels", groups))
    if spec.initiator_rule == "max_capacity" and spec.o_dist == "constant_calibrated":
        raise ValueError("max_capacity initiators need non-constant capacities")
    if spec.modularity_regime == "low":
        if spec.initiator_rule == "random":
            a, b = rng.choice(len(O), size=2, replace=False)
            return int(a), int(b)
        order = np.lexsort((np.arange(len(O)), -O))
        return int(order[0]), int(order[1])
    seeds = []
    for c in (0, 1):
        members = np.flatnonzero(labels == c)
        if spec.initiator_rule == "random":
            seeds.append(int(rng.choice(members)))
        else:
            seeds.append(int(members[np.argmax(O[members])]))
    return seeds[0], seeds[1]


# ---------------------------------------------------------------------------
# experiment grid


@dataclass
class GridConfig:
    n: int = 1000
    replicates: int = 4
    master_seed: int = 0
    max_retries: int = 50
    calibration_pairs: int = 2_000_000
    engine: str = "race"
    stopping: StoppingRule = field(default_factory=StoppingRule)


def grid_specs(n: int = 1000, seed: int = 0) -> list[ScenarioSpec]:
    """The 12 valid factor combinations (max_capacity needs non-constant O)."""
    specs = []
    for o, i, reg, rule in itertools.product(O_DISTS, I_DISTS, REGIMES, RULES):
        if o == "constant_calibrated" and rule == "max_capacity":
            continue
        specs.append(ScenarioSpec(n=n, o_dist=o, i_dist=i, modularity_regime=reg,
                                  initiator_rule=rule, seed=seed, spec_id=len(specs)))
    return specs


def run_experiment(spec: ScenarioSpec, replicate: int, config: GridConfig) -> ExperimentRecord:
    rng = np.random.default_rng([config.master_seed, spec.spec_id, replicate])
    sn = generate_scenario_network(spec, rng, config.max_retries, config.calibration_pairs)
    s_seed, r_seed = select_initiators(spec, sn.O, sn.groups, rng)
    init = np.full(spec.n, State.I, dtype=np.int64)
    init[s_seed] = State.S
    init[r_seed] = State.R
    params = DiffusionParams(sn.O, sn.I, sn.tau, sn.net)
    trace = run_cascade(params, init, config.stopping, config.engine, rng)
    summ = cascade_summaries(trace)
    return ExperimentRecord(
        spec_id=spec.spec_id, replicate=replicate, o_dist=spec.o_dist, i_dist=spec.i_dist,
        modularity_regime=spec.modularity_regime, initiator_rule=spec.initiator_rule,
        total_time=summ["total_time"], reach=summ["reach"], realized_modularity=sn.modularity,
        realized_avg_degree=2.0 * sn.net.m / spec.n, kappa=sn.kappa, k_star=sn.k_star,
        n_jumps=summ["n_jumps"], stop_reason=summ["stop_reason"])


def _run_one(args):
    return run_experiment(*args)


def run_experiment_grid(config: GridConfig, workers: int = 1) -> list[ExperimentRecord]:
    """All 12 scenarios x ``replicates``, each with its own RNG stream derived
    from (master seed, spec id, replicate)."""
    jobs = [(spec, r, config) for spec in grid_specs(config.n, config.master_seed)
            for r in range(config.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = list(ex.map(_run_one, jobs))
    else:
        records = []
        for job in jobs:
            records.append(_run_one(job))
            log.info("spec %d rep %d: reach=%.3f time=%.3g", job[0].spec_id, job[1],
                     records[-1].reach, records[-1].total_time)
    return sorted(records, key=lambda r: (r.spec_id, r.replicate))


GRID_COLUMNS = ("spec_id", "replicate", "o_dist", "i_dist", "modularity_regime", "initiator_rule",
                "total_time", "reach", "realized_modularity", "realized_avg_degree")


def write_grid_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_COLUMNS)
        for r in records:
            d = asdict(r)
            w.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in GRID_COLUMNS])


def read_grid_csv(path) -> list[ExperimentRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in GRID_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"grid CSV is missing column {missing[0]!r}")
        out = []
        for row in reader:
            out.append(ExperimentRecord(
                spec_id=int(row["spec_id"]), replicate=int(row["replicate"]), o_dist=row["o_dist"],
                i_dist=row["i_dist"], modularity_regime=row["modularity_regime"],
                initiator_rule=row["initiator_rule"], total_time=float(row["total_time"]),
                reach=float(row["reach"]), realized_modularity=float(row["realized_modularity"]),
                realized_avg_degree=float(row["realized_avg_degree"])))
    return out


def tau_moments(kappa: float) -> tuple[float, float]:
    """Closed-form (mean, CV) of a same-group similarity for kappa > 0."""
    mean = kappa / (2.0 - kappa)
    cv = (2.0 / kappa) * math.sqrt((1.0 - kappa) / (3.0 - kappa))
    return mean, cv
