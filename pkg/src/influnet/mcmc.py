"""Metropolis-within-Gibbs sampler for the projection model.

One sweep: draw omega2 from its inverse-gamma conditional, random-walk
update every O_i, draw sigma2, random-walk update every u_i. Proposal
scales adapt during warm-up only (Robbins-Monro on log sd) and are frozen
for the kept draws.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .graph import DirectedNetwork
from .model import (
    Hyperparams,
    LatentState,
    bernoulli_loglik,
    log_likelihood,
    projection_matrix,
)

log = logging.getLogger(__name__)


@dataclass
class SamplerConfig:
    n_samples: int = 1000
    warmup: int = 1000
    thin: int = 1
    proposal_sd_O: float = 0.5
    proposal_sd_u: float = 0.5
    adapt: bool = True
    target_accept_O: float = 0.44
    target_accept_u: float = 0.234
    seed: int = 0
    p: int = 2
    init_u_var: float = 0.1

    def __post_init__(self):
        if self.n_samples < 1 or self.thin < 1 or self.warmup < 0:
            raise ValueError("need n_samples >= 1, thin >= 1, warmup >= 0")
        if not (self.proposal_sd_O > 0 and self.proposal_sd_u > 0):
            raise ValueError("proposal sds must be positive")
        for t in (self.target_accept_O, self.target_accept_u):
            if not 0 < t < 1:
                raise ValueError("target acceptance must lie in (0, 1)")
        if self.p < 1:
            raise ValueError("p must be >= 1")


@dataclass
class PosteriorSamples:
    O: np.ndarray          # (B, n)
    U: np.ndarray          # (B, n, p)
    omega2: np.ndarray     # (B,)
    sigma2: np.ndarray     # (B,)
    log_lik_trace: np.ndarray
    acceptance_O: np.ndarray   # per-vertex, post warm-up
    acceptance_u: np.ndarray
    proposal_sd_O: np.ndarray = field(default=None)
    proposal_sd_u: np.ndarray = field(default=None)

    def __len__(self):
        return self.O.shape[0]

    @property
    def n(self) -> int:
        return self.O.shape[1]

    @property
    def p(self) -> int:
        return self.U.shape[2]

    def draw(self, b: int) -> LatentState:
        return LatentState(self.O[b], self.U[b], float(self.omega2[b]), float(self.sigma2[b]))

    @property
    def draws(self) -> list[LatentState]:
        return [self.draw(b) for b in range(len(self))]

    @property
    def acceptance_rates(self) -> dict:
        return {"O": float(self.acceptance_O.mean()), "u": float(self.acceptance_u.mean())}

    @classmethod
    def from_states(cls, states, net: DirectedNetwork | None = None) -> "PosteriorSamples":
        states = list(states)
        O = np.stack([s.O for s in states])
        U = np.stack([s.U for s in states])
        ll = (np.array([log_likelihood(net, s) for s in states]) if net is not None
              else np.full(len(states), np.nan))
        n = O.shape[1]
        return cls(O, U, np.array([s.omega2 for s in states]), np.array([s.sigma2 for s in states]),
                   ll, np.zeros(n), np.zeros(n))


# ---------------------------------------------------------------------------
# conjugate steps


def _inv_gamma(shape: float, scale: float, rng: np.random.Generator) -> float:
    return scale / rng.gamma(shape)


def omega2_conditional(state: LatentState, hyper: Hyperparams) -> tuple[float, float]:
    """(shape, scale) of the inverse-gamma full conditional of omega2."""
    return hyper.a_omega + state.n / 2.0, hyper.b_omega + 0.5 * float(state.O @ state.O)


def sigma2_conditional(state: LatentState, hyper: Hyperparams) -> tuple[float, float]:
    return (hyper.a_sigma + state.n * state.p / 2.0,
            hyper.b_sigma + 0.5 * float(np.sum(state.U * state.U)))


def gibbs_update_omega2(state: LatentState, hyper: Hyperparams, rng) -> LatentState:
    out = state.copy()
    out.omega2 = _inv_gamma(*omega2_conditional(state, hyper), rng)
    return out


def gibbs_update_sigma2(state: LatentState, hyper: Hyperparams, rng) -> LatentState:
    out = state.copy()
    out.sigma2 = _inv_gamma(*sigma2_conditional(state, hyper), rng)
    return out


# ---------------------------------------------------------------------------
# full conditionals (up to an additive constant)


def _adj(net_or_y) -> np.ndarray:
    return net_or_y.adjacency() if isinstance(net_or_y, DirectedNetwork) else np.asarray(net_or_y, bool)


def log_full_conditional_O(i: int, value: float, state: LatentState, net) -> float:
    y = _adj(net)
    ui = state.U[i]
    norm = math.sqrt(float(ui @ ui))
    proj = state.U @ ui / norm if norm > 0 else np.zeros(state.n)
    terms = bernoulli_loglik(y[i], value + proj)
    terms[i] = 0.0
    return -0.5 * value * value / state.omega2 + float(terms.sum())


def _u_terms(i, cands, U, O, norms, y_row, y_col):
    """Likelihood terms touching u_i for each candidate row in ``cands``.

    Row i: eta[i, j] = O_i + c.u_j/|c|. Column i: eta[j, i] = O_j + u_j.c/|u_j|.
    """
    d = U @ cands.T                                  # (n, k)
    cn = np.sqrt(np.einsum("kp,kp->k", cands, cands))
    inv_c = np.divide(1.0, cn, out=np.zeros_like(cn), where=cn > 0)
    inv_u = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    row = bernoulli_loglik(y_row[:, None], O[i] + d * inv_c[None, :])
    col = bernoulli_loglik(y_col[:, None], O[:, None] + d * inv_u[:, None])
    row[i] = 0.0
    col[i] = 0.0
    return row.sum(axis=0) + col.sum(axis=0)


def log_full_conditional_u(i: int, value, state: LatentState, net) -> float:
    y = _adj(net)
    c = np.asarray(value, dtype=np.float64).reshape(1, -1)
    if c.shape[1] != state.p:
        raise ValueError("candidate must have length p")
    norms = np.sqrt(np.einsum("ij,ij->i", state.U, state.U))
    lik = _u_terms(i, c, state.U, state.O, norms, y[i], y[:, i])[0]
    return -0.5 * float(c[0] @ c[0]) / state.sigma2 + float(lik)


# ---------------------------------------------------------------------------
# Metropolis steps


def mh_update_O(i: int, state: LatentState, net, proposal_sd: float, rng,
                proposal: float | None = None) -> tuple[LatentState, bool]:
    """Gaussian random-walk step for O_i. ``proposal`` overrides the draw."""
    cur = float(state.O[i])
    new = cur + proposal_sd * rng.standard_normal() if proposal is None else float(proposal)
    log_r = log_full_conditional_O(i, new, state, net) - log_full_conditional_O(i, cur, state, net)
    accept = log_r >= 0 or math.log(rng.random()) < log_r
    if not accept:
        return state, False
    out = state.copy()
    out.O[i] = new
    return out, True


def mh_update_u(i: int, state: LatentState, net, proposal_sd: float, rng,
                proposal=None) -> tuple[LatentState, bool]:
    cur = state.U[i].copy()
    new = (cur + proposal_sd * rng.standard_normal(state.p) if proposal is None
           else np.asarray(proposal, dtype=np.float64))
    log_r = log_full_conditional_u(i, new, state, net) - log_full_conditional_u(i, cur, state, net)
    accept = log_r >= 0 or math.log(rng.random()) < log_r
    if not accept:
        return state, False
    out = state.copy()
    out.U[i] = new
    return out, True


# ---------------------------------------------------------------------------
# vectorised sweep used by the sampler


def _sweep_O(state, y, sd_O, rng, use_likelihood):
    """Update every O_i. The O_i are conditionally independent given U, so
    all proposals are drawn up front and the row terms are evaluated in one
    pass."""
    n = state.n
    prop = state.O + sd_O * rng.standard_normal(n)
    logu = np.log(rng.random(n))
    return _sweep_O_kernel(state.U, state.O, y, prop, logu, state.omega2, use_likelihood)


@njit(cache=True)
def _softplus(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def _inv_norms(U):
    n, p = U.shape
    out = np.zeros(n)
    for j in range(n):
        s = 0.0
        for k in range(p):
            s += U[j, k] * U[j, k]
        if s > 0:
            out[j] = 1.0 / math.sqrt(s)
    return out


@njit(cache=True)
def _sweep_O_kernel(U, O, y, prop, logu, omega2, use_likelihood):
    n, p = U.shape
    inv = _inv_norms(U)
    acc = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        log_r = -0.5 * (prop[i] * prop[i] - O[i] * O[i]) / omega2
        if use_likelihood:
            for j in range(n):
                if j == i:
                    continue
                d = 0.0
                for k in range(p):
                    d += U[i, k] * U[j, k]
                proj = d * inv[i]
                e_cur = O[i] + proj
                e_new = prop[i] + proj
                log_r += (e_new - e_cur) * y[i, j] - _softplus(e_new) + _softplus(e_cur)
        if logu[i] < log_r:
            O[i] = prop[i]
            acc[i] = True
    return acc


@njit(cache=True)
def _loglik_kernel(U, O, y):
    n, p = U.shape
    inv = _inv_norms(U)
    total = 0.0
    for i in range(n):
        row = 0.0
        for j in range(n):
            if j == i:
                continue
            d = 0.0
            for k in range(p):
                d += U[i, k] * U[j, k]
            eta = O[i] + d * inv[i]
            row += eta * y[i, j] - _softplus(eta)
        total += row
    return total


def fast_log_likelihood(state: LatentState, y: np.ndarray) -> float:
    """Compiled log-likelihood; ``y`` is the float64 adjacency."""
    return _loglik_kernel(state.U, state.O, y)


@njit(cache=True)
def _sweep_u_kernel(U, O, y, steps, logu, sigma2, use_likelihood):
    n, p = U.shape
    norms = np.empty(n)
    for j in range(n):
        s = 0.0
        for k in range(p):
            s += U[j, k] * U[j, k]
        norms[j] = math.sqrt(s)
    acc = np.zeros(n, dtype=np.bool_)
    new = np.empty(p)
    for i in range(n):
        cur_sq = 0.0
        new_sq = 0.0
        for k in range(p):
            new[k] = U[i, k] + steps[i, k]
            cur_sq += U[i, k] * U[i, k]
            new_sq += new[k] * new[k]
        log_r = -0.5 * (new_sq - cur_sq) / sigma2
        if use_likelihood:
            cur_n = math.sqrt(cur_sq)
            new_n = math.sqrt(new_sq)
            for j in range(n):
                if j == i:
                    continue
                d_cur = 0.0
                d_new = 0.0
                for k in range(p):
                    d_cur += U[j, k] * U[i, k]
                    d_new += U[j, k] * new[k]
                # row i: eta[i, j]
                e_cur = O[i] + (d_cur / cur_n if cur_n > 0 else 0.0)
                e_new = O[i] + (d_new / new_n if new_n > 0 else 0.0)
                log_r += (e_new - e_cur) * y[i, j] - _softplus(e_new) + _softplus(e_cur)
                # column i: eta[j, i]
                if norms[j] > 0:
                    e_cur = O[j] + d_cur / norms[j]
                    e_new = O[j] + d_new / norms[j]
                    log_r += (e_new - e_cur) * y[j, i] - _softplus(e_new) + _softplus(e_cur)
        if logu[i] < log_r:
            for k in range(p):
                U[i, k] = new[k]
            norms[i] = math.sqrt(new_sq)
            acc[i] = True
    return acc


def _sweep_u(state, y, sd_u, rng, use_likelihood):
    """Sequential random-walk updates of u_1..u_n (compiled inner loop)."""
    n, p = state.n, state.p
    steps = rng.standard_normal((n, p)) * sd_u[:, None]
    logu = np.log(rng.random(n))
    return _sweep_u_kernel(state.U, state.O, y, steps, logu, state.sigma2, use_likelihood)


def sweep(state: LatentState, y: np.ndarray, hyper: Hyperparams, sd_O, sd_u, rng,
          use_likelihood: bool = True):
    """One full Gibbs sweep, in place. Returns (accepted_O, accepted_u).

    ``y`` is the dense adjacency as float64 (0/1).
    """
    sd_O = np.broadcast_to(np.asarray(sd_O, dtype=np.float64), (state.n,))
    sd_u = np.broadcast_to(np.asarray(sd_u, dtype=np.float64), (state.n,))
    state.omega2 = _inv_gamma(*omega2_conditional(state, hyper), rng)
    acc_O = _sweep_O(state, y, sd_O, rng, use_likelihood)
    state.sigma2 = _inv_gamma(*sigma2_conditional(state, hyper), rng)
    acc_u = _sweep_u(state, y, sd_u, rng, use_likelihood)
    return acc_O, acc_u


def initial_state(n: int, config: SamplerConfig, rng) -> LatentState:
    U = math.sqrt(config.init_u_var) * rng.standard_normal((n, config.p))
    return LatentState(np.zeros(n), U, 1.0, 1.0)


def run_sampler(net: DirectedNetwork, hyper: Hyperparams, config: SamplerConfig,
                init: LatentState | None = None, use_likelihood: bool = True,
                progress=None) -> PosteriorSamples:
    """Run one chain and keep ``n_samples`` thinned post-warm-up draws.

    ``use_likelihood=False`` samples the prior hierarchy only (testing hook).
    """
    rng = np.random.default_rng(config.seed)
    n, p, B = net.n, config.p, config.n_samples
    y = net.adjacency()
    yf = y.astype(np.float64)
    state = initial_state(n, config, rng) if init is None else init.copy()
    if state.p != p:
        raise ValueError("initial state has wrong latent dimension")

    log_sd_O = np.full(n, math.log(config.proposal_sd_O))
    log_sd_u = np.full(n, math.log(config.proposal_sd_u))
    out_O = np.empty((B, n))
    out_U = np.empty((B, n, p))
    out_w = np.empty(B)
    out_s = np.empty(B)
    out_ll = np.empty(B)
    n_acc_O = np.zeros(n)
    n_acc_u = np.zeros(n)

    total = config.warmup + B * config.thin
    kept = 0
    for it in range(total):
        acc_O, acc_u = sweep(state, yf, hyper, np.exp(log_sd_O), np.exp(log_sd_u), rng,
                             use_likelihood)
        if it < config.warmup:
            if config.adapt:
                gain = (it + 1) ** -0.6
                log_sd_O += gain * (acc_O - config.target_accept_O)
                log_sd_u += gain * (acc_u - config.target_accept_u)
            continue
        n_acc_O += acc_O
        n_acc_u += acc_u
        if (it - config.warmup + 1) % config.thin == 0:
            out_O[kept] = state.O
            out_U[kept] = state.U
            out_w[kept] = state.omega2
            out_s[kept] = state.sigma2
            out_ll[kept] = fast_log_likelihood(state, yf)
            kept += 1
        if progress is not None:
            progress(it + 1, total)
    n_post = total - config.warmup
    samples = PosteriorSamples(out_O, out_U, out_w, out_s, out_ll,
                               n_acc_O / n_post, n_acc_u / n_post,
                               np.exp(log_sd_O), np.exp(log_sd_u))
    log.info("sampler done: acceptance O=%.3f u=%.3f", *samples.acceptance_rates.values())
    return samples


# ---------------------------------------------------------------------------
# alignment, DIC, diagnostics


def procrustes_align(reference, target) -> np.ndarray:
    """Rotate/reflect ``target`` to best match ``reference`` (Frobenius norm).

    No translation or scaling. An all-zero target is returned unchanged.
    """
    reference = np.asarray(reference, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if reference.shape != target.shape:
        raise ValueError("reference and target must have equal shapes")
    if not np.any(target):
        return target.copy()
    W, _, Vt = np.linalg.svd(target.T @ reference)
    return target @ (W @ Vt)


def aligned_mean_positions(U_draws, n_iter: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Generalised Procrustes: align every draw to a reference that starts at
    the first draw and is replaced by the running mean of aligned draws.

    Returns (mean positions, aligned draws)."""
    U_draws = np.asarray(U_draws, dtype=np.float64)
    ref = U_draws[0]
    aligned = U_draws
    for _ in range(n_iter):
        aligned = np.stack([procrustes_align(ref, u) for u in U_draws])
        new_ref = aligned.mean(axis=0)
        if np.allclose(new_ref, ref, rtol=0, atol=1e-12):
            ref = new_ref
            break
        ref = new_ref
    return ref, aligned


def compute_dic(samples: PosteriorSamples, net: DirectedNetwork) -> dict:
    """Spiegelhalter DIC with the plug-in at posterior means of O and of the
    Procrustes-aligned U."""
    if len(samples) < 2:
        raise ValueError("DIC needs at least 2 draws")
    ll = samples.log_lik_trace
    if not np.all(np.isfinite(ll)):
        y = net.adjacency()
        ll = np.array([log_likelihood(net, samples.draw(b), y) for b in range(len(samples))])
    d_bar = float(np.mean(-2.0 * ll))
    U_bar, _ = aligned_mean_positions(samples.U)
    theta_bar = LatentState(samples.O.mean(axis=0), U_bar)
    d_hat = -2.0 * log_likelihood(net, theta_bar)
    p_d = d_bar - d_hat
    return {"dic": d_bar + p_d, "p_d": p_d, "d_bar": d_bar, "d_hat": d_hat}


class UndefinedESS(ArithmeticError):
    pass


def autocorrelation(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    if acov[0] <= 0:
        raise UndefinedESS("constant trace")
    return acov / acov[0]


def effective_sample_size(trace) -> float:
    """ESS with Geyer's initial positive sequence truncation."""
    x = np.asarray(trace, dtype=np.float64)
    n = len(x)
    if n < 10:
        raise ValueError("need at least 10 values")
    if np.ptp(x) == 0:
        raise UndefinedESS("constant trace")
    rho = autocorrelation(x)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return n / tau


def chain_diagnostics(samples: PosteriorSamples) -> dict:
    """ESS of the log-likelihood, omega2, sigma2 traces (None if undefined)."""
    out = {}
    for name, tr in (("loglik", samples.log_lik_trace), ("omega2", samples.omega2),
                     ("sigma2", samples.sigma2)):
        try:
            out[name] = effective_sample_size(tr) if len(tr) >= 10 else None
        except UndefinedESS:
            out[name] = None
    return out


def config_dict(config: SamplerConfig) -> dict:
    return asdict(config)


# ---------------------------------------------------------------------------
# draws CSV: one row per kept draw


def draws_header(n: int, p: int) -> list[str]:
    return ([f"O_{i + 1}" for i in range(n)]
            + [f"u_{i + 1}_{k + 1}" for i in range(n) for k in range(p)]
            + ["omega2", "sigma2", "loglik"])


def write_draws(samples: PosteriorSamples, path) -> None:
    B, n, p = samples.U.shape
    with open(path, "w") as fh:
        fh.write(",".join(draws_header(n, p)) + "\n")
        for b in range(B):
            row = np.concatenate([samples.O[b], samples.U[b].ravel(),
                                  [samples.omega2[b], samples.sigma2[b], samples.log_lik_trace[b]]])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_draws(path, n: int, p: int) -> PosteriorSamples:
    """Read a draws CSV, checking its columns against (n, p)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        expected = draws_header(n, p)
        if header != expected:
            for k, (got, want) in enumerate(zip(header, expected)):
                if got != want:
                    raise ValueError(f"draws column {k + 1} is {got!r}, expected {want!r}")
            raise ValueError(f"draws file has {len(header)} columns, expected {len(expected)}")
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    B = body.shape[0]
    O = body[:, :n]
    U = body[:, n:n + n * p].reshape(B, n, p)
    w, s, ll = body[:, -3], body[:, -2], body[:, -1]
    return PosteriorSamples(O, U, w, s, ll, np.full(n, np.nan), np.full(n, np.nan))
