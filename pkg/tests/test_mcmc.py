import math

import numpy as np
import pytest
from scipy import integrate, stats

from influnet import mcmc
from influnet.graph import DirectedNetwork
from influnet.mcmc import (
    PosteriorSamples,
    SamplerConfig,
    UndefinedESS,
    compute_dic,
    effective_sample_size,
    gibbs_update_omega2,
    gibbs_update_sigma2,
    log_full_conditional_O,
    log_full_conditional_u,
    mh_update_O,
    mh_update_u,
    omega2_conditional,
    procrustes_align,
    run_sampler,
    sigma2_conditional,
)
from influnet.model import Hyperparams, LatentState, log_likelihood
from influnet.ppc import sample_prior_state, simulate_network


def log_posterior(net, s):
    """Joint log density of (O, U) given omega2, sigma2, up to a constant."""
    return (log_likelihood(net, s) - 0.5 * float(s.O @ s.O) / s.omega2
            - 0.5 * float(np.sum(s.U ** 2)) / s.sigma2)


def random_orthogonal(p, rng):
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    return q * np.sign(np.diag(r))


@pytest.fixture
def toy():
    rng = np.random.default_rng(11)
    n = 7
    net = DirectedNetwork.from_adjacency(rng.random((n, n)) < 0.35)
    s = LatentState(rng.standard_normal(n), rng.standard_normal((n, 2)), 1.3, 0.8)
    return net, s


# --- Gibbs steps -------------------------------------------------------------------


def test_omega2_shape_case_study():
    s = LatentState(np.zeros(634), np.zeros((634, 2)))
    shape, _ = omega2_conditional(s, Hyperparams(1, 1, 1, 1))
    assert shape == 318
    shape_s, _ = sigma2_conditional(s, Hyperparams(1, 1, 1, 1))
    assert shape_s == 635


def test_omega2_inverse_gamma_mean():
    rng = np.random.default_rng(0)
    s = LatentState(np.zeros(4), np.zeros((4, 2)))
    hyper = Hyperparams(1, 1, 1, 1)
    draws = np.array([gibbs_update_omega2(s, hyper, rng).omega2 for _ in range(100_000)])
    assert np.all(draws > 0)
    assert draws.mean() == pytest.approx(0.5, rel=0.02)


def test_sigma2_inverse_gamma_mean():
    rng = np.random.default_rng(1)
    n, p = 4, 2
    s = LatentState(np.zeros(n), np.zeros((n, p)))
    hyper = Hyperparams(1, 1, 2, 1)
    shape = 2 + n * p / 2
    draws = np.array([gibbs_update_sigma2(s, hyper, rng).sigma2 for _ in range(100_000)])
    assert np.all(draws > 0)
    assert draws.mean() == pytest.approx(1.0 / (shape - 1), rel=0.02)


def test_gibbs_does_not_mutate_input(toy):
    _, s = toy
    before = s.omega2
    gibbs_update_omega2(s, Hyperparams(), np.random.default_rng(0))
    assert s.omega2 == before


# --- full conditionals ---------------------------------------------------------------


def test_full_conditional_O_prior_term_at_origin():
    net = DirectedNetwork.from_edges(3, [(1, 2)])
    s = LatentState(np.zeros(3), np.zeros((3, 2)), omega2=1.0)
    # only likelihood terms remain at O_0 = 0: two pairs with p = 1/2, both absent
    assert log_full_conditional_O(0, 0.0, s, net) == pytest.approx(2 * math.log(0.5))


def test_full_conditional_O_difference_matches_joint(toy):
    net, s = toy
    for i in range(s.n):
        a, b = s.copy(), s.copy()
        a.O[i], b.O[i] = -0.4, 1.7
        lhs = log_full_conditional_O(i, 1.7, s, net) - log_full_conditional_O(i, -0.4, s, net)
        assert lhs == pytest.approx(log_posterior(net, b) - log_posterior(net, a), abs=1e-10)


def test_full_conditional_O_decreasing_without_edges():
    net = DirectedNetwork.from_edges(4, [])
    s = LatentState(np.zeros(4), np.zeros((4, 2)), omega2=2.0)
    grid = np.linspace(0, 6, 61)
    vals = [log_full_conditional_O(0, g, s, net) for g in grid]
    assert np.all(np.diff(vals) < 0)


def test_full_conditional_u_self_difference(toy):
    net, s = toy
    assert log_full_conditional_u(2, s.U[2], s, net) - log_full_conditional_u(2, s.U[2], s, net) == 0.0


def test_full_conditional_u_difference_matches_joint(toy):
    net, s = toy
    rng = np.random.default_rng(5)
    for i in range(s.n):
        c1, c2 = rng.standard_normal(2), rng.standard_normal(2)
        a, b = s.copy(), s.copy()
        a.U[i], b.U[i] = c1, c2
        lhs = log_full_conditional_u(i, c2, s, net) - log_full_conditional_u(i, c1, s, net)
        assert lhs == pytest.approx(log_posterior(net, b) - log_posterior(net, a), abs=1e-10)


def test_full_conditional_u_two_vertex_expansion():
    O = np.array([0.3, -0.5])
    u1 = np.array([0.6, -1.2])
    s = LatentState(O, np.array([[0.0, 0.0], u1]), 1.0, 0.7)
    net = DirectedNetwork.from_edges(2, [(0, 1)])
    c = np.array([1.1, 0.4])
    e01 = O[0] + c @ u1 / np.linalg.norm(c)
    e10 = O[1] + u1 @ c / np.linalg.norm(u1)
    hand = (-0.5 * (c @ c) / 0.7
            + math.log(1 / (1 + math.exp(-e01)))        # y01 = 1
            + math.log(1 - 1 / (1 + math.exp(-e10))))   # y10 = 0
    assert log_full_conditional_u(0, c, s, net) == pytest.approx(hand, abs=1e-12)


# --- Metropolis steps ----------------------------------------------------------------


def test_mh_identity_proposal_accepted(toy):
    net, s = toy
    rng = np.random.default_rng(0)
    _, acc = mh_update_O(1, s, net, 0.5, rng, proposal=s.O[1])
    assert acc
    _, acc = mh_update_u(1, s, net, 0.5, rng, proposal=s.U[1])
    assert acc


def test_mh_flat_target_accepts():
    net = DirectedNetwork(1, np.zeros((0, 2)))
    s = LatentState([0.0], [[0.0, 0.0]], omega2=1e12, sigma2=1e12)
    rng = np.random.default_rng(2)
    acc_O = acc_u = 0
    for _ in range(10_000):
        s, a = mh_update_O(0, s, net, 1.0, rng)
        acc_O += a
        s, a = mh_update_u(0, s, net, 1.0, rng)
        acc_u += a
    assert acc_O / 10_000 > 0.99
    assert acc_u / 10_000 > 0.99


def _mc_se(chain):
    return chain.std() / math.sqrt(effective_sample_size(chain))


def test_mh_O_matches_quadrature():
    # O_0 | rest with one present edge, zero latent positions, omega2 = 1
    net = DirectedNetwork.from_edges(2, [(0, 1)])
    y = net.adjacency()
    s = LatentState([0.0, 0.0], np.zeros((2, 1)), omega2=1.0)
    dens = lambda o: math.exp(-0.5 * o * o) / (1 + math.exp(-o))
    z = integrate.quad(dens, -12, 12)[0]
    mean = integrate.quad(lambda o: o * dens(o), -12, 12)[0] / z
    rng = np.random.default_rng(3)
    chain = np.empty(20_000)
    for t in range(len(chain)):
        s, _ = mh_update_O(0, s, y, 1.5, rng)
        chain[t] = s.O[0]
    assert abs(chain.mean() - mean) < 3 * _mc_se(chain)


def test_mh_u_matches_2d_quadrature():
    O = np.array([0.2, -0.3])
    u1 = np.array([1.0, 0.5])
    sigma2 = 1.0
    net = DirectedNetwork.from_edges(2, [(0, 1)])
    y = net.adjacency()

    def dens(a, b):
        c = np.array([a, b])
        nc = math.hypot(a, b)
        e01 = O[0] + (c @ u1 / nc if nc > 0 else 0.0)
        e10 = O[1] + u1 @ c / np.linalg.norm(u1)
        return math.exp(-0.5 * (a * a + b * b) / sigma2) / (1 + math.exp(-e01)) / (1 + math.exp(e10))

    lim = 7.0
    z = integrate.dblquad(lambda b, a: dens(a, b), -lim, lim, -lim, lim, epsabs=1e-10)[0]
    m0 = integrate.dblquad(lambda b, a: a * dens(a, b), -lim, lim, -lim, lim, epsabs=1e-10)[0] / z
    m1 = integrate.dblquad(lambda b, a: b * dens(a, b), -lim, lim, -lim, lim, epsabs=1e-10)[0] / z

    s = LatentState(O, np.array([[0.0, 0.0], u1]), 1.0, sigma2)
    rng = np.random.default_rng(4)
    chain = np.empty((20_000, 2))
    for t in range(len(chain)):
        s, _ = mh_update_u(0, s, y, 1.2, rng)
        chain[t] = s.U[0]
    assert abs(chain[:, 0].mean() - m0) < 3 * _mc_se(chain[:, 0])
    assert abs(chain[:, 1].mean() - m1) < 3 * _mc_se(chain[:, 1])


# --- compiled sweep vs the plain full conditionals ---------------------------------------


def test_compiled_sweeps_match_reference_steps(toy):
    net, s0 = toy
    n, p = s0.n, s0.p
    y = net.adjacency()
    rng = np.random.default_rng(8)
    prop_O = s0.O + 0.9 * rng.standard_normal(n)
    logu_O = np.log(rng.random(n))
    steps = 0.9 * rng.standard_normal((n, p))
    logu_u = np.log(rng.random(n))

    fast = s0.copy()
    acc_O = mcmc._sweep_O_kernel(fast.U, fast.O, y.astype(float), prop_O, logu_O, fast.omega2, True)
    acc_u = mcmc._sweep_u_kernel(fast.U, fast.O, y.astype(float), steps, logu_u, fast.sigma2, True)

    ref = s0.copy()
    for i in range(n):
        log_r = (log_full_conditional_O(i, prop_O[i], ref, y)
                 - log_full_conditional_O(i, ref.O[i], ref, y))
        ok = logu_O[i] < log_r
        assert ok == acc_O[i]
        if ok:
            ref.O[i] = prop_O[i]
    for i in range(n):
        new = ref.U[i] + steps[i]
        log_r = log_full_conditional_u(i, new, ref, y) - log_full_conditional_u(i, ref.U[i], ref, y)
        ok = logu_u[i] < log_r
        assert ok == acc_u[i]
        if ok:
            ref.U[i] = new
    np.testing.assert_allclose(fast.O, ref.O, rtol=0, atol=0)
    np.testing.assert_allclose(fast.U, ref.U, rtol=0, atol=0)


def test_fast_loglik_matches_numpy(toy):
    net, s = toy
    y = net.adjacency().astype(float)
    assert mcmc.fast_log_likelihood(s, y) == pytest.approx(log_likelihood(net, s), abs=1e-10)


# --- sampler -------------------------------------------------------------------------


def small_net():
    return DirectedNetwork.from_edges(3, [(0, 1), (1, 2)])


def test_run_sampler_bookkeeping():
    res = run_sampler(small_net(), Hyperparams(), SamplerConfig(n_samples=1, warmup=3, seed=1))
    assert len(res) == 1 and res.log_lik_trace.shape == (1,)
    assert len(res.draws) == 1


def test_run_sampler_thinning_count():
    res = run_sampler(small_net(), Hyperparams(), SamplerConfig(n_samples=7, warmup=2, thin=3))
    assert res.O.shape == (7, 3) and res.U.shape == (7, 3, 2)
    assert np.all((res.acceptance_O >= 0) & (res.acceptance_O <= 1))


def test_run_sampler_deterministic():
    cfg = SamplerConfig(n_samples=20, warmup=10, seed=42)
    a = run_sampler(small_net(), Hyperparams(), cfg)
    b = run_sampler(small_net(), Hyperparams(), cfg)
    np.testing.assert_array_equal(a.O, b.O)
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_array_equal(a.omega2, b.omega2)


def test_prior_only_run_matches_hierarchy():
    hyper = Hyperparams(3, 2, 3, 2)
    net = DirectedNetwork(5, np.zeros((0, 2)))
    res = run_sampler(net, hyper, SamplerConfig(n_samples=4000, warmup=500, thin=5, seed=3, p=1),
                      use_likelihood=False)
    rng = np.random.default_rng(0)
    w = hyper.b_omega / rng.gamma(hyper.a_omega, size=200_000)
    o = np.sqrt(w) * rng.standard_normal(200_000)
    chain = res.O.ravel()
    # marginal variance b/(a-1) = 1 and mean |O|
    assert chain.var() == pytest.approx(o.var(), rel=0.1)
    assert np.abs(chain).mean() == pytest.approx(np.abs(o).mean(), rel=0.06)
    assert np.median(res.omega2) == pytest.approx(np.median(w), rel=0.1)


def test_adaptation_reaches_target_band():
    rng = np.random.default_rng(7)
    truth = sample_prior_state(30, 2, Hyperparams(3, 2, 3, 2), rng)
    net = simulate_network(truth, rng)
    res = run_sampler(net, Hyperparams(3, 2, 3, 2), SamplerConfig(n_samples=1000, warmup=1500, seed=2))
    assert abs(res.acceptance_rates["O"] - 0.44) < 0.08
    assert abs(res.acceptance_rates["u"] - 0.234) < 0.08
    assert np.all(np.isfinite(res.log_lik_trace))


@pytest.mark.slow
def test_geweke_joint_distribution():
    """Alternating data re-simulation and sweeps must leave the prior invariant."""
    hyper = Hyperparams(3, 2, 3, 2)
    n, p = 5, 1
    rng = np.random.default_rng(123)
    s = sample_prior_state(n, p, hyper, rng)
    sd = np.ones(n)
    kept = []
    for t in range(40_000):
        y = simulate_network(s, rng).adjacency().astype(float)
        mcmc.sweep(s, y, hyper, sd, sd, rng)
        if t % 10 == 0:
            kept.append((s.O[0], s.U[0, 0], math.log(s.omega2), math.log(s.sigma2)))
    kept = np.array(kept)
    fwd = np.array([(x.O[0], x.U[0, 0], math.log(x.omega2), math.log(x.sigma2))
                    for x in (sample_prior_state(n, p, hyper, rng) for _ in range(20_000))])
    pvals = [stats.ks_2samp(kept[:, k], fwd[:, k]).pvalue for k in range(4)]
    assert min(pvals) > 0.01 / 4, pvals


# --- alignment, DIC, ESS -------------------------------------------------------------------


def test_procrustes_recovers_rotation():
    rng = np.random.default_rng(0)
    ref = rng.standard_normal((10, 2))
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    np.testing.assert_allclose(procrustes_align(ref, ref @ R), ref, atol=1e-8)
    np.testing.assert_allclose(procrustes_align(ref, ref), ref, atol=1e-12)


def test_procrustes_zero_target_unchanged():
    z = np.zeros((4, 2))
    np.testing.assert_array_equal(procrustes_align(np.ones((4, 2)), z), z)


@pytest.mark.parametrize("seed", range(4))
def test_procrustes_angle_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    ref, tgt = rng.standard_normal((12, 2)), rng.standard_normal((12, 2))
    aligned = procrustes_align(ref, tgt)
    d_after = np.linalg.norm(aligned - ref)
    assert d_after <= np.linalg.norm(tgt - ref) + 1e-12
    best = np.inf
    for a in np.linspace(0, 2 * np.pi, 20_001):
        c, s_ = math.cos(a), math.sin(a)
        for Q in (np.array([[c, -s_], [s_, c]]), np.array([[c, s_], [s_, -c]])):
            best = min(best, np.linalg.norm(tgt @ Q - ref))
    assert d_after <= best + 1e-9
    assert d_after == pytest.approx(best, abs=1e-6)


def test_dic_degenerate_chain(toy):
    net, s = toy
    samples = PosteriorSamples.from_states([s, s, s], net)
    d = compute_dic(samples, net)
    assert d["p_d"] == pytest.approx(0.0, abs=1e-9)
    assert d["dic"] == pytest.approx(-2 * log_likelihood(net, s), rel=1e-12)


def test_dic_two_draws_hand():
    net = DirectedNetwork.from_edges(2, [(0, 1)])
    a = LatentState([1.0, -1.0], np.zeros((2, 1)))
    b = LatentState([3.0, 0.0], np.zeros((2, 1)))
    # deviance by hand: -2 [log expit(O0) + log(1 - expit(O1))]
    dev = lambda o0, o1: -2 * (math.log(1 / (1 + math.exp(-o0))) + math.log(1 / (1 + math.exp(o1))))
    d_bar = 0.5 * (dev(1, -1) + dev(3, 0))
    d_hat = dev(2, -0.5)
    out = compute_dic(PosteriorSamples.from_states([a, b], net), net)
    assert out["p_d"] == pytest.approx(d_bar - d_hat, abs=1e-12)
    assert out["dic"] == pytest.approx(2 * d_bar - d_hat, abs=1e-12)


def test_dic_rotation_invariant(toy):
    net, _ = toy
    res = run_sampler(net, Hyperparams(), SamplerConfig(n_samples=50, warmup=50, seed=5))
    Q = random_orthogonal(2, np.random.default_rng(1))
    rot = PosteriorSamples(res.O, res.U @ Q, res.omega2, res.sigma2, res.log_lik_trace,
                           res.acceptance_O, res.acceptance_u)
    a, b = compute_dic(res, net), compute_dic(rot, net)
    assert b["dic"] == pytest.approx(a["dic"], rel=1e-10)


def test_ess_white_noise():
    x = np.random.default_rng(0).standard_normal(10_000)
    assert effective_sample_size(x) == pytest.approx(10_000, rel=0.1)


def test_ess_ar1():
    rng = np.random.default_rng(1)
    phi, N = 0.9, 100_000
    e = rng.standard_normal(N)
    x = np.empty(N)
    x[0] = e[0]
    for t in range(1, N):
        x[t] = phi * x[t - 1] + e[t]
    assert effective_sample_size(x) == pytest.approx(N * (1 - phi) / (1 + phi), rel=0.2)


def test_ess_constant_undefined():
    with pytest.raises(UndefinedESS):
        effective_sample_size(np.ones(50))


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(thin=0)
    with pytest.raises(ValueError):
        SamplerConfig(proposal_sd_O=0)
    with pytest.raises(ValueError):
        SamplerConfig(target_accept_u=1.0)
