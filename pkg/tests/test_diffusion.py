import numpy as np
import pytest

from layoutdiff.denoiser import COND_DIM, Denoiser
from layoutdiff.diffusion import (
    AdamState,
    GaussianMixture,
    GuidanceError,
    GuidedSampleConfig,
    OracleDenoiser,
    denoising_loss_and_grads,
    forward_sample,
    generate,
    guided_step,
    make_schedule,
    oracle_eps,
    posterior_params,
    train_step,
)

from util import ancestral_step_reference, posterior_mean_reference, quadrature_eps_posterior


# -- schedule ----------------------------------------------------------------


def test_make_schedule_two_steps():
    sched = make_schedule(2, 0.1, 0.2)
    assert np.allclose(sched.alpha_bar, [0.9, 0.72])


def test_make_schedule_default_decay():
    sched = make_schedule(1000, 1e-4, 0.02)
    # direct product evaluation, independent of cumprod
    prod = 1.0
    for t in range(1000):
        prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * t / 999)
    assert sched.alpha_bar_t(1000) == pytest.approx(prod, rel=1e-9)
    assert sched.alpha_bar_t(1000) < 1e-4


def test_schedule_invariants():
    sched = make_schedule(200, 1e-4, 0.05)
    assert np.all(np.diff(sched.beta) > 0)
    assert np.all(np.diff(sched.alpha_bar) < 0)
    assert np.all(sched.posterior_var <= sched.beta + 1e-15)
    assert sched.posterior_var_t(1) == pytest.approx(0.0)
    assert np.all(sched.posterior_var[1:] > 0)
    assert np.all(np.isfinite(sched.posterior_var))


@pytest.mark.parametrize("args", [(1, 0.1, 0.2), (10, 0.0, 0.2), (10, 0.2, 0.1), (10, 0.1, 1.0)])
def test_make_schedule_rejects_bad_ranges(args):
    with pytest.raises(ValueError):
        make_schedule(*args)


# -- forward process ----------------------------------------------------------


def test_forward_zero_noise():
    sched = make_schedule(50, 0.01, 0.1)
    x0 = np.array([1.0, -2.0, 0.5])
    out = forward_sample(x0, 20, np.zeros(3), sched)
    assert np.allclose(out, np.sqrt(sched.alpha_bar_t(20)) * x0)


def test_forward_zero_signal():
    sched = make_schedule(50, 0.01, 0.1)
    eps = np.array([0.3, 0.7, -0.1])
    out = forward_sample(np.zeros(3), 20, eps, sched)
    assert np.allclose(out, np.sqrt(1 - sched.alpha_bar_t(20)) * eps)


def test_forward_marginal_variance():
    sched = make_schedule(100, 1e-3, 0.05)
    rng = np.random.default_rng(0)
    t = 60
    x0 = np.full(1, 0.7)
    draws = np.array([forward_sample(x0, t, rng.standard_normal(1), sched)[0] for _ in range(100_000)])
    target = 1.0 - sched.alpha_bar_t(t)
    assert draws.var() == pytest.approx(target, rel=0.02)


def test_forward_rejects_mismatched_shapes():
    sched = make_schedule(10, 0.01, 0.1)
    with pytest.raises(ValueError):
        forward_sample(np.zeros(3), 5, np.zeros(4), sched)
    with pytest.raises(ValueError):
        forward_sample(np.zeros(3), 11, np.zeros(3), sched)


# -- reverse parameters --------------------------------------------------------


def test_posterior_mean_recovers_closed_form():
    sched = make_schedule(100, 1e-3, 0.05)
    rng = np.random.default_rng(1)
    for t in (2, 10, 50, 100):
        x0 = rng.normal(0, 1, 6)
        eps = rng.standard_normal(6)
        x_t = forward_sample(x0, t, eps, sched)
        mu, sigma2 = posterior_params(x_t, t, eps, sched)
        assert np.allclose(mu, posterior_mean_reference(x0, x_t, t, sched), atol=1e-10)
        assert sigma2 == pytest.approx(sched.posterior_var_t(t))


def test_posterior_t1_predicts_x0():
    sched = make_schedule(100, 1e-3, 0.05)
    rng = np.random.default_rng(2)
    x0 = rng.normal(0, 1, 4)
    eps = rng.standard_normal(4)
    x_1 = forward_sample(x0, 1, eps, sched)
    mu, sigma2 = posterior_params(x_1, 1, eps, sched)
    assert sigma2 == pytest.approx(0.0)
    assert np.allclose(mu, x0, atol=np.sqrt(sched.beta_t(1)))


def test_posterior_zero_eps_hat():
    sched = make_schedule(100, 1e-3, 0.05)
    x_t = np.array([0.4, -0.2])
    mu, _ = posterior_params(x_t, 30, np.zeros(2), sched)
    assert np.allclose(mu, x_t / np.sqrt(sched.alpha_t(30)))


# -- oracle -------------------------------------------------------------------


def test_oracle_eps_single_component_closed_form():
    sched = make_schedule(100, 1e-3, 0.05)
    mix = GaussianMixture(weights=[1.0], means=[[0.0, 0.0]], variances=[1.0])
    x = np.array([0.5, -1.0])
    t = 40
    out = oracle_eps(x, t, mix, sched)
    ab = sched.alpha_bar_t(t)
    assert np.allclose(out, np.sqrt(1 - ab) * x / (ab + 1 - ab))


def test_oracle_eps_symmetry():
    sched = make_schedule(100, 1e-3, 0.05)
    mix = GaussianMixture(weights=[0.5, 0.5], means=[[-2.0], [2.0]], variances=[0.3, 0.3])
    out = oracle_eps(np.zeros(1), 25, mix, sched)
    assert out[0] == pytest.approx(0.0, abs=1e-12)


def test_oracle_eps_matches_quadrature():
    sched = make_schedule(100, 1e-3, 0.05)
    weights = [0.3, 0.7]
    means = [-1.2, 0.8]
    variances = [0.4, 0.2]
    mix = GaussianMixture(weights=weights, means=[[m] for m in means], variances=variances)
    for t in (5, 40, 90):
        for x in (-1.5, 0.0, 0.9):
            got = oracle_eps(np.array([x]), t, mix, sched)[0]
            ref = quadrature_eps_posterior(x, t, weights, means, variances, sched)
            assert got == pytest.approx(ref, abs=1e-6)


def test_mixture_validation():
    with pytest.raises(ValueError):
        GaussianMixture(weights=[0.5, 0.4], means=[[0.0], [1.0]], variances=[1.0, 1.0])
    with pytest.raises(ValueError):
        GaussianMixture(weights=[1.0], means=[[0.0]], variances=[0.0])


# -- guided step ----------------------------------------------------------------


class _ConstantPotential:
    name = "constant"

    def evaluate(self, state):
        return 1.0, np.zeros_like(state)


class _ExplodingPotential:
    name = "boom"

    def evaluate(self, state):
        g = np.zeros_like(state)
        g[0] = np.nan
        return 1.0, g


class _Composite:
    def __init__(self, pot):
        self.pot = pot

    def evaluate(self, state, t=None):
        return self.pot.evaluate(state)


def test_guided_step_lambda_zero_equals_ancestral():
    sched = make_schedule(60, 1e-3, 0.05)
    mix = GaussianMixture(weights=[1.0], means=[np.zeros(4)], variances=[1.0])
    den = OracleDenoiser(mix, sched)
    for t in (60, 17, 1):
        x_t = np.random.default_rng(t).normal(0, 1, 4)
        out = guided_step(x_t, t, den, None, GuidedSampleConfig(guidance_scale=0.0), sched, np.random.default_rng(99))
        ref = ancestral_step_reference(x_t, t, den(x_t, t), sched, np.random.default_rng(99))
        assert np.array_equal(out, ref)


def test_guided_step_constant_potential_is_noop():
    sched = make_schedule(60, 1e-3, 0.05)
    mix = GaussianMixture(weights=[1.0], means=[np.zeros(4)], variances=[1.0])
    den = OracleDenoiser(mix, sched)
    x_t = np.random.default_rng(5).normal(0, 1, 4)
    cfg_off = GuidedSampleConfig(guidance_scale=0.0)
    cfg_on = GuidedSampleConfig(guidance_scale=3.0)
    out_off = guided_step(x_t, 20, den, None, cfg_off, sched, np.random.default_rng(7))
    out_on = guided_step(x_t, 20, den, _Composite(_ConstantPotential()), cfg_on, sched, np.random.default_rng(7))
    assert np.array_equal(out_off, out_on)


def test_guided_step_aborts_on_nonfinite_gradient():
    sched = make_schedule(60, 1e-3, 0.05)
    mix = GaussianMixture(weights=[1.0], means=[np.zeros(4)], variances=[1.0])
    den = OracleDenoiser(mix, sched)
    with pytest.raises(GuidanceError):
        guided_step(
            np.zeros(4), 10, den, _Composite(_ExplodingPotential()), GuidedSampleConfig(guidance_scale=1.0), sched, np.random.default_rng(0)
        )


def test_generate_deterministic_and_fixed_width(spec, plan, catalog):
    sched = make_schedule(30, 1e-3, 0.05)
    mix = GaussianMixture(weights=[1.0], means=[np.zeros(spec.state_dim)], variances=[1.0])
    den = OracleDenoiser(mix, sched)
    cfg = GuidedSampleConfig(guidance_scale=0.0)
    s1 = generate(den, plan, None, cfg, sched, np.random.default_rng(123), spec, seed=123)
    s2 = generate(den, plan, None, cfg, sched, np.random.default_rng(123), spec, seed=123)
    assert s1.n_max == 8 and s2.n_max == 8
    for a, b in zip(s1.slots, s2.slots):
        assert np.array_equal(a.location, b.location)
        assert np.array_equal(a.class_logits, b.class_logits)


# -- training -------------------------------------------------------------------


def test_train_step_lambda_zero_matches_plain_objective():
    # With no guidance the per-sample loss is the plain noise-prediction MSE.
    rng = np.random.default_rng(0)
    model = Denoiser(state_dim=10, hidden=8, rng=rng)
    sched = make_schedule(40, 0.01, 0.1)
    x0 = rng.normal(0, 1, 10)
    cond = rng.normal(0, 1, COND_DIM)
    eps = rng.standard_normal(10)
    t = 13
    loss, grads = denoising_loss_and_grads(model, x0, cond, t, eps, None, 0.0, sched)
    x_t = forward_sample(x0, t, eps, sched)
    direct = float(np.mean((model.forward(x_t, t, cond) - eps) ** 2))
    assert loss == pytest.approx(direct)
    assert len(grads) == len(model.params())


def test_train_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    model = Denoiser(state_dim=6, hidden=8, rng=rng)
    sched = make_schedule(40, 0.01, 0.1)
    x0 = rng.normal(0, 1, 6)
    cond = rng.normal(0, 1, COND_DIM)
    eps = rng.standard_normal(6)
    t = 7
    _, grads = denoising_loss_and_grads(model, x0, cond, t, eps, None, 0.0, sched)
    h = 1e-6
    max_rel = 0.0
    for pi, p in enumerate(model.params()):
        flat = p.ravel()
        g_flat = grads[pi].ravel()
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            plus, _ = denoising_loss_and_grads(model, x0, cond, t, eps, None, 0.0, sched)
            flat[k] = old - h
            minus, _ = denoising_loss_and_grads(model, x0, cond, t, eps, None, 0.0, sched)
            flat[k] = old
            num = (plus - minus) / (2 * h)
            denom = max(abs(num), abs(g_flat[k]), 1e-6)
            max_rel = max(max_rel, abs(num - g_flat[k]) / denom)
    assert max_rel < 1e-4


def test_train_step_loss_near_one_at_init():
    # standardized data, fresh net: expected squared-noise magnitude ~1/channel
    rng = np.random.default_rng(2)
    model = Denoiser(state_dim=16, hidden=32, rng=rng)
    sched = make_schedule(50, 1e-3, 0.05)
    adam = AdamState.for_params(model.params())
    x0 = rng.normal(0, 1, (64, 16))
    conds = np.zeros((64, COND_DIM))
    loss = train_step(model, x0, conds, None, 0.0, sched, np.random.default_rng(3), adam, lr=0.0)
    assert 0.7 < loss < 1.4


def test_train_step_updates_parameters_and_rejects_empty():
    rng = np.random.default_rng(4)
    model = Denoiser(state_dim=6, hidden=8, rng=rng)
    sched = make_schedule(20, 0.01, 0.1)
    adam = AdamState.for_params(model.params())
    before = [p.copy() for p in model.params()]
    train_step(model, rng.normal(0, 1, (4, 6)), np.zeros((4, COND_DIM)), None, 0.0, sched, rng, adam, lr=1e-3)
    assert any(not np.array_equal(a, b) for a, b in zip(before, model.params()))
    with pytest.raises(ValueError):
        train_step(model, np.zeros((0, 6)), np.zeros((0, COND_DIM)), None, 0.0, sched, rng, adam)
