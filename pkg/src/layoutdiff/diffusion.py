"""DDPM machinery: noise schedule, forward process, guided reverse sampling,
the constraint-aware training step, and a closed-form mixture oracle that
makes the sampler exactly testable without any training.

Conventions: timesteps are 1-based (t in {1..T}); alpha_bar(0) = 1; the
reverse-step variance is the posterior variance beta_tilde_t, which is 0 at
t = 1, so the final step is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import NormalizationSpec, clear_empty_slots, denormalize_scene
from .scene import FloorPlan, SceneLayout


class GuidanceError(RuntimeError):
    """Guidance produced a non-finite gradient; sampling aborted."""


class TrainingError(RuntimeError):
    """Loss or gradients became non-finite during training."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule tables for T steps (index 0 holds t = 1)."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray

    def beta_t(self, t: int) -> float:
        return float(self.beta[t - 1])

    def alpha_t(self, t: int) -> float:
        return float(self.alpha[t - 1])

    def alpha_bar_t(self, t: int) -> float:
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def posterior_var_t(self, t: int) -> float:
        return float(self.posterior_var[t - 1])


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule, endpoints inclusive, with derived tables."""
    if T < 2:
        raise ValueError("schedule needs T >= 2")
    if not (0.0 < beta_start < beta_end < 1.0):
        raise ValueError("need 0 < beta_start < beta_end < 1")
    beta = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    prev = np.concatenate(([1.0], alpha_bar[:-1]))
    posterior_var = (1.0 - prev) / (1.0 - alpha_bar) * beta
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar, posterior_var=posterior_var)


def forward_sample(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps."""
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    if not 1 <= t <= sched.T:
        raise ValueError(f"t={t} outside 1..{sched.T}")
    ab = sched.alpha_bar_t(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def posterior_params(
    x_t: np.ndarray, t: int, eps_hat: np.ndarray, sched: NoiseSchedule
) -> tuple[np.ndarray, float]:
    """Reverse-step mean mu = (x_t - beta_t/sqrt(1-alpha_bar_t) eps_hat)/sqrt(alpha_t)
    and the scalar variance sigma_t^2 = beta_tilde_t."""
    x_t = np.asarray(x_t, dtype=float)
    eps_hat = np.asarray(eps_hat, dtype=float)
    if x_t.shape != eps_hat.shape:
        raise ValueError(f"x_t shape {x_t.shape} != eps_hat shape {eps_hat.shape}")
    if not 1 <= t <= sched.T:
        raise ValueError(f"t={t} outside 1..{sched.T}")
    ab = sched.alpha_bar_t(t)
    mu = (x_t - sched.beta_t(t) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(sched.alpha_t(t))
    return mu, sched.posterior_var_t(t)


@dataclass(frozen=True)
class GuidedSampleConfig:
    """Guidance weighting and schedule gating for the reverse process."""

    guidance_scale: float = 1.0  # lambda in the mean-shift term
    gamma_quantity: float = 0.0
    gamma_articoll: float = 0.0
    quantity_t_max: int = 100  # quantity guidance active for t < this
    articoll_t_max: int = 10  # collision guidance active for t < this

    def __post_init__(self):
        if self.guidance_scale < 0 or self.gamma_quantity < 0 or self.gamma_articoll < 0:
            raise ValueError("guidance weights must be >= 0")


def guided_step(
    x_t: np.ndarray,
    t: int,
    denoiser,
    guidance,
    cfg: GuidedSampleConfig,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """One reverse step: x_{t-1} ~ N(mu + lambda sigma_t^2 g, sigma_t^2 I).

    ``denoiser`` is a callable (x, t) -> eps_hat; ``guidance`` (may be None)
    exposes evaluate(state, t) -> (value, g) with g the step direction whose
    addition to the mean lowers the constraint loss. The direction is
    evaluated at the predicted mean, and no noise is injected at t = 1.
    """
    eps_hat = denoiser(x_t, t)
    mu, sigma2 = posterior_params(x_t, t, eps_hat, sched)
    if guidance is not None and cfg.guidance_scale > 0.0:
        _, g = guidance.evaluate(mu, t)
        if not np.all(np.isfinite(g)):
            raise GuidanceError(f"non-finite guidance gradient at t={t}")
        mu = mu + cfg.guidance_scale * sigma2 * g
    if t == 1:
        return mu
    return mu + np.sqrt(sigma2) * rng.standard_normal(mu.shape)


@dataclass
class SampleTrace:
    """Per-scene guidance diagnostics collected during the reverse chain."""

    gated_steps: dict = field(default_factory=dict)
    last_values: dict = field(default_factory=dict)

    def record(self, term_values: dict) -> None:
        for name, value in term_values.items():
            self.gated_steps[name] = self.gated_steps.get(name, 0) + 1
            self.last_values[name] = float(value)

    def summary(self) -> dict:
        return {"gated_steps": dict(self.gated_steps), "last_values": dict(self.last_values)}


def reverse_chain(
    denoiser,
    guidance,
    cfg: GuidedSampleConfig,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    dim: int,
    trace: SampleTrace | None = None,
) -> np.ndarray:
    """Full reverse chain from x_T ~ N(0, I) down to x_0 in state space."""
    x = rng.standard_normal(dim)
    for t in range(sched.T, 0, -1):
        x = guided_step(x, t, denoiser, guidance, cfg, sched, rng)
        if trace is not None and guidance is not None:
            values = guidance.term_values(x, t)
            if values:
                trace.record(values)
    return x


def generate(
    denoiser,
    floorplan: FloorPlan,
    guidance,
    cfg: GuidedSampleConfig,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    spec: NormalizationSpec,
    seed: int = 0,
) -> SceneLayout:
    scene, _ = generate_traced(denoiser, floorplan, guidance, cfg, sched, rng, spec, seed=seed)
    return scene


def generate_traced(
    denoiser,
    floorplan: FloorPlan,
    guidance,
    cfg: GuidedSampleConfig,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    spec: NormalizationSpec,
    seed: int = 0,
) -> tuple[SceneLayout, SampleTrace]:
    """Run the guided reverse chain and decode the result; empty-argmax slots
    are reset to the canonical empty encoding."""
    trace = SampleTrace()
    x0 = reverse_chain(denoiser, guidance, cfg, sched, rng, spec.state_dim, trace=trace)
    scene = denormalize_scene(x0, spec, floorplan_id=floorplan.plan_id, seed=seed)
    return clear_empty_slots(scene, floorplan), trace


# ---------------------------------------------------------------------------
# Training


@dataclass
class AdamState:
    """Adam moment buffers matching a parameter pytree (list of arrays)."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])

    def update(
        self,
        params: list[np.ndarray],
        grads: list[np.ndarray],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.step += 1
        b1c = 1.0 - beta1**self.step
        b2c = 1.0 - beta2**self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + eps)


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is <= max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def denoising_loss_and_grads(
    model,
    x0: np.ndarray,
    cond: np.ndarray,
    t: int,
    eps: np.ndarray,
    guidance,
    guidance_scale: float,
    sched: NoiseSchedule,
) -> tuple[float, list[np.ndarray]]:
    """Per-sample guided denoising loss and its parameter gradients.

    The regression target is eps - lambda sigma_t^2 g with g the guidance
    direction at x_t; with lambda = 0 (or no guidance) this is the plain
    noise-prediction objective. Deterministic given (t, eps), which makes it
    directly checkable by finite differences.
    """
    x_t = forward_sample(x0, t, eps, sched)
    target = eps
    if guidance is not None and guidance_scale > 0.0:
        _, g = guidance.evaluate(x_t, t)
        target = eps - guidance_scale * sched.posterior_var_t(t) * g
    eps_hat, cache = model.forward_cached(x_t, t, cond)
    resid = eps_hat - target
    loss = float(np.mean(resid * resid))
    upstream = (2.0 / resid.size) * resid  # d(mean squared error)/d(eps_hat)
    return loss, model.backward_cached(cache, upstream)


def train_step(
    model,
    batch_x0: np.ndarray,
    conds: np.ndarray,
    guidance,
    guidance_scale: float,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    adam: AdamState,
    lr: float = 2e-4,
    max_grad_norm: float = 10.0,
) -> float:
    """One constraint-aware denoising-loss step over a batch.

    For each sample: draw t ~ U{1..T} and eps ~ N(0, I), noise x0 to x_t,
    and regress the model output against the guided target. Model parameters
    are updated in place by Adam after global-norm clipping.
    """
    batch_x0 = np.atleast_2d(np.asarray(batch_x0, dtype=float))
    conds = np.atleast_2d(np.asarray(conds, dtype=float))
    n = batch_x0.shape[0]
    if n == 0:
        raise ValueError("empty training batch")

    total_loss = 0.0
    grad_sum = [np.zeros_like(p) for p in model.params()]
    for i in range(n):
        t = int(rng.integers(1, sched.T + 1))
        eps = rng.standard_normal(batch_x0.shape[1])
        loss_i, grads = denoising_loss_and_grads(
            model, batch_x0[i], conds[i], t, eps, guidance, guidance_scale, sched
        )
        total_loss += loss_i
        for acc, g_p in zip(grad_sum, grads):
            acc += g_p

    loss = total_loss / n
    if not np.isfinite(loss):
        raise TrainingError("non-finite training loss")
    for acc in grad_sum:
        acc /= n
    clip_grad_norm(grad_sum, max_grad_norm)
    adam.update(model.params(), grad_sum, lr=lr)
    return loss


# ---------------------------------------------------------------------------
# Closed-form oracle for testing the sampler without training


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic Gaussian mixture over state space: (weight, mean, var) per
    component; means broadcast against the state dimension."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        v = np.asarray(self.variances, dtype=float)
        if np.any(w <= 0.0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(v <= 0.0):
            raise ValueError("mixture variances must be positive")
        if mu.shape[0] != w.shape[0] or v.shape[0] != w.shape[0]:
            raise ValueError("mixture component counts disagree")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.means[comp] + np.sqrt(self.variances[comp])[:, None] * rng.standard_normal((n, self.dim))


def oracle_eps(x_t: np.ndarray, t: int, mixture: GaussianMixture, sched: NoiseSchedule) -> np.ndarray:
    """Bayes-optimal noise prediction E[eps | x_t] when x0 follows ``mixture``.

    Each component's noised marginal is N(sqrt(ab) mu_k, (ab v_k + 1 - ab) I);
    the prediction is the responsibility-weighted sum of the per-component
    posterior means of eps. Supports batched x_t of shape (n, dim).
    """
    x = np.asarray(x_t, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    ab = sched.alpha_bar_t(t)
    marg_var = ab * mixture.variances + (1.0 - ab)  # (K,)
    diff = x2[:, None, :] - np.sqrt(ab) * mixture.means[None, :, :]  # (n, K, dim)
    sq = np.sum(diff * diff, axis=2)  # (n, K)
    log_resp = (
        np.log(mixture.weights)[None, :]
        - 0.5 * mixture.dim * np.log(2.0 * np.pi * marg_var)[None, :]
        - 0.5 * sq / marg_var[None, :]
    )
    log_resp -= log_resp.max(axis=1, keepdims=True)
    resp = np.exp(log_resp)
    resp /= resp.sum(axis=1, keepdims=True)
    per_comp = diff * (np.sqrt(1.0 - ab) / marg_var)[None, :, None]
    out = np.sum(resp[:, :, None] * per_comp, axis=1)
    return out[0] if single else out


class OracleDenoiser:
    """Denoiser-shaped wrapper around the closed-form mixture prediction."""

    def __init__(self, mixture: GaussianMixture, sched: NoiseSchedule):
        self.mixture = mixture
        self.sched = sched

    def __call__(self, x_t: np.ndarray, t: int) -> np.ndarray:
        return oracle_eps(x_t, t, self.mixture, self.sched)
