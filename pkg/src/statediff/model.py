"""Latent-conditioned diffusion model for one-to-many state inference.

The bundle couples three trainable pieces: a denoiser predicting the noise
added to a state, a prior head p(z|x) and a posterior head q(z|x, s).  The
denoiser sees [noisy state; condition x; latent z; timestep embedding] and
all three are trained jointly on

    mean ||eps - denoiser(noised(s, k, eps), x, z, k)||^2
        + beta_kl * mean KL(q(z|x, s) || p(z|x))

with k uniform over 1..K, eps unit Gaussian, and z reparameterized from
the posterior.  Generation draws z from the *prior* (the posterior is never
evaluated at inference), starts from a unit-Gaussian state and applies the
reverse chain for k = K..1 with the same z at every step.

All per-sample randomness is derived from (seed, purpose, index) streams,
so sampling may be parallelized across samples without changing results.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .latent import (
    GaussianHead,
    head_backward_batch,
    head_forward_batch,
    kl_diag_gaussians_batch,
    kl_diag_gaussians_grads,
    make_head,
)
from .net import (
    Network,
    adam_step,
    backward_batch,
    forward_batch,
    init_adam,
    init_network,
)
from .schedule import Schedule, reverse_step
from .streams import child_seed, rng_stream

EMBED_DIM = 8


def timestep_embedding(k, dim: int = EMBED_DIM) -> np.ndarray:
    """Sinusoidal embedding of step indices; k may be a scalar or an array.

    Returns shape (dim,) for scalars, (n, dim) for arrays.
    """
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = np.multiply.outer(np.asarray(k, dtype=np.float64), freqs)
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


@dataclass
class LatentDiffusion:
    denoiser: Network
    prior: GaussianHead
    posterior: GaussianHead
    sched: Schedule
    state_dim: int
    cond_dim: int
    latent_dim: int
    embed_dim: int = EMBED_DIM
    beta_kl: float = 0.1
    # filled in by train(); serialized with the checkpoint
    delta_sq_hat: float = float("nan")
    kl_hat: float = float("nan")

    def __post_init__(self):
        want_in = self.state_dim + self.cond_dim + self.latent_dim + self.embed_dim
        if self.denoiser.in_dim != want_in:
            raise ValueError(f"denoiser input dim {self.denoiser.in_dim}, expected {want_in}")
        if self.denoiser.out_dim != self.state_dim:
            raise ValueError(
                f"denoiser output dim {self.denoiser.out_dim}, expected {self.state_dim}"
            )
        if self.prior.net.in_dim != self.cond_dim:
            raise ValueError("prior head must condition on x")
        if self.posterior.net.in_dim != self.cond_dim + self.state_dim:
            raise ValueError("posterior head must condition on [x; s]")


def make_model(
    state_dim,
    cond_dim,
    latent_dim,
    sched: Schedule,
    denoiser_hidden=(64, 64),
    head_hidden=(64, 64),
    seed: int = 0,
    beta_kl: float = 0.1,
) -> LatentDiffusion:
    """Build an untrained model; mish denoiser, relu heads."""
    den_in = state_dim + cond_dim + latent_dim + EMBED_DIM
    denoiser = init_network(
        (den_in, *denoiser_hidden, state_dim), "mish", child_seed(seed, "init-denoiser")
    )
    prior = make_head(cond_dim, latent_dim, head_hidden, "relu", child_seed(seed, "init-prior"))
    posterior = make_head(
        cond_dim + state_dim, latent_dim, head_hidden, "relu", child_seed(seed, "init-posterior")
    )
    return LatentDiffusion(
        denoiser, prior, posterior, sched, state_dim, cond_dim, latent_dim, beta_kl=beta_kl
    )


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 200
    lr: float = 2e-4
    weight_decay: float = 1e-4
    beta_kl: float = 0.1
    seed: int = 0
    eval_interval: int = 10

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.beta_kl < 0:
            raise ValueError("beta_kl must be >= 0")
        if self.eval_interval < 1:
            raise ValueError("eval_interval must be >= 1")


@dataclass
class IntervalRecord:
    epoch: int
    mse_term: float
    kl_term: float
    total_loss: float
    delta_sq_hat: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    @property
    def final_delta_sq(self) -> float:
        return self.records[-1].delta_sq_hat if self.records else float("nan")


def _dataset_arrays(dataset):
    if hasattr(dataset, "xs"):
        return dataset.xs, dataset.ss
    xs, ss = dataset
    return np.asarray(xs, dtype=np.float64), np.asarray(ss, dtype=np.float64)


def training_loss(model, xs, ss, eps_draws, z_eps_draws, k_draws, with_grads=False):
    """Evaluate the objective on a batch with caller-supplied randomness.

    Returns (total, mse_term, kl_term); with ``with_grads`` also a dict of
    per-component (grad_weights, grad_biases) covering denoiser, prior and
    posterior.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ss = np.ascontiguousarray(ss, dtype=np.float64)
    n = xs.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    eps = np.ascontiguousarray(eps_draws, dtype=np.float64)
    z_eps = np.ascontiguousarray(z_eps_draws, dtype=np.float64)
    ks = np.asarray(k_draws)
    if ss.shape != (n, model.state_dim) or xs.shape != (n, model.cond_dim):
        raise ValueError("batch dims do not match model dims")
    if eps.shape != ss.shape:
        raise ValueError(f"eps_draws shape {eps.shape}, expected {ss.shape}")
    if z_eps.shape != (n, model.latent_dim):
        raise ValueError(f"z_eps_draws shape {z_eps.shape}, expected {(n, model.latent_dim)}")
    if ks.shape != (n,) or ks.min() < 1 or ks.max() > model.sched.num_steps:
        raise ValueError("k_draws must be n step indices in 1..K")

    post_in = np.concatenate([xs, ss], axis=1)
    (mu_q, logvar_q, mask_q), pre_q = head_forward_batch(model.posterior, post_in, cache=True)
    (mu_p, logvar_p, mask_p), pre_p = head_forward_batch(model.prior, xs, cache=True)

    half_std_q = np.exp(0.5 * logvar_q)
    z = mu_q + half_std_q * z_eps

    ab = model.sched.alpha_bars[ks - 1]
    noisy = np.sqrt(ab)[:, None] * ss + np.sqrt(1.0 - ab)[:, None] * eps
    den_in = np.concatenate([noisy, xs, z, timestep_embedding(ks, model.embed_dim)], axis=1)
    eps_hat, pre_d = forward_batch(model.denoiser, den_in, cache=True)

    resid = eps_hat - eps
    mse_term = float(np.mean(np.sum(resid**2, axis=1)))
    kl_term = float(np.mean(kl_diag_gaussians_batch(mu_q, logvar_q, mu_p, logvar_p)))
    total = mse_term + model.beta_kl * kl_term
    if not with_grads:
        return total, mse_term, kl_term

    grad_eps_hat = (2.0 / n) * resid
    gws_d, gbs_d, grad_den_in = backward_batch(model.denoiser, den_in, pre_d, grad_eps_hat)
    z_lo = model.state_dim + model.cond_dim
    grad_z = grad_den_in[:, z_lo : z_lo + model.latent_dim]

    grad_mu_q = grad_z.copy()
    grad_logvar_q = grad_z * z_eps * 0.5 * half_std_q

    d_mu_q, d_lv_q, d_mu_p, d_lv_p = kl_diag_gaussians_grads(mu_q, logvar_q, mu_p, logvar_p)
    kl_scale = model.beta_kl / n
    grad_mu_q += kl_scale * d_mu_q
    grad_logvar_q += kl_scale * d_lv_q

    gws_q, gbs_q, _ = head_backward_batch(
        model.posterior, post_in, pre_q, grad_mu_q, grad_logvar_q, mask_q
    )
    gws_p, gbs_p, _ = head_backward_batch(
        model.prior, xs, pre_p, kl_scale * d_mu_p, kl_scale * d_lv_p, mask_p
    )
    grads = {
        "denoiser": (gws_d, gbs_d),
        "posterior": (gws_q, gbs_q),
        "prior": (gws_p, gbs_p),
    }
    return (total, mse_term, kl_term), grads


def train(model: LatentDiffusion, dataset, cfg: TrainConfig, on_interval=None) -> TrainHistory:
    """Optimize denoiser + heads jointly with shuffled mini-batches.

    Mutates ``model`` in place and returns the loss history; identical
    (model, dataset, cfg) always produce identical parameters.  The final
    interval's mse/kl averages are stored on the model as delta_sq_hat and
    kl_hat.  ``on_interval(record, model)`` is invoked after each recorded
    interval (the CLI uses it to keep a last-good checkpoint).
    """
    xs, ss = _dataset_arrays(dataset)
    n = xs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    model.beta_kl = cfg.beta_kl
    history = TrainHistory()
    if cfg.epochs == 0:
        return history

    opts = {
        "denoiser": init_adam(model.denoiser, cfg.lr, cfg.weight_decay),
        "posterior": init_adam(model.posterior.net, cfg.lr, cfg.weight_decay),
        "prior": init_adam(model.prior.net, cfg.lr, cfg.weight_decay),
    }
    nets = {
        "denoiser": model.denoiser,
        "posterior": model.posterior.net,
        "prior": model.prior.net,
    }
    rng = rng_stream(cfg.seed, "train")
    k_hi = model.sched.num_steps + 1

    acc = np.zeros(3)
    acc_batches = 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            nb = idx.size
            ks = rng.integers(1, k_hi, size=nb)
            eps = rng.standard_normal((nb, model.state_dim))
            z_eps = rng.standard_normal((nb, model.latent_dim))
            (total, mse, kl), grads = training_loss(
                model, xs[idx], ss[idx], eps, z_eps, ks, with_grads=True
            )
            if not np.isfinite(total):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} (mse={mse}, kl={kl})"
                )
            for name in ("denoiser", "posterior", "prior"):
                adam_step(opts[name], nets[name], *grads[name])
            acc += (mse, kl, total)
            acc_batches += 1
        if epoch % cfg.eval_interval == 0 or epoch == cfg.epochs:
            mean_mse, mean_kl, mean_total = acc / acc_batches
            record = IntervalRecord(epoch, mean_mse, mean_kl, mean_total, mean_mse)
            history.records.append(record)
            model.delta_sq_hat = mean_mse
            model.kl_hat = mean_kl
            if on_interval is not None:
                on_interval(record, model)
            acc[:] = 0.0
            acc_batches = 0
    return history


def sample(model: LatentDiffusion, x, n: int, seed: int = 0) -> np.ndarray:
    """Draw n states conditioned on x via the reverse chain.

    Per sample i, the stream (seed, "sample", i) supplies, in order: the
    latent eps, the initial state, then the per-step noise for k = K..2
    (the final step injects none).  Only the prior head is consulted.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.cond_dim,):
        raise ValueError(f"condition shape {x.shape}, expected ({model.cond_dim},)")
    d, dz, big_k = model.state_dim, model.latent_dim, model.sched.num_steps
    if n == 0:
        return np.empty((0, d))

    z_eps = np.empty((n, dz))
    states = np.empty((n, d))
    noises = np.empty((big_k - 1, n, d)) if big_k > 1 else None
    for i in range(n):
        rng = rng_stream(seed, "sample", i)
        z_eps[i] = rng.standard_normal(dz)
        states[i] = rng.standard_normal(d)
        for j in range(big_k - 1):
            noises[j, i] = rng.standard_normal(d)

    mu_p, logvar_p = head_forward_batch(model.prior, np.broadcast_to(x, (n, model.cond_dim)))
    z = mu_p + np.exp(0.5 * logvar_p) * z_eps

    xs = np.broadcast_to(x, (n, model.cond_dim))
    for k in range(big_k, 0, -1):
        emb = np.broadcast_to(timestep_embedding(k, model.embed_dim), (n, model.embed_dim))
        den_in = np.concatenate([states, xs, z, emb], axis=1)
        eps_hat = forward_batch(model.denoiser, den_in)
        noise = noises[big_k - k] if k > 1 else np.zeros((n, d))
        states = reverse_step(model.sched, states, eps_hat, k, noise)
    return states


def baseline_regressor(dataset, layer_dims, cfg: TrainConfig) -> Network:
    """Train a plain network x -> s by least squares; the mode-averaging
    reference point for multi-modal tasks."""
    xs, ss = _dataset_arrays(dataset)
    n = xs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    net = init_network(layer_dims, "relu", child_seed(cfg.seed, "init-baseline"))
    if net.in_dim != xs.shape[1] or net.out_dim != ss.shape[1]:
        raise ValueError("regressor dims do not match dataset dims")
    opt = init_adam(net, cfg.lr, cfg.weight_decay)
    rng = rng_stream(cfg.seed, "train-baseline")
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            batch_x = np.ascontiguousarray(xs[idx])
            pred, pre = forward_batch(net, batch_x, cache=True)
            resid = pred - ss[idx]
            if not np.isfinite(resid).all():
                raise NumericalError("non-finite regressor residual")
            gws, gbs, _ = backward_batch(net, batch_x, pre, (2.0 / idx.size) * resid)
            adam_step(opt, net, gws, gbs)
    return net
