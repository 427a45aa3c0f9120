"""Gaussian latent heads: conditional prior and posterior over z.

A head maps a conditioning vector to the mean and log-variance of a
diagonal Gaussian over the latent.  The prior conditions on the auxiliary
observation x alone, the posterior on [x; s]; both are plain networks whose
output splits into (mu, logvar) with logvar clamped to [-10, 10] to keep
early training away from degenerate variances.

Sampling uses the standard reparameterization z = mu + exp(logvar/2) * eps
with caller-supplied eps, and the divergence between two heads' diagonal
Gaussians has the closed form implemented in :func:`kl_diag_gaussians`.
"""

from dataclasses import dataclass, field

import numpy as np

from .net import Network, backward_batch, forward_batch, init_network

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


@dataclass
class GaussianHead:
    net: Network
    latent_dim: int
    # forward-evaluation counter; lets tests assert which heads inference touches
    calls: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.net.out_dim != 2 * self.latent_dim:
            raise ValueError(
                f"head net output dim {self.net.out_dim} != 2 * latent_dim {self.latent_dim}"
            )


def make_head(cond_dim, latent_dim, hidden_dims, activation="relu", seed=0) -> GaussianHead:
    dims = (cond_dim, *hidden_dims, 2 * latent_dim)
    return GaussianHead(init_network(dims, activation, seed), latent_dim)


def head_forward(head: GaussianHead, cond: np.ndarray):
    """Map one conditioning vector to (mu, clamped logvar)."""
    mu, logvar = head_forward_batch(head, np.asarray(cond, dtype=np.float64)[None, :])
    return mu[0], logvar[0]


def head_forward_batch(head: GaussianHead, cond: np.ndarray, cache: bool = False):
    """Batch head evaluation.

    With ``cache`` returns ((mu, logvar, clamp_mask), pre_acts) for use by
    :func:`head_backward_batch`; the mask zeroes the logvar gradient where
    the clamp is active.
    """
    head.calls += 1
    out, pre_acts = forward_batch(head.net, cond, cache=True)
    dz = head.latent_dim
    mu = out[:, :dz]
    raw = out[:, dz:]
    logvar = np.clip(raw, LOGVAR_MIN, LOGVAR_MAX)
    if not cache:
        return mu, logvar
    mask = ((raw > LOGVAR_MIN) & (raw < LOGVAR_MAX)).astype(np.float64)
    return (mu, logvar, mask), pre_acts


def head_backward_batch(head: GaussianHead, cond, pre_acts, grad_mu, grad_logvar, clamp_mask):
    """Backprop (grad_mu, grad_logvar) through the head network."""
    grad_out = np.concatenate([grad_mu, grad_logvar * clamp_mask], axis=1)
    return backward_batch(head.net, cond, pre_acts, grad_out)


def _match(name_a, a, name_b, b):
    if a.shape != b.shape:
        raise ValueError(f"{name_a} shape {a.shape} != {name_b} shape {b.shape}")


def reparameterize(mu: np.ndarray, logvar: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """z = mu + exp(logvar / 2) * eps, elementwise."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _match("mu", mu, "logvar", logvar)
    _match("mu", mu, "eps", eps)
    return mu + np.exp(0.5 * logvar) * eps


def kl_diag_gaussians(mu_q, logvar_q, mu_p, logvar_p) -> float:
    """KL(q || p) between diagonal Gaussians, summed over dimensions."""
    return float(np.sum(_kl_terms(mu_q, logvar_q, mu_p, logvar_p)))


def kl_diag_gaussians_batch(mu_q, logvar_q, mu_p, logvar_p) -> np.ndarray:
    """Per-sample KL(q || p) for (n, d_z) parameter batches."""
    return np.sum(_kl_terms(mu_q, logvar_q, mu_p, logvar_p), axis=-1)


def _kl_terms(mu_q, logvar_q, mu_p, logvar_p):
    mu_q = np.asarray(mu_q, dtype=np.float64)
    logvar_q = np.asarray(logvar_q, dtype=np.float64)
    mu_p = np.asarray(mu_p, dtype=np.float64)
    logvar_p = np.asarray(logvar_p, dtype=np.float64)
    for name, arr in (("logvar_q", logvar_q), ("mu_p", mu_p), ("logvar_p", logvar_p)):
        _match("mu_q", mu_q, name, arr)
    inv_var_p = np.exp(-logvar_p)
    return 0.5 * (
        logvar_p - logvar_q + (np.exp(logvar_q) + (mu_q - mu_p) ** 2) * inv_var_p - 1.0
    )


def kl_diag_gaussians_grads(mu_q, logvar_q, mu_p, logvar_p):
    """Partials of the summed KL w.r.t. all four parameter arrays."""
    inv_var_p = np.exp(-logvar_p)
    diff = mu_q - mu_p
    d_mu_q = diff * inv_var_p
    d_logvar_q = 0.5 * (np.exp(logvar_q) * inv_var_p - 1.0)
    d_mu_p = -d_mu_q
    d_logvar_p = 0.5 * (1.0 - (np.exp(logvar_q) + diff**2) * inv_var_p)
    return d_mu_q, d_logvar_q, d_mu_p, d_logvar_p
