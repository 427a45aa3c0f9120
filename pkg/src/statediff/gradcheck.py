"""Finite-difference verification of the analytic gradients.

Central differences are the independent route against which the
reverse-mode gradients are compared: every parameter is perturbed by +/- h
and the objective re-evaluated, touching none of the backward-pass code.
"""

import numpy as np

from .model import LatentDiffusion, training_loss
from .net import Network, backward, forward
from .streams import rng_stream

DEFAULT_STEP = 1e-5


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Worst elementwise relative disagreement, floored to dodge 0/0."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _param_arrays(net: Network):
    return list(net.weights) + list(net.biases)


def check_network_gradients(net: Network, x, grad_output, h: float = DEFAULT_STEP) -> float:
    """Max relative error of backward() against central differences of
    <grad_output, forward(net, x)> over every parameter and the input."""
    x = np.asarray(x, dtype=np.float64)
    grad_output = np.asarray(grad_output, dtype=np.float64)

    def objective():
        return float(grad_output @ forward(net, x))

    gws, gbs, gx = backward(net, x, grad_output)
    analytic = list(gws) + list(gbs)
    worst = 0.0
    for param, grad in zip(_param_arrays(net), analytic):
        fd = np.empty_like(param)
        flat_p = param.ravel()
        flat_fd = fd.ravel()
        for i in range(flat_p.size):
            keep = flat_p[i]
            flat_p[i] = keep + h
            up = objective()
            flat_p[i] = keep - h
            down = objective()
            flat_p[i] = keep
            flat_fd[i] = (up - down) / (2.0 * h)
        worst = max(worst, max_rel_error(grad, fd))

    fd_x = np.empty_like(x)
    for i in range(x.size):
        keep = x[i]
        x[i] = keep + h
        up = objective()
        x[i] = keep - h
        down = objective()
        x[i] = keep
        fd_x[i] = (up - down) / (2.0 * h)
    return max(worst, max_rel_error(gx, fd_x))


def check_loss_gradients(
    model: LatentDiffusion, xs, ss, eps, z_eps, ks, h: float = DEFAULT_STEP
) -> float:
    """Max relative error of the full objective's analytic gradients against
    central differences, over every parameter of all three networks."""

    def objective():
        total, _, _ = training_loss(model, xs, ss, eps, z_eps, ks)
        return total

    _, grads = training_loss(model, xs, ss, eps, z_eps, ks, with_grads=True)
    nets = {
        "denoiser": model.denoiser,
        "posterior": model.posterior.net,
        "prior": model.prior.net,
    }
    worst = 0.0
    for name, net in nets.items():
        gws, gbs = grads[name]
        for param, grad in zip(_param_arrays(net), list(gws) + list(gbs)):
            flat_p = param.ravel()
            fd = np.empty(flat_p.size)
            for i in range(flat_p.size):
                keep = flat_p[i]
                flat_p[i] = keep + h
                up = objective()
                flat_p[i] = keep - h
                down = objective()
                flat_p[i] = keep
                fd[i] = (up - down) / (2.0 * h)
            worst = max(worst, max_rel_error(grad.ravel(), fd))
    return worst


def random_check_case(dims, activation: str, seed: int):
    """A deterministic (net, x, grad_output) triple for gradient checking."""
    from .net import init_network

    rng = rng_stream(seed, "gradcheck")
    net = init_network(dims, activation, seed)
    x = rng.standard_normal(dims[0])
    grad_output = rng.standard_normal(dims[-1])
    return net, x, grad_output
