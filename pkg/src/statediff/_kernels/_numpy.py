"""Pure-numpy reference implementation of the hot kernels.

Semantics are the contract; the compiled backend must match these functions
to floating-point roundoff.  Shapes: ``x`` is (n, d_in), weights are
(d_out, d_in) per layer, biases (d_out,).  Hidden layers apply the chosen
activation, the final layer is linear.
"""

import numpy as np

ACT_RELU = 0
ACT_MISH = 1


def _act(z, act_id):
    if act_id == ACT_RELU:
        return np.maximum(z, 0.0)
    # mish(u) = u * tanh(softplus(u)), softplus via logaddexp for stability
    return z * np.tanh(np.logaddexp(0.0, z))


def _act_grad(z, act_id):
    if act_id == ACT_RELU:
        return np.where(z > 0.0, 1.0, 0.0)
    t = np.tanh(np.logaddexp(0.0, z))
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    return t + z * (1.0 - t * t) * sig


def mlp_forward(weights, biases, act_id, x):
    """Run the network on a batch; returns (output, per-layer pre-activations)."""
    pre_acts = []
    a = x
    last = len(weights) - 1
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w.T + b
        pre_acts.append(z)
        a = z if layer == last else _act(z, act_id)
    return a, pre_acts


def mlp_backward(weights, biases, act_id, x, pre_acts, grad_out):
    """Gradients of sum_n <grad_out[n], output[n]> w.r.t. parameters and input.

    ``pre_acts`` must come from ``mlp_forward`` on the same (x, params);
    hidden activations are recomputed from them.
    """
    num_layers = len(weights)
    grad_ws = [None] * num_layers
    grad_bs = [None] * num_layers
    grad_z = grad_out
    for layer in range(num_layers - 1, -1, -1):
        a_prev = x if layer == 0 else _act(pre_acts[layer - 1], act_id)
        grad_ws[layer] = grad_z.T @ a_prev
        grad_bs[layer] = grad_z.sum(axis=0)
        grad_a_prev = grad_z @ weights[layer]
        if layer > 0:
            grad_z = grad_a_prev * _act_grad(pre_acts[layer - 1], act_id)
    return grad_ws, grad_bs, grad_a_prev


def adam_update(param, grad, m, v, step, lr, beta1, beta2, eps, weight_decay):
    """One bias-corrected moment update with decoupled weight decay, in place.

    ``step`` is the 1-based count including this update.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * param)
