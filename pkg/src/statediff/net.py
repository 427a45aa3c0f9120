"""Dense networks with reverse-mode gradients and an Adam optimizer.

This is the only trainable-function substrate in the package: the denoiser,
the two latent heads and the baseline regressor are all instances of
``Network``.  Hidden layers use relu or mish, the output layer is linear.
Parameters and all math are float64.

Networks are value-like: ``forward``/``backward`` never mutate them, only
``adam_step`` does, on the single instance the training loop owns.  The hot
passes delegate to :mod:`statediff._kernels` (compiled when available).
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

ACTIVATION_IDS = {"relu": _kernels.ACT_RELU, "mish": _kernels.ACT_MISH}


def mish(u):
    """mish(u) = u * tanh(ln(1 + e^u)); smooth, mish(0) = 0, ~u for large u."""
    u = np.asarray(u, dtype=np.float64)
    return u * np.tanh(np.logaddexp(0.0, u))


@dataclass
class Network:
    layer_dims: tuple
    weights: list = field(repr=False)
    biases: list = field(repr=False)
    activation: str = "relu"

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def init_network(layer_dims, activation: str = "relu", seed: int = 0) -> Network:
    """Create a network with fan-in-scaled uniform weights and zero biases.

    Identical (layer_dims, activation, seed) always yields identical
    parameters.
    """
    layer_dims = tuple(int(d) for d in layer_dims)
    if len(layer_dims) < 2:
        raise ValueError(f"need at least input and output dims, got {layer_dims}")
    if any(d < 1 for d in layer_dims):
        raise ValueError(f"layer dims must be positive, got {layer_dims}")
    if activation not in ACTIVATION_IDS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(layer_dims, weights, biases, activation)


def clone_network(net: Network) -> Network:
    return Network(
        net.layer_dims,
        [w.copy() for w in net.weights],
        [b.copy() for b in net.biases],
        net.activation,
    )


def _check_input(net, x, batched):
    expected = (net.in_dim,) if not batched else (x.shape[0], net.in_dim)
    if x.shape != expected:
        raise ValueError(f"input shape {x.shape} does not match layer dims {net.layer_dims}")


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    _check_input(net, x, batched=False)
    y, _ = _kernels.mlp_forward(
        net.weights, net.biases, ACTIVATION_IDS[net.activation], x[None, :]
    )
    return y[0]


def forward_batch(net: Network, x: np.ndarray, cache: bool = False):
    """Evaluate on a (n, in_dim) batch; with ``cache`` also return the
    pre-activations needed by :func:`backward_batch`."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    _check_input(net, x, batched=True)
    y, pre_acts = _kernels.mlp_forward(net.weights, net.biases, ACTIVATION_IDS[net.activation], x)
    return (y, pre_acts) if cache else y


def backward(net: Network, x: np.ndarray, grad_output: np.ndarray):
    """Gradients of <grad_output, forward(net, x)> for a single vector.

    Returns (grad_weights, grad_biases, grad_x).
    """
    x = np.asarray(x, dtype=np.float64)
    grad_output = np.asarray(grad_output, dtype=np.float64)
    _check_input(net, x, batched=False)
    if grad_output.shape != (net.out_dim,):
        raise ValueError(f"grad_output shape {grad_output.shape}, expected ({net.out_dim},)")
    gws, gbs, gx = backward_batch(net, x[None, :], None, grad_output[None, :])
    return gws, gbs, gx[0]


def backward_batch(net: Network, x, pre_acts, grad_output):
    """Batch gradients; recomputes the forward pass when no cache is given."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    grad_output = np.ascontiguousarray(grad_output, dtype=np.float64)
    act_id = ACTIVATION_IDS[net.activation]
    if pre_acts is None:
        _, pre_acts = _kernels.mlp_forward(net.weights, net.biases, act_id, x)
    return _kernels.mlp_backward(net.weights, net.biases, act_id, x, pre_acts, grad_output)


def params_flat(net: Network) -> np.ndarray:
    """All parameters as one float64 vector (per layer: weights row-major,
    then bias); the layout used by checkpoints."""
    parts = []
    for w, b in zip(net.weights, net.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts) if parts else np.empty(0)


def set_params_flat(net: Network, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != net.param_count:
        raise ValueError(f"expected {net.param_count} parameters, got {flat.size}")
    offset = 0
    for w, b in zip(net.weights, net.biases):
        w[...] = flat[offset : offset + w.size].reshape(w.shape)
        offset += w.size
        b[...] = flat[offset : offset + b.size]
        offset += b.size


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters for one network."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m_w: list = field(default_factory=list, repr=False)
    v_w: list = field(default_factory=list, repr=False)
    m_b: list = field(default_factory=list, repr=False)
    v_b: list = field(default_factory=list, repr=False)


def init_adam(net: Network, lr: float, weight_decay: float = 0.0, **kwargs) -> AdamState:
    state = AdamState(lr=lr, weight_decay=weight_decay, **kwargs)
    state.m_w = [np.zeros_like(w) for w in net.weights]
    state.v_w = [np.zeros_like(w) for w in net.weights]
    state.m_b = [np.zeros_like(b) for b in net.biases]
    state.v_b = [np.zeros_like(b) for b in net.biases]
    return state


def adam_step(state: AdamState, net: Network, grad_ws, grad_bs) -> None:
    """Apply one optimizer update to ``net`` in place."""
    if len(grad_ws) != len(net.weights) or len(grad_bs) != len(net.biases):
        raise ValueError("gradient list lengths do not match the network")
    for g, w in zip(grad_ws, net.weights):
        if g.shape != w.shape:
            raise ValueError(f"weight grad shape {g.shape} != {w.shape}")
    for g, b in zip(grad_bs, net.biases):
        if g.shape != b.shape:
            raise ValueError(f"bias grad shape {g.shape} != {b.shape}")
    state.step += 1
    for i in range(len(net.weights)):
        _kernels.adam_update(
            net.weights[i], grad_ws[i], state.m_w[i], state.v_w[i],
            state.step, state.lr, state.beta1, state.beta2, state.eps, state.weight_decay,
        )
        _kernels.adam_update(
            net.biases[i], grad_bs[i], state.m_b[i], state.v_b[i],
            state.step, state.lr, state.beta1, state.beta2, state.eps, state.weight_decay,
        )
