# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: fused dense-network passes and the optimizer update.

Must match ``_numpy`` semantics; only summation order (and hence the last
few ulps) may differ.  All arrays are float64 and C-contiguous.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p, sqrt, tanh

cnp.import_array()

ACT_RELU = 0
ACT_MISH = 1


cdef inline double _mish(double u) noexcept nogil:
    cdef double sp
    if u > 0.0:
        sp = u + log1p(exp(-u))
    else:
        sp = log1p(exp(u))
    return u * tanh(sp)


cdef inline double _mish_grad(double u) noexcept nogil:
    cdef double sp, t, sig
    if u > 0.0:
        sp = u + log1p(exp(-u))
    else:
        sp = log1p(exp(u))
    t = tanh(sp)
    sig = 0.5 * (1.0 + tanh(0.5 * u))
    return t + u * (1.0 - t * t) * sig


cdef void _activate(double[:, ::1] z, double[:, ::1] out, int act_id) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            if act_id == 0:
                out[i, j] = z[i, j] if z[i, j] > 0.0 else 0.0
            else:
                out[i, j] = _mish(z[i, j])


cdef void _affine(double[:, ::1] a, double[:, ::1] w, double[::1] b,
                  double[:, ::1] z) noexcept nogil:
    cdef Py_ssize_t i, o, j
    cdef double acc
    for i in range(a.shape[0]):
        for o in range(w.shape[0]):
            acc = b[o]
            for j in range(w.shape[1]):
                acc += a[i, j] * w[o, j]
            z[i, o] = acc


def mlp_forward(weights, biases, int act_id, x):
    """Run the network on a batch; returns (output, per-layer pre-activations)."""
    cdef Py_ssize_t num_layers = len(weights)
    cdef Py_ssize_t layer
    cdef double[:, ::1] a_view, z_view, w_view
    cdef double[::1] b_view

    a = np.ascontiguousarray(x, dtype=np.float64)
    pre_acts = []
    for layer in range(num_layers):
        w = weights[layer]
        z = np.empty((a.shape[0], w.shape[0]), dtype=np.float64)
        a_view = a
        w_view = w
        b_view = biases[layer]
        z_view = z
        with nogil:
            _affine(a_view, w_view, b_view, z_view)
        pre_acts.append(z)
        if layer == num_layers - 1:
            a = z
        else:
            a = np.empty_like(z)
            a_view = a
            with nogil:
                _activate(z_view, a_view, act_id)
    return a, pre_acts


def mlp_backward(weights, biases, int act_id, x, pre_acts, grad_out):
    """Gradients of sum_n <grad_out[n], output[n]> w.r.t. parameters and input."""
    cdef Py_ssize_t num_layers = len(weights)
    cdef Py_ssize_t layer, i, o, j
    cdef double g
    cdef double[:, ::1] gz, a_prev, gw, ga, w_view, z_prev
    cdef double[::1] gb

    grad_ws = [None] * num_layers
    grad_bs = [None] * num_layers
    grad_z = np.ascontiguousarray(grad_out, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)

    for layer in range(num_layers - 1, -1, -1):
        w = weights[layer]
        if layer == 0:
            a_prev_arr = x
        else:
            a_prev_arr = np.empty_like(pre_acts[layer - 1])
            z_prev = pre_acts[layer - 1]
            a_prev = a_prev_arr
            with nogil:
                _activate(z_prev, a_prev, act_id)
        grad_w = np.zeros_like(w)
        grad_b = np.zeros(w.shape[0], dtype=np.float64)
        grad_a = np.zeros_like(a_prev_arr)

        gz = grad_z
        a_prev = a_prev_arr
        gw = grad_w
        gb = grad_b
        ga = grad_a
        w_view = w
        with nogil:
            for i in range(gz.shape[0]):
                for o in range(gz.shape[1]):
                    g = gz[i, o]
                    gb[o] += g
                    for j in range(w_view.shape[1]):
                        gw[o, j] += g * a_prev[i, j]
                        ga[i, j] += g * w_view[o, j]
        grad_ws[layer] = grad_w
        grad_bs[layer] = grad_b

        if layer > 0:
            z_prev = pre_acts[layer - 1]
            with nogil:
                for i in range(ga.shape[0]):
                    for j in range(ga.shape[1]):
                        if act_id == 0:
                            ga[i, j] = ga[i, j] if z_prev[i, j] > 0.0 else 0.0
                        else:
                            ga[i, j] *= _mish_grad(z_prev[i, j])
            grad_z = grad_a
    return grad_ws, grad_bs, grad_a


def adam_update(param, grad, m, v, long step, double lr, double beta1,
                double beta2, double eps, double weight_decay):
    """One bias-corrected moment update with decoupled weight decay, in place."""
    cdef double[::1] p1 = param.reshape(-1)
    cdef double[::1] g1 = grad.reshape(-1)
    cdef double[::1] m1 = m.reshape(-1)
    cdef double[::1] v1 = v.reshape(-1)
    cdef double bc1 = 1.0 - beta1 ** step
    cdef double bc2 = 1.0 - beta2 ** step
    cdef double m_hat, v_hat
    cdef Py_ssize_t i
    with nogil:
        for i in range(p1.shape[0]):
            m1[i] = beta1 * m1[i] + (1.0 - beta1) * g1[i]
            v1[i] = beta2 * v1[i] + (1.0 - beta2) * g1[i] * g1[i]
            m_hat = m1[i] / bc1
            v_hat = v1[i] / bc2
            p1[i] -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p1[i])
