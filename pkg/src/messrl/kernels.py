"""Elementwise hot-path kernels behind the network math.

Matrix products go through BLAS either way; what numba buys is fusing
the bias/activation/optimizer elementwise work that otherwise costs one
temporary and one dispatch each inside the training loop.  The numba
path is used when importable; set MESSRL_NO_NUMBA=1 to force the numpy
fallback, or call set_backend() at runtime (the benchmark does).

All kernels mutate their first argument in place and also return it.
"""

import math
import os

import numpy as np


# ----------------------------------------------------------------------
# numpy fallback

def _np_add_bias_relu(z, b):
    z += b
    np.maximum(z, 0.0, out=z)
    return z


def _np_add_bias_tanh(z, b):
    z += b
    np.tanh(z, out=z)
    return z


def _np_add_bias(z, b):
    z += b
    return z


def _np_relu_grad(delta, a):
    delta *= a > 0.0
    return delta


def _np_tanh_grad(delta, a):
    delta *= 1.0 - a * a
    return delta


def _np_adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return p


def _np_polyak(target, online, tau):
    target *= 1.0 - tau
    target += tau * online
    return target


_NUMPY = {
    "add_bias_relu": _np_add_bias_relu,
    "add_bias_tanh": _np_add_bias_tanh,
    "add_bias": _np_add_bias,
    "relu_grad": _np_relu_grad,
    "tanh_grad": _np_tanh_grad,
    "adam_update": _np_adam_update,
    "polyak": _np_polyak,
}

_BACKENDS = {"numpy": _NUMPY}


# ----------------------------------------------------------------------
# numba path

try:
    from numba import njit

    @njit(cache=True)
    def _nb_add_bias_relu(z, b):
        n, k = z.shape
        for i in range(n):
            for j in range(k):
                s = z[i, j] + b[j]
                z[i, j] = s if s > 0.0 else 0.0
        return z

    @njit(cache=True)
    def _nb_add_bias(z, b):
        n, k = z.shape
        for i in range(n):
            for j in range(k):
                z[i, j] += b[j]
        return z

    @njit(cache=True)
    def _nb_relu_grad(delta, a):
        n, k = delta.shape
        for i in range(n):
            for j in range(k):
                if a[i, j] <= 0.0:
                    delta[i, j] = 0.0
        return delta

    @njit(cache=True)
    def _nb_tanh_grad(delta, a):
        n, k = delta.shape
        for i in range(n):
            for j in range(k):
                delta[i, j] *= 1.0 - a[i, j] * a[i, j]
        return delta

    @njit(cache=True)
    def _nb_adam_flat(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
        for i in range(p.size):
            mi = beta1 * m[i] + (1.0 - beta1) * g[i]
            vi = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / bc1) / (math.sqrt(vi / bc2) + eps)

    @njit(cache=True)
    def _nb_polyak_flat(target, online, tau):
        for i in range(target.size):
            target[i] = tau * online[i] + (1.0 - tau) * target[i]

    def _nb_adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
        _nb_adam_flat(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                      m.reshape(-1), v.reshape(-1),
                      lr, beta1, beta2, eps, bc1, bc2)
        return p

    def _nb_polyak(target, online, tau):
        _nb_polyak_flat(target.reshape(-1), online.reshape(-1), tau)
        return target

    _BACKENDS["numba"] = {
        "add_bias_relu": _nb_add_bias_relu,
        # numpy's SIMD tanh beats a scalar libm loop at every width we
        # use; the tanh forward stays on the fallback even here
        "add_bias_tanh": _np_add_bias_tanh,
        "add_bias": _nb_add_bias,
        "relu_grad": _nb_relu_grad,
        "tanh_grad": _nb_tanh_grad,
        "adam_update": _nb_adam_update,
        "polyak": _nb_polyak,
    }
except ImportError:  # pragma: no cover - numba is an optional speedup
    pass


_active = "numpy"


def available_backends():
    return sorted(_BACKENDS)


def backend():
    return _active


def set_backend(name):
    """Select the kernel implementation; returns the previous name."""
    global _active, add_bias_relu, add_bias_tanh, add_bias
    global relu_grad, tanh_grad, adam_update, polyak
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; "
                         f"have {available_backends()}")
    previous = _active
    impl = _BACKENDS[name]
    add_bias_relu = impl["add_bias_relu"]
    add_bias_tanh = impl["add_bias_tanh"]
    add_bias = impl["add_bias"]
    relu_grad = impl["relu_grad"]
    tanh_grad = impl["tanh_grad"]
    adam_update = impl["adam_update"]
    polyak = impl["polyak"]
    _active = name
    return previous


set_backend("numba" if "numba" in _BACKENDS
            and not os.environ.get("MESSRL_NO_NUMBA") else "numpy")
