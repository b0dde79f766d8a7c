"""Minimal neural-network substrate: MLPs with hand-written reverse-mode
gradients, Adam, and Polyak target tracking.

Everything is float64 numpy.  Forward passes are pure; training mutates
parameters in place through the optimizer only.  The elementwise inner
loops live in kernels.py and run jitted when numba is available.
"""

import numpy as np

from . import kernels as K

ACTIVATIONS = ("identity", "tanh")


class Mlp:
    """Fully connected network, ReLU hidden layers.

    Args:
        sizes: (input, hidden..., output) layer widths.
        output: "identity" (critics) or "tanh" (actors).
        rng: numpy Generator used for initialization.

    Parameters are initialized uniform in +-1/sqrt(fan_in).
    """

    def __init__(self, sizes, output="identity", rng=None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output widths")
        if output not in ACTIVATIONS:
            raise ValueError(f"output must be one of {ACTIVATIONS}")
        rng = rng if rng is not None else np.random.default_rng()
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound,
                                            size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_layers(self):
        return len(self.weights)

    def params(self):
        """Flat list [W0, b0, W1, b1, ...]; views, not copies."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[-1]} != {self.sizes[0]}")
        return x, squeeze

    def forward(self, x):
        """Deterministic forward pass; accepts (n, in) or (in,)."""
        x, squeeze = self._check_input(x)
        a = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w
            if i < last:
                a = K.add_bias_relu(z, b)
            elif self.output == "tanh":
                a = K.add_bias_tanh(z, b)
            else:
                a = K.add_bias(z, b)
        return a[0] if squeeze else a

    def forward_cached(self, x):
        """Forward pass that records layer activations for backward().

        Returns (output, cache) where cache is the list of activations
        [a0=x, a1, ..., aL=output].
        """
        x, _ = self._check_input(x)
        acts = [x]
        last = self.n_layers - 1
        a = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w
            if i < last:
                a = K.add_bias_relu(z, b)
            elif self.output == "tanh":
                a = K.add_bias_tanh(z, b)
            else:
                a = K.add_bias(z, b)
            acts.append(a)
        return a, acts

    def backward(self, cache, upstream, need_param_grads=True):
        """Backpropagate an upstream gradient through the recorded pass.

        Args:
            cache: activation list from forward_cached.
            upstream: dLoss/dOutput, shape (n, out).
            need_param_grads: skip dW/db work when only the input
                gradient is wanted (actor update through a critic).

        Returns:
            (grads, dx): grads aligned with params() (or None), dx is
            dLoss/dInput with shape (n, in).
        """
        if cache is None or len(cache) != self.n_layers + 1:
            raise ValueError("backward needs the cache of a forward pass")
        delta = np.array(upstream, dtype=np.float64, copy=True)
        if delta.shape != cache[-1].shape:
            raise ValueError("upstream gradient shape mismatch")
        if self.output == "tanh":
            delta = K.tanh_grad(delta, cache[-1])
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        for i in range(self.n_layers - 1, -1, -1):
            if need_param_grads:
                grads_w[i] = cache[i].T @ delta
                grads_b[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = K.relu_grad(delta, cache[i])
        if not need_param_grads:
            return None, delta
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.append(gw)
            grads.append(gb)
        return grads, delta

    def copy_from(self, other):
        """Hard copy of another network's parameters (same architecture)."""
        if other.sizes != self.sizes or other.output != self.output:
            raise ValueError("architecture mismatch")
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src


class Adam:
    """Adam with bias correction over a fixed parameter list.

    The parameter arrays are updated in place; moments live here.
    Non-finite gradients are rejected before touching anything.
    """

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        for g, p in zip(grads, self.params):
            if g.shape != p.shape:
                raise ValueError("gradient shape mismatch")
            if not np.all(np.isfinite(g)):
                raise ValueError("non-finite gradient")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            K.adam_update(p, np.asarray(g, dtype=np.float64), m, v,
                          self.lr, self.beta1, self.beta2, self.eps,
                          bc1, bc2)

    def state_dict(self):
        return {"t": self.t, "m": [a.copy() for a in self.m],
                "v": [a.copy() for a in self.v]}

    def load_state_dict(self, state):
        if len(state["m"]) != len(self.m):
            raise ValueError("optimizer state does not match parameters")
        self.t = int(state["t"])
        for dst, src in zip(self.m, state["m"]):
            dst[...] = src
        for dst, src in zip(self.v, state["v"]):
            dst[...] = src


def polyak_update(target_params, online_params, tau):
    """Slow target tracking: target <- tau * online + (1 - tau) * target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau {tau} outside [0, 1]")
    if len(target_params) != len(online_params):
        raise ValueError("parameter lists differ in length")
    for tp, p in zip(target_params, online_params):
        if tp.shape != p.shape:
            raise ValueError("parameter shape mismatch")
        K.polyak(tp, p, tau)
