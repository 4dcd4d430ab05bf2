"""Small fully connected networks with hand-written backpropagation.

All parameters live in one flat vector; per-layer weights and biases are
views into it, so optimizers and soft updates act on a single array.
float64 is the default; the learner runs its networks in float32.
"""

from __future__ import annotations

import numpy as np

from ..core import ConfigError

OUTPUTS = ("identity", "tanh")


class Mlp:
    """ReLU network ``widths[0] -> ... -> widths[-1]`` with identity or tanh output."""

    def __init__(self, widths, output: str = "identity", rng: np.random.Generator | None = None,
                 dtype=np.float64):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ConfigError(f"invalid layer widths {widths}")
        if output not in OUTPUTS:
            raise ConfigError(f"output must be one of {OUTPUTS}")
        self.widths = widths
        self.output = output
        sizes = [(i * o, o) for i, o in zip(widths[:-1], widths[1:])]
        self.dtype = np.dtype(dtype)
        self.params = np.zeros(sum(w + b for w, b in sizes), dtype=self.dtype)
        self.weights, self.biases = [], []
        pos = 0
        for (fan_in, fan_out) in zip(widths[:-1], widths[1:]):
            self.weights.append(self.params[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out))
            pos += fan_in * fan_out
            self.biases.append(self.params[pos:pos + fan_out])
            pos += fan_out
        if rng is not None:
            for W, b in zip(self.weights, self.biases):
                bound = 1.0 / np.sqrt(W.shape[0])
                W[...] = rng.uniform(-bound, bound, size=W.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)

    @property
    def n_params(self) -> int:
        return self.params.size

    def copy(self) -> "Mlp":
        clone = Mlp(self.widths, self.output, dtype=self.dtype)
        clone.params[...] = self.params
        return clone

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=self.dtype)
        if flat.shape != self.params.shape:
            raise ConfigError(f"expected {self.params.size} parameters, got {flat.size}")
        self.params[...] = flat

    def forward(self, x, keep: bool = False):
        """Evaluate on a single vector or a ``(batch, in)`` array.

        With ``keep=True`` also returns the intermediates :meth:`backward` needs.
        """
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.widths[0]:
            raise ConfigError(f"input width {x.shape[-1]} does not match network input {self.widths[0]}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        if self.output == "tanh":
            h = np.tanh(h)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts, grad_out, param_grads: bool = True):
        """Reverse-mode pass for ``d loss / d output = grad_out``.

        Returns ``(flat parameter gradient or None, gradient w.r.t. the input)``.
        """
        dy = np.asarray(grad_out, dtype=self.dtype)
        if self.output == "tanh":
            y = acts[-1]
            dy = dy * (1.0 - y * y)
            acts = acts[:-1]
        grad = np.zeros_like(self.params) if param_grads else None
        gw, gb = (self._views(grad) if param_grads else (None, None))
        for i in range(len(self.weights) - 1, -1, -1):
            inp = acts[i]
            if param_grads:
                if dy.ndim == 1:
                    np.outer(inp, dy, out=gw[i])
                    gb[i][...] = dy
                else:
                    np.matmul(inp.T, dy, out=gw[i])
                    np.sum(dy, axis=0, out=gb[i])
            dy = dy @ self.weights[i].T
            if i > 0:
                dy = dy * (inp > 0.0)
        return grad, dy

    def _views(self, flat):
        ws, bs = [], []
        pos = 0
        for W in self.weights:
            n = W.size
            ws.append(flat[pos:pos + n].reshape(W.shape))
            pos += n
            bs.append(flat[pos:pos + W.shape[1]])
            pos += W.shape[1]
        return ws, bs


class Adam:
    """Adaptive-moment optimizer over one flat parameter vector."""

    def __init__(self, size: int, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 dtype=np.float64):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        step = self.lr * np.sqrt(1.0 - self.beta2 ** self.t) / (1.0 - self.beta1 ** self.t)
        params -= (step * self.m / (np.sqrt(self.v) + self.eps)).astype(params.dtype, copy=False)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": self.m.tolist(), "v": self.v.tolist(),
                "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m[...] = state["m"]
        self.v[...] = state["v"]
        self.lr, self.beta1, self.beta2, self.eps = state["lr"], state["beta1"], state["beta2"], state["eps"]


def soft_update(target: Mlp, online: Mlp, rate: float) -> None:
    target.params *= 1.0 - rate
    target.params += rate * online.params
