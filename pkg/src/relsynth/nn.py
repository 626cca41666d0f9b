"""Small float64 neural kernel with hand-derived reverse-mode gradients.

Layers act on row batches (one row per vertex). ``forward`` returns the
output and a cache; ``backward`` takes the upstream gradient and the cache,
accumulates parameter gradients in place and returns input gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch

LOGVAR_MIN, LOGVAR_MAX = -20.0, 20.0


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)


def glorot(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


def sigmoid(x):
    # split on sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    return np.logaddexp(0.0, x)


class Module:
    def named_params(self, prefix: str = "") -> list[tuple[str, Param]]:
        raise NotImplementedError

    def params(self) -> list[Param]:
        return [p for _, p in self.named_params()]


class Linear(Module):
    """``y = x @ weight + bias`` with ``weight`` of shape (d_in, d_out)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator = None):
        w = glorot(rng, d_in, d_out) if rng is not None else np.zeros((d_in, d_out))
        self.weight = Param(w)
        self.bias = Param(np.zeros(d_out))

    @property
    def d_in(self):
        return self.weight.shape[0]

    @property
    def d_out(self):
        return self.weight.shape[1]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeMismatch(f"linear expects (*, {self.d_in}), got {x.shape}")
        return x @ self.weight.value + self.bias.value, x

    def backward(self, dy, cache):
        x = cache
        self.weight.grad += x.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.value.T

    def named_params(self, prefix=""):
        return [(prefix + "weight", self.weight), (prefix + "bias", self.bias)]


class MLP(Module):
    """Linear layers with tanh between them (none after the last)."""

    def __init__(self, sizes, rng=None):
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def forward(self, x):
        caches = []
        for i, layer in enumerate(self.layers):
            x, c = layer.forward(x)
            act = i < len(self.layers) - 1
            if act:
                x = np.tanh(x)
            caches.append((c, x if act else None))
        return x, caches

    def backward(self, dy, caches):
        for layer, (c, act_out) in zip(reversed(self.layers), reversed(caches)):
            if act_out is not None:
                dy = dy * (1.0 - act_out ** 2)
            dy = layer.backward(dy, c)
        return dy

    def named_params(self, prefix=""):
        out = []
        for i, layer in enumerate(self.layers):
            out += layer.named_params(f"{prefix}{i}.")
        return out


class GRUCell(Module):
    """Gated recurrent unit acting on input ``x`` (d_in) and state ``h`` (d_h).

    z = sig(x Wz + h Uz + bz), r = sig(x Wr + h Ur + br),
    c = tanh(x Wc + (r*h) Uc + bc), h' = (1 - z) * h + z * c.
    """

    GATES = ("z", "r", "c")

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator = None):
        self.d_in, self.d_h = d_in, d_h
        self.W, self.U, self.b = {}, {}, {}
        for g in self.GATES:
            self.W[g] = Param(glorot(rng, d_in, d_h) if rng is not None else np.zeros((d_in, d_h)))
            self.U[g] = Param(glorot(rng, d_h, d_h) if rng is not None else np.zeros((d_h, d_h)))
            self.b[g] = Param(np.zeros(d_h))

    def forward(self, x, h):
        if x.shape[1] != self.d_in or h.shape[1] != self.d_h or x.shape[0] != h.shape[0]:
            raise ShapeMismatch(f"GRU expects x (n, {self.d_in}) and h (n, {self.d_h}), got {x.shape}, {h.shape}")
        W, U, b = self.W, self.U, self.b
        z = sigmoid(x @ W["z"].value + h @ U["z"].value + b["z"].value)
        r = sigmoid(x @ W["r"].value + h @ U["r"].value + b["r"].value)
        rh = r * h
        c = np.tanh(x @ W["c"].value + rh @ U["c"].value + b["c"].value)
        h_new = (1.0 - z) * h + z * c
        return h_new, (x, h, z, r, rh, c)

    def backward(self, dh_new, cache):
        x, h, z, r, rh, c = cache
        W, U, b = self.W, self.U, self.b
        dz = dh_new * (c - h)
        dc = dh_new * z
        dh = dh_new * (1.0 - z)

        dc_pre = dc * (1.0 - c ** 2)
        W["c"].grad += x.T @ dc_pre
        U["c"].grad += rh.T @ dc_pre
        b["c"].grad += dc_pre.sum(axis=0)
        dx = dc_pre @ W["c"].value.T
        drh = dc_pre @ U["c"].value.T
        dr = drh * h
        dh += drh * r

        for g, dgate, gate in (("z", dz, z), ("r", dr, r)):
            pre = dgate * gate * (1.0 - gate)
            W[g].grad += x.T @ pre
            U[g].grad += h.T @ pre
            b[g].grad += pre.sum(axis=0)
            dx += pre @ W[g].value.T
            dh += pre @ U[g].value.T
        return dx, dh

    def named_params(self, prefix=""):
        out = []
        for g in self.GATES:
            out += [(f"{prefix}W{g}", self.W[g]), (f"{prefix}U{g}", self.U[g]), (f"{prefix}b{g}", self.b[g])]
        return out


@dataclass(frozen=True)
class GaussianHead:
    """Diagonal Gaussian; ``logvar`` is already clamped to [-20, 20]."""

    mu: np.ndarray
    logvar: np.ndarray

    @classmethod
    def from_raw(cls, mu, raw_logvar):
        return cls(mu, np.clip(raw_logvar, LOGVAR_MIN, LOGVAR_MAX))

    @property
    def variance(self):
        return np.exp(self.logvar)


def clamp_mask(raw_logvar):
    """Gradient mask of the log-variance clamp."""
    return ((raw_logvar >= LOGVAR_MIN) & (raw_logvar <= LOGVAR_MAX)).astype(np.float64)


def reparameterize(mu, logvar, eps):
    return mu + np.exp(0.5 * logvar) * eps


def reparameterize_backward(dz, logvar, eps):
    """Gradients of ``z = mu + exp(logvar / 2) * eps`` w.r.t. mu and logvar."""
    return dz, dz * eps * 0.5 * np.exp(0.5 * logvar)


def sample_reparameterized(head: GaussianHead, rng: np.random.Generator):
    """Draw ``z = mu + sigma * eps``; returns ``(z, eps)`` so callers can backpropagate."""
    eps = rng.standard_normal(np.shape(head.mu))
    return reparameterize(head.mu, head.logvar, eps), eps


def kl_per_row(mu, logvar):
    """KL(N(mu, diag exp(logvar)) || N(0, I)) for each row."""
    return 0.5 * np.sum(mu ** 2 + np.expm1(logvar) - logvar, axis=-1)


def kl_backward(mu, logvar, weights=None):
    """Gradient of ``sum_i weights_i * kl_i``."""
    dmu = mu.copy()
    dlv = 0.5 * np.expm1(logvar)
    if weights is not None:
        w = np.asarray(weights)[..., None]
        dmu, dlv = dmu * w, dlv * w
    return dmu, dlv


def kl_to_standard_normal(head: GaussianHead) -> float:
    return float(np.sum(kl_per_row(head.mu, head.logvar)))


class Adam:
    """Adaptive-moment gradient descent over a fixed list of parameters."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradient("non-finite gradient; parameters left unchanged")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad ** 2
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
