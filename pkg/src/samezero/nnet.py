"""From-scratch neural network plumbing: conv/ELU/dense, softmax loss, Adam.

Implemented directly on numpy so every gradient is analytic and checkable
against finite differences.  Layout is NHWC; convolution is im2col with a
small slice loop (kernel sizes here are 1 or 3), which keeps both the
forward and backward passes inside BLAS matmuls.

Parameters are float32 by default; a network can be rebuilt at float64 for
gradient verification.  Parameter order is fixed and documented: layers in
network order, weight then bias, row-major element order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape, dtype) -> np.ndarray:
    """Scaled-uniform fan-in init: U(-sqrt(3/fan_in), +sqrt(3/fan_in))."""
    limit = np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D:
    """Stride-1 2-D convolution, 'same' (odd kernels) or 'valid' padding."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 padding: str, rng: np.random.Generator, dtype=np.float32):
        if padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {padding!r}")
        if padding == "same" and kernel % 2 == 0:
            raise ValueError("'same' padding requires an odd kernel")
        self.kernel = int(kernel)
        self.padding = padding
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        fan_in = kernel * kernel * in_channels
        self.weight = _uniform_fan_in(rng, fan_in, (fan_in, out_channels), dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self._cache = None

    def out_shape(self, h: int, w: int) -> tuple[int, int]:
        if self.padding == "same":
            return h, w
        return h - self.kernel + 1, w - self.kernel + 1

    def params(self):
        return [self.weight, self.bias]

    def _pad(self, x):
        if self.padding == "valid":
            return x
        p = (self.kernel - 1) // 2
        return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))

    def forward(self, x: np.ndarray, keep: bool) -> np.ndarray:
        k = self.kernel
        xp = self._pad(x)
        b, hp, wp, c = xp.shape
        oh, ow = hp - k + 1, wp - k + 1
        cols = np.empty((b, oh, ow, k, k, c), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, :, :, i, j, :] = xp[:, i : i + oh, j : j + ow, :]
        flat = cols.reshape(b * oh * ow, k * k * c)
        y = flat @ self.weight + self.bias
        if keep:
            self._cache = (flat, x.shape, (b, hp, wp, c))
        return y.reshape(b, oh, ow, self.out_channels)

    def backward(self, dy: np.ndarray):
        flat, x_shape, padded_shape = self._cache
        self._cache = None
        k = self.kernel
        b, hp, wp, c = padded_shape
        oh, ow = hp - k + 1, wp - k + 1
        dflat = dy.reshape(b * oh * ow, self.out_channels)
        dw = flat.T @ dflat
        db = dflat.sum(axis=0)
        dcols = (dflat @ self.weight.T).reshape(b, oh, ow, k, k, c)
        dxp = np.zeros(padded_shape, dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + oh, j : j + ow, :] += dcols[:, :, :, i, j, :]
        if self.padding == "same":
            p = (k - 1) // 2
            dx = dxp[:, p : hp - p, p : wp - p, :]
        else:
            dx = dxp
        return dx, [dw, db]


class ELU:
    """Exponential linear unit, alpha = 1."""

    def __init__(self):
        self._cache = None

    def params(self):
        return []

    def forward(self, x: np.ndarray, keep: bool) -> np.ndarray:
        y = np.where(x > 0, x, np.expm1(x))
        if keep:
            self._cache = (x > 0, y)
        return y

    def backward(self, dy: np.ndarray):
        positive, y = self._cache
        self._cache = None
        return dy * np.where(positive, np.ones((), dtype=dy.dtype), y + 1), []


class Flatten:
    def __init__(self):
        self._shape = None

    def params(self):
        return []

    def forward(self, x: np.ndarray, keep: bool) -> np.ndarray:
        if keep:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray):
        return dy.reshape(self._shape), []


class Dense:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float32):
        self.weight = _uniform_fan_in(rng, in_dim, (in_dim, out_dim), dtype)
        self.bias = np.zeros(out_dim, dtype=dtype)
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray, keep: bool) -> np.ndarray:
        if keep:
            self._cache = x
        return x @ self.weight + self.bias

    def backward(self, dy: np.ndarray):
        x = self._cache
        self._cache = None
        return dy @ self.weight.T, [x.T @ dy, dy.sum(axis=0)]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy against integer targets, with the logit gradient.

    Returns ``(loss, dlogits)`` where ``dlogits`` is the gradient of the
    mean loss, i.e. (softmax - onehot) / batch.
    """
    b = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    idx = np.arange(b)
    loss = float(-logp[idx, targets].mean())
    dlogits = np.exp(logp)
    dlogits[idx, targets] -= 1.0
    dlogits /= b
    return loss, dlogits.astype(logits.dtype)


@dataclass(frozen=True)
class ConvSpec:
    """One convolutional stage: filter count, kernel size, padding mode."""

    filters: int
    kernel: int
    padding: str


class PolicyNet:
    """Convolutional softmax network over the flattened action grid.

    ``plan`` lists the convolutional stages applied to the one-hot input
    tensor; each is followed by an ELU.  The final features are flattened
    into a single dense layer whose softmax covers all height*width cells.
    """

    def __init__(self, input_shape: tuple[int, int, int], n_actions: int,
                 plan: list[ConvSpec], seed: int = 0, dtype=np.float32):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.n_actions = int(n_actions)
        self.plan = [ConvSpec(int(s.filters), int(s.kernel), str(s.padding)) for s in plan]
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))
        h, w, c = self.input_shape
        self.layers = []
        for spec in self.plan:
            conv = Conv2D(c, spec.filters, spec.kernel, spec.padding, rng, self.dtype)
            self.layers.append(conv)
            self.layers.append(ELU())
            h, w = conv.out_shape(h, w)
            c = spec.filters
            if h < 1 or w < 1:
                raise ValueError("network plan shrinks the feature map below 1x1")
        self.layers.append(Flatten())
        self.layers.append(Dense(h * w * c, self.n_actions, rng, self.dtype))

    # -- parameter access ---------------------------------------------------

    def params(self) -> list[np.ndarray]:
        """All parameter arrays in documented order (per layer: weight, bias)."""
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def get_param_values(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def set_param_values(self, values: list[np.ndarray]) -> None:
        params = self.params()
        if len(values) != len(params):
            raise ValueError("parameter list length mismatch")
        for p, v in zip(params, values):
            if p.shape != v.shape:
                raise ValueError("parameter shape mismatch")
            p[...] = v.astype(p.dtype)

    def astype(self, dtype) -> "PolicyNet":
        """Rebuild this network at another precision with identical weights."""
        clone = type(self)(self.input_shape, self.n_actions, self.plan, self.seed, dtype)
        clone.set_param_values(self.get_param_values())
        return clone

    # -- passes ---------------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ValueError(
                f"input shape mismatch: expected (batch, {self.input_shape[0]}, "
                f"{self.input_shape[1]}, {self.input_shape[2]}), got {tuple(x.shape)}"
            )
        return x.astype(self.dtype, copy=False)

    def logits(self, x: np.ndarray, keep: bool = False) -> np.ndarray:
        out = self._check_input(x)
        for layer in self.layers:
            out = layer.forward(out, keep)
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Probability distribution(s) over the action grid."""
        return softmax(self.logits(x))

    def loss_and_gradients(self, x: np.ndarray, targets: np.ndarray):
        """Mean cross-entropy on the batch plus gradients for every parameter."""
        targets = np.asarray(targets, dtype=np.int64)
        logits = self.logits(x, keep=True)
        if targets.ndim != 1 or targets.shape[0] != logits.shape[0]:
            raise ValueError("targets must be a vector matching the batch size")
        if targets.min() < 0 or targets.max() >= self.n_actions:
            raise ValueError("target index outside the action grid")
        loss, grad = softmax_cross_entropy(logits, targets)
        grads: list[np.ndarray] = []
        for layer in reversed(self.layers):
            grad, layer_grads = layer.backward(grad)
            grads = layer_grads + grads
        return loss, grads

    def mean_loss(self, x: np.ndarray, targets: np.ndarray, batch_size: int = 512) -> float:
        """Cross-entropy without gradient bookkeeping, streamed in batches."""
        targets = np.asarray(targets, dtype=np.int64)
        total = 0.0
        n = x.shape[0]
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            loss, _ = softmax_cross_entropy(self.logits(x[lo:hi]), targets[lo:hi])
            total += loss * (hi - lo)
        return total / n

    def loss_and_kink_signature(self, x: np.ndarray, targets: np.ndarray) -> tuple[float, bytes]:
        """Mean loss plus a packed record of every ELU pre-activation sign.

        Finite-difference probes compare the signatures of the two
        perturbed evaluations: a mismatch means the probe interval crosses
        an activation kink, where a central difference does not estimate
        the derivative.
        """
        targets = np.asarray(targets, dtype=np.int64)
        out = self._check_input(x)
        signs: list[bytes] = []
        for layer in self.layers:
            if isinstance(layer, ELU):
                signs.append(np.packbits(out > 0).tobytes())
            out = layer.forward(out, keep=False)
        loss, _ = softmax_cross_entropy(out, targets)
        return loss, b"".join(signs)


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8).

    ``weight_decay`` applies decoupled L2 shrinkage to the parameters at
    each step; it never enters the moment estimates, so the loss and its
    gradients stay exactly the cross-entropy quantities.
    """

    def __init__(self, params: list[np.ndarray], lr: float = 5e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)
            if self.weight_decay:
                p -= (self.lr * self.weight_decay * p).astype(p.dtype)
