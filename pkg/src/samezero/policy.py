"""Policy models guiding the search: uniform baseline and trained conv net.

A policy maps the one-hot board tensor to a probability vector over the
height*width action grid (cells name moves by their group representative).
The search masks that vector to the legal actions of a node and
renormalizes; a degenerate output falls back to uniform priors and is
counted, never raised.

``ConvPolicyNet`` wears the scikit-learn estimator interface — ``fit`` /
``predict_proba`` / ``get_params`` — so the supervised part of the
pipeline composes with the usual tooling, while ``evaluate`` /
``evaluate_batch`` serve the search's hot path.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .board import Board
from .nnet import Adam, ConvSpec, PolicyNet

MODEL_MAGIC = b"SZPN"
MODEL_VERSION = 1

# Convolutional plans, smallest to largest.  The default stack keeps the
# spatial extent through the first eight stages, shrinks it with two valid
# 3x3 stages, and finishes with 1x1 mixing stages around one more 'same'
# 3x3; every stage uses 64 filters and an ELU.
PRESETS: dict[str, list[ConvSpec]] = {
    "tiny": [ConvSpec(4, 3, "same"), ConvSpec(4, 3, "valid")],
    "desk": [
        ConvSpec(16, 3, "same"),
        ConvSpec(16, 3, "same"),
        ConvSpec(16, 3, "same"),
        ConvSpec(16, 3, "valid"),
    ],
    "full": (
        [ConvSpec(64, 3, "same")] * 8
        + [ConvSpec(64, 3, "valid"), ConvSpec(64, 3, "valid"), ConvSpec(64, 1, "valid")]
        + [ConvSpec(64, 3, "same"), ConvSpec(64, 1, "valid")]
    ),
}


def masked_renormalize(raw: np.ndarray, legal_flat: np.ndarray) -> tuple[np.ndarray, bool]:
    """Restrict a raw action distribution to legal cells and renormalize.

    Returns ``(priors, fell_back)`` where ``fell_back`` marks a degenerate
    raw vector (NaN/inf or zero total mass on the legal set) that was
    replaced by the uniform distribution.
    """
    legal = np.asarray(legal_flat, dtype=np.int64)
    n = legal.shape[0]
    vals = np.asarray(raw, dtype=np.float64).ravel()[legal]
    total = vals.sum()
    if not np.isfinite(total) or total <= 0.0 or (vals < 0).any():
        return np.full(n, 1.0 / n), True
    return vals / total, False


def uniform_policy(b: Board) -> np.ndarray:
    """Uniform distribution over the board's legal actions, on the flat grid."""
    actions = b.legal_actions()
    if not actions:
        raise ValueError("uniform_policy is undefined on a terminal board")
    out = np.zeros(b.height * b.width, dtype=np.float64)
    idx = [a.row * b.width + a.col for a in actions]
    out[idx] = 1.0 / len(actions)
    return out


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean negative log-likelihood of integer targets under ``probs``."""
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    picked = probs[np.arange(len(targets)), targets]
    return float(-np.log(np.clip(picked, 1e-300, None)).mean())


class UniformPolicy:
    """Flat prior over the whole action grid; the plain-search stand-in."""

    is_uniform = True

    def __init__(self, height: int, width: int, num_colors: int):
        self.height = int(height)
        self.width = int(width)
        self.num_colors = int(num_colors)
        self._n = self.height * self.width

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.full(self._n, 1.0 / self._n)

    def evaluate_batch(self, x: np.ndarray) -> np.ndarray:
        return np.full((x.shape[0], self._n), 1.0 / self._n)


@dataclass
class TrainReport:
    """Outcome of one training run (one generation's fresh fit)."""

    epochs_run: int
    best_epoch: int
    best_val_loss: float
    final_train_loss: float
    train_losses: list[float]
    val_losses: list[float]


def color_permutation(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Relabel the color channels of a one-hot batch uniformly at random.

    The game is invariant under any permutation of the colors (channel 0,
    the empty marker, stays fixed), so permuted inputs are exact
    additional training positions with unchanged action targets.  Each
    sample draws its own permutation.
    """
    n, _, _, c = x.shape
    perms = np.empty((n, c), dtype=np.intp)
    perms[:, 0] = 0
    for i in range(n):
        perms[i, 1:] = 1 + rng.permutation(c - 1)
    return np.take_along_axis(x, perms[:, None, None, :], axis=3)


def train_epochs(net: PolicyNet, optimizer: Adam,
                 x_train: np.ndarray, y_train: np.ndarray,
                 x_val: np.ndarray | None, y_val: np.ndarray | None,
                 batch_size: int = 256, patience: int = 3,
                 max_epochs: int = 60, rng: np.random.Generator | None = None,
                 augment=None) -> TrainReport:
    """Mini-batch training with early stopping on validation loss.

    Training stops at the first epoch after which the validation loss has
    failed to improve on its best value for ``patience`` consecutive
    epochs; the parameters from the best-validation epoch are restored.
    Without a validation set it simply runs ``max_epochs``.  ``augment``
    maps (minibatch, rng) to a transformed minibatch; validation batches
    are never augmented.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n = x_train.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty buffer")
    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = np.inf
    best_epoch = 0
    best_params = net.get_param_values()
    since_best = 0
    epochs_run = 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            xb = x_train[idx]
            if augment is not None:
                xb = augment(xb, rng)
            loss, grads = net.loss_and_gradients(xb, y_train[idx])
            optimizer.step(grads)
            epoch_loss += loss * len(idx)
        train_losses.append(epoch_loss / n)
        epochs_run = epoch
        if x_val is None or y_val is None or len(x_val) == 0:
            continue
        val = net.mean_loss(x_val, y_val)
        val_losses.append(val)
        if val < best_val:
            best_val = val
            best_epoch = epoch
            best_params = net.get_param_values()
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                break
    if val_losses:
        net.set_param_values(best_params)
    return TrainReport(
        epochs_run=epochs_run,
        best_epoch=best_epoch,
        best_val_loss=float(best_val) if val_losses else float("nan"),
        final_train_loss=train_losses[-1],
        train_losses=train_losses,
        val_losses=val_losses,
    )


class ConvPolicyNet(BaseEstimator):
    """Convolutional policy with a scikit-learn estimator surface.

    Construction is cheap and only records hyperparameters; the network is
    built fresh on every ``fit`` (each training generation starts from a
    new random initialization).  ``validation=(X_val, y_val)`` drives early
    stopping.  An unfitted instance still evaluates — as its randomly
    initialized network — which is exactly what a fresh generation needs.
    """

    def __init__(self, height: int = 7, width: int = 7, num_colors: int = 5,
                 preset: str = "desk", layers: list | None = None,
                 learning_rate: float = 5e-4, batch_size: int = 256,
                 patience: int = 3, max_epochs: int = 60, seed: int = 0,
                 augment: str | None = None, weight_decay: float = 0.0):
        self.height = height
        self.width = width
        self.num_colors = num_colors
        self.preset = preset
        self.layers = layers
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.patience = patience
        self.max_epochs = max_epochs
        self.seed = seed
        self.augment = augment
        self.weight_decay = weight_decay

    is_uniform = False

    # -- construction ---------------------------------------------------------

    def _plan(self) -> list[ConvSpec]:
        if self.layers is not None:
            return [ConvSpec(int(f), int(k), str(p)) for f, k, p in self.layers]
        try:
            return PRESETS[self.preset]
        except KeyError:
            raise ValueError(
                f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}"
            ) from None

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.height + 2, self.width + 2, self.num_colors + 1)

    @property
    def n_actions(self) -> int:
        return self.height * self.width

    def _build(self) -> PolicyNet:
        return PolicyNet(self.input_shape, self.n_actions, self._plan(), seed=self.seed)

    def _ensure_net(self) -> PolicyNet:
        if not hasattr(self, "net_"):
            self.net_ = self._build()
        return self.net_

    def _ensure_optimizer(self) -> Adam:
        if not hasattr(self, "adam_"):
            self.adam_ = Adam(self._ensure_net().params(), lr=self.learning_rate,
                              weight_decay=self.weight_decay)
        return self.adam_

    # -- validation helpers -----------------------------------------------------

    def _validate_x(self, x: np.ndarray, batched: bool) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        expected = self.input_shape
        if batched:
            if x.ndim != 4 or x.shape[1:] != expected:
                raise ValueError(
                    f"input shape mismatch: expected (batch, {expected[0]}, "
                    f"{expected[1]}, {expected[2]}), got {tuple(x.shape)}"
                )
        else:
            if x.shape != expected:
                raise ValueError(
                    f"input shape mismatch: expected {expected}, got {tuple(x.shape)}"
                )
        return x

    def _validate_y(self, y: np.ndarray, n: int) -> np.ndarray:
        y = np.asarray(y, dtype=np.int64).ravel()
        if y.shape[0] != n:
            raise ValueError(f"targets length {y.shape[0]} does not match batch {n}")
        if len(y) and (y.min() < 0 or y.max() >= self.n_actions):
            raise ValueError("target action index outside the board grid")
        return y

    # -- estimator interface ------------------------------------------------------

    def fit(self, X, y, validation: tuple | None = None) -> "ConvPolicyNet":
        """Train a freshly initialized network on (X, y)."""
        X = self._validate_x(X, batched=True)
        y = self._validate_y(y, X.shape[0])
        x_val = y_val = None
        if validation is not None:
            x_val = self._validate_x(validation[0], batched=True)
            y_val = self._validate_y(validation[1], x_val.shape[0])
        if self.augment not in (None, "colors"):
            raise ValueError(f"unknown augmentation {self.augment!r}")
        self.net_ = self._build()
        self.adam_ = Adam(self.net_.params(), lr=self.learning_rate,
                          weight_decay=self.weight_decay)
        shuffle_rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([self.seed & (2**63 - 1), 1]))
        )
        self.history_ = train_epochs(
            self.net_, self.adam_, X, y, x_val, y_val,
            batch_size=self.batch_size, patience=self.patience,
            max_epochs=self.max_epochs, rng=shuffle_rng,
            augment=color_permutation if self.augment == "colors" else None,
        )
        return self

    def predict_proba(self, X) -> np.ndarray:
        if not hasattr(self, "net_"):
            raise NotFittedError("ConvPolicyNet is not fitted; call fit or load first")
        X = self._validate_x(X, batched=True)
        return self.net_.forward(X)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    # -- search-facing interface ---------------------------------------------------

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Action distribution for a single encoded board."""
        x = self._validate_x(x, batched=False)
        return self._ensure_net().forward(x[None])[0].astype(np.float64)

    def evaluate_batch(self, x: np.ndarray) -> np.ndarray:
        x = self._validate_x(x, batched=True)
        return self._ensure_net().forward(x).astype(np.float64)

    def loss_and_gradients(self, X, y):
        X = self._validate_x(X, batched=True)
        y = self._validate_y(y, X.shape[0])
        return self._ensure_net().loss_and_gradients(X, y)

    def apply_update(self, grads) -> None:
        self._ensure_optimizer().step(grads)

    # -- persistence -------------------------------------------------------------

    def save(self, path) -> None:
        save_model(self, path)

    @classmethod
    def load(cls, path) -> "ConvPolicyNet":
        return load_model(path)


def _model_config(model: ConvPolicyNet) -> dict:
    plan = [[s.filters, s.kernel, s.padding] for s in model._plan()]
    return {
        "height": model.height,
        "width": model.width,
        "num_colors": model.num_colors,
        "plan": plan,
        "seed": model.seed,
        "learning_rate": model.learning_rate,
        "batch_size": model.batch_size,
        "patience": model.patience,
        "max_epochs": model.max_epochs,
        "augment": model.augment,
        "weight_decay": model.weight_decay,
    }


def save_model(model: ConvPolicyNet, path) -> None:
    """Serialize architecture and weights.

    Layout: magic, version, config length, config JSON, SHA-256 config
    digest, then every parameter as little-endian float32 in documented
    order (layers in network order, weight before bias, row-major).
    """
    net = model._ensure_net()
    config = json.dumps(_model_config(model), sort_keys=True).encode("ascii")
    digest = hashlib.sha256(config).digest()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(config)))
        fh.write(config)
        fh.write(digest)
        for p in net.params():
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_model(path) -> ConvPolicyNet:
    """Inverse of :func:`save_model`; validates header, digest, and size."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a policy model file (bad magic)")
    version, config_len = struct.unpack_from("<II", blob, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    start = 12
    config_bytes = blob[start : start + config_len]
    if len(config_bytes) != config_len:
        raise ValueError(f"{path}: truncated model file (config)")
    start += config_len
    digest = blob[start : start + 32]
    if len(digest) != 32 or hashlib.sha256(config_bytes).digest() != digest:
        raise ValueError(f"{path}: config digest mismatch")
    start += 32
    cfg = json.loads(config_bytes.decode("ascii"))
    model = ConvPolicyNet(
        height=cfg["height"], width=cfg["width"], num_colors=cfg["num_colors"],
        preset="custom", layers=[tuple(row) for row in cfg["plan"]],
        learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"],
        patience=cfg["patience"], max_epochs=cfg["max_epochs"], seed=cfg["seed"],
        augment=cfg.get("augment"), weight_decay=cfg.get("weight_decay", 0.0),
    )
    net = model._build()
    values = []
    for p in net.params():
        nbytes = p.size * 4
        chunk = blob[start : start + nbytes]
        if len(chunk) != nbytes:
            raise ValueError(f"{path}: truncated model file (parameters)")
        values.append(np.frombuffer(chunk, dtype="<f4").reshape(p.shape).copy())
        start += nbytes
    if start != len(blob):
        raise ValueError(f"{path}: {len(blob) - start} trailing bytes")
    net.set_param_values(values)
    model.net_ = net
    return model


@dataclass
class GradCheckReport:
    """Analytic-vs-numeric gradient comparison summary."""

    max_rel_error: float
    n_checked: int
    tolerance: float
    kink_retries: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(model, X, y, step: float = 1e-4, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    The network is rebuilt at float64 for the comparison.  Per parameter,
    the relative error is |a - n| / max(|a|, |n|); when both magnitudes sit
    below 1e-8 the element passes on absolute agreement (dead paths).

    A probe whose two evaluations land on opposite sides of an ELU kink
    does not measure the derivative, so any probe with mismatched
    pre-activation sign signatures shrinks its step tenfold and retries
    (at most three times).  A wrong analytic gradient still fails: its
    error survives every step size.
    """
    net = model._ensure_net() if isinstance(model, ConvPolicyNet) else model
    net64 = net.astype(np.float64)
    X64 = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _, analytic = net64.loss_and_gradients(X64, y)
    max_rel = 0.0
    checked = 0
    kink_retries = 0
    for p, g in zip(net64.params(), analytic):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            saved = flat_p[i]
            h = step
            for _ in range(4):
                flat_p[i] = saved + h
                up, sig_up = net64.loss_and_kink_signature(X64, y)
                flat_p[i] = saved - h
                down, sig_down = net64.loss_and_kink_signature(X64, y)
                if sig_up == sig_down:
                    break
                h *= 0.1
                kink_retries += 1
            flat_p[i] = saved
            numeric = (up - down) / (2.0 * h)
            a = flat_g[i]
            denom = max(abs(a), abs(numeric))
            if denom < 1e-8:
                continue
            rel = abs(a - numeric) / denom
            if rel > max_rel:
                max_rel = rel
            checked += 1
    return GradCheckReport(
        max_rel_error=float(max_rel), n_checked=checked, tolerance=tolerance,
        kink_retries=kink_retries,
    )
