"""Feed-forward acoustic network trained with minibatch SGD on frame cross-entropy."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, EmptyInput, FormatError, NumericalError

logger = logging.getLogger(__name__)

NONLINEARITIES = ("sigmoid", "relu")


@dataclass(frozen=True)
class MlpArch:
    input_dim: int
    output_dim: int
    hidden_layers: int = 2
    hidden_units: int = 128
    nonlinearity: str = "sigmoid"

    def __post_init__(self):
        if min(self.input_dim, self.output_dim, self.hidden_units) < 1 or self.hidden_layers < 0:
            raise ValueError("network dimensions must be >= 1")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [self.hidden_units] * self.hidden_layers + [self.output_dim]


class Mlp:
    """Affine layers with sigmoid/ReLU hidden units and a softmax output.

    ``weights[l]`` has shape (fan_in, fan_out) so a batch is propagated as
    ``x @ W + b``.
    """

    def __init__(self, arch: MlpArch, weights, biases):
        self.arch = arch
        self.weights = [np.asarray(w) for w in weights]
        self.biases = [np.asarray(b) for b in biases]
        dims = arch.layer_dims
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l], dims[l + 1]) or b.shape != (dims[l + 1],):
                raise ValueError(f"layer {l}: shape {w.shape} does not match architecture")

    @classmethod
    def init(cls, arch: MlpArch, seed: int = 0, dtype=np.float64) -> "Mlp":
        """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
        rng = np.random.default_rng(seed)
        dims = arch.layer_dims
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            r = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-r, r, size=(fan_in, fan_out)).astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(arch, weights, biases)

    @property
    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def copy(self, dtype=None) -> "Mlp":
        dt = dtype or self.dtype
        return Mlp(self.arch, [w.astype(dt, copy=True) for w in self.weights],
                   [b.astype(dt, copy=True) for b in self.biases])

    def _hidden(self, z):
        if self.arch.nonlinearity == "sigmoid":
            return 0.5 * (1.0 + np.tanh(0.5 * z))
        return np.maximum(z, 0.0)

    def activations(self, x):
        acts = [x]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(self._hidden(acts[-1] @ w + b))
        logits = acts[-1] @ self.weights[-1] + self.biases[-1]
        return acts, logits

    def logits(self, x) -> np.ndarray:
        return self.activations(x)[1]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_input(m: Mlp, batch):
    batch = np.asarray(batch)
    if batch.ndim != 2 or batch.shape[1] != m.arch.input_dim:
        raise DimMismatch(f"network expects {m.arch.input_dim}-dim rows, got shape {batch.shape}")
    return batch.astype(m.dtype, copy=False)


def forward(m: Mlp, batch) -> np.ndarray:
    """Posterior rows p(pdf | frame)."""
    return softmax(m.logits(_check_input(m, batch)))


def log_posteriors(m: Mlp, batch, chunk: int = 4096) -> np.ndarray:
    batch = _check_input(m, batch)
    return np.concatenate([log_softmax(m.logits(batch[i:i + chunk])) for i in range(0, len(batch), chunk)])


def cross_entropy(m: Mlp, x, y, chunk: int = 8192) -> float:
    """Mean frame cross-entropy (nats) of one-hot labels ``y``."""
    x = _check_input(m, x)
    total = 0.0
    for i in range(0, len(x), chunk):
        lp = log_softmax(m.logits(x[i:i + chunk]))
        total -= float(lp[np.arange(len(lp)), y[i:i + chunk]].astype(np.float64).sum())
    return total / len(x)


def frame_accuracy(m: Mlp, x, y, chunk: int = 8192) -> float:
    x = _check_input(m, x)
    hits = 0
    for i in range(0, len(x), chunk):
        hits += int((m.logits(x[i:i + chunk]).argmax(axis=1) == y[i:i + chunk]).sum())
    return hits / len(x)


def backprop(m: Mlp, x, y):
    """Mean cross-entropy of the batch and its gradient, ordered like ``m.params``."""
    acts, logits = m.activations(x)
    n = len(x)
    lp = log_softmax(logits)
    loss = -float(lp[np.arange(n), y].sum()) / n
    delta = np.exp(lp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = []
    for l in range(len(m.weights) - 1, -1, -1):
        a = acts[l]
        grads.append(delta.sum(axis=0))
        grads.append(a.T @ delta)
        if l > 0:
            da = delta @ m.weights[l].T
            if m.arch.nonlinearity == "sigmoid":
                delta = da * a * (1.0 - a)
            else:
                delta = da * (a > 0)
    grads.reverse()
    return loss, grads


def gradient_errors(m: Mlp, batch, labels, epsilon: float = 1e-5) -> list[float]:
    """Per-parameter-array maximum of ``|g_a - g_n| / max(|g_a| + |g_n|, 1e-8)``.

    ``g_a`` comes from :func:`backprop`; ``g_n`` is the central difference
    ``(L(p + eps) - L(p - eps)) / (2 eps)`` for every single parameter, in
    double precision. The two loss changes ``L(p +- eps) - L(p)`` are obtained
    by pushing the perturbation through the remaining layers as differences,
    so they do not suffer cancellation against the full loss.
    """
    if not 1e-7 <= epsilon <= 1e-1:
        raise ValueError("epsilon out of range")
    net = m.copy(np.float64)
    x = np.asarray(batch, dtype=np.float64)
    y = np.asarray(labels)
    _, analytic = backprop(net, x, y)
    numeric = numeric_gradient(net, x, y, epsilon)
    errors = []
    for g_a, g_n in zip(analytic, numeric):
        err = np.abs(g_a - g_n) / np.maximum(np.abs(g_a) + np.abs(g_n), 1e-8)
        errors.append(float(err.max()))
    return errors


def gradient_check(m: Mlp, batch, labels, epsilon: float = 1e-5) -> float:
    """Largest relative disagreement between backprop and central differences."""
    return max(gradient_errors(m, batch, labels, epsilon))


def _act_diff(kind, z, dz):
    """act(z + dz) - act(z) without cancellation."""
    if kind == "sigmoid":
        return 0.5 * np.sinh(0.5 * dz) / (np.cosh(0.5 * (z + dz)) * np.cosh(0.5 * z))
    return np.maximum(z + dz, 0.0) - np.maximum(z, 0.0)


def _loss_change(net, pre, logits, y, layer, unit, dz):
    """Summed loss change when pre-activation ``pre[layer][:, unit]`` moves by ``dz``.

    ``dz`` has shape (P, B): P simultaneous single-parameter perturbations.
    """
    kind = net.arch.nonlinearity
    n_layers = len(net.weights)
    if layer == n_layers - 1:
        delta = np.zeros(dz.shape + (net.arch.output_dim,))
        delta[..., unit] = dz
    else:
        da = _act_diff(kind, pre[layer][None, :, unit], dz)
        delta = da[..., None] * net.weights[layer + 1][unit]
        for l in range(layer + 1, n_layers - 1):
            da = _act_diff(kind, pre[l][None], delta)
            delta = da @ net.weights[l + 1]
    post = softmax(logits)[None]
    rows = np.arange(logits.shape[0])
    lse_change = np.log1p(np.sum(post * np.expm1(delta), axis=-1))
    return (lse_change - delta[:, rows, y]).sum(axis=1)


def numeric_gradient(net: Mlp, x, y, eps: float):
    acts, logits = net.activations(x)
    pre = [a @ w + b for a, w, b in zip(acts[:-1], net.weights[:-1], net.biases[:-1])]
    n = len(x)
    grads = []
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs = np.hstack([acts[l], np.ones((n, 1))]).T  # (fan_in + 1, B); last row is the bias
        gw = np.zeros_like(w)
        gb = np.zeros_like(b)
        for j in range(w.shape[1]):
            up = _loss_change(net, pre, logits, y, l, j, eps * inputs)
            down = _loss_change(net, pre, logits, y, l, j, -eps * inputs)
            g = (up - down) / (2.0 * eps * n)
            gw[:, j] = g[:-1]
            gb[j] = g[-1]
        grads.extend([gw, gb])
    return grads


@dataclass(frozen=True)
class TrainConfig:
    minibatch: int = 256
    learning_rate: float = 0.5
    max_epochs: int = 20
    halving_threshold: float = 1e-3
    max_stalls: int = 2
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.minibatch < 1:
            raise ValueError("minibatch must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass
class EpochReport:
    epoch: int
    train_xent: float
    cv_xent: float
    lr: float
    accepted: bool = True


@dataclass
class TrainResult:
    model: Mlp
    report: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_xent", "cv_xent", "lr"])
            for r in self.report:
                w.writerow([r.epoch, f"{r.train_xent:.6f}", f"{r.cv_xent:.6f}", f"{r.lr:.6g}"])


def sgd_epoch(m: Mlp, x, y, lr: float, minibatch: int, rng) -> float:
    """One shuffled pass of in-place SGD; returns the mean pre-update batch loss."""
    order = rng.permutation(len(x))
    total = 0.0
    params = m.params
    for i in range(0, len(x), minibatch):
        idx = order[i:i + minibatch]
        loss, grads = backprop(m, x[idx], y[idx])
        if not np.isfinite(loss):
            raise NumericalError("training loss is not finite")
        total += loss * len(idx)
        if lr:
            for p, g in zip(params, grads):
                p -= lr * g
    return total / len(x)


def train(m: Mlp, train_x, train_y, cv_x, cv_y, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """SGD with cross-validation based learning-rate halving.

    An epoch that raises the CV loss is rolled back. The learning rate halves
    whenever the relative CV improvement drops below ``halving_threshold``;
    training stops after ``max_stalls`` such epochs in a row.
    """
    if len(train_x) == 0:
        raise EmptyInput("empty training set")
    dtype = np.dtype(cfg.dtype)
    net = m.copy(dtype)
    tx = np.asarray(train_x, dtype=dtype)
    cx = np.asarray(cv_x, dtype=dtype)
    ty, cy = np.asarray(train_y), np.asarray(cv_y)
    for arr in (ty, cy):
        if len(arr) and (arr.min() < 0 or arr.max() >= m.arch.output_dim):
            raise ValueError("labels out of range")
    rng = np.random.default_rng(cfg.seed)
    lr = cfg.learning_rate
    best = cross_entropy(net, cx, cy) if len(cx) else np.nan
    report = [EpochReport(0, cross_entropy(net, tx, ty), best, lr)]
    stalls = 0
    for epoch in range(1, cfg.max_epochs + 1):
        backup = net.copy()
        tr = sgd_epoch(net, tx, ty, lr, cfg.minibatch, rng)
        if not len(cx):
            report.append(EpochReport(epoch, tr, np.nan, lr))
            continue
        cv = cross_entropy(net, cx, cy)
        accepted = cv <= best
        if not accepted:
            net = backup
            rel = 0.0
        else:
            rel = (best - cv) / best if best > 0 else 0.0
            best = cv
        report.append(EpochReport(epoch, tr, cv, lr, accepted))
        logger.info("epoch %d: train %.4f cv %.4f lr %.4g%s", epoch, tr, cv, lr, "" if accepted else " (rejected)")
        if rel < cfg.halving_threshold:
            lr /= 2.0
            stalls += 1
            if stalls >= cfg.max_stalls:
                break
        else:
            stalls = 0
    return TrainResult(net, report)


# ----------------------------------------------------------------------------
# hybrid scoring


def estimate_priors(alignments, num_pdfs: int) -> np.ndarray:
    """Add-one smoothed relative frequency of each pdf-id in the alignments."""
    counts = np.ones(num_pdfs)
    for a in alignments:
        pdfs = a.pdf_ids if hasattr(a, "pdf_ids") else np.asarray(a)
        counts += np.bincount(pdfs, minlength=num_pdfs)[:num_pdfs]
    return counts / counts.sum()


def posteriors_to_loglik(post: np.ndarray, priors: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """``scale * (log p(s|x) - log p(s))``; zero posteriors map to -inf."""
    priors = np.asarray(priors, dtype=np.float64)
    if np.any(priors <= 0):
        raise ValueError("priors must be strictly positive")
    with np.errstate(divide="ignore"):
        return scale * (np.log(np.asarray(post, dtype=np.float64)) - np.log(priors))


def log_posteriors_to_loglik(log_post: np.ndarray, priors: np.ndarray, scale: float = 1.0) -> np.ndarray:
    return scale * (np.asarray(log_post, dtype=np.float64) - np.log(priors))


# ----------------------------------------------------------------------------
# serialization

MAGIC = "NNET v1"


def write_mlp(path, m: Mlp):
    """Text format: header, arch line, then per layer its dims and row-major values."""
    a = m.arch
    lines = [MAGIC, f"arch {a.input_dim} {a.output_dim} {a.hidden_layers} {a.hidden_units} {a.nonlinearity} "
                    f"{m.dtype.name}"]
    for w, b in zip(m.weights, m.biases):
        lines.append(f"layer {w.shape[0]} {w.shape[1]}")
        lines.append(" ".join(repr(float(v)) for v in w.reshape(-1)))
        lines.append(" ".join(repr(float(v)) for v in b))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mlp(path) -> Mlp:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise FormatError(f"{path}: missing '{MAGIC}' header")
    try:
        _, i, o, hl, hu, nl, dtype = lines[1].split()
        arch = MlpArch(int(i), int(o), int(hl), int(hu), nl)
        weights, biases = [], []
        pos = 2
        for _ in range(arch.hidden_layers + 1):
            _, r, c = lines[pos].split()
            w = np.array([float(v) for v in lines[pos + 1].split()], dtype=dtype).reshape(int(r), int(c))
            b = np.array([float(v) for v in lines[pos + 2].split()], dtype=dtype)
            weights.append(w)
            biases.append(b)
            pos += 3
    except (ValueError, IndexError, TypeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return Mlp(arch, weights, biases)
