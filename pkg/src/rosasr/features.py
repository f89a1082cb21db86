"""Acoustic front end.

Two feature streams are produced from 16 kHz PCM:

* MFCC with deltas and delta-deltas (13 + 13 + 13 = 39 dims) for the GMM stage.
* Log mel filterbank energies (40 dims) for the neural network stage, followed by
  per-utterance mean normalization, an optional rate-of-speech column, context
  splicing and an LDA projection.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft
import scipy.linalg

from .errors import DimMismatch, FormatError, InvalidRos, SingularScatter, UtteranceTooShort

logger = logging.getLogger(__name__)


class FeatureKind(enum.IntEnum):
    FBANK = 0
    MFCC = 1
    SPLICED = 2
    LDA = 3


@dataclass(frozen=True)
class FrameConfig:
    sample_rate_hz: int = 16000
    window_ms: float = 25.0
    shift_ms: float = 10.0
    preemphasis: float = 0.97
    num_mel_filters: int = 40
    num_cepstra: int = 13
    log_floor: float = 1e-10
    low_freq_hz: float = 20.0
    delta_window: int = 2

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if not self.window_ms >= self.shift_ms > 0:
            raise ValueError("need window_ms >= shift_ms > 0")
        if not 0 <= self.preemphasis < 1:
            raise ValueError("preemphasis must lie in [0, 1)")
        if self.num_cepstra > self.num_mel_filters:
            raise ValueError("num_cepstra cannot exceed num_mel_filters")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * 1e-3 * self.sample_rate_hz))

    @property
    def shift_samples(self) -> int:
        return int(round(self.shift_ms * 1e-3 * self.sample_rate_hz))

    @property
    def fft_size(self) -> int:
        n = 1
        while n < self.window_samples:
            n *= 2
        return n

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.window_samples:
            return 0
        return (num_samples - self.window_samples) // self.shift_samples + 1


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    data: np.ndarray
    frame_shift_s: float
    kind: FeatureKind

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"feature matrix must be T x D with T, D >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "kind", FeatureKind(self.kind))

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def replace(self, data, kind=None) -> "FeatureMatrix":
        return FeatureMatrix(data, self.frame_shift_s, self.kind if kind is None else kind)


# ----------------------------------------------------------------------------
# framing and filterbank


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FrameConfig) -> np.ndarray:
    """Triangular filters equally spaced on the mel scale, shape (num_mel, nfft//2 + 1)."""
    nfft = cfg.fft_size
    nyquist = cfg.sample_rate_hz / 2.0
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.low_freq_hz), hz_to_mel(nyquist), cfg.num_mel_filters + 2))
    bin_hz = np.arange(nfft // 2 + 1) * cfg.sample_rate_hz / nfft
    return triangle_weights(edges, bin_hz)


def triangle_weights(edges: np.ndarray, freqs) -> np.ndarray:
    """Evaluate triangles (edges[m], edges[m+1], edges[m+2]) at ``freqs``."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def frame_signal(samples: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("expected mono samples")
    n_frames = cfg.num_frames(len(samples))
    if n_frames < 1:
        raise UtteranceTooShort(
            f"{len(samples)} samples is shorter than one {cfg.window_samples}-sample window")
    win = cfg.window_samples
    frames = np.lib.stride_tricks.sliding_window_view(samples, win)[::cfg.shift_samples][:n_frames]
    frames = frames - frames.mean(axis=1, keepdims=True)
    if cfg.preemphasis > 0:
        frames = np.concatenate(
            [frames[:, :1] * (1 - cfg.preemphasis), frames[:, 1:] - cfg.preemphasis * frames[:, :-1]],
            axis=1)
    return frames * np.hamming(win)


def power_spectrum(samples, cfg: FrameConfig) -> np.ndarray:
    frames = frame_signal(samples, cfg)
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def compute_fbank(samples, cfg: FrameConfig = FrameConfig()) -> FeatureMatrix:
    """Log mel filterbank energies, one row per 10 ms frame by default."""
    energies = power_spectrum(samples, cfg) @ mel_filterbank(cfg).T
    data = np.log(np.maximum(energies, cfg.log_floor))
    return FeatureMatrix(data, cfg.shift_ms * 1e-3, FeatureKind.FBANK)


def compute_deltas(x: np.ndarray, window: int = 2) -> np.ndarray:
    """Regression deltas over +-``window`` frames with edge replication."""
    x = np.asarray(x, dtype=np.float64)
    padded = np.pad(x, ((window, window), (0, 0)), mode="edge")
    t = x.shape[0]
    num = np.zeros_like(x)
    for n in range(1, window + 1):
        num += n * (padded[window + n:window + n + t] - padded[window - n:window - n + t])
    return num / (2.0 * sum(n * n for n in range(1, window + 1)))


def add_deltas(static: np.ndarray, window: int = 2) -> np.ndarray:
    d1 = compute_deltas(static, window)
    d2 = compute_deltas(d1, window)
    return np.hstack([static, d1, d2])


def compute_mfcc(samples, cfg: FrameConfig = FrameConfig()) -> FeatureMatrix:
    """MFCC statics plus first and second order regression deltas."""
    fbank = compute_fbank(samples, cfg)
    ceps = scipy.fft.dct(fbank.data, type=2, norm="ortho", axis=1)[:, :cfg.num_cepstra]
    return FeatureMatrix(add_deltas(ceps, cfg.delta_window), fbank.frame_shift_s, FeatureKind.MFCC)


# ----------------------------------------------------------------------------
# normalization, rate-of-speech column, splicing


def apply_cmn(f: FeatureMatrix) -> FeatureMatrix:
    """Per-utterance, per-dimension mean subtraction."""
    if f.kind not in (FeatureKind.FBANK, FeatureKind.MFCC):
        raise ValueError(f"CMN expects fbank or mfcc features, got {f.kind.name}")
    return f.replace(f.data - f.data.mean(axis=0, keepdims=True))


@dataclass(frozen=True)
class RosNorm:
    """Scaling applied to the rate-of-speech value before it is appended.

    ``kind`` is ``"zscore"`` (uses the training-set mean and std) or ``"identity"``.
    """

    kind: str = "zscore"
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zscore", "identity"):
            raise ValueError(f"unknown RosNorm kind {self.kind!r}")
        if self.kind == "zscore" and not self.std > 0:
            raise ValueError("RosNorm std must be positive")

    @classmethod
    def identity(cls) -> "RosNorm":
        return cls("identity")

    @classmethod
    def fit(cls, values: Sequence[float]) -> "RosNorm":
        v = np.asarray(values, dtype=np.float64)
        std = float(v.std())
        return cls("zscore", float(v.mean()), std if std > 0 else 1.0)

    def __call__(self, ros: float) -> float:
        if self.kind == "identity":
            return float(ros)
        return (float(ros) - self.mean) / self.std


def augment_ros(f: FeatureMatrix, ros: float, norm: RosNorm = RosNorm.identity()) -> FeatureMatrix:
    """Append a constant column holding the (normalized) utterance rate of speech."""
    if f.kind != FeatureKind.FBANK:
        raise ValueError(f"ROS is appended to fbank features, got {f.kind.name}")
    if ros is None or not np.isfinite(ros):
        raise InvalidRos(f"rate of speech must be finite, got {ros!r}")
    col = np.full((f.num_frames, 1), norm(ros))
    return f.replace(np.hstack([f.data, col]))


def splice(f: FeatureMatrix, left: int = 5, right: int = 5) -> FeatureMatrix:
    """Stack ``left`` past and ``right`` future frames around each frame."""
    if left < 0 or right < 0:
        raise ValueError("context widths must be non-negative")
    if left == 0 and right == 0:
        return f.replace(f.data.copy(), FeatureKind.SPLICED)
    t = f.num_frames
    idx = np.clip(np.arange(t)[:, None] + np.arange(-left, right + 1)[None, :], 0, t - 1)
    return f.replace(f.data[idx].reshape(t, -1), FeatureKind.SPLICED)


# ----------------------------------------------------------------------------
# LDA


@dataclass(frozen=True, eq=False)
class LdaTransform:
    """Row-wise linear projection ``y = matrix @ x``.

    The first ``num_discriminant`` rows solve the between/within generalized
    eigenproblem; any further rows come from the residual space (see
    :func:`estimate_lda`).
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    num_discriminant: int
    class_means: np.ndarray
    within_cov: np.ndarray
    condition_number: float
    regularization: float
    num_filled: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def in_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[0]


class LdaAccumulator:
    """Sufficient statistics for LDA; merge-able across utterances."""

    def __init__(self, dim: int):
        self.dim = dim
        self.count: dict[int, int] = {}
        self.sums: dict[int, np.ndarray] = {}
        self.scatter = np.zeros((dim, dim))

    def add(self, x: np.ndarray, labels: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        labels = np.asarray(labels)
        if x.shape[1] != self.dim:
            raise DimMismatch(f"expected {self.dim}-dim frames, got {x.shape[1]}")
        if len(labels) != x.shape[0]:
            raise DimMismatch("one label per frame required")
        self.scatter += x.T @ x
        for c in np.unique(labels):
            c = int(c)
            sel = x[labels == c]
            self.count[c] = self.count.get(c, 0) + len(sel)
            self.sums[c] = self.sums.get(c, 0.0) + sel.sum(axis=0)

    def merge(self, other: "LdaAccumulator"):
        self.scatter += other.scatter
        for c, n in other.count.items():
            self.count[c] = self.count.get(c, 0) + n
            self.sums[c] = self.sums.get(c, 0.0) + other.sums[c]

    def estimate(self, out_dim: int) -> LdaTransform:
        classes = sorted(self.count)
        if len(classes) < 2:
            raise SingularScatter(
                f"LDA needs at least 2 classes, got {len(classes)}; between-class scatter is zero")
        d = self.dim
        if not 1 <= out_dim <= d:
            raise ValueError(f"out_dim must lie in [1, {d}]")
        n_tot = sum(self.count.values())
        means = np.stack([self.sums[c] / self.count[c] for c in classes])
        counts = np.array([self.count[c] for c in classes], dtype=np.float64)
        mu = counts @ means / n_tot
        total_cov = self.scatter / n_tot - np.outer(mu, mu)
        between_cov = (means - mu).T @ ((means - mu) * counts[:, None]) / n_tot
        within_cov = total_cov - between_cov
        within_cov = 0.5 * (within_cov + within_cov.T)

        eig_w = np.linalg.eigvalsh(within_cov)
        cond = float(eig_w[-1] / eig_w[0]) if eig_w[0] > 0 else np.inf
        eps = 1e-6 * np.trace(within_cov) / d
        if not cond < 1e12:
            logger.warning("within-class scatter is near singular (cond=%.3g); regularizing", cond)
        w_reg = within_cov + eps * np.eye(d)

        n_disc = min(out_dim, len(classes) - 1)
        evals, evecs = scipy.linalg.eigh(between_cov, w_reg)
        order = np.argsort(evals)[::-1][:n_disc]
        disc = evecs[:, order]
        disc_vals = evals[order]
        # fix the sign so the largest-magnitude entry of each direction is positive
        signs = np.sign(disc[np.abs(disc).argmax(axis=0), np.arange(n_disc)])
        disc = disc * np.where(signs == 0, 1.0, signs)

        rows = [disc.T]
        n_fill = out_dim - n_disc
        if n_fill > 0:
            fill = _residual_directions(disc, w_reg, total_cov, n_fill)
            rows.append(fill.T)
            logger.info("LDA: %d discriminant + %d residual directions", n_disc, n_fill)
        matrix = np.vstack(rows)
        return LdaTransform(
            matrix=matrix,
            eigenvalues=disc_vals,
            num_discriminant=n_disc,
            class_means=means,
            within_cov=within_cov,
            condition_number=cond,
            regularization=eps,
            num_filled=n_fill,
            metadata={"classes": classes, "residual_fill": n_fill},
        )


def _residual_directions(disc, w_reg, total_cov, n_fill):
    """Largest-variance directions that are within-class orthogonal to ``disc``.

    The chosen subspace is re-whitened so the projected within-class covariance
    stays the identity.
    """
    basis = scipy.linalg.null_space((w_reg @ disc).T)
    proj = basis.T @ total_cov @ basis
    vals, vecs = np.linalg.eigh(0.5 * (proj + proj.T))
    top = basis @ vecs[:, np.argsort(vals)[::-1][:n_fill]]
    _, sub = scipy.linalg.eigh(top.T @ total_cov @ top, top.T @ w_reg @ top)
    out = top @ sub[:, ::-1]
    signs = np.sign(out[np.abs(out).argmax(axis=0), np.arange(out.shape[1])])
    return out * np.where(signs == 0, 1.0, signs)


def estimate_lda(features: Sequence[FeatureMatrix], labels: Sequence[np.ndarray], out_dim: int = 200) -> LdaTransform:
    """Estimate an LDA projection from per-frame class labels.

    Parameters
    ----------
    features : list of FeatureMatrix
        Training utterances, all with the same dimension.
    labels : list of int arrays
        Class id per frame (HMM pdf-ids in the recognizer).
    out_dim : int
        Output dimension. When it exceeds ``num_classes - 1`` the remaining rows
        are filled with the largest-variance directions of the residual space.
    """
    if not features:
        raise ValueError("no features given")
    acc = LdaAccumulator(features[0].dim)
    for f, y in zip(features, labels):
        acc.add(f.data, y)
    return acc.estimate(out_dim)


def apply_lda(t: LdaTransform, f: FeatureMatrix) -> FeatureMatrix:
    if f.dim != t.in_dim:
        raise DimMismatch(f"LDA expects {t.in_dim}-dim input, got {f.dim}")
    return f.replace(f.data @ t.matrix.T, FeatureKind.LDA)


# ----------------------------------------------------------------------------
# binary container

_FEAT_HEADER = struct.Struct("<4sIBIId")
_FEAT_VERSION = 1


def write_features(path, f: FeatureMatrix):
    """Write ``f`` as: magic, version, kind, T, D, frame shift, row-major f64 payload."""
    with open(path, "wb") as fh:
        fh.write(_FEAT_HEADER.pack(b"FEAT", _FEAT_VERSION, int(f.kind), f.num_frames, f.dim, f.frame_shift_s))
        fh.write(np.ascontiguousarray(f.data, dtype="<f8").tobytes())


def read_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        head = fh.read(_FEAT_HEADER.size)
        if len(head) != _FEAT_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, kind, t, d, shift = _FEAT_HEADER.unpack(head)
        if magic != b"FEAT":
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != _FEAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = fh.read()
    if len(payload) != 8 * t * d:
        raise FormatError(f"{path}: expected {t}x{d} payload, got {len(payload)} bytes")
    data = np.frombuffer(payload, dtype="<f8").reshape(t, d).astype(np.float64)
    return FeatureMatrix(data, shift, FeatureKind(kind))


_ARK_KEY = struct.Struct("<H")


def write_feature_archive(path, items):
    """Concatenate ``(utt_id, FeatureMatrix)`` records, each prefixed by its utf-8 id."""
    with open(path, "wb") as fh:
        for utt_id, f in items:
            key = utt_id.encode("utf-8")
            fh.write(_ARK_KEY.pack(len(key)) + key)
            fh.write(_FEAT_HEADER.pack(b"FEAT", _FEAT_VERSION, int(f.kind), f.num_frames, f.dim, f.frame_shift_s))
            fh.write(np.ascontiguousarray(f.data, dtype="<f8").tobytes())


def read_feature_archive(path) -> dict:
    """Inverse of :func:`write_feature_archive`; keeps record order."""
    with open(path, "rb") as fh:
        buf = fh.read()
    out = {}
    pos = 0
    while pos < len(buf):
        try:
            (n,) = _ARK_KEY.unpack_from(buf, pos)
            utt = buf[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            magic, version, kind, t, d, shift = _FEAT_HEADER.unpack_from(buf, pos)
        except struct.error as exc:
            raise FormatError(f"{path}: truncated record at byte {pos}") from exc
        if magic != b"FEAT" or version != _FEAT_VERSION:
            raise FormatError(f"{path}: bad record header at byte {pos}")
        pos += _FEAT_HEADER.size
        size = 8 * t * d
        if pos + size > len(buf):
            raise FormatError(f"{path}: truncated payload for {utt!r}")
        data = np.frombuffer(buf, dtype="<f8", count=t * d, offset=pos).reshape(t, d).copy()
        pos += size
        out[utt] = FeatureMatrix(data, shift, FeatureKind(kind))
    return out
