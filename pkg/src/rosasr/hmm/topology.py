"""Phone HMM topology, the geometric duration model and transition scaling."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from ..errors import Divergent, InvalidAlpha, InvalidDuration

SILENCE = "sil"


@dataclass(frozen=True)
class DurationModel:
    """Dwell time of a single HMM state with self-loop probability ``p_i``."""

    p_i: float

    def __post_init__(self):
        if not 0.0 <= self.p_i <= 1.0:
            raise ValueError(f"self-loop probability must lie in [0, 1], got {self.p_i}")

    @property
    def p_o(self) -> float:
        return 1.0 - self.p_i


def duration_pmf(d: DurationModel, n):
    """Probability of staying exactly ``n`` frames: ``p_i**(n-1) * (1 - p_i)``.

    ``n`` may be an integer array, giving the pmf elementwise.
    """
    if np.any(np.asarray(n) < 1):
        raise InvalidDuration(f"duration must be >= 1 frame, got {n}")
    if np.ndim(n):
        return np.float64(d.p_i) ** (np.asarray(n, dtype=np.float64) - 1.0) * (1.0 - d.p_i)
    return d.p_i ** (n - 1) * (1.0 - d.p_i)


def duration_cdf(d: DurationModel, n: int) -> float:
    """Closed form of ``sum(duration_pmf(d, k) for k in 1..n)``."""
    if n < 0:
        raise InvalidDuration(f"n must be >= 0, got {n}")
    return 1.0 - d.p_i ** n


def expected_duration(d: DurationModel) -> float:
    """Mean dwell time in frames, ``1 / p_o``."""
    if d.p_i >= 1.0:
        raise Divergent("self-loop probability 1 never leaves the state")
    return 1.0 / (1.0 - d.p_i)


def scale_self_loop(p_i: float, p_o: float, alpha: float) -> tuple[float, float]:
    """Multiply the self-loop by ``alpha`` and renormalize the outgoing mass."""
    if not alpha > 0 or not np.isfinite(alpha):
        raise InvalidAlpha(f"alpha must be a positive finite number, got {alpha}")
    if alpha == 1.0:
        return p_i, p_o
    z = alpha * p_i + p_o
    return alpha * p_i / z, p_o / z


@dataclass(frozen=True)
class PhoneHmm:
    """Strict left-to-right phone model; state ``k`` emits through ``pdf_ids[k]``."""

    phone: str
    self_probs: tuple
    leave_probs: tuple
    pdf_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "self_probs", tuple(float(p) for p in self.self_probs))
        object.__setattr__(self, "leave_probs", tuple(float(p) for p in self.leave_probs))
        object.__setattr__(self, "pdf_ids", tuple(int(p) for p in self.pdf_ids))
        n = len(self.pdf_ids)
        if n < 1 or len(self.self_probs) != n or len(self.leave_probs) != n:
            raise ValueError(f"{self.phone}: inconsistent state count")
        for pi, po in zip(self.self_probs, self.leave_probs):
            if not (0.0 < pi < 1.0 and 0.0 < po < 1.0):
                raise ValueError(f"{self.phone}: transition probabilities must lie in (0, 1)")
            if abs(pi + po - 1.0) > 1e-12:
                raise ValueError(f"{self.phone}: p_i + p_o = {pi + po} != 1")

    @classmethod
    def uniform(cls, phone: str, pdf_ids: Sequence[int], p_i: float = 0.5) -> "PhoneHmm":
        n = len(pdf_ids)
        return cls(phone, (p_i,) * n, (1.0 - p_i,) * n, tuple(pdf_ids))

    @property
    def num_states(self) -> int:
        return len(self.pdf_ids)

    def expected_duration(self) -> float:
        return float(sum(1.0 / po for po in self.leave_probs))


def scale_self_transitions(h: PhoneHmm, alpha: float) -> PhoneHmm:
    """Scale every state's self-loop by ``alpha`` then renormalize so p_i + p_o = 1."""
    pairs = [scale_self_loop(pi, po, alpha) for pi, po in zip(h.self_probs, h.leave_probs)]
    return replace(h, self_probs=tuple(p for p, _ in pairs), leave_probs=tuple(q for _, q in pairs))


@dataclass(frozen=True, eq=False)
class AcousticModel:
    """Phone HMM set plus (optionally) GMM emissions for its pdf-ids."""

    hmms: dict
    num_pdfs: int
    silence: str = SILENCE
    gmm: object = None

    @property
    def phones(self) -> list[str]:
        return list(self.hmms)

    def __getitem__(self, phone: str) -> PhoneHmm:
        return self.hmms[phone]

    def with_transitions(self, hmms: dict) -> "AcousticModel":
        return replace(self, hmms=dict(hmms))

    def scaled(self, alpha: float, include_silence: bool = False) -> "AcousticModel":
        if alpha == 1.0:
            return self
        hmms = {p: (h if (p == self.silence and not include_silence) else scale_self_transitions(h, alpha))
                for p, h in self.hmms.items()}
        return replace(self, hmms=hmms)

    def pdf_to_phone(self) -> dict:
        return {pdf: (p, k) for p, h in self.hmms.items() for k, pdf in enumerate(h.pdf_ids)}


def make_topology(phones: Iterable[str], states_per_phone: int = 3, silence: str = SILENCE,
                  silence_states: int = 1, p_i: float = 0.5) -> dict:
    """Allocate consecutive pdf-ids: silence first, then phones in the given order."""
    hmms = {}
    next_pdf = 0
    ordered = [silence] + [p for p in phones if p != silence]
    for p in ordered:
        n = silence_states if p == silence else states_per_phone
        hmms[p] = PhoneHmm.uniform(p, range(next_pdf, next_pdf + n), p_i)
        next_pdf += n
    return hmms


@dataclass
class Alignment:
    """Per-frame (phone, state, pdf-id) labels of one utterance.

    ``segments`` lists phone instances as ``(phone, start, end)`` with ``end``
    exclusive, which keeps repeated phones distinguishable.
    """

    utt_id: str
    frame_shift_s: float
    segments: list
    states: np.ndarray
    pdf_ids: np.ndarray
    words: list = field(default_factory=list)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        self.pdf_ids = np.asarray(self.pdf_ids, dtype=np.int64)
        if len(self.states) != len(self.pdf_ids):
            raise ValueError("states and pdf_ids differ in length")

    @property
    def num_frames(self) -> int:
        return len(self.pdf_ids)

    @property
    def frame_phones(self) -> list[str]:
        out = [None] * self.num_frames
        for p, s, e in self.segments:
            out[s:e] = [p] * (e - s)
        return out

    def phone_durations(self, silence: str = SILENCE) -> list[int]:
        return [e - s for p, s, e in self.segments if p != silence]
