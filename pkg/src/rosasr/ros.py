"""Rate of speech: computation from alignments, rate bins, splits and histograms."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, NoSpeech
from .hmm.topology import SILENCE, Alignment
from .manifest import Manifest


@dataclass(frozen=True)
class RosValue:
    phones_per_second: float
    num_phones: int
    speech_duration_s: float

    def __post_init__(self):
        if not self.speech_duration_s > 0:
            raise ValueError("speech duration must be positive")

    def __float__(self):
        return float(self.phones_per_second)


class RateBin(str, enum.Enum):
    SLOW = "slow"
    NORMAL = "normal"
    FAST = "fast"


@dataclass(frozen=True)
class RateBins:
    slow_max: float = 4.0
    fast_min: float = 10.0

    def __post_init__(self):
        if not 0 < self.slow_max < self.fast_min:
            raise ValueError("need 0 < slow_max < fast_min")

    def ranges(self) -> dict:
        return {RateBin.SLOW: f"<{self.slow_max:g}",
                RateBin.NORMAL: f"{self.slow_max:g}~{self.fast_min:g}",
                RateBin.FAST: f">{self.fast_min:g}"}


def compute_ros(a: Alignment, silence: str = SILENCE, max_pause_s: float = 0.5) -> RosValue:
    """Phones per second over the speech span of an alignment.

    Silence phones are not counted. The span runs from the first to the last
    non-silence frame; internal silences longer than ``max_pause_s`` are cut
    out of it.
    """
    speech = [(s, e) for p, s, e in a.segments if p != silence]
    if not speech:
        raise NoSpeech(f"{a.utt_id}: alignment contains only silence")
    first, last = speech[0][0], speech[-1][1]
    frames = last - first
    for p, s, e in a.segments:
        if p == silence and s >= first and e <= last and (e - s) * a.frame_shift_s > max_pause_s:
            frames -= e - s
    dur = frames * a.frame_shift_s
    return RosValue(len(speech) / dur, len(speech), dur)


def bin_of(ros, bins: RateBins = RateBins()) -> RateBin:
    """Slow below ``slow_max``, fast above ``fast_min``; edges count as normal."""
    r = float(ros)
    if r < bins.slow_max:
        return RateBin.SLOW
    if r > bins.fast_min:
        return RateBin.FAST
    return RateBin.NORMAL


def partition_manifest(m: Manifest, threshold: float):
    """Split into (ros < threshold, ros >= threshold), keeping manifest order."""
    for e in m:
        if e.ros is None:
            raise ValueError(f"{e.utt_id}: rate of speech not computed")
    lo = Manifest([e for e in m if e.ros < threshold])
    hi = Manifest([e for e in m if e.ros >= threshold])
    return lo, hi


def sample_half(m: Manifest, seed: int, stratum_width: float = 1.0) -> Manifest:
    """Random half of ``m`` stratified by ROS so the rate distribution is preserved.

    Each 1 phone/s stratum contributes half its utterances; leftover slots from
    odd-sized strata are assigned at random. Output keeps manifest order.
    """
    if len(m) < 2:
        raise ValueError("need at least 2 utterances to halve")
    rng = np.random.default_rng(seed)
    strata: dict = {}
    for i, e in enumerate(m):
        key = -1 if e.ros is None else int(math.floor(e.ros / stratum_width))
        strata.setdefault(key, []).append(i)
    target = len(m) // 2
    chosen = []
    odd = []
    for key in sorted(strata):
        idx = strata[key]
        take = len(idx) // 2
        perm = rng.permutation(len(idx))
        chosen.extend(idx[j] for j in perm[:take])
        if len(idx) % 2:
            odd.append(idx[perm[take]])
    extra = target - len(chosen)
    if extra > 0:
        pick = rng.choice(len(odd), size=extra, replace=False)
        chosen.extend(odd[j] for j in sorted(pick))
    keep = sorted(chosen)
    return Manifest([m[i] for i in keep])


@dataclass(frozen=True)
class RosHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["edge_lo", "edge_hi", "count"])
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                w.writerow([f"{lo:g}", f"{hi:g}", int(c)])

    @property
    def mode_bin(self) -> tuple:
        i = int(np.argmax(self.counts))
        return float(self.bin_edges[i]), float(self.bin_edges[i + 1])


def histogram(values, bin_width: float = 1.0) -> RosHistogram:
    """Counts over edges ``0, w, 2w, ...`` up to the maximum rounded up."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    v = np.array([float(x) for x in values], dtype=np.float64)
    if len(v) == 0:
        raise EmptyInput("no ROS values")
    n_bins = max(1, int(math.ceil(v.max() / bin_width)))
    edges = np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(v, bins=edges)
    return RosHistogram(edges, counts)
