"""Synthetic rate-varying corpus generator and WAV corpus ingestion.

Each phone is a pitch pulse train shaped by a spectral envelope (a broadband
base plus formant-like bumps) over a white background floor. Speaking rate
acts through two channels:

* durations shrink as ``base * r0 / rate``;
* the energy of each phone's rate-coupled formant is multiplied by
  ``1 + kappa * (rate - r0)``.

Phones come in pairs sharing formant positions and differing only in the
level of the upper formant; only one member of each pair is rate-coupled, so
the distortion at extreme rates pushes it towards its partner.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCorpus, IngestError, OovWord, RateTooHigh
from .hmm.topology import SILENCE, Alignment
from .lexicon import Lexicon
from .manifest import Manifest, ManifestEntry
from .ros import compute_ros
from .wavio import read_wav, write_wav

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Formant:
    center_hz: float
    bandwidth_hz: float
    level_db: float = 0.0
    coupled: bool = False  # energy follows the rate factor


@dataclass(frozen=True)
class PhoneSpec:
    name: str
    formants: tuple
    base_frames: float = 14.0
    voiced: bool = True


def default_phones(pair_gap_db: float = 1.6) -> tuple:
    """Four formant groups, two phones each.

    Both members of a pair share formant positions; the second has its upper
    formant ``pair_gap_db`` louder. Exactly one member's upper formant follows
    the rate factor: the quieter one in the first and third pair (fast speech
    pulls it up towards its partner), the louder one in the other two (slow
    speech pulls it down). A per-utterance mean normalization cannot undo
    this since it changes the contrast within the pair.
    """
    groups = [((450, 220), (1900, 400)),
              ((750, 260), (1150, 300)),
              ((300, 180), (2700, 500)),
              ((3200, 800), (5500, 1400))]
    names = [("a", "e"), ("i", "o"), ("u", "m"), ("s", "z")]
    base = [(15.0, 13.0), (14.0, 16.0), (13.0, 15.0), (14.0, 14.0)]
    out = []
    for g, ((f1, f2), pair, durs) in enumerate(zip(groups, names, base)):
        coupled_member = 0 if g % 2 == 0 else 1
        for m, (name, frames) in enumerate(zip(pair, durs)):
            upper = Formant(*f2, level_db=pair_gap_db * m, coupled=(m == coupled_member))
            out.append(PhoneSpec(name, (Formant(*f1), upper), frames))
    return tuple(out)


def default_lexicon() -> dict:
    # Minimal pairs across each level pair.
    return {
        "kano": ("a", "i", "u"), "keno": ("e", "i", "u"),
        "lomi": ("o", "m", "s"), "limi": ("i", "m", "s"),
        "suza": ("u", "z", "a"), "sumza": ("m", "z", "a"),
        "tesa": ("s", "e", "o"), "teza": ("z", "e", "o"),
        "ubi": ("a", "s", "i"), "umbe": ("e", "z", "i"),
        "ora": ("o", "a"), "ure": ("u", "e"),
    }


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings. Levels are in dB relative to a formant peak."""

    phones: tuple = field(default_factory=default_phones)
    lexicon: dict = field(default_factory=default_lexicon)
    silence: str = SILENCE
    sample_rate_hz: int = 16000
    frame_shift_ms: float = 10.0
    window_ms: float = 25.0
    r0: float = 7.0
    kappa: float = 0.05
    rate_median: float = 7.0
    rate_sigma: float = 0.55
    rate_min: float = 1.5
    rate_max: float = 20.0
    duration_jitter: float = 0.15
    min_phone_frames: int = 3
    level_jitter_db: float = 0.1
    utt_gain_db: float = 6.0
    speech_base_db: float = -12.0
    snr_db: float = 30.0
    aspiration_db: float = -20.0
    f0_range_hz: tuple = (115.0, 125.0)
    amplitude: float = 2000.0
    words_per_utt: tuple = (2, 5)
    edge_silence_frames: tuple = (10, 30)
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.kappa):
            raise ValueError("kappa must be finite")
        if not 0 < self.rate_min < self.rate_max:
            raise ValueError("need 0 < rate_min < rate_max")
        if self.rate_median <= 0 or self.rate_sigma < 0:
            raise ValueError("rate sampler needs a positive median and nonnegative sigma")
        names = {p.name for p in self.phones}
        if self.silence in names:
            raise ValueError("silence cannot be a synthetic phone")
        for w, pron in self.lexicon.items():
            missing = [p for p in pron if p not in names]
            if missing:
                raise ValueError(f"word {w!r} uses unknown phones {missing}")
        shortest = min(p.base_frames for p in self.phones) * self.r0 / self.rate_max
        if round(shortest) < 1:
            raise ValueError("durations fall below one frame at rate_max")

    @property
    def shift_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.frame_shift_ms / 1000.0))

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.window_ms / 1000.0))

    @property
    def phone_map(self) -> dict:
        return {p.name: p for p in self.phones}

    def make_lexicon(self) -> Lexicon:
        return Lexicon(dict(self.lexicon), self.silence)

    def energy_factor(self, rate: float) -> float:
        # Clamped so a negative kappa at extreme rates cannot produce negative energy.
        return max(1e-3, 1.0 + self.kappa * (rate - self.r0))

    def digest(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


@dataclass
class Utterance:
    utt_id: str
    samples: np.ndarray
    sample_rate_hz: int
    words: tuple
    segments: list
    rate: float
    frame_shift_s: float = 0.01

    def __post_init__(self):
        if not self.words:
            raise ValueError("transcript must be nonempty")

    @property
    def num_frames(self) -> int:
        return self.segments[-1][2]

    @property
    def alignment(self) -> Alignment:
        n = self.num_frames
        return Alignment(self.utt_id, self.frame_shift_s, list(self.segments), np.zeros(n, dtype=np.int64),
                         np.zeros(n, dtype=np.int64), list(self.words))

    @property
    def ros(self) -> float:
        return compute_ros(self.alignment).phones_per_second


def sample_rate_of_speech(cfg: SynthConfig, rng: np.random.Generator) -> float:
    """Log-normal draw clipped to ``[rate_min, rate_max]`` (right-skewed, long fast tail)."""
    r = cfg.rate_median * math.exp(cfg.rate_sigma * rng.standard_normal())
    return float(min(max(r, cfg.rate_min), cfg.rate_max))


def phone_durations(cfg: SynthConfig, phones, rate: float, rng: np.random.Generator) -> list[int]:
    if rate <= 0:
        raise ValueError("rate must be positive")
    pm = cfg.phone_map
    out = []
    s = cfg.duration_jitter
    for p in phones:
        nominal = pm[p].base_frames * cfg.r0 / rate
        if round(nominal) < 1:
            raise RateTooHigh(f"phone {p!r} lasts {nominal:.2f} frames at rate {rate:g}")
        jitter = math.exp(s * rng.standard_normal() - 0.5 * s * s) if s > 0 else 1.0
        out.append(max(cfg.min_phone_frames, int(round(nominal * jitter))))
    return out


def _envelope(cfg: SynthConfig, spec: PhoneSpec, freqs: np.ndarray, factor: float, jitter_db) -> np.ndarray:
    """Power density of one phone: broadband speech base plus Gaussian formant bumps."""
    env = np.full(len(freqs), 10.0 ** (cfg.speech_base_db / 10.0))
    for fm, j in zip(spec.formants, jitter_db):
        level = 10.0 ** ((fm.level_db + j) / 10.0) * (factor if fm.coupled else 1.0)
        env += level * np.exp(-0.5 * ((freqs - fm.center_hz) / fm.bandwidth_hz) ** 2)
    return env


def _excitation(cfg: SynthConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-power glottal pulse train at a per-utterance f0 plus aspiration noise."""
    f0 = rng.uniform(*cfg.f0_range_hz)
    period = cfg.sample_rate_hz / f0
    pulses = np.zeros(n)
    pos = np.arange(rng.uniform(0, period), n, period).astype(int)
    pulses[pos] = math.sqrt(period)
    return pulses + 10.0 ** (cfg.aspiration_db / 20.0) * rng.standard_normal(n)


def synthesize_utterance(cfg: SynthConfig, words, rate: float, seed, utt_id: str = "utt") -> Utterance:
    """Waveform for ``words`` spoken at ``rate`` phones per second.

    Deterministic in ``seed`` (an int or a sequence accepted by numpy's SeedSequence).
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    words = tuple(words)
    for w in words:
        if w not in cfg.lexicon:
            raise OovWord(w)
    rng = np.random.default_rng(seed)
    phones = [p for w in words for p in cfg.lexicon[w]]
    durs = phone_durations(cfg, phones, rate, rng)
    lo, hi = cfg.edge_silence_frames
    lead, trail = (int(x) for x in rng.integers(lo, hi + 1, size=2))
    segments = []
    t = 0
    for p, d in [(cfg.silence, lead)] + list(zip(phones, durs)) + [(cfg.silence, trail)]:
        segments.append((p, t, t + d))
        t += d

    shift = cfg.shift_samples
    total = t * shift + cfg.window_samples - shift
    pm = cfg.phone_map
    factor = cfg.energy_factor(rate)
    gain = 10.0 ** (cfg.utt_gain_db * rng.uniform(-0.5, 0.5) / 20.0)
    voiced = _excitation(cfg, total, rng)
    speech = np.zeros(total)
    for p, s, e in segments:
        spec = pm.get(p)
        if spec is None:
            continue
        a, b = s * shift, e * shift
        exc = voiced[a:b] if spec.voiced else rng.standard_normal(b - a)
        jitter = cfg.level_jitter_db * rng.standard_normal(len(spec.formants))
        freqs = np.fft.rfftfreq(b - a, 1.0 / cfg.sample_rate_hz)
        env = _envelope(cfg, spec, freqs, factor, jitter)
        speech[a:b] = np.fft.irfft(np.fft.rfft(exc) * np.sqrt(env), b - a)
    floor = 10.0 ** (-cfg.snr_db / 20.0) * rng.standard_normal(total)
    samples = cfg.amplitude * gain * (speech + floor)
    return Utterance(utt_id, samples, cfg.sample_rate_hz, words, segments, rate, cfg.frame_shift_ms / 1000.0)


def random_transcript(cfg: SynthConfig, rng: np.random.Generator) -> tuple:
    vocab = sorted(cfg.lexicon)
    n = int(rng.integers(cfg.words_per_utt[0], cfg.words_per_utt[1] + 1))
    return tuple(vocab[i] for i in rng.integers(0, len(vocab), size=n))


def utterance_seed(seed: int, index: int) -> list[int]:
    """Per-utterance seed derived from the corpus seed and the utterance index."""
    return [int(seed), int(index)]


def make_utterance(cfg: SynthConfig, seed: int, index: int) -> Utterance:
    rng = np.random.default_rng(utterance_seed(seed, index))
    words = random_transcript(cfg, rng)
    rate = sample_rate_of_speech(cfg, rng)
    return synthesize_utterance(cfg, words, rate, rng.integers(0, 2**63), f"u{index:06d}")


@dataclass
class CorpusSplits:
    train: Manifest
    cv: Manifest
    test: Manifest
    true_alignments: dict
    lexicon: Lexicon

    @property
    def all(self) -> Manifest:
        return Manifest(list(self.train) + list(self.cv) + list(self.test))


def split_indices(num_utts: int, seed: int, cv_fraction: float, test_fraction: float):
    """Disjoint (train, cv, test) index lists, each sorted."""
    if num_utts < 1:
        raise ValueError("num_utts must be >= 1")
    if cv_fraction < 0 or test_fraction < 0 or cv_fraction + test_fraction >= 1:
        raise ValueError("need cv_fraction, test_fraction >= 0 with sum < 1")
    perm = np.random.default_rng([int(seed), 2**31 - 1]).permutation(num_utts)
    n_cv = int(round(cv_fraction * num_utts))
    n_test = int(round(test_fraction * num_utts))
    cv = sorted(perm[:n_cv].tolist())
    test = sorted(perm[n_cv:n_cv + n_test].tolist())
    train = sorted(perm[n_cv + n_test:].tolist())
    return train, cv, test


def generate_corpus(cfg: SynthConfig, num_utts: int, seed: int | None = None, out_dir=None,
                    cv_fraction: float = 0.05, test_fraction: float = 0.2, keep_samples: bool = False):
    """Synthesize ``num_utts`` utterances and split them into train, cv and test.

    With ``out_dir`` the WAVs, manifests, lexicon, transcripts and true
    alignments are written there. Returns ``(CorpusSplits, utterances)``;
    ``utterances`` is empty unless ``keep_samples`` is set or no directory is given.
    """
    seed = cfg.seed if seed is None else seed
    train_i, cv_i, test_i = split_indices(num_utts, seed, cv_fraction, test_fraction)
    role = {}
    for name, idx in (("train", train_i), ("cv", cv_i), ("test", test_i)):
        for i in idx:
            role[i] = name
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "wav"), exist_ok=True)
    entries = {"train": [], "cv": [], "test": []}
    alis = {}
    kept = {}
    for i in range(num_utts):
        u = make_utterance(cfg, seed, i)
        wav = os.path.join("wav", f"{u.utt_id}.wav")
        if out_dir is not None:
            write_wav(os.path.join(out_dir, wav), u.samples, u.sample_rate_hz)
        if out_dir is None or keep_samples:
            kept[u.utt_id] = u
        alis[u.utt_id] = u.alignment
        entries[role[i]].append(ManifestEntry(u.utt_id, wav, u.words))
    splits = CorpusSplits(Manifest(entries["train"]), Manifest(entries["cv"]), Manifest(entries["test"]),
                          alis, cfg.make_lexicon())
    if out_dir is not None:
        write_corpus_files(out_dir, splits)
    return splits, kept


def write_corpus_files(out_dir, splits: CorpusSplits):
    from .hmm.io import write_alignments

    for name in ("train", "cv", "test"):
        getattr(splits, name).write(os.path.join(out_dir, f"{name}.manifest"))
    splits.lexicon.write(os.path.join(out_dir, "lexicon.txt"))
    write_transcripts(os.path.join(out_dir, "transcripts.txt"), {e.utt_id: e.words for e in splits.all})
    write_alignments(os.path.join(out_dir, "true_alignments.txt"),
                     [splits.true_alignments[k] for k in sorted(splits.true_alignments)])


def write_transcripts(path, transcripts: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for utt in sorted(transcripts):
            fh.write(f"{utt}\t{' '.join(transcripts[utt])}\n")


def read_transcripts(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            utt, _, words = line.partition("\t")
            out[utt] = tuple(words.split())
    return out


@dataclass
class IngestResult:
    manifest: Manifest
    errors: list  # (file or utt-id, message)


def ingest_wav_corpus(directory, transcripts_path, lexicon_path, sample_rate_hz: int = 16000) -> IngestResult:
    """Manifest for every readable ``*.wav`` in ``directory`` with a transcript.

    Per-file problems (malformed header, wrong sample rate, no transcript,
    out-of-vocabulary words) become error records instead of aborting.
    """
    wavs = sorted(f for f in os.listdir(directory) if f.lower().endswith(".wav")) if os.path.isdir(directory) else []
    if not wavs:
        raise EmptyCorpus(f"no WAV files in {directory}")
    transcripts = read_transcripts(transcripts_path)
    lex = Lexicon.read(lexicon_path)
    entries, errors = [], []
    for f in wavs:
        utt = os.path.splitext(f)[0]
        path = os.path.join(directory, f)
        try:
            samples, rate = read_wav(path)
        except IngestError as exc:
            errors.append((f, str(exc)))
            continue
        if rate != sample_rate_hz:
            errors.append((f, f"sample rate {rate} Hz, expected {sample_rate_hz} Hz"))
            continue
        if len(samples) == 0:
            errors.append((f, "no samples"))
            continue
        words = transcripts.get(utt)
        if not words:
            errors.append((f, "missing transcript; skipped"))
            continue
        oov = [w for w in words if w not in lex]
        if oov:
            errors.append((f, f"out-of-vocabulary words {oov}"))
            continue
        entries.append(ManifestEntry(utt, os.path.abspath(path), words))
    for e in errors:
        logger.warning("ingest: %s: %s", *e)
    return IngestResult(Manifest(entries), errors)
