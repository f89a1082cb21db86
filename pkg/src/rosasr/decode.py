"""Word-loop decoding graph, hybrid Viterbi decoding and WER scoring."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyReference, FormatError, MissingHypothesis, NoPath
from .hmm.topology import AcousticModel, Alignment
from .hmm.viterbi import HmmGraph, safe_log, viterbi
from .lexicon import Lexicon
from .ros import RateBin, RateBins, bin_of

__all__ = [
    "DecodeGraph", "DecodeOptions", "DecodeResult", "Lexicon", "ScoreTable", "WerReport", "build_graph",
    "compute_wer", "decode_utterance", "read_hypotheses", "score_manifest", "write_hypotheses",
]


@dataclass(frozen=True, eq=False)
class DecodeGraph:
    """Flat loop over word HMM chains plus an optional silence unit.

    ``units[u]`` is a word (or ``None`` for silence); ``lm[u, v]`` is the
    probability of unit ``v`` following unit ``u`` with column ``V`` holding
    the end-of-utterance probability, and ``lm_start[v]`` the initial one.
    """

    lexicon: Lexicon
    model: AcousticModel
    units: list
    lm: np.ndarray
    lm_start: np.ndarray
    hmm: HmmGraph
    unit_starts: list
    _scaled: dict = field(default_factory=dict, repr=False)

    def with_alpha(self, alpha: float, include_silence: bool = False) -> "DecodeGraph":
        """Same graph with every self-loop scaled by ``alpha`` and renormalized."""
        if alpha == 1.0:
            return self
        key = (alpha, include_silence)
        if key not in self._scaled:
            self._scaled[key] = _assemble(self.lexicon, self.model.scaled(alpha, include_silence),
                                          self.units, self.lm, self.lm_start)
        return self._scaled[key]


def build_graph(lex: Lexicon, model: AcousticModel, word_lm: dict | None = None,
                silence: bool = True) -> DecodeGraph:
    """Compose lexicon and phone HMMs into a word loop.

    ``word_lm`` optionally maps ``(prev_word, next_word)`` to a weight; rows are
    completed with a uniform share for unlisted successors and renormalized.
    Without it every successor (words, silence, end) is equally likely.
    """
    lex.validate(model.phones)
    units = list(lex.words) + ([None] if silence else [])
    n = len(units)
    lm = np.zeros((n, n + 1))
    for u, uw in enumerate(units):
        row = np.ones(n + 1)
        if uw is None:
            row[u] = 0.0  # no silence directly after silence
        elif word_lm:
            listed = {v: word_lm[(uw, vw)] for v, vw in enumerate(units) if (uw, vw) in word_lm}
            if listed:
                rest = max(0.0, 1.0 - sum(listed.values()))
                share = rest / (n + 1 - len(listed))
                row[:] = share
                for v, w in listed.items():
                    row[v] = w
        lm[u] = row / row.sum()
    lm_start = np.full(n, 1.0 / n)
    return _assemble(lex, model, units, lm, lm_start)


def _assemble(lex, model, units, lm, lm_start) -> DecodeGraph:
    pdfs, selfp, leave, labels, starts, ends = [], [], [], [], [], []
    for u, w in enumerate(units):
        phones = [model.silence] if w is None else list(lex.prons[w])
        starts.append(len(pdfs))
        for pos, ph in enumerate(phones):
            h = model[ph]
            for k in range(h.num_states):
                pdfs.append(h.pdf_ids[k])
                selfp.append(h.self_probs[k])
                leave.append(h.leave_probs[k])
                labels.append((ph, k, u, pos))
        ends.append(len(pdfs) - 1)
        if w is not None and ends[-1] == starts[-1]:
            raise ValueError(f"word {w!r} has a single HMM state; the word loop needs at least two")
    s = len(pdfs)
    trans = np.zeros((s, s))
    for i in range(s):
        trans[i, i] = selfp[i]
    for st, en in zip(starts, ends):
        for i in range(st, en):
            trans[i, i + 1] = leave[i]
    init = np.zeros(s)
    final = np.zeros(s)
    n = len(units)
    for u in range(n):
        init[starts[u]] = lm_start[u]
        e = ends[u]
        final[e] = leave[e] * lm[u, n]
        for v in range(n):
            if lm[u, v] > 0:
                trans[e, starts[v]] += leave[e] * lm[u, v]
    graph = HmmGraph(np.array(pdfs, dtype=np.int64), safe_log(trans), safe_log(init), safe_log(final), labels)
    return DecodeGraph(lex, model, list(units), lm, lm_start, graph, starts)


@dataclass(frozen=True)
class DecodeOptions:
    alpha: float = 1.0
    acoustic_scale: float = 0.1
    beam: float = 16.0
    include_silence: bool = False


@dataclass
class DecodeResult:
    words: list
    alignment: Alignment
    score: float


def decode_utterance(loglik: np.ndarray, graph: DecodeGraph, opts: DecodeOptions = DecodeOptions(),
                     utt_id: str = "", frame_shift_s: float = 0.01) -> DecodeResult:
    """1-best word sequence for per-frame pdf log-likelihoods.

    ``loglik`` is scaled by ``opts.acoustic_scale``; transitions are scaled
    by ``opts.alpha`` first. Raises NoPath if the beam prunes every hypothesis.
    """
    g = graph.with_alpha(opts.alpha, opts.include_silence)
    beam = None if opts.beam is None or math.isinf(opts.beam) else opts.beam
    path, score = viterbi(opts.acoustic_scale * np.asarray(loglik, dtype=np.float64), g.hmm, beam)
    words, ali = _read_path(path, g, utt_id, frame_shift_s)
    return DecodeResult(words, ali, score)


def decode_with_retry(loglik, graph, opts: DecodeOptions, utt_id="", frame_shift_s=0.01, max_tries=4):
    """Decode, doubling the beam after each NoPath and finally searching without a beam."""
    beam = opts.beam
    for _ in range(max_tries):
        try:
            return decode_utterance(loglik, graph, DecodeOptions(opts.alpha, opts.acoustic_scale, beam,
                                                                 opts.include_silence), utt_id, frame_shift_s)
        except NoPath:
            if beam is None or math.isinf(beam):
                raise
            beam *= 2
    return decode_utterance(loglik, graph, DecodeOptions(opts.alpha, opts.acoustic_scale, math.inf,
                                                         opts.include_silence), utt_id, frame_shift_s)


def _read_path(path, g: DecodeGraph, utt_id, frame_shift_s):
    labels = [g.hmm.labels[s] for s in path]
    segments, words = [], []
    start = 0
    for t in range(1, len(labels) + 1):
        if (t == len(labels) or labels[t][2:] != labels[start][2:] or labels[t][1] < labels[t - 1][1]):
            ph, k, u, pos = labels[start]
            segments.append((ph, start, t))
            if pos == 0 and g.units[u] is not None:
                words.append(g.units[u])
            start = t
    ali = Alignment(utt_id, frame_shift_s, segments, [lab[1] for lab in labels], g.hmm.pdf_ids[path], words)
    return words, ali


# ----------------------------------------------------------------------------
# WER


@dataclass(frozen=True)
class WerReport:
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        return 100.0 * self.errors / self.ref_words

    def __add__(self, other: "WerReport") -> "WerReport":
        return WerReport(self.substitutions + other.substitutions, self.deletions + other.deletions,
                         self.insertions + other.insertions, self.ref_words + other.ref_words)


def edit_ops(ref, hyp) -> list[str]:
    """Minimum edit alignment as a list of 'C', 'S', 'I', 'D' operations.

    Backtrace ties prefer substitution (or match), then insertion, then deletion.
    """
    n, m = len(ref), len(hyp)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i, j] = min(d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]), d[i, j - 1] + 1, d[i - 1, j] + 1)
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            ops.append("C" if ref[i - 1] == hyp[j - 1] else "S")
            i, j = i - 1, j - 1
        elif j > 0 and d[i, j] == d[i, j - 1] + 1:
            ops.append("I")
            j -= 1
        else:
            ops.append("D")
            i -= 1
    return ops[::-1]


def compute_wer(ref, hyp) -> WerReport:
    ref, hyp = list(ref), list(hyp)
    if not ref:
        raise EmptyReference("reference transcript is empty")
    ops = edit_ops(ref, hyp)
    return WerReport(ops.count("S"), ops.count("D"), ops.count("I"), len(ref))


@dataclass
class ScoreTable:
    """Per-bin WER reports (None when a bin has no utterances) plus the pooled total."""

    bins: dict
    total: WerReport
    bin_ranges: dict

    def rows(self, name: str = "") -> list[dict]:
        out = []
        for b in (RateBin.SLOW, RateBin.NORMAL, RateBin.FAST):
            r = self.bins.get(b)
            out.append({"system": name, "test_set": b.value, "ros_range": self.bin_ranges[b],
                        "wer_percent": "absent" if r is None else f"{r.wer:.2f}",
                        "errors": "" if r is None else r.errors, "words": "" if r is None else r.ref_words})
        out.append({"system": name, "test_set": "total", "ros_range": "-", "wer_percent": f"{self.total.wer:.2f}",
                    "errors": self.total.errors, "words": self.total.ref_words})
        return out

    def wer(self, b) -> float | None:
        r = self.bins.get(RateBin(b))
        return None if r is None else r.wer


def score_manifest(manifest, hyps: dict, bins: RateBins = RateBins()) -> ScoreTable:
    """WER per rate bin and pooled over all utterances (errors and words summed)."""
    per_bin: dict = {}
    total = WerReport(0, 0, 0, 0)
    for e in manifest:
        if e.utt_id not in hyps:
            raise MissingHypothesis(e.utt_id)
        rep = compute_wer(e.words, hyps[e.utt_id])
        b = RateBin(e.bin) if e.bin else (bin_of(e.ros, bins) if e.ros is not None else None)
        if b is not None:
            per_bin[b] = per_bin.get(b, WerReport(0, 0, 0, 0)) + rep
        total = total + rep
    if total.ref_words == 0:
        raise EmptyReference("manifest has no reference words")
    return ScoreTable(per_bin, total, bins.ranges())


def write_score_csv(path, tables: list, header_extra: dict | None = None):
    """Rows of (system, test_set, ros_range, wer_percent, errors, words) per table."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_extra:
            for k, v in header_extra.items():
                fh.write(f"# {k}: {v}\n")
        w = csv.DictWriter(fh, ["system", "test_set", "ros_range", "wer_percent", "errors", "words"],
                           lineterminator="\n")
        w.writeheader()
        for name, table in tables:
            for row in table.rows(name):
                w.writerow(row)


def format_table(tables: list) -> str:
    """Plain-text view: one row per system, columns Slow / Normal / Fast / Total."""
    head = f"{'system':<28}{'Slow':>9}{'Normal':>9}{'Fast':>9}{'Total':>9}"
    lines = [head, "-" * len(head)]
    for name, t in tables:
        cells = []
        for b in (RateBin.SLOW, RateBin.NORMAL, RateBin.FAST):
            v = t.wer(b)
            cells.append("-" if v is None else f"{v:.2f}")
        cells.append(f"{t.total.wer:.2f}")
        lines.append(f"{name:<28}" + "".join(f"{c:>9}" for c in cells))
    return "\n".join(lines) + "\n"


def write_hypotheses(path, hyps: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for utt in sorted(hyps):
            fh.write(f"{utt}\t{' '.join(hyps[utt])}\n")


def read_hypotheses(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'utt-id<TAB>words'")
            utt, words = line.split("\t", 1)
            out[utt] = words.split()
    return out
