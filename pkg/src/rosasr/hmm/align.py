"""Linear composition of phone HMMs and forced alignment."""

from __future__ import annotations

import numpy as np

from ..errors import UtteranceTooShort
from .topology import AcousticModel, Alignment
from .viterbi import HmmGraph, safe_log, viterbi

OPTIONAL_SIL_PROB = 0.5


def compose_linear(model: AcousticModel, phones, optional_silence: bool = True) -> HmmGraph:
    """Chain the phone HMMs of ``phones`` left to right.

    With ``optional_silence`` a silence model may precede the first and follow
    the last phone; each option is taken with probability 0.5. Labels are
    ``(phone, state, position)`` where position -1 / len(phones) mark the
    optional silences.
    """
    units = [(p, i) for i, p in enumerate(phones)]
    if optional_silence:
        units = [(model.silence, -1)] + units + [(model.silence, len(phones))]
    pdfs, selfp, leave, labels, starts = [], [], [], [], []
    for phone, pos in units:
        h = model[phone]
        starts.append(len(pdfs))
        for k in range(h.num_states):
            pdfs.append(h.pdf_ids[k])
            selfp.append(h.self_probs[k])
            leave.append(h.leave_probs[k])
            labels.append((phone, k, pos))
    n = len(pdfs)
    trans = np.zeros((n, n))
    init = np.zeros(n)
    final = np.zeros(n)
    for s in range(n):
        trans[s, s] = selfp[s]
    ends = [st - 1 for st in starts[1:]] + [n - 1]
    for u, (st, en) in enumerate(zip(starts, ends)):
        for s in range(st, en):
            trans[s, s + 1] = leave[s]
    if optional_silence:
        lead_end, first_start = ends[0], starts[1]
        last_end, trail_start = ends[-2], starts[-1]
        init[0] = OPTIONAL_SIL_PROB
        init[first_start] = 1.0 - OPTIONAL_SIL_PROB
        trans[lead_end, first_start] = leave[lead_end]
        for u in range(1, len(units) - 2):
            trans[ends[u], starts[u + 1]] = leave[ends[u]]
        trans[last_end, trail_start] = leave[last_end] * OPTIONAL_SIL_PROB
        final[last_end] = leave[last_end] * (1.0 - OPTIONAL_SIL_PROB)
        final[n - 1] = leave[n - 1]
    else:
        init[0] = 1.0
        for u in range(len(units) - 1):
            trans[ends[u], starts[u + 1]] = leave[ends[u]]
        final[n - 1] = leave[n - 1]
    return HmmGraph(np.array(pdfs, dtype=np.int64), safe_log(trans), safe_log(init), safe_log(final), labels)


def min_frames(model: AcousticModel, phones) -> int:
    return sum(model[p].num_states for p in phones)


def path_to_alignment(path, graph: HmmGraph, utt_id: str, frame_shift_s: float, words=None) -> Alignment:
    labels = [graph.labels[s] for s in path]
    segments = []
    start = 0
    for t in range(1, len(labels) + 1):
        if t == len(labels) or labels[t][2] != labels[start][2] or labels[t][1] < labels[t - 1][1]:
            segments.append((labels[start][0], start, t))
            start = t
    states = [lab[1] for lab in labels]
    return Alignment(utt_id, frame_shift_s, segments, states, graph.pdf_ids[path], list(words or []))


def equal_path(graph: HmmGraph, num_frames: int, optional_silence: bool) -> np.ndarray:
    """Distribute frames as evenly as possible over every state of the chain."""
    n = graph.num_states
    if num_frames < n and optional_silence:
        # too few frames to visit the optional silences; skip them
        positions = [lab[2] for lab in graph.labels]
        core = [s for s, pos in enumerate(positions) if pos not in (positions[0], positions[-1])]
        return _spread(np.array(core), num_frames)
    return _spread(np.arange(n), num_frames)


def _spread(states, num_frames):
    if num_frames < len(states):
        raise UtteranceTooShort(f"{num_frames} frames for {len(states)} states")
    bounds = np.floor(np.linspace(0, num_frames, len(states) + 1)).astype(int)
    return np.repeat(states, np.diff(bounds))


def forced_align(scores: np.ndarray, phones, model: AcousticModel, utt_id: str = "",
                 frame_shift_s: float = 0.01, optional_silence: bool = True, words=None):
    """Viterbi alignment of a known phone sequence.

    ``scores`` are per-frame pdf log scores (e.g. ``model.gmm.loglik(x)``).
    Returns ``(Alignment, log score)``.
    """
    need = min_frames(model, phones)
    if len(scores) < need:
        raise UtteranceTooShort(f"{utt_id}: {len(scores)} frames, need at least {need}")
    graph = compose_linear(model, phones, optional_silence)
    path, score = viterbi(scores, graph)
    return path_to_alignment(path, graph, utt_id, frame_shift_s, words), score
