"""Viterbi (hard-assignment) EM training of the monophone GMM-HMM system."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyInput, UtteranceTooShort
from .align import compose_linear, equal_path, forced_align, min_frames, path_to_alignment
from .gmm import GmmEmission, GmmStats
from .topology import SILENCE, AcousticModel, PhoneHmm, make_topology
from .viterbi import viterbi

logger = logging.getLogger(__name__)

_CHUNK = 40000


@dataclass(frozen=True)
class GmmTrainConfig:
    num_iters: int = 10
    states_per_phone: int = 3
    silence_states: int = 1
    max_components: int = 2
    split_iters: tuple = (4,)
    var_floor_scale: float = 1e-3
    trans_floor: float = 1e-3
    optional_silence: bool = True


@dataclass
class GmmTrainResult:
    model: AcousticModel
    loglik_history: list
    alignments: list
    skipped: list = field(default_factory=list)
    var_floor: np.ndarray = None


def gmm_scores(gmm: GmmEmission, x: np.ndarray) -> np.ndarray:
    return np.concatenate([gmm.loglik(x[i:i + _CHUNK]) for i in range(0, len(x), _CHUNK)] or [np.zeros((0, gmm.num_pdfs))])


def count_transitions(path, graph, counts: dict):
    """Add (self-loop, leave) counts per (phone, state) for each run in ``path``."""
    path = np.asarray(path)
    change = np.flatnonzero(np.diff(path)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [len(path)]])
    for s, e in zip(starts, ends):
        phone, k, _ = graph.labels[path[s]]
        c = counts.setdefault((phone, k), [0, 0])
        c[0] += e - s - 1
        c[1] += 1


def reestimate_transitions(hmms: dict, counts: dict, floor: float = 1e-3) -> dict:
    out = {}
    for phone, h in hmms.items():
        selfp, leave = list(h.self_probs), list(h.leave_probs)
        for k in range(h.num_states):
            c = counts.get((phone, k))
            if c and c[0] + c[1] > 0:
                p = min(max(c[0] / (c[0] + c[1]), floor), 1.0 - floor)
                selfp[k], leave[k] = p, 1.0 - p
        out[phone] = PhoneHmm(phone, selfp, leave, h.pdf_ids)
    return out


def _gmm_loglik(gmm, x, pdfs):
    total = 0.0
    for i in range(0, len(x), _CHUNK):
        ll = gmm.loglik(x[i:i + _CHUNK])
        total += float(ll[np.arange(len(ll)), pdfs[i:i + _CHUNK]].sum())
    return total


def _em_update(gmm, x, pdfs, var_floor):
    stats = GmmStats.like(gmm)
    for i in range(0, len(x), _CHUNK):
        stats.add(x[i:i + _CHUNK], pdfs[i:i + _CHUNK], gmm)
    return stats.update(gmm, var_floor)


def train_gmm_hmm(utterances, lexicon, cfg: GmmTrainConfig = GmmTrainConfig()) -> GmmTrainResult:
    """Train monophone HMMs with diagonal GMM emissions.

    Parameters
    ----------
    utterances : list of (utt_id, FeatureMatrix, words)
        MFCC features and word transcripts.
    lexicon : Lexicon
    cfg : GmmTrainConfig

    The first alignment spreads frames evenly over the states of each
    transcript (flat start). Every iteration then re-estimates the model from
    the current alignments and realigns. ``loglik_history[i]`` is the total
    best-path log-likelihood after ``i`` iterations; it never decreases.
    Mixture splits are only kept when they do not lower the likelihood of
    the aligned frames.
    """
    if not utterances:
        raise EmptyInput("no training utterances")
    silence = getattr(lexicon, "silence", SILENCE)
    hmms = make_topology(lexicon.phones, cfg.states_per_phone, silence, cfg.silence_states)
    num_pdfs = sum(h.num_states for h in hmms.values())
    probe = AcousticModel(hmms, num_pdfs, silence)

    items, skipped = [], []
    for utt_id, feats, words in utterances:
        phones = lexicon.pronounce(words)
        if feats.num_frames < min_frames(probe, phones):
            logger.warning("%s: too short for its transcript, skipped", utt_id)
            skipped.append(utt_id)
            continue
        items.append((utt_id, feats, list(words), phones))
    if not items:
        raise EmptyInput("every utterance was too short to align")

    x_all = np.concatenate([f.data for _, f, _, _ in items])
    offsets = np.cumsum([0] + [f.num_frames for _, f, _, _ in items])
    mean, var = x_all.mean(axis=0), x_all.var(axis=0)
    var_floor = cfg.var_floor_scale * var
    model = AcousticModel(hmms, num_pdfs, silence, GmmEmission.flat(num_pdfs, mean, var))
    if cfg.num_iters == 0:
        return GmmTrainResult(model, [], [], skipped, var_floor)

    def score_paths(m, paths):
        scores = gmm_scores(m.gmm, x_all)
        total = 0.0
        for (_, _, _, phones), p, s, e in zip(items, paths, offsets[:-1], offsets[1:]):
            graph = compose_linear(m, phones, cfg.optional_silence)
            total += graph.path_score(p, scores[s:e])
        return total

    paths = [equal_path(compose_linear(model, ph, cfg.optional_silence), f.num_frames, cfg.optional_silence)
             for _, f, _, ph in items]
    history = [score_paths(model, paths)]
    graphs = None
    for it in range(1, cfg.num_iters + 1):
        # M-step from the current alignments
        counts, pdf_parts = {}, []
        for (_, _, _, phones), p in zip(items, paths):
            graph = compose_linear(model, phones, cfg.optional_silence)
            count_transitions(p, graph, counts)
            pdf_parts.append(graph.pdf_ids[p])
        pdfs = np.concatenate(pdf_parts)
        new_hmms = reestimate_transitions(model.hmms, counts, cfg.trans_floor)
        gmm = _em_update(model.gmm, x_all, pdfs, var_floor)
        if it in cfg.split_iters and model.gmm.num_components * 2 <= cfg.max_components:
            cand = _em_update(model.gmm.split(), x_all, pdfs, var_floor)
            if _gmm_loglik(cand, x_all, pdfs) >= _gmm_loglik(gmm, x_all, pdfs):
                gmm = cand
            else:
                logger.info("iteration %d: mixture split rejected", it)
        model = AcousticModel(new_hmms, num_pdfs, silence, gmm)

        # E-step: realign
        scores = gmm_scores(gmm, x_all)
        total, paths, graphs = 0.0, [], []
        for (_, _, _, phones), s, e in zip(items, offsets[:-1], offsets[1:]):
            graph = compose_linear(model, phones, cfg.optional_silence)
            p, sc = viterbi(scores[s:e], graph)
            paths.append(p)
            graphs.append(graph)
            total += sc
        history.append(total)
        logger.info("GMM iteration %d: total loglik %.3f (%d comps)", it, total, gmm.num_components)

    alignments = [path_to_alignment(p, g, utt_id, f.frame_shift_s, words)
                  for (utt_id, f, words, _), p, g in zip(items, paths, graphs)]
    return GmmTrainResult(model, history, alignments, skipped, var_floor)


def align_utterances(model: AcousticModel, utterances, lexicon, optional_silence: bool = True):
    """Forced-align ``(utt_id, FeatureMatrix, words)`` items with the GMM system.

    Returns ``(alignments, failures)`` where failures maps utt-id to the error.
    """
    alignments, failures = [], {}
    for utt_id, feats, words in utterances:
        phones = lexicon.pronounce(words)
        try:
            ali, _ = forced_align(model.gmm.loglik(feats.data), phones, model, utt_id,
                                  feats.frame_shift_s, optional_silence, words)
        except UtteranceTooShort as exc:
            failures[utt_id] = exc
            continue
        alignments.append(ali)
    return alignments, failures


def retrain_on_alignments(model: AcousticModel, utterances, alignments, var_floor, em_iters: int = 2,
                          trans_floor: float = 1e-3) -> AcousticModel:
    """Re-estimate transitions and GMMs of ``model`` from fixed alignments of a data subset."""
    feats = {u: f for u, f, _ in utterances}
    counts = {}
    x_parts, pdf_parts = [], []
    for ali in alignments:
        _count_alignment(ali, model, counts)
        x_parts.append(feats[ali.utt_id].data)
        pdf_parts.append(ali.pdf_ids)
    x, pdfs = np.concatenate(x_parts), np.concatenate(pdf_parts)
    gmm = model.gmm
    for _ in range(em_iters):
        gmm = _em_update(gmm, x, pdfs, var_floor)
    return AcousticModel(reestimate_transitions(model.hmms, counts, trans_floor), model.num_pdfs, model.silence, gmm)


def _count_alignment(ali, model, counts):
    for phone, s, e in ali.segments:
        states = ali.states[s:e]
        for k in range(model[phone].num_states):
            d = int((states == k).sum())
            if d:
                c = counts.setdefault((phone, k), [0, 0])
                c[0] += d - 1
                c[1] += 1


def transitions_from_alignments(model: AcousticModel, alignments, floor: float = 1e-3) -> AcousticModel:
    counts = {}
    for ali in alignments:
        _count_alignment(ali, model, counts)
    return model.with_transitions(reestimate_transitions(model.hmms, counts, floor))
