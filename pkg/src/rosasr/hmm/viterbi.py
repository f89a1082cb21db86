"""Log-domain Viterbi search over a small dense state graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NoPath

# log-probabilities below this are treated as impossible
LOG_ZERO_FLUSH = -700.0


def safe_log(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = np.log(p)
    return np.where(out < LOG_ZERO_FLUSH, -np.inf, out)


@dataclass(frozen=True, eq=False)
class HmmGraph:
    """Emitting states with dense log transition matrix.

    ``log_init[s]`` scores entering ``s`` at the first frame, ``log_final[s]``
    scores leaving the graph from ``s`` after the last frame. ``labels`` holds
    per-state bookkeeping (phone, state index, word slot) for the caller.
    """

    pdf_ids: np.ndarray
    log_trans: np.ndarray
    log_init: np.ndarray
    log_final: np.ndarray
    labels: list = field(default_factory=list)

    def __post_init__(self):
        s = len(self.pdf_ids)
        if s == 0:
            raise ValueError("graph has no states")
        if self.log_trans.shape != (s, s) or self.log_init.shape != (s,) or self.log_final.shape != (s,):
            raise ValueError("inconsistent graph shapes")

    @property
    def num_states(self) -> int:
        return len(self.pdf_ids)

    def path_score(self, path, scores: np.ndarray) -> float:
        """Transition plus emission log score of an explicit state path."""
        path = np.asarray(path)
        emis = scores[np.arange(len(path)), self.pdf_ids[path]]
        trans = self.log_trans[path[:-1], path[1:]]
        return float(self.log_init[path[0]] + emis.sum() + trans.sum() + self.log_final[path[-1]])


def viterbi(scores: np.ndarray, graph: HmmGraph, beam: float | None = None):
    """Best state path through ``graph`` for per-frame pdf log scores.

    Parameters
    ----------
    scores : (T, num_pdfs) array
        Emission log scores, e.g. GMM log-likelihoods or scaled hybrid scores.
    graph : HmmGraph
    beam : float, optional
        Prune states scoring more than ``beam`` below the frame's best.

    Returns
    -------
    (path, score) where ``path`` holds one state index per frame. Equal scores
    resolve to the lowest state index.
    """
    scores = np.asarray(scores, dtype=np.float64)
    t_len = scores.shape[0]
    if t_len == 0:
        raise NoPath("no frames to decode")
    emis = scores[:, graph.pdf_ids]
    trans = graph.log_trans
    n = graph.num_states
    cols = np.arange(n)
    backptr = np.empty((t_len, n), dtype=np.int64)
    delta = graph.log_init + emis[0]
    if beam is not None:
        delta = _prune(delta, beam)
    for t in range(1, t_len):
        cand = delta[:, None] + trans
        best = cand.argmax(axis=0)
        backptr[t] = best
        delta = cand[best, cols] + emis[t]
        if beam is not None:
            delta = _prune(delta, beam)
    final = delta + graph.log_final
    last = int(final.argmax())
    score = float(final[last])
    if not np.isfinite(score):
        raise NoPath(f"no legal path of length {t_len}")
    path = np.empty(t_len, dtype=np.int64)
    path[-1] = last
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = backptr[t, path[t]]
    return path, score


def _prune(delta, beam):
    top = delta.max()
    if not np.isfinite(top):
        return delta
    return np.where(delta < top - beam, -np.inf, delta)
