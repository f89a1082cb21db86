"""Independent reference implementations used by the tests."""

import numpy as np

from rosasr.hmm.viterbi import HmmGraph, safe_log


def brute_force_viterbi(scores, graph: HmmGraph):
    """Score every state sequence at once; return (best path, best score) or (None, -inf).

    Ties go to the lexicographically smallest path.
    """
    t_len, n = len(scores), graph.num_states
    paths = np.indices((n,) * t_len).reshape(t_len, -1).T
    emit = np.asarray(scores)[np.arange(t_len), graph.pdf_ids[paths]]
    total = graph.log_init[paths[:, 0]] + graph.log_final[paths[:, -1]] + emit.sum(axis=1)
    if t_len > 1:
        total = total + graph.log_trans[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    best = int(np.argmax(total))
    if total[best] == -np.inf:
        return None, -np.inf
    return paths[best].tolist(), float(total[best])


def random_graph(rng, num_states: int, num_pdfs: int, sparsity: float = 0.3) -> HmmGraph:
    """Random graph with some forbidden transitions and at least one legal start and end."""
    trans = rng.random((num_states, num_states)) * (rng.random((num_states, num_states)) > sparsity)
    init = rng.random(num_states) * (rng.random(num_states) > sparsity)
    final = rng.random(num_states) * (rng.random(num_states) > sparsity)
    init[rng.integers(num_states)] += 0.5
    final[rng.integers(num_states)] += 0.5
    dead = trans.sum(axis=1) + final == 0
    final[dead] = 1.0
    norm = trans.sum(axis=1) + final
    trans, final = trans / norm[:, None], final / norm
    pdfs = rng.integers(0, num_pdfs, num_states)
    return HmmGraph(pdfs, safe_log(trans), safe_log(init / init.sum()), safe_log(final))


def all_alignment_costs(ref, hyp):
    """Every (S, D, I) triple reachable by some alignment of ref against hyp (exhaustive recursion)."""
    out = set()

    def rec(i, j, s, d, n):
        if i == len(ref) and j == len(hyp):
            out.add((s, d, n))
            return
        if i < len(ref) and j < len(hyp):
            rec(i + 1, j + 1, s + (ref[i] != hyp[j]), d, n)
        if i < len(ref):
            rec(i + 1, j, s, d + 1, n)
        if j < len(hyp):
            rec(i, j + 1, s, d, n + 1)

    rec(0, 0, 0, 0, 0)
    return out


def brute_force_edit_distance(ref, hyp) -> int:
    """Minimal S+D+I over every alignment."""
    return min(s + d + n for s, d, n in all_alignment_costs(ref, hyp))
