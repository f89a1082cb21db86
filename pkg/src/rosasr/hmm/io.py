"""Text serialization of acoustic models and alignments.

Model file layout::

    AMODEL v1
    silence <symbol>
    num_pdfs <K>
    phones <N>
    phone <name> <num_states>
    state <k> <pdf-id> <p_i> <p_o>      (one line per state)
    ...
    gmm <K> <M> <D>                     (or "gmm none")
    pdf <k>
    comp <m> <weight>
    mean <D values>
    var <D values>

Floats are written with ``repr`` so a write/read round trip is exact.
"""

from __future__ import annotations

import numpy as np

from ..errors import FormatError
from .gmm import GmmEmission
from .topology import AcousticModel, Alignment, PhoneHmm

MAGIC = "AMODEL v1"


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def write_model(path, model: AcousticModel):
    lines = [MAGIC, f"silence {model.silence}", f"num_pdfs {model.num_pdfs}", f"phones {len(model.hmms)}"]
    for p, h in model.hmms.items():
        lines.append(f"phone {p} {h.num_states}")
        for k in range(h.num_states):
            lines.append(f"state {k} {h.pdf_ids[k]} {repr(h.self_probs[k])} {repr(h.leave_probs[k])}")
    g = model.gmm
    if g is None:
        lines.append("gmm none")
    else:
        lines.append(f"gmm {g.num_pdfs} {g.num_components} {g.dim}")
        for k in range(g.num_pdfs):
            lines.append(f"pdf {k}")
            for m in range(g.num_components):
                lines.append(f"comp {m} {repr(float(g.weights[k, m]))}")
                lines.append("mean " + _fmt(g.means[k, m]))
                lines.append("var " + _fmt(g.variances[k, m]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class _Lines:
    def __init__(self, path):
        self.path = path
        with open(path, encoding="utf-8") as fh:
            self.lines = fh.read().splitlines()
        self.i = 0

    def next(self, key=None) -> list[str]:
        if self.i >= len(self.lines):
            raise FormatError(f"{self.path}: unexpected end of file")
        toks = self.lines[self.i].split()
        self.i += 1
        if key is not None and (not toks or toks[0] != key):
            raise FormatError(f"{self.path}:{self.i}: expected '{key}', got {self.lines[self.i - 1]!r}")
        return toks


def read_model(path) -> AcousticModel:
    r = _Lines(path)
    if r.lines[:1] != [MAGIC]:
        raise FormatError(f"{path}: missing '{MAGIC}' header")
    r.i = 1
    try:
        silence = r.next("silence")[1]
        num_pdfs = int(r.next("num_pdfs")[1])
        n_phones = int(r.next("phones")[1])
        hmms = {}
        for _ in range(n_phones):
            _, name, n_states = r.next("phone")
            selfp, leave, pdfs = [], [], []
            for _ in range(int(n_states)):
                _, _, pdf, pi, po = r.next("state")
                pdfs.append(int(pdf))
                selfp.append(float(pi))
                leave.append(float(po))
            hmms[name] = PhoneHmm(name, selfp, leave, pdfs)
        toks = r.next("gmm")
        gmm = None
        if toks[1] != "none":
            k, m, d = (int(t) for t in toks[1:4])
            w = np.zeros((k, m))
            mu = np.zeros((k, m, d))
            var = np.zeros((k, m, d))
            for i in range(k):
                r.next("pdf")
                for j in range(m):
                    w[i, j] = float(r.next("comp")[2])
                    mu[i, j] = [float(v) for v in r.next("mean")[1:]]
                    var[i, j] = [float(v) for v in r.next("var")[1:]]
            gmm = GmmEmission(w, mu, var)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}:{r.i}: {exc}") from exc
    return AcousticModel(hmms, num_pdfs, silence, gmm)


def write_alignments(path, alignments):
    """One utterance per line: id, frame shift, segments, states, pdf-ids, words (tab separated)."""
    with open(path, "w", encoding="utf-8") as fh:
        for a in alignments:
            segs = " ".join(f"{p}:{s}:{e}" for p, s, e in a.segments)
            fh.write("\t".join([a.utt_id, repr(a.frame_shift_s), segs,
                                " ".join(map(str, a.states.tolist())),
                                " ".join(map(str, a.pdf_ids.tolist())),
                                " ".join(a.words)]) + "\n")


def read_alignments(path) -> list[Alignment]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 tab-separated fields")
            utt, shift, segs, states, pdfs, words = parts
            segments = []
            for tok in segs.split():
                p, s, e = tok.rsplit(":", 2)
                segments.append((p, int(s), int(e)))
            out.append(Alignment(utt, float(shift), segments,
                                 np.array(states.split(), dtype=np.int64),
                                 np.array(pdfs.split(), dtype=np.int64), words.split()))
    return out
