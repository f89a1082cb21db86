"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line (visible in ``pytest -v`` output) before asserting. Criteria 6 to 9 share
session-scoped pipelines built from scratch in a temporary directory, so the
first of them to run pays for corpus synthesis, GMM training and alignment.
"""

import csv
import math
import os
import time

import numpy as np
import pytest

from oracles import brute_force_edit_distance, brute_force_viterbi, random_graph
from rosasr.cli import main
from rosasr.config import load_config
from rosasr.decode import compute_wer
from rosasr.errors import NoPath
from rosasr.experiment import Pipeline, generate_corpus_from_config
from rosasr.hmm.topology import (DurationModel, PhoneHmm, duration_cdf, duration_pmf, expected_duration,
                                 scale_self_transitions)
from rosasr.hmm.viterbi import viterbi
from rosasr.nnet import Mlp, MlpArch, gradient_check

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


def build(root, name, overrides):
    cfg = load_config(overrides=[f"paths.corpus={root / name / 'corpus'}", f"paths.workdir={root / name / 'work'}"]
                      + list(overrides))
    generate_corpus_from_config(cfg)
    p = Pipeline(cfg)
    p.prepare()
    return p


@pytest.fixture(scope="session")
def rate_coupled(tmp_path_factory):
    """Default corpus (kappa 0.05, 2700 utterances, seeds 1 2 3)."""
    return build(tmp_path_factory.mktemp("acceptance"), "coupled", [])


@pytest.fixture(scope="session")
def duration_only(tmp_path_factory):
    return build(tmp_path_factory.mktemp("acceptance"), "kappa0", ["corpus.kappa=0"])


# -- 1-5: component properties --------------------------------------------------


def test_criterion_1_duration_calculus(report):
    t0 = time.perf_counter()
    n_max = 10 ** 5
    n = np.arange(1, n_max + 1)
    worst_mean, worst_mass = 0.0, 0.0
    for k in range(1, 10):
        d = DurationModel(k / 10)
        pmf = duration_pmf(d, n)
        worst_mean = max(worst_mean, abs(math.fsum(n * pmf) - expected_duration(d)))
        worst_mass = max(worst_mass, abs(math.fsum(pmf) - duration_cdf(d, n_max)))
    elapsed = time.perf_counter() - t0
    # "exactly" up to one rounding step of the closed form
    ok = worst_mean < 1e-6 and worst_mass <= 2 ** -52 and elapsed < 1.0
    report(1, ok, f"max |mean - 1/p_o| = {worst_mean:.2e}, max |mass - (1 - p_i^N)| = {worst_mass:.2e}, "
                  f"{elapsed:.2f} s")


def test_criterion_2_transition_scaling(report):
    hmms = [PhoneHmm("x", ps, tuple(1 - p for p in ps), range(len(ps)))
            for ps in [(0.5,), (0.1, 0.6, 0.95), (0.8, 0.8, 0.8), (0.999, 0.001)]]
    worst = 0.0
    monotone = True
    for h in hmms:
        for a in (0.25, 0.5, 1.01162, 2.0):
            back = scale_self_transitions(scale_self_transitions(h, a), 1 / a)
            worst = max(worst, float(np.max(np.abs(np.subtract(back.self_probs, h.self_probs)))),
                        float(np.max(np.abs(np.subtract(back.leave_probs, h.leave_probs)))))
        durs = [scale_self_transitions(h, a).expected_duration() for a in (0.25, 0.5, 1.0, 1.01162, 2.0)]
        monotone &= bool(np.all(np.diff(durs) > 0))
    report(2, worst <= 1e-12 and monotone, f"max round-trip error {worst:.2e}, strictly monotone={monotone}")


def test_criterion_3_viterbi_oracle(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        n_states, t_len = int(rng.integers(1, 5)), int(rng.integers(1, 9))
        g = random_graph(rng, n_states, 3)
        scores = rng.normal(size=(t_len, 3)) * 2
        want_path, want = brute_force_viterbi(scores, g)
        try:
            path, got = viterbi(scores, g)
        except NoPath:
            path, got = None, -np.inf
        same = (path is None and want_path is None) or (
            path is not None and list(path) == want_path and abs(got - want) <= 1e-9)
        mismatches += not same
    elapsed = time.perf_counter() - t0
    report(3, mismatches == 0 and elapsed < 10, f"{mismatches}/200 mismatches, {elapsed:.2f} s")


def test_criterion_4_gradient_check(report):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    m = Mlp.init(MlpArch(200, 128, 2, 8), 0, np.float64)
    err = gradient_check(m, rng.normal(size=(16, 200)), rng.integers(0, 8, 16), 1e-5)
    elapsed = time.perf_counter() - t0
    report(4, err < 1e-4 and elapsed < 30, f"max relative error {err:.2e} on 200-128-128-8, {elapsed:.2f} s")


def test_criterion_5_wer_oracle(report):
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(500):
        ref = list(rng.integers(0, 4, rng.integers(1, 7)))
        hyp = list(rng.integers(0, 4, rng.integers(0, 7)))
        bad += compute_wer(ref, hyp).errors != brute_force_edit_distance(ref, hyp)
    report(5, bad == 0, f"{bad}/500 pairs disagree with exhaustive search")


# -- 6-9: experiments on synthetic corpora ----------------------------------------


def test_criterion_6_em_monotone(report, rate_coupled):
    with open(rate_coupled.path("gmm", "loglik.csv")) as fh:
        hist = [float(r["total_loglik"]) for r in csv.DictReader(fh)]
    drops = np.diff(hist)
    ok = len(hist) - 1 >= 10 and bool(np.all(drops >= -1e-8))
    report(6, ok, f"{len(hist) - 1} iterations, smallest step {drops.min():.3g}")


def test_criterion_7_dnn_ros(report, rate_coupled):
    p = rate_coupled
    t0 = time.perf_counter()
    n_train, n_test = len(p.manifest("train")), len(p.manifest("test"))
    base = p.experiment("Baseline").median
    ros = p.experiment("DnnRos").median
    elapsed = time.perf_counter() - t0
    w = {b: (base[("Baseline", b)], ros[("DnnRos", b)]) for b in ("slow", "normal", "fast")}
    ok = (n_train >= 2000 and n_test >= 500 and w["slow"][1] <= w["slow"][0] and w["fast"][1] <= w["fast"][0]
          and abs(w["normal"][1] - w["normal"][0]) <= 1.0)
    detail = ", ".join(f"{b} {x:.2f} -> {y:.2f}" for b, (x, y) in w.items())
    report(7, ok, f"Baseline -> DnnRos median WER: {detail} ({n_train} train / {n_test} test, "
                  f"{elapsed / 60:.1f} min)")


def test_criterion_8_hmm_alpha(report, duration_only):
    p = duration_only
    base = p.experiment("Baseline").median[("Baseline", "fast")]
    alpha = p.experiment("HmmAlpha").median[("HmmAlpha", "fast")]
    report(8, alpha <= base, f"kappa=0 Fast bin median WER: Baseline {base:.2f}, HmmAlpha {alpha:.2f}")


def test_criterion_9_cross_rate(report, rate_coupled):
    w = rate_coupled.experiment("CrossRate").median
    mismatch, matched = w[("Tr-Slow", "Tst-Fast")], w[("Tr-Fast", "Tst-Fast")]
    between = True
    for t in ("Tst-Slow", "Tst-Fast"):
        lo, hi = sorted((w[("Tr-Slow", t)], w[("Tr-Fast", t)]))
        between &= lo <= w[("Tr-Half", t)] <= hi
    ok = mismatch > matched and between
    grid = "; ".join(f"{s}: " + "/".join(f"{w[(s, t)]:.2f}" for t in ("Tst-Slow", "Tst-Fast"))
                     for s in ("Tr-Half", "Tr-Slow", "Tr-Fast"))
    report(9, ok, f"WER Tst-Slow/Tst-Fast {grid}")


# -- 10: determinism ---------------------------------------------------------------


def test_criterion_10_determinism(report, tmp_path):
    sets = ["corpus.num_utts=200", "corpus.seed=11", "experiment.seeds=5", "nnet.max_epochs=3", "nnet.hidden_units=32"]
    runs = []
    for name in ("run1", "run2"):
        common = []
        for kv in sets + [f"paths.corpus={tmp_path / name / 'corpus'}", f"paths.workdir={tmp_path / name / 'work'}"]:
            common += ["--set", kv]
        with open(os.devnull, "w") as sink:
            assert main(["gen-corpus"] + common, sink) == 0
            assert main(["experiment", "--variant", "Baseline", "--variant", "HmmAlpha"] + common, sink) == 0
        work = tmp_path / name / "work"
        runs.append({str(f.relative_to(work)): f.read_bytes() for f in work.rglob("*") if f.suffix in (".hyp", ".csv")})
    same = runs[0].keys() == runs[1].keys() and all(runs[0][k] == runs[1][k] for k in runs[0])
    n_hyp = sum(k.endswith(".hyp") for k in runs[0])
    n_csv = sum(k.endswith(".csv") for k in runs[0])
    report(10, same and n_hyp > 0 and n_csv > 0, f"{n_hyp} hypothesis and {n_csv} CSV files byte-identical={same}")
