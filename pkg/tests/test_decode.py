import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import all_alignment_costs, brute_force_edit_distance, brute_force_viterbi
from rosasr.decode import (DecodeOptions, build_graph, compute_wer, decode_utterance, read_hypotheses,
                           score_manifest, write_hypotheses)
from rosasr.errors import EmptyReference, MissingHypothesis, UnknownPhone
from rosasr.hmm.topology import AcousticModel, PhoneHmm, make_topology
from rosasr.lexicon import Lexicon
from rosasr.manifest import Manifest, ManifestEntry

# pdfs: sil=0, a=1, b=2, c=3, d=4
LEX = Lexicon({"A": ("a", "b"), "B": ("c", "d")})


def model(p_i=0.5):
    hmms = make_topology(["a", "b", "c", "d"], states_per_phone=1, p_i=p_i)
    return AcousticModel(hmms, 5)


def gauss_loglik(pdf_seq, rng, noise=0.5, sep=3.0):
    means = sep * np.eye(5)
    x = means[pdf_seq] + rng.normal(scale=noise, size=(len(pdf_seq), 5))
    return -0.5 * ((x[:, None, :] - means[None]) ** 2).sum(axis=2)


EXACT = DecodeOptions(acoustic_scale=1.0, beam=np.inf)


# -- graph construction ---------------------------------------------------------


def test_one_word_graph_repeats_that_word():
    lex = Lexicon({"A": ("a", "b")})
    g = build_graph(lex, model(), silence=False)
    assert g.units == ["A"]
    rng = np.random.default_rng(0)
    for _ in range(5):
        words = decode_utterance(rng.normal(size=(12, 5)), g, EXACT).words
        assert words and set(words) == {"A"}


def test_uniform_lm_and_stochastic_rows():
    g = build_graph(LEX, model())
    assert g.lm[0, 0] == g.lm[0, 1] and g.lm_start[0] == g.lm_start[1]
    np.testing.assert_allclose(g.lm.sum(axis=1), 1.0, atol=1e-15)
    out = np.logaddexp.reduce(np.concatenate([g.hmm.log_trans, g.hmm.log_final[:, None]], axis=1), axis=1)
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_bigram_prefers_listed_successor():
    # second word's frames fit A and B equally well
    loglik = np.full((8, 5), -20.0)
    loglik[0:2, 1] = loglik[2:4, 2] = 0.0
    loglik[4:6, [1, 3]] = 0.0
    loglik[6:8, [2, 4]] = 0.0
    ab = build_graph(LEX, model(), word_lm={("A", "B"): 0.9}, silence=False)
    aa = build_graph(LEX, model(), word_lm={("A", "A"): 0.9}, silence=False)
    assert decode_utterance(loglik, ab, EXACT).words == ["A", "B"]
    assert decode_utterance(loglik, aa, EXACT).words == ["A", "A"]
    # hand comparison: the two paths differ only in the A->next LM weight
    assert ab.lm[0, 1] == pytest.approx(0.9) and ab.lm[0, 0] == pytest.approx(0.1 / 2)


def test_unknown_phone():
    with pytest.raises(UnknownPhone):
        build_graph(Lexicon({"Z": ("a", "z")}), model())


# -- decoding -------------------------------------------------------------------


def test_decodes_constructed_utterance():
    rng = np.random.default_rng(1)
    seq = [0, 0, 1, 1, 1, 2, 2, 3, 3, 3, 4, 4, 0, 0]
    res = decode_utterance(gauss_loglik(seq, rng), build_graph(LEX, model()), DecodeOptions(acoustic_scale=1.0))
    assert res.words == ["A", "B"]
    assert res.alignment.pdf_ids.tolist() == seq


def test_alpha_one_is_bit_exact():
    rng = np.random.default_rng(2)
    g = build_graph(LEX, model(0.7))
    ll = rng.normal(size=(20, 5))
    a = decode_utterance(ll, g, DecodeOptions())
    b = decode_utterance(ll, g, DecodeOptions(alpha=1.0))
    assert a.words == b.words and a.score == b.score
    np.testing.assert_array_equal(a.alignment.pdf_ids, b.alignment.pdf_ids)


def test_alpha_orders_median_phone_duration():
    # weak acoustics so the transition model shapes the durations
    g = build_graph(LEX, model(0.7))
    med = {}
    for alpha in (0.5, 1.0, 1.5):
        durs = []
        r = np.random.default_rng(4)
        for _ in range(100):
            seq = np.repeat(r.integers(1, 5, 6), r.integers(1, 4, 6))
            durs += decode_utterance(gauss_loglik(seq, r, noise=1.5, sep=1.0), g,
                                     DecodeOptions(alpha=alpha, acoustic_scale=0.3)).alignment.phone_durations()
        med[alpha] = np.median(durs)
    assert med[0.5] <= med[1.0] <= med[1.5]
    assert med[0.5] < med[1.5]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_infinite_beam_matches_brute_force(seed, t_len):
    rng = np.random.default_rng(seed)
    g = build_graph(LEX, model(rng.uniform(0.2, 0.8)), silence=False)
    ll = rng.normal(size=(t_len, 5)) * 2
    res = decode_utterance(ll, g, DecodeOptions(acoustic_scale=0.5, beam=np.inf))
    path, best = brute_force_viterbi(0.5 * ll, g.hmm)
    assert res.score == pytest.approx(best, abs=1e-9)
    assert res.alignment.pdf_ids.tolist() == [int(g.hmm.pdf_ids[s]) for s in path]


# -- WER ------------------------------------------------------------------------


def test_wer_examples():
    assert compute_wer("a b c".split(), "a b c".split()).wer == 0.0
    r = compute_wer("a b c".split(), "a x c".split())
    assert (r.substitutions, r.deletions, r.insertions) == (1, 0, 0) and f"{r.wer:.2f}" == "33.33"
    r = compute_wer("a b".split(), "a x b y".split())
    assert (r.substitutions, r.insertions) == (0, 2) and r.wer == 100.0
    assert brute_force_edit_distance("a b".split(), "a x b y".split()) == 2
    with pytest.raises(EmptyReference):
        compute_wer([], ["a"])


def test_wer_tie_break_prefers_substitution():
    r = compute_wer(["a"], ["b"])
    assert (r.substitutions, r.deletions, r.insertions) == (1, 0, 0)


words = st.lists(st.sampled_from("pqrs"), max_size=6)


@settings(max_examples=300)
@given(words.filter(bool), words)
def test_wer_matches_exhaustive_alignment(ref, hyp):
    r = compute_wer(ref, hyp)
    costs = all_alignment_costs(ref, hyp)
    assert (r.substitutions, r.deletions, r.insertions) in costs
    assert r.errors == min(sum(c) for c in costs)
    assert r.errors <= max(len(ref), len(hyp))


@given(words.filter(bool), st.permutations("pqrs"))
def test_wer_identity_and_rename_invariance(ref, perm):
    assert compute_wer(ref, ref).errors == 0
    hyp = ref[::-1] + ["p"]
    rename = dict(zip("pqrs", perm))
    a = compute_wer(ref, hyp)
    b = compute_wer([rename[w] for w in ref], [rename[w] for w in hyp])
    assert a.errors == b.errors


# -- scoring --------------------------------------------------------------------


def entry(utt, ros, n=10):
    return ManifestEntry(utt, f"{utt}.wav", tuple(f"w{i}" for i in range(n)), ros)


def test_score_manifest_pools_errors():
    m = Manifest([entry("s", 3.0), entry("f", 12.0)])
    ref = [f"w{i}" for i in range(10)]
    hyps = {"s": ["x"] + ref[1:], "f": ["x", "x", "x"] + ref[3:]}
    t = score_manifest(m, hyps)
    assert t.wer("slow") == 10.0 and t.wer("fast") == 30.0 and t.wer("normal") is None
    assert t.total.wer == 20.0
    rows = t.rows("sys")
    assert [r["wer_percent"] for r in rows] == ["10.00", "absent", "30.00", "20.00"]
    perfect = score_manifest(m, {"s": ref, "f": ref})
    assert perfect.total.wer == 0 and perfect.wer("slow") == perfect.wer("fast") == 0


def test_score_manifest_missing_hyp():
    with pytest.raises(MissingHypothesis, match="f"):
        score_manifest(Manifest([entry("s", 3.0), entry("f", 12.0)]), {"s": ["w0"]})


def test_hypothesis_file_round_trip(tmp_path):
    hyps = {"u2": ["b", "c"], "u1": ["a"], "u3": []}
    write_hypotheses(tmp_path / "h.txt", hyps)
    assert (tmp_path / "h.txt").read_text() == "u1\ta\nu2\tb c\nu3\t\n"
    assert read_hypotheses(tmp_path / "h.txt") == hyps


def test_phone_hmm_scaled_graph_is_cached():
    g = build_graph(LEX, model())
    assert g.with_alpha(0.5) is g.with_alpha(0.5) and g.with_alpha(1.0) is g
    assert isinstance(g.with_alpha(0.5).model["a"], PhoneHmm)
