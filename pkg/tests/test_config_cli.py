import csv
import io

import pytest

from rosasr.cli import main
from rosasr.config import load_config
from rosasr.errors import ConfigError
from rosasr.decode import DecodeOptions, build_graph, decode_with_retry
from rosasr.experiment import Pipeline, SystemSpec
from rosasr.nnet import log_posteriors, log_posteriors_to_loglik

TINY = ["corpus.num_utts=60", "corpus.seed=3", "gmm.num_iters=2", "features.lda_dim=40", "nnet.hidden_units=16",
        "nnet.max_epochs=2", "experiment.seeds=1"]


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def sets(corpus, workdir, extra=()):
    args = []
    for kv in TINY + [f"paths.corpus={corpus}", f"paths.workdir={workdir}"] + list(extra):
        args += ["--set", kv]
    return args


# -- config ---------------------------------------------------------------------


def test_overrides_and_defaults():
    cfg = load_config(overrides=["corpus.kappa=0", "alpha.fast=0.6"])
    assert cfg["corpus.kappa"] == 0.0 and cfg["alpha.fast"] == 0.6
    assert cfg["split.test_threshold"] == 6.0 and cfg["split.train_threshold"] == 6.3
    assert cfg["alpha.slow"] == 1.01162 and cfg["experiment.seeds"] == (1, 2, 3)


def test_config_file_and_errors(tmp_path):
    (tmp_path / "a.ini").write_text("[corpus]\nkappa = 0.1\n")
    assert load_config(tmp_path / "a.ini")["corpus.kappa"] == 0.1
    (tmp_path / "b.ini").write_text("[corpus]\nkapa = 0.1\n")
    with pytest.raises(ConfigError, match="corpus.kapa"):
        load_config(tmp_path / "b.ini")
    with pytest.raises(ConfigError, match="nnet.max_epochs"):
        load_config(overrides=["nnet.max_epochs=many"])
    with pytest.raises(ConfigError):
        load_config(overrides=["experiment.seeds="])


def test_digest_ignores_paths_but_not_numbers():
    a = load_config(overrides=["paths.workdir=/x"])
    assert a.digest() == load_config(overrides=["paths.workdir=/y"]).digest()
    assert a.digest() != load_config(overrides=["corpus.kappa=0.2"]).digest()


# -- CLI ------------------------------------------------------------------------


def test_missing_corpus_path_names_key(tmp_path, capsys):
    code, _ = run("prepare", "--set", f"paths.workdir={tmp_path}")
    assert code == 1 and "paths.corpus" in capsys.readouterr().err
    code, _ = run("prepare", "--set", "paths.corpus=/nonexistent", "--set", f"paths.workdir={tmp_path}")
    assert code != 0 and "paths.corpus" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert run("experiment", "--variant", "Nope")[0] == 1


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    corpus, work = root / "corpus", root / "work"
    code, text = run("gen-corpus", *sets(corpus, work))
    assert code == 0, text
    return corpus, work


def test_prepare_is_idempotent(tiny):
    corpus, work = tiny
    code, text = run("prepare", *sets(corpus, work))
    assert code == 0 and "features: built" in text
    code, text = run("prepare", *sets(corpus, work))
    assert code == 0
    assert all(line.endswith("up-to-date") for line in text.splitlines())
    assert (work / "MANIFEST.txt").exists()


def test_decode_score_and_sweep(tiny, tmp_path):
    corpus, work = tiny
    code, text = run("decode", *sets(corpus, work), "--kind", "base", "--alpha", "1.0")
    assert code == 0, text
    hyp = text.split("wrote ", 1)[1].strip()
    code, table = run("score", *sets(corpus, work), hyp, "--csv", str(tmp_path / "s.csv"))
    assert code == 0 and "Total" in table
    rows = list(csv.DictReader(line for line in open(tmp_path / "s.csv") if not line.startswith("#")))
    assert [r["test_set"] for r in rows] == ["slow", "normal", "fast", "total"]

    code, text = run("experiment", *sets(corpus, work), "--variant", "Baseline")
    assert code == 0, text
    code, text = run("sweep-alpha", *sets(corpus, work), "--grid", "0.5,1.0")
    assert code == 0, text
    p = Pipeline(load_config(overrides=TINY + [f"paths.corpus={corpus}", f"paths.workdir={work}"]))
    res = p.experiment("Baseline")
    sweep = list(csv.DictReader(line for line in open(work / "results" / "sweep_alpha.csv")
                                if not line.startswith("#")))
    grid = [r for r in sweep if r["kind"] == "grid"]
    assert len(grid) == 6 and {r["alpha"] for r in grid} == {"0.5", "1"}
    for r in grid:
        if r["alpha"] == "1" and r["wer_percent"] != "absent":
            assert float(r["wer_percent"]) == pytest.approx(res.median[("Baseline", r["test_set"])], abs=0.005)
    best = [r for r in sweep if r["kind"] == "best"]
    assert best and all(r["alpha"] in {"0.5", "1"} for r in best)


def test_hmm_alpha_normal_rows_match_baseline(tiny):
    corpus, work = tiny
    p = Pipeline(load_config(overrides=TINY + [f"paths.corpus={corpus}", f"paths.workdir={work}"]))
    base, alpha = p.experiment("Baseline"), p.experiment("HmmAlpha")
    assert alpha.median[("HmmAlpha", "normal")] == base.median[("Baseline", "normal")]


def test_crossrate_grid_structure(tiny):
    corpus, work = tiny
    p = Pipeline(load_config(overrides=TINY + [f"paths.corpus={corpus}", f"paths.workdir={work}"]))
    res = p.experiment("CrossRate")
    assert set(res.median) == {(s, t) for s in ("Tr-Half", "Tr-Slow", "Tr-Fast") for t in ("Tst-Slow", "Tst-Fast")}


def test_ros_stats(tiny):
    corpus, work = tiny
    code, text = run("ros-stats", *sets(corpus, work), "--bin-width", "2")
    assert code == 0 and text.startswith("train:")


def test_posterior_cache_matches_uncached_decode(tiny):
    corpus, work = tiny
    p = Pipeline(load_config(overrides=TINY + [f"paths.corpus={corpus}", f"paths.workdir={work}"]))
    spec = SystemSpec("ros", 1)
    cached = p.decode(spec, "map")
    sysm = p.load_system(spec)
    fb = p.feats("test", "fbank")
    graph = build_graph(p.lexicon, sysm.hmm)
    c = p.cfg
    for e in p.manifest("test"):
        lp = log_posteriors(sysm.net, p._nn_input(fb[e.utt_id], e.ros, True, sysm.norm, sysm.lda))
        opts = DecodeOptions(p.alpha_for(e.bin), c["decode.acoustic_scale"], c["decode.beam"])
        assert decode_with_retry(log_posteriors_to_loglik(lp, sysm.priors), graph, opts).words == cached[e.utt_id]
