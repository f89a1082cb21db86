"""Pipeline stages over a working directory and the experiment matrix.

Layout under ``paths.workdir``::

    feats/<split>.{mfcc,fbank}.ark   CMN-normalized features
    gmm/final.mdl                    monophone GMM-HMM
    ali/<split>.ali                  forced alignments
    data/<split>.manifest            manifests with ROS and rate bin
    nnet/<system>/                   LDA, network, priors, HMM transitions, posterior cache
    decode/<variant>/*.hyp           hypotheses
    results/*.csv, *.txt             score tables
    MANIFEST.txt                     sha256 and size of every artifact

Each stage records a key (a digest of its inputs and settings) and is skipped
when the key and its outputs are unchanged.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import os
import statistics
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .decode import DecodeOptions, build_graph, decode_with_retry, format_table, score_manifest, write_hypotheses
from .errors import ConfigError, DataError, NoPath, NoSpeech, NumericalError, RosAsrError, UtteranceTooShort
from .features import (FeatureKind, FeatureMatrix, FrameConfig, LdaAccumulator, RosNorm, apply_cmn, augment_ros,
                       compute_fbank, compute_mfcc, read_feature_archive, splice, write_feature_archive)
from .hmm.io import read_alignments, read_model, write_alignments, write_model
from .hmm.train import GmmTrainConfig, align_utterances, train_gmm_hmm, transitions_from_alignments
from .lexicon import Lexicon
from .manifest import Manifest
from .nnet import (Mlp, MlpArch, TrainConfig, estimate_priors, log_posteriors, log_posteriors_to_loglik, read_mlp,
                   train, write_mlp)
from .ros import RateBin, RateBins, bin_of, compute_ros, histogram, partition_manifest, sample_half
from .wavio import read_wav

logger = logging.getLogger(__name__)

SPLITS = ("train", "cv", "test")
VARIANTS = ("Baseline", "DnnRos", "HmmAlpha", "Combined", "CrossRate")
SYSTEM_KINDS = {
    # kind: (uses ROS input, training subset)
    "base": (False, "all"),
    "ros": (True, "all"),
    "half": (False, "half"),
    "slow": (False, "slow"),
    "fast": (False, "fast"),
}
CROSS_TRAIN = (("Tr-Half", "half"), ("Tr-Slow", "slow"), ("Tr-Fast", "fast"))


def _sha(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p if isinstance(p, bytes) else str(p).encode())
        h.update(b"\0")
    return h.hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_workdir_manifest(root):
    """MANIFEST.txt: ``sha256  size  relative/path`` for every file, sorted by path."""
    lines = []
    for d, _, files in os.walk(root):
        for f in files:
            full = os.path.join(d, f)
            rel = os.path.relpath(full, root).replace(os.sep, "/")
            if rel == "MANIFEST.txt":
                continue
            lines.append((rel, f"{file_digest(full)}  {os.path.getsize(full)}  {rel}"))
    with open(os.path.join(root, "MANIFEST.txt"), "w", encoding="utf-8", newline="\n") as fh:
        for _, line in sorted(lines):
            fh.write(line + "\n")


@dataclass(frozen=True)
class SystemSpec:
    kind: str
    seed: int

    @property
    def name(self) -> str:
        return f"{self.kind}-s{self.seed}"

    @property
    def use_ros(self) -> bool:
        return SYSTEM_KINDS[self.kind][0]

    @property
    def subset(self) -> str:
        return SYSTEM_KINDS[self.kind][1]


@dataclass
class HybridSystem:
    spec: SystemSpec
    net: Mlp
    lda: np.ndarray
    priors: np.ndarray
    norm: RosNorm
    hmm: object


@dataclass
class ResultRow:
    variant: str
    system: str
    seed: str
    test_set: str
    ros_range: str
    wer: float | None
    errors: int | None = None
    words: int | None = None


@dataclass
class ExperimentResult:
    variant: str
    rows: list
    median: dict  # (system, test_set) -> WER or None
    csv_path: str
    hyp_paths: list = field(default_factory=list)


class Pipeline:
    """Runs (or skips, when up to date) each stage for one configuration."""

    def __init__(self, cfg: Config, jobs: int = 1):
        self.cfg = cfg
        self.jobs = max(1, int(jobs))
        root = cfg["paths.workdir"]
        if not root:
            raise ConfigError("paths.workdir: not set")
        self.root = os.path.abspath(root)
        os.makedirs(self.root, exist_ok=True)
        self.status: dict = {}
        self._keys: dict = {}
        self._cache: dict = {}

    # -- helpers ------------------------------------------------------------

    def path(self, *parts) -> str:
        p = os.path.join(self.root, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    @property
    def frame_config(self) -> FrameConfig:
        return FrameConfig(num_mel_filters=self.cfg["features.num_mel_filters"])

    @property
    def bins(self) -> RateBins:
        return RateBins(self.cfg["bins.slow_max"], self.cfg["bins.fast_min"])

    def _stage(self, name: str, key: str, outputs, build) -> str:
        stamp = self.path(".stamps", name.replace("/", "__"))
        paths = [self.path(o) for o in outputs]
        if os.path.exists(stamp) and all(os.path.exists(p) for p in paths):
            with open(stamp, encoding="utf-8") as fh:
                if fh.read().strip() == key:
                    logger.info("%s: up-to-date", name)
                    self.status[name] = "up-to-date"
                    return key
        logger.info("%s: running", name)
        try:
            build()
        except RosAsrError as exc:
            exc.stage = getattr(exc, "stage", name)
            raise
        with open(stamp, "w", encoding="utf-8") as fh:
            fh.write(key + "\n")
        self.status[name] = "built"
        return key

    # -- corpus -------------------------------------------------------------

    @property
    def corpus_dir(self) -> str:
        d = self.cfg["paths.corpus"]
        if not d:
            raise ConfigError("paths.corpus: not set")
        if not os.path.isdir(d):
            raise ConfigError(f"paths.corpus: directory {d!r} does not exist")
        return os.path.abspath(d)

    def corpus_manifests(self) -> dict:
        out = {}
        for s in SPLITS:
            p = os.path.join(self.corpus_dir, f"{s}.manifest")
            if not os.path.exists(p):
                raise DataError(f"corpus is missing {s}.manifest (paths.corpus = {self.corpus_dir})")
            out[s] = Manifest.read(p)
        return out

    @property
    def lexicon(self) -> Lexicon:
        if "lexicon" not in self._cache:
            p = os.path.join(self.corpus_dir, "lexicon.txt")
            if not os.path.exists(p):
                raise DataError(f"corpus is missing lexicon.txt (paths.corpus = {self.corpus_dir})")
            self._cache["lexicon"] = Lexicon.read(p)
        return self._cache["lexicon"]

    def corpus_key(self) -> str:
        if "corpus" not in self._keys:
            parts = []
            for s in SPLITS:
                p = os.path.join(self.corpus_dir, f"{s}.manifest")
                parts.append(file_digest(p))
                for e in Manifest.read(p):
                    parts.append(file_digest(self._wav(e.wav_path)))
            parts.append(file_digest(os.path.join(self.corpus_dir, "lexicon.txt")))
            self._keys["corpus"] = _sha(*parts)
        return self._keys["corpus"]

    def _wav(self, p):
        return p if os.path.isabs(p) else os.path.join(self.corpus_dir, p)

    # -- stage: features ----------------------------------------------------

    def features(self) -> str:
        fc = self.frame_config
        key = _sha("features", self.corpus_key(), repr(fc))
        outputs = [f"feats/{s}.{k}.ark" for s in SPLITS for k in ("mfcc", "fbank")]

        def build():
            for split, m in self.corpus_manifests().items():
                mfcc, fbank = [], []
                for e in m:
                    samples, rate = read_wav(self._wav(e.wav_path))
                    if rate != fc.sample_rate_hz:
                        raise DataError(f"{e.wav_path}: sample rate {rate} Hz, expected {fc.sample_rate_hz} Hz")
                    mfcc.append((e.utt_id, apply_cmn(compute_mfcc(samples, fc))))
                    fbank.append((e.utt_id, apply_cmn(compute_fbank(samples, fc))))
                write_feature_archive(self.path("feats", f"{split}.mfcc.ark"), mfcc)
                write_feature_archive(self.path("feats", f"{split}.fbank.ark"), fbank)

        self._keys["features"] = self._stage("features", key, outputs, build)
        return self._keys["features"]

    def feats(self, split: str, kind: str) -> dict:
        ck = ("feats", split, kind)
        if ck not in self._cache:
            self._cache[ck] = read_feature_archive(self.path("feats", f"{split}.{kind}.ark"))
        return self._cache[ck]

    # -- stage: GMM-HMM -----------------------------------------------------

    def gmm_config(self) -> GmmTrainConfig:
        c = self.cfg
        return GmmTrainConfig(num_iters=c["gmm.num_iters"], max_components=c["gmm.max_components"],
                              split_iters=c["gmm.split_iters"], trans_floor=c["gmm.trans_floor"])

    def train_gmm(self) -> str:
        fkey = self.features()
        gc = self.gmm_config()
        key = _sha("gmm", fkey, repr(gc))

        def build():
            m = self.corpus_manifests()["train"]
            feats = self.feats("train", "mfcc")
            res = train_gmm_hmm([(e.utt_id, feats[e.utt_id], e.words) for e in m], self.lexicon, gc)
            write_model(self.path("gmm", "final.mdl"), res.model)
            with open(self.path("gmm", "loglik.csv"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write("iteration,total_loglik\n")
                for i, v in enumerate(res.loglik_history):
                    fh.write(f"{i},{v!r}\n")

        self._keys["gmm"] = self._stage("train-gmm", key, ["gmm/final.mdl", "gmm/loglik.csv"], build)
        self._cache.pop("gmm_model", None)
        return self._keys["gmm"]

    @property
    def gmm_model(self):
        if "gmm_model" not in self._cache:
            self._cache["gmm_model"] = read_model(self.path("gmm", "final.mdl"))
        return self._cache["gmm_model"]

    # -- stage: alignment and ROS -------------------------------------------

    def align(self) -> str:
        gkey = self.train_gmm()
        key = _sha("align", gkey, self.cfg["ros.max_pause_s"], repr(self.bins))
        outputs = [f"ali/{s}.ali" for s in SPLITS] + [f"data/{s}.manifest" for s in SPLITS] + ["data/skipped.txt"]

        def build():
            skipped = []
            for split, m in self.corpus_manifests().items():
                feats = self.feats(split, "mfcc")
                alis, failures = align_utterances(self.gmm_model, [(e.utt_id, feats[e.utt_id], e.words) for e in m],
                                                  self.lexicon)
                by_id = {a.utt_id: a for a in alis}
                entries, kept = [], []
                for e in m:
                    if e.utt_id in failures:
                        skipped.append((split, e.utt_id, str(failures[e.utt_id])))
                        continue
                    try:
                        r = compute_ros(by_id[e.utt_id], self.lexicon.silence, self.cfg["ros.max_pause_s"])
                    except NoSpeech as exc:
                        skipped.append((split, e.utt_id, str(exc)))
                        continue
                    ros = r.phones_per_second
                    entries.append(e.with_ros(ros, bin_of(ros, self.bins).value))
                    kept.append(by_id[e.utt_id])
                write_alignments(self.path("ali", f"{split}.ali"), kept)
                Manifest(entries).write(self.path("data", f"{split}.manifest"))
            with open(self.path("data", "skipped.txt"), "w", encoding="utf-8", newline="\n") as fh:
                for row in skipped:
                    fh.write("\t".join(row) + "\n")
            if skipped:
                logger.warning("%d utterances could not be aligned; see data/skipped.txt", len(skipped))

        self._keys["align"] = self._stage("align", key, outputs, build)
        for s in SPLITS:
            self._cache.pop(("manifest", s), None)
            self._cache.pop(("ali", s), None)
        return self._keys["align"]

    def prepare(self) -> dict:
        self.align()
        if "built" in self.status.values() or not os.path.exists(self.path("MANIFEST.txt")):
            write_workdir_manifest(self.root)
        return dict(self.status)

    def manifest(self, split: str) -> Manifest:
        if ("manifest", split) not in self._cache:
            self._cache[("manifest", split)] = Manifest.read(self.path("data", f"{split}.manifest"))
        return self._cache[("manifest", split)]

    def alignments(self, split: str) -> dict:
        if ("ali", split) not in self._cache:
            self._cache[("ali", split)] = {a.utt_id: a for a in read_alignments(self.path("ali", f"{split}.ali"))}
        return self._cache[("ali", split)]

    def subset(self, m: Manifest, subset: str) -> Manifest:
        thr = self.cfg["split.train_threshold"]
        if subset == "all":
            return m
        if subset == "half":
            return sample_half(m, self.cfg["split.half_seed"])
        lo, hi = partition_manifest(m, thr)
        return lo if subset == "slow" else hi

    # -- stage: hybrid systems ----------------------------------------------

    def _nn_input(self, fb: FeatureMatrix, ros: float, use_ros: bool, norm: RosNorm, lda: np.ndarray):
        k = self.cfg["features.splice"]
        through = self.cfg["features.ros_in_lda"]
        f = augment_ros(fb, ros, norm) if use_ros and through else fb
        y = splice(f, k, k).data @ lda.T
        if use_ros and not through:
            y = np.hstack([y, np.full((len(y), 1), norm(ros))])
        return y.astype(np.float32)

    def _stack(self, m: Manifest, split: str, use_ros, norm, lda, labels: bool = True):
        fb = self.feats(split, "fbank")
        alis = self.alignments(split)
        xs = [self._nn_input(fb[e.utt_id], e.ros, use_ros, norm, lda) for e in m]
        x = np.concatenate(xs) if xs else np.zeros((0, lda.shape[0]), np.float32)
        if not labels:
            return x
        y = np.concatenate([alis[e.utt_id].pdf_ids for e in m]) if xs else np.zeros(0, np.int64)
        return x, y

    def train_config(self, seed: int) -> TrainConfig:
        n = self.cfg.section("nnet")
        return TrainConfig(minibatch=n["minibatch"], learning_rate=n["learning_rate"], max_epochs=n["max_epochs"],
                           halving_threshold=n["halving_threshold"], max_stalls=n["max_stalls"], seed=seed,
                           dtype=n["dtype"])

    def system_key(self, spec: SystemSpec) -> str:
        akey = self.align()
        return _sha("system", akey, spec, repr(self.cfg.section("features")), self.cfg["ros.norm"],
                    repr(self.cfg.section("nnet")), repr(self.cfg.section("split")), self.cfg["gmm.trans_floor"])

    def train_system(self, spec: SystemSpec) -> str:
        key = self.system_key(spec)
        d = f"nnet/{spec.name}"
        outputs = [f"{d}/{f}" for f in ("final.nnet", "lda.txt", "priors.txt", "rosnorm.txt", "hmm.mdl",
                                        "train_log.csv")]

        def build():
            train_m = self.subset(self.manifest("train"), spec.subset)
            cv_m = self.subset(self.manifest("cv"), spec.subset)
            if len(train_m) == 0:
                raise DataError(f"{spec.name}: empty training subset")
            if spec.use_ros and self.cfg["ros.norm"] == "zscore":
                norm = RosNorm.fit([e.ros for e in train_m])
            else:
                norm = RosNorm.identity()
            alis = self.alignments("train")
            fb = self.feats("train", "fbank")
            k = self.cfg["features.splice"]
            through = spec.use_ros and self.cfg["features.ros_in_lda"]
            acc = None
            for e in train_m:
                f = augment_ros(fb[e.utt_id], e.ros, norm) if through else fb[e.utt_id]
                s = splice(f, k, k).data
                if acc is None:
                    acc = LdaAccumulator(s.shape[1])
                acc.add(s, alis[e.utt_id].pdf_ids)
            lda = acc.estimate(self.cfg["features.lda_dim"]).matrix
            tx, ty = self._stack(train_m, "train", spec.use_ros, norm, lda)
            cx, cy = self._stack(cv_m, "cv", spec.use_ros, norm, lda)
            n = self.cfg.section("nnet")
            model = self.gmm_model
            arch = MlpArch(tx.shape[1], model.num_pdfs, n["hidden_layers"], n["hidden_units"], n["nonlinearity"])
            res = train(Mlp.init(arch, spec.seed), tx, ty, cx, cy, self.train_config(spec.seed))
            priors = estimate_priors([alis[e.utt_id] for e in train_m], model.num_pdfs)
            hmm = model
            if spec.subset != "all":
                hmm = transitions_from_alignments(model, [alis[e.utt_id] for e in train_m], self.cfg["gmm.trans_floor"])
            write_mlp(self.path(d, "final.nnet"), res.model)
            np.savetxt(self.path(d, "lda.txt"), lda, fmt="%.17g")
            np.savetxt(self.path(d, "priors.txt"), priors, fmt="%.17g")
            with open(self.path(d, "rosnorm.txt"), "w", encoding="utf-8") as fh:
                fh.write(f"{norm.kind} {norm.mean!r} {norm.std!r}\n")
            write_model(self.path(d, "hmm.mdl"), type(hmm)(hmm.hmms, hmm.num_pdfs, hmm.silence, None))
            res.write_csv(self.path(d, "train_log.csv"))

        self._stage(f"train-dnn/{spec.name}", key, outputs, build)
        self._cache.pop(("system", spec), None)
        return key

    def load_system(self, spec: SystemSpec) -> HybridSystem:
        ck = ("system", spec)
        if ck not in self._cache:
            d = self.path("nnet", spec.name)
            with open(os.path.join(d, "rosnorm.txt"), encoding="utf-8") as fh:
                kind, mean, std = fh.read().split()
            lda = np.loadtxt(os.path.join(d, "lda.txt"), ndmin=2)
            self._cache[ck] = HybridSystem(spec, read_mlp(os.path.join(d, "final.nnet")), lda,
                                           np.loadtxt(os.path.join(d, "priors.txt"), ndmin=1),
                                           RosNorm(kind, float(mean), float(std)),
                                           read_model(os.path.join(d, "hmm.mdl")))
        return self._cache[ck]

    # -- decoding -----------------------------------------------------------

    def posteriors(self, spec: SystemSpec) -> dict:
        """Test-set log posteriors, computed once per system and cached on disk."""
        key = self.train_system(spec)
        rel = f"nnet/{spec.name}/test.logpost.ark"

        def build():
            sysm = self.load_system(spec)
            fb = self.feats("test", "fbank")
            items = []
            for e in self.manifest("test"):
                x = self._nn_input(fb[e.utt_id], e.ros, spec.use_ros, sysm.norm, sysm.lda)
                lp = log_posteriors(sysm.net, x)
                items.append((e.utt_id, FeatureMatrix(np.asarray(lp, dtype=np.float64), 0.01, FeatureKind.LDA)))
            write_feature_archive(self.path(rel), items)

        self._stage(f"posteriors/{spec.name}", _sha("post", key), [rel], build)
        ck = ("post", spec)
        if ck not in self._cache:
            self._cache[ck] = read_feature_archive(self.path(rel))
        return self._cache[ck]

    def alpha_for(self, bin_tag: str | None) -> float:
        return self.cfg[f"alpha.{bin_tag}"] if bin_tag else 1.0

    def decode(self, spec: SystemSpec, alpha="none", manifest: Manifest | None = None) -> dict:
        """Hypotheses for the test set.

        ``alpha`` is ``"none"`` (all 1), ``"map"`` (per rate bin from the config)
        or a number applied to every utterance.
        """
        post = self.posteriors(spec)
        sysm = self.load_system(spec)
        gk = ("graph", spec)
        if gk not in self._cache:
            self._cache[gk] = build_graph(self.lexicon, sysm.hmm)
        graph = self._cache[gk]
        c = self.cfg
        m = self.manifest("test") if manifest is None else manifest
        hyps = {}
        for e in m:
            if alpha == "map":
                a = self.alpha_for(e.bin)
            elif alpha == "none":
                a = 1.0
            else:
                a = float(alpha)
            loglik = log_posteriors_to_loglik(post[e.utt_id].data, sysm.priors)
            opts = DecodeOptions(a, c["decode.acoustic_scale"], c["decode.beam"], c["alpha.include_silence"])
            try:
                hyps[e.utt_id] = decode_with_retry(loglik, graph, opts, e.utt_id).words
            except NoPath as exc:
                raise NumericalError(f"{e.utt_id}: no surviving path even without a beam") from exc
        return hyps

    # -- experiments --------------------------------------------------------

    def experiment(self, variant: str) -> ExperimentResult:
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
        self.prepare()
        seeds = self.cfg["experiment.seeds"]
        test = self.manifest("test")
        rows, hyp_paths = [], []
        ranges = self.bins.ranges()
        if variant == "CrossRate":
            thr = self.cfg["split.test_threshold"]
            tst = dict(zip(("Tst-Slow", "Tst-Fast"), partition_manifest(test, thr)))
            tst_range = {"Tst-Slow": f"<{thr:g}", "Tst-Fast": f">={thr:g}"}
            for seed in seeds:
                for label, kind in CROSS_TRAIN:
                    hyps = self.decode(SystemSpec(kind, seed))
                    hp = self.path("decode", variant, f"{label}-s{seed}.hyp")
                    write_hypotheses(hp, hyps)
                    hyp_paths.append(hp)
                    for tname, tm in tst.items():
                        if len(tm) == 0:
                            rows.append(ResultRow(variant, label, str(seed), tname, tst_range[tname], None))
                            continue
                        t = score_manifest(tm, hyps, self.bins).total
                        rows.append(ResultRow(variant, label, str(seed), tname, tst_range[tname], t.wer, t.errors,
                                              t.ref_words))
        else:
            kind = "ros" if variant in ("DnnRos", "Combined") else "base"
            amode = "map" if variant in ("HmmAlpha", "Combined") else "none"
            for seed in seeds:
                hyps = self.decode(SystemSpec(kind, seed), amode)
                hp = self.path("decode", variant, f"s{seed}.hyp")
                write_hypotheses(hp, hyps)
                hyp_paths.append(hp)
                table = score_manifest(test, hyps, self.bins)
                for b in (RateBin.SLOW, RateBin.NORMAL, RateBin.FAST):
                    r = table.bins.get(b)
                    rows.append(ResultRow(variant, variant, str(seed), b.value, ranges[b],
                                          None if r is None else r.wer, None if r is None else r.errors,
                                          None if r is None else r.ref_words))
                t = table.total
                rows.append(ResultRow(variant, variant, str(seed), "total", "-", t.wer, t.errors, t.ref_words))
        median = _medians(rows)
        for (system, tset), v in median.items():
            rng = next(r.ros_range for r in rows if r.system == system and r.test_set == tset)
            rows.append(ResultRow(variant, system, "median", tset, rng, v))
        csv_path = self.path("results", f"{variant}.csv")
        self.write_rows(csv_path, rows)
        with open(self.path("results", f"{variant}.txt"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(format_rows(rows, self.cfg.digest()))
        write_workdir_manifest(self.root)
        return ExperimentResult(variant, rows, median, csv_path, hyp_paths)

    def write_rows(self, path, rows):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# config_digest: {self.cfg.digest()}\n")
            fh.write(f"# seeds: {' '.join(str(s) for s in self.cfg['experiment.seeds'])}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variant", "system", "seed", "test_set", "ros_range", "wer_percent", "errors", "words"])
            for r in rows:
                w.writerow([r.variant, r.system, r.seed, r.test_set, r.ros_range,
                            "absent" if r.wer is None else f"{r.wer:.2f}",
                            "" if r.errors is None else r.errors, "" if r.words is None else r.words])

    def sweep_alpha(self, grid=None) -> list:
        """WER per rate bin for each alpha in ``grid`` using the first seed's baseline system."""
        self.prepare()
        grid = list(grid if grid is not None else self.cfg["experiment.sweep_grid"])
        if not grid or any(a <= 0 for a in grid):
            raise ConfigError("experiment.sweep_grid: need positive alpha values")
        spec = SystemSpec("base", self.cfg["experiment.seeds"][0])
        test = self.manifest("test")
        ranges = self.bins.ranges()
        rows = []
        for a in grid:
            table = score_manifest(test, self.decode(spec, a), self.bins)
            for b in (RateBin.SLOW, RateBin.NORMAL, RateBin.FAST):
                r = table.bins.get(b)
                rows.append(("grid", a, b.value, ranges[b], None if r is None else r.wer,
                             None if r is None else r.errors, None if r is None else r.ref_words))
        best = []
        for b in (RateBin.SLOW, RateBin.NORMAL, RateBin.FAST):
            cand = [r for r in rows if r[2] == b.value and r[4] is not None]
            if cand:
                top = min(cand, key=lambda r: (r[4], abs(r[1] - 1.0)))
                best.append(("best",) + top[1:])
        rows.extend(best)
        path = self.path("results", "sweep_alpha.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# config_digest: {self.cfg.digest()}\n# system: {spec.name}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kind", "alpha", "test_set", "ros_range", "wer_percent", "errors", "words"])
            for kind, a, tset, rng, wer, err, n in rows:
                w.writerow([kind, f"{a:g}", tset, rng, "absent" if wer is None else f"{wer:.2f}",
                            "" if err is None else err, "" if n is None else n])
        write_workdir_manifest(self.root)
        return rows

    def ros_stats(self, bin_width: float = 1.0) -> dict:
        """Per-split ROS histograms and rate-bin counts."""
        self.prepare()
        out = {}
        rows = []
        for s in SPLITS:
            m = self.manifest(s)
            if len(m) == 0:
                continue
            h = histogram([e.ros for e in m], bin_width)
            h.write_csv(self.path("results", f"ros_hist_{s}.csv"))
            counts = {b.value: sum(1 for e in m if e.bin == b.value) for b in RateBin}
            rows.append((s, len(m), counts))
            out[s] = (h, counts)
        with open(self.path("results", "ros_bins.csv"), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["split", "utterances", "slow", "normal", "fast"])
            for s, n, c in rows:
                w.writerow([s, n, c["slow"], c["normal"], c["fast"]])
        write_workdir_manifest(self.root)
        return out


def _medians(rows) -> dict:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.system, r.test_set), []).append(r.wer)
    out = {}
    for k, vals in groups.items():
        vals = [v for v in vals if v is not None]
        out[k] = statistics.median(vals) if vals else None
    return out


def format_rows(rows, digest: str) -> str:
    """Plain-text view of result rows: one line per (system, seed), one column per test set."""
    sets = list(dict.fromkeys(r.test_set for r in rows))
    keys = list(dict.fromkeys((r.system, r.seed) for r in rows))
    cell = {(r.system, r.seed, r.test_set): r.wer for r in rows}
    head = f"{'system':<14}{'seed':>8}" + "".join(f"{s:>10}" for s in sets)
    lines = [f"config digest {digest}", head, "-" * len(head)]
    for system, seed in keys:
        vals = [cell.get((system, seed, s)) for s in sets]
        lines.append(f"{system:<14}{seed:>8}" + "".join(f"{'-' if v is None else f'{v:.2f}':>10}" for v in vals))
    return "\n".join(lines) + "\n"


def generate_corpus_from_config(cfg: Config):
    """Write the synthetic corpus described by the ``[corpus]`` section to ``paths.corpus``."""
    from .corpus import SynthConfig, default_phones, generate_corpus

    out = cfg["paths.corpus"]
    if not out:
        raise ConfigError("paths.corpus: not set")
    c = cfg.section("corpus")
    sc = SynthConfig(phones=default_phones(c["pair_gap_db"]), r0=c["r0"], kappa=c["kappa"],
                     rate_median=c["rate_median"], rate_sigma=c["rate_sigma"], snr_db=c["snr_db"],
                     level_jitter_db=c["level_jitter_db"],
                     min_phone_frames=c["min_phone_frames"], words_per_utt=c["words_per_utt"], seed=c["seed"])
    splits, _ = generate_corpus(sc, c["num_utts"], c["seed"], out, c["cv_fraction"], c["test_fraction"])
    with open(os.path.join(out, "corpus.ini"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# synth digest {sc.digest()}\n[corpus]\n")
        for k, v in c.items():
            fh.write(f"{k} = {' '.join(map(str, v)) if isinstance(v, tuple) else v}\n")
    return splits
