"""HMM topology, duration calculus, GMM emissions, Viterbi search and alignment."""

from .align import compose_linear, forced_align
from .gmm import GmmEmission, GmmStats
from .io import read_alignments, read_model, write_alignments, write_model
from .topology import (SILENCE, AcousticModel, Alignment, DurationModel, PhoneHmm, duration_cdf, duration_pmf,
                       expected_duration, make_topology, scale_self_transitions)
from .train import GmmTrainConfig, GmmTrainResult, align_utterances, train_gmm_hmm
from .viterbi import HmmGraph, viterbi

__all__ = [
    "SILENCE", "AcousticModel", "Alignment", "DurationModel", "GmmEmission", "GmmStats", "GmmTrainConfig",
    "GmmTrainResult", "HmmGraph", "PhoneHmm", "align_utterances", "compose_linear", "duration_cdf",
    "duration_pmf", "expected_duration", "forced_align", "make_topology", "read_alignments", "read_model",
    "scale_self_transitions", "train_gmm_hmm", "viterbi", "write_alignments", "write_model",
]
