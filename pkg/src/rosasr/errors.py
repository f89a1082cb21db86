"""Exception types shared across the recognizer."""


class RosAsrError(Exception):
    """Base class for all package errors."""


class DataError(RosAsrError):
    """Problem with input data (audio, transcripts, manifests)."""


class NumericalError(RosAsrError):
    """A computation produced an unusable numerical result."""


class UtteranceTooShort(DataError):
    pass


class InvalidRos(DataError):
    pass


class DimMismatch(RosAsrError, ValueError):
    pass


class SingularScatter(NumericalError):
    pass


class NoSpeech(DataError):
    pass


class EmptyInput(DataError):
    pass


class InvalidDuration(RosAsrError, ValueError):
    pass


class Divergent(NumericalError):
    pass


class InvalidAlpha(RosAsrError, ValueError):
    pass


class OovWord(DataError):
    def __init__(self, word):
        super().__init__(f"word not in lexicon: {word!r}")
        self.word = word


class NoPath(NumericalError):
    pass


class UnknownPhone(DataError):
    def __init__(self, phone):
        super().__init__(f"phone has no HMM: {phone!r}")
        self.phone = phone


class EmptyReference(DataError):
    pass


class MissingHypothesis(DataError):
    def __init__(self, utt_id):
        super().__init__(f"no hypothesis for utterance {utt_id!r}")
        self.utt_id = utt_id


class RateTooHigh(DataError):
    pass


class IngestError(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class FormatError(DataError):
    """A serialized artifact could not be parsed."""


class ConfigError(RosAsrError):
    pass
