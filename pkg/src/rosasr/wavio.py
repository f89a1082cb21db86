"""16-bit PCM mono WAV reading and writing (stdlib ``wave``)."""

import wave

import numpy as np

from .errors import IngestError


def read_wav(path):
    """Return ``(samples, sample_rate)``; samples are float64 on the int16 scale."""
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate, nframes = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            raw = w.readframes(nframes)
    except (wave.Error, EOFError) as exc:
        raise IngestError(f"{path}: malformed WAV ({exc})") from exc
    if channels != 1:
        raise IngestError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise IngestError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if len(raw) != 2 * nframes:
        raise IngestError(f"{path}: truncated data ({len(raw)} of {2 * nframes} bytes)")
    return np.frombuffer(raw, dtype="<i2").astype(np.float64), rate


def write_wav(path, samples, sample_rate):
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64)), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(pcm.tobytes())
