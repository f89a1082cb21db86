"""Utterance manifests.

One record per line, tab separated::

    utt-id  wav-path  transcript  ros  bin

``ros`` is ``-`` until computed, ``bin`` is ``slow``/``normal``/``fast`` or ``-``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import FormatError


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    wav_path: str
    words: tuple
    ros: float | None = None
    bin: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        for name in ("utt_id", "wav_path"):
            v = getattr(self, name)
            if not v or "\t" in v or "\n" in v:
                raise ValueError(f"invalid {name}: {v!r}")

    @property
    def transcript(self) -> str:
        return " ".join(self.words)

    def with_ros(self, ros: float, bin_tag: str | None = None) -> "ManifestEntry":
        return replace(self, ros=float(ros), bin=bin_tag)

    def to_line(self) -> str:
        ros = "-" if self.ros is None else repr(float(self.ros))
        return "\t".join([self.utt_id, self.wav_path, self.transcript, ros, self.bin or "-"])

    @classmethod
    def from_line(cls, line: str, where: str = "") -> "ManifestEntry":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise FormatError(f"{where}: expected 5 tab-separated fields, got {len(parts)}")
        utt, wav, text, ros, tag = parts
        try:
            ros_v = None if ros == "-" else float(ros)
        except ValueError as exc:
            raise FormatError(f"{where}: bad ros value {ros!r}") from exc
        return cls(utt, wav, tuple(text.split()), ros_v, None if tag == "-" else tag)


@dataclass(frozen=True)
class Manifest:
    entries: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.utt_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate utterance ids in manifest")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def ids(self) -> list[str]:
        return [e.utt_id for e in self.entries]

    def by_id(self) -> dict:
        return {e.utt_id: e for e in self.entries}

    def subset(self, ids) -> "Manifest":
        keep = set(ids)
        return Manifest([e for e in self.entries if e.utt_id in keep])

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for e in self.entries:
                fh.write(e.to_line() + "\n")

    @classmethod
    def read(cls, path) -> "Manifest":
        with open(path, encoding="utf-8") as fh:
            return cls([ManifestEntry.from_line(line, f"{path}:{i}")
                        for i, line in enumerate(fh, 1) if line.strip()])
