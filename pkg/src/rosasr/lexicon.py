"""Pronunciation lexicon."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import FormatError, OovWord, UnknownPhone
from .hmm.topology import SILENCE


@dataclass(frozen=True, eq=False)
class Lexicon:
    prons: dict
    silence: str = SILENCE

    def __post_init__(self):
        prons = {}
        for w, p in self.prons.items():
            p = tuple(p)
            if not p:
                raise ValueError(f"empty pronunciation for {w!r}")
            prons[w] = p
        object.__setattr__(self, "prons", prons)

    @property
    def words(self) -> list[str]:
        return list(self.prons)

    @property
    def phones(self) -> list[str]:
        seen = {}
        for p in self.prons.values():
            for ph in p:
                seen.setdefault(ph, None)
        return list(seen)

    def __contains__(self, word) -> bool:
        return word in self.prons

    def pronounce(self, words) -> list[str]:
        out = []
        for w in words:
            if w not in self.prons:
                raise OovWord(w)
            out.extend(self.prons[w])
        return out

    def validate(self, phones) -> None:
        known = set(phones)
        for p in self.phones:
            if p not in known:
                raise UnknownPhone(p)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for w, p in self.prons.items():
                fh.write(f"{w}\t{' '.join(p)}\n")

    @classmethod
    def read(cls, path, silence: str = SILENCE) -> "Lexicon":
        prons = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                if "\t" not in line:
                    raise FormatError(f"{path}:{lineno}: expected 'word<TAB>phones'")
                w, p = line.split("\t", 1)
                prons[w] = tuple(p.split())
        return cls(prons, silence)
