"""Token alphabet, transcription encoding, and frame-path collapsing.

A transcription is a string over base letters (by default a-z, the
apostrophe and the space). Encoding maps it to token indices where a
doubled letter "xx" becomes [x, REP]; REP is a dedicated token meaning
"repeat the previous letter". Triples of the same letter are not
representable and are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedSequence, TripleRepeat

DEFAULT_LETTERS = "abcdefghijklmnopqrstuvwxyz' "
DEFAULT_REP_SYMBOL = "2"


@dataclass(frozen=True)
class Alphabet:
    """Base letters plus the repetition token.

    Token indices are stable: letter k of ``letters`` has index k and the
    repetition token has index ``len(letters)``, so ``size`` is
    ``len(letters) + 1``.
    """

    letters: str = DEFAULT_LETTERS
    rep_symbol: str = DEFAULT_REP_SYMBOL

    def __post_init__(self) -> None:
        if len(set(self.letters)) != len(self.letters):
            raise ValueError("alphabet letters must be distinct")
        if len(self.rep_symbol) != 1 or self.rep_symbol in self.letters:
            raise ValueError("rep_symbol must be a single symbol outside the letters")

    @property
    def num_letters(self) -> int:
        return len(self.letters)

    @property
    def size(self) -> int:
        """Token count V: base letters plus the repetition token."""
        return len(self.letters) + 1

    @property
    def rep(self) -> int:
        """Token index of the repetition token."""
        return len(self.letters)

    def letter_index(self, ch: str) -> int:
        idx = self.letters.find(ch)
        if idx < 0:
            raise ValueError(f"symbol {ch!r} is not in the alphabet")
        return idx

    def encode(self, text: str) -> np.ndarray:
        """Encode a letter string into token indices.

        Doubled letters emit [letter, REP]. Raises TripleRepeat for three
        identical consecutive letters, which the token set cannot express.
        """
        out = []
        prev = None
        run = 0
        for ch in text:
            if ch == prev:
                run += 1
                if run >= 3:
                    raise TripleRepeat(f"three consecutive {ch!r} in {text!r}")
                out.append(self.rep)
            else:
                run = 1
                prev = ch
                out.append(self.letter_index(ch))
        return np.asarray(out, dtype=np.int64)

    def decode(self, tokens: Sequence[int] | np.ndarray) -> str:
        """Inverse of encode: REP is replaced by the preceding letter."""
        out: list[str] = []
        prev_tok = None
        for tok in np.asarray(tokens, dtype=np.int64):
            tok = int(tok)
            if tok == self.rep:
                if not out or prev_tok == self.rep:
                    raise MalformedSequence(
                        "repetition token must follow a letter token"
                    )
                out.append(out[-1])
            elif 0 <= tok < self.num_letters:
                out.append(self.letters[tok])
            else:
                raise MalformedSequence(f"token index {tok} out of range")
            prev_tok = tok
        return "".join(out)

    def token_letters(self, tokens: Sequence[int] | np.ndarray) -> np.ndarray:
        """Letter indices realized by a token sequence (REP resolved)."""
        text = self.decode(tokens)
        return np.asarray([self.letter_index(ch) for ch in text], dtype=np.int64)


def collapse(path: Sequence[int] | np.ndarray) -> np.ndarray:
    """Merge runs of identical frame labels into single tokens.

    This is the transcription realized by a frame-level alignment; it is
    label-agnostic (the repetition token collapses like any other).
    """
    path = np.asarray(path, dtype=np.int64)
    if path.size == 0:
        raise ValueError("path must contain at least one frame")
    keep = np.ones(path.size, dtype=bool)
    keep[1:] = path[1:] != path[:-1]
    return path[keep]


def read_transcripts(path) -> dict[str, str]:
    """Read a transcript file: one `<id><TAB><text>` line per utterance."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{lineno}: expected <id><TAB><text>")
            uid, text = line.split("\t", 1)
            if uid in out:
                raise ValueError(f"{path}:{lineno}: duplicate utterance id {uid!r}")
            out[uid] = text
    return out


def write_transcripts(path, items: dict[str, str] | Iterable[tuple[str, str]]) -> None:
    pairs = items.items() if isinstance(items, dict) else items
    with open(path, "w", encoding="utf-8") as fh:
        for uid, text in pairs:
            fh.write(f"{uid}\t{text}\n")
