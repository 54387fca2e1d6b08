"""Viterbi decoding and letter/word error rates.

LER treats the space token as a letter and wraps both sequences with one
boundary space on each end before aligning, so an utterance of W words
and K letters contributes K + W + 1 reference symbols. WER splits on
spaces only (apostrophes bind to their word) and is unpadded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .errors import DimensionMismatch, IdMismatch
from .tokens import Alphabet, collapse
from .asg import Transitions, _check_dims


@dataclass
class DecodeResult:
    """Best frame path with its collapsed tokens and decoded text."""

    path: np.ndarray
    tokens: np.ndarray
    transcription: Optional[str]
    score: float


@njit(cache=True)
def _viterbi(em, g, gs):
    t_frames, v = em.shape
    score = np.empty((t_frames, v))
    back = np.zeros((t_frames, v), np.int64)
    for i in range(v):
        score[0, i] = em[0, i] + gs[i]
    for t in range(1, t_frames):
        for i in range(v):
            best = score[t - 1, 0] + g[i, 0]
            arg = 0
            for j in range(1, v):
                cand = score[t - 1, j] + g[i, j]
                if cand > best:
                    best = cand
                    arg = j
            score[t, i] = em[t, i] + best
            back[t, i] = arg
    best = score[t_frames - 1, 0]
    arg = 0
    for i in range(1, v):
        if score[t_frames - 1, i] > best:
            best = score[t_frames - 1, i]
            arg = i
    path = np.empty(t_frames, np.int64)
    path[t_frames - 1] = arg
    for t in range(t_frames - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


def viterbi(em: np.ndarray, trans: Transitions, alphabet: Alphabet | None = None) -> DecodeResult:
    """Max-scoring frame path; ties break toward the lower token index.

    With an alphabet the collapsed path is decoded to text; a leading
    repetition token (possible on untrained scores) is dropped rather
    than rejected, since raw model output is not a curated transcription.
    """
    em = _check_dims(em, trans)
    path, best = _viterbi(em, trans.scores, trans.start)
    tokens = collapse(path)
    text = None
    if alphabet is not None:
        toks = tokens
        while toks.size and toks[0] == alphabet.rep:
            toks = toks[1:]
        text = alphabet.decode(toks) if toks.size else ""
    return DecodeResult(path=path, tokens=tokens, transcription=text, score=float(best))


SUB, DEL, INS = "sub", "del", "ins"


def align(src: Sequence, dst: Sequence) -> list[tuple[str, object, object]]:
    """One minimum-edit-distance alignment transforming ``src`` into ``dst``.

    Returns (op, src_item, dst_item) triples where SUB pairs items (equal
    items included), DEL drops a src item and INS emits a dst item. Ties
    are broken deterministically preferring SUB over DEL over INS.
    """
    m, n = len(src), len(dst)
    d = np.empty((m + 1, n + 1), dtype=np.int64)
    d[:, 0] = np.arange(m + 1)
    d[0, :] = np.arange(n + 1)
    for i in range(1, m + 1):
        si = src[i - 1]
        row = d[i]
        prev = d[i - 1]
        for j in range(1, n + 1):
            row[j] = min(
                prev[j - 1] + (si != dst[j - 1]),
                prev[j] + 1,
                row[j - 1] + 1,
            )
    ops: list[tuple[str, object, object]] = []
    i, j = m, n
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (src[i - 1] != dst[j - 1]):
            ops.append((SUB, src[i - 1], dst[j - 1]))
            i -= 1
            j -= 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            ops.append((DEL, src[i - 1], None))
            i -= 1
        else:
            ops.append((INS, None, dst[j - 1]))
            j -= 1
    ops.reverse()
    return ops


@dataclass
class EditCounts:
    sub: int
    ins: int
    dele: int

    @property
    def total(self) -> int:
        return self.sub + self.ins + self.dele


def edit_distance(a: Sequence, b: Sequence) -> tuple[int, EditCounts]:
    """Levenshtein distance with deterministic SUB > DEL > INS op counts.

    Counts describe transforming ``a`` into ``b``; matching SUB pairs are
    not counted as errors.
    """
    ops = align(a, b)
    counts = EditCounts(
        sub=sum(1 for op, x, y in ops if op == SUB and x != y),
        ins=sum(1 for op, _, _ in ops if op == INS),
        dele=sum(1 for op, _, _ in ops if op == DEL),
    )
    return counts.total, counts


def _pad(text: str) -> str:
    return " " + text + " "


def ler_pair(hyp: str, ref: str) -> float:
    """Letter error rate of one pair under the boundary-padded convention."""
    dist, _ = edit_distance(_pad(hyp), _pad(ref))
    return dist / len(_pad(ref))


def _check_ids(hyps: dict, refs: dict) -> None:
    missing = sorted(set(refs) - set(hyps))
    extra = sorted(set(hyps) - set(refs))
    if missing or extra:
        raise IdMismatch(f"missing ids: {missing[:5]}..., extra ids: {extra[:5]}...")


def letter_error_rate(hyps: dict[str, str], refs: dict[str, str]) -> float:
    """Corpus LER: total padded letter edits over total padded reference length."""
    _check_ids(hyps, refs)
    edits = 0
    total = 0
    for uid, ref in refs.items():
        dist, _ = edit_distance(_pad(hyps[uid]), _pad(ref))
        edits += dist
        total += len(_pad(ref))
    return edits / total


def word_error_rate(hyps: dict[str, str], refs: dict[str, str]) -> float:
    """Corpus WER: word edits over total reference word count (split on spaces)."""
    _check_ids(hyps, refs)
    edits = 0
    total = 0
    for uid, ref in refs.items():
        hyp_words = hyps[uid].split(" ")
        ref_words = ref.split(" ")
        dist, _ = edit_distance(hyp_words, ref_words)
        edits += dist
        total += len(ref_words)
    return edits / total
