"""Exhaustive reference implementations for validating the fast paths.

Everything here enumerates explicitly: all V^T frame paths for the
normalizer and the constrained score, all letter alignments for the
noise likelihood, and all (clean transcription, frame path, alignment)
triples for the noise-aware numerator. Exponential time by design; an
EnumLimit guards against accidental blowups. These ship in the library
(not only in the tests) so the oraclecheck and gradcheck commands can
run them on demand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .asg import Transitions, _check_dims
from .errors import LimitExceeded
from .noise import NoiseModel
from .numerics import NEG_INF, logadd_all
from .tokens import Alphabet, collapse


@dataclass(frozen=True)
class EnumLimit:
    """Bounds on exhaustive enumeration (paths capped at ten million)."""

    max_frames: int = 6
    max_tokens: int = 4
    max_length: int = 4

    def check_paths(self, t_frames: int, v: int) -> None:
        if t_frames > self.max_frames or v > self.max_tokens:
            raise LimitExceeded(
                f"T={t_frames}, V={v} exceeds enumeration limit "
                f"({self.max_frames}, {self.max_tokens})"
            )
        if v**t_frames > 10**7:
            raise LimitExceeded(f"{v}**{t_frames} paths is too many")

    def check_strings(self, *lengths: int) -> None:
        for n in lengths:
            if n > self.max_frames:
                raise LimitExceeded(f"string length {n} exceeds {self.max_frames}")


DEFAULT_LIMIT = EnumLimit()


def _all_paths(t_frames: int, v: int) -> np.ndarray:
    """(V^T, T) array of every frame path."""
    grids = np.indices((v,) * t_frames).reshape(t_frames, -1).T
    return np.ascontiguousarray(grids, dtype=np.int64)


def _path_scores(paths: np.ndarray, em: np.ndarray, trans: Transitions) -> np.ndarray:
    t_frames = em.shape[0]
    scores = trans.start[paths[:, 0]] + em[0, paths[:, 0]]
    for t in range(1, t_frames):
        scores = scores + em[t, paths[:, t]] + trans.scores[paths[:, t], paths[:, t - 1]]
    return scores


def exhaustive_normalizer(em, trans: Transitions, limit: EnumLimit = DEFAULT_LIMIT) -> float:
    """Logadd of every V^T path score."""
    em = _check_dims(em, trans)
    t_frames, v = em.shape
    limit.check_paths(t_frames, v)
    paths = _all_paths(t_frames, v)
    return logadd_all(_path_scores(paths, em, trans))


def exhaustive_constrained_score(tokens, em, trans: Transitions,
                                 limit: EnumLimit = DEFAULT_LIMIT) -> float:
    """Logadd of path scores over paths collapsing to ``tokens``."""
    em = _check_dims(em, trans)
    t_frames, v = em.shape
    limit.check_paths(t_frames, v)
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.size > limit.max_length:
        raise LimitExceeded(f"|Y|={tokens.size} exceeds {limit.max_length}")
    paths = _all_paths(t_frames, v)
    scores = _path_scores(paths, em, trans)
    selected = [
        s for p, s in zip(paths, scores)
        if np.array_equal(collapse(p), tokens)
    ]
    return logadd_all(selected)


def exhaustive_noise_likelihood(noisy: str, clean: str, nm: NoiseModel,
                                limit: EnumLimit = DEFAULT_LIMIT,
                                ) -> float:
    """Recursive enumeration of every valid alignment's log-probability.

    Alignments are arbitrary monotone interleavings of substitutions,
    deletions and insertions with no two consecutive deletions and no two
    consecutive insertions (the full alignment set of the noise model,
    which is larger than what the beam search can reach).
    """
    limit.check_strings(len(noisy), len(clean))
    ci = nm.indices(clean)
    ni = nm.indices(noisy)
    logs = nm.log_probs()
    void = nm.void
    sums: list[float] = []

    def rec(i: int, j: int, last: str, acc: float) -> None:
        if i == ci.size and j == ni.size:
            sums.append(acc)
            return
        if i < ci.size and j < ni.size:
            rec(i + 1, j + 1, "sub", acc + logs[ni[j], ci[i]])
        if i < ci.size and last != "del":
            rec(i + 1, j, "del", acc + logs[void, ci[i]])
        if j < ni.size and last != "ins":
            rec(i, j + 1, "ins", acc + logs[ni[j], void])

    rec(0, 0, "none", 0.0)
    finite = [s for s in sums if s > NEG_INF]
    return logadd_all(finite)


def _completion_noise_scores(letters: np.ndarray, noisy: np.ndarray,
                             log_sub: np.ndarray, log_del: np.ndarray,
                             log_ins: np.ndarray, relax: bool) -> list[float]:
    """Raw noise log-probability of every letter-completion sequence.

    Each clean letter is explained by exactly one move: deletion,
    substitution, or insertion-then-substitution; deletions may not
    follow deletions. This is the alignment set reachable by the beam.
    """
    l1 = noisy.size
    out: list[float] = []

    def rec(pos: int, cur: int, last_del: bool, acc: float) -> None:
        if pos == letters.size:
            if cur == l1:
                out.append(acc)
            return
        let = letters[pos]
        if (relax or not last_del) and log_del[let] > NEG_INF:
            rec(pos + 1, cur, True, acc + log_del[let])
        if cur < l1 and log_sub[noisy[cur], let] > NEG_INF:
            rec(pos + 1, cur + 1, False, acc + log_sub[noisy[cur], let])
        if cur + 1 < l1:
            lw = log_ins[noisy[cur]] + log_sub[noisy[cur + 1], let]
            if lw > NEG_INF:
                rec(pos + 1, cur + 2, False, acc + lw)

    rec(0, 0, False, 0.0)
    return out


def exhaustive_noisy_score(noisy_tokens, em, trans: Transitions, nm: NoiseModel,
                           alphabet: Alphabet, alpha: float,
                           limit: EnumLimit = DEFAULT_LIMIT,
                           relax_consecutive: bool = False) -> float:
    """Exhaustive noise-aware numerator over (transcription, path, alignment).

    Enumerates every frame path, collapses it, skips paths whose collapse
    cannot be decoded (repetition token first), and logadds the path score
    plus alpha times each completion-alignment noise score. Returns
    NEG_INF when nothing is feasible.
    """
    em = _check_dims(em, trans)
    t_frames, v = em.shape
    limit.check_paths(t_frames, v)
    noisy_tokens = np.asarray(noisy_tokens, dtype=np.int64)
    noisy_letters = np.asarray(
        [alphabet.letter_index(ch) for ch in alphabet.decode(noisy_tokens)],
        dtype=np.int64,
    )
    limit.check_strings(noisy_letters.size)
    log_sub, log_del, log_ins = nm.aligned_log_tables(alphabet)

    paths = _all_paths(t_frames, v)
    scores = _path_scores(paths, em, trans)
    groups: dict[tuple[int, ...], list[float]] = {}
    for p, s in zip(paths, scores):
        toks = collapse(p)
        if toks[0] == alphabet.rep:
            continue
        letters = tuple(int(x) for x in alphabet.token_letters(toks))
        groups.setdefault(letters, []).append(float(s))

    totals: list[float] = []
    for letters, path_scores in groups.items():
        raw = _completion_noise_scores(
            np.asarray(letters, dtype=np.int64), noisy_letters,
            log_sub, log_del, log_ins, relax_consecutive,
        )
        if not raw:
            continue
        noise_term = logadd_all([alpha * s for s in raw])
        totals.append(logadd_all(path_scores) + noise_term)
    return logadd_all(totals)
