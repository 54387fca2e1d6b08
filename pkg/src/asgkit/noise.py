"""Letter-level transcription-noise model.

The model is a column-stochastic (V'+1) x (V'+1) table over the base
letters plus a void symbol: entry [noisy, clean] is the probability of
observing ``noisy`` given the writer meant ``clean``. The void row holds
deletion probabilities, the void column insertion probabilities, and the
void/void corner the probability that an insertion slot stays silent.

The likelihood of a noisy string given a clean one sums over all
monotone alignments built from substitutions, deletions and insertions,
with no two consecutive deletions and no two consecutive insertions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCorpus, InvalidFactor, LengthMismatch
from .eval import DEL, INS, SUB, align
from .numerics import NEG_INF, logadd
from .tokens import Alphabet

_COLUMN_TOL = 1e-9


@dataclass(frozen=True)
class NoiseModel:
    """Column-stochastic confusion table over base letters plus void."""

    letters: tuple[str, ...]
    probs: np.ndarray  # (V'+1, V'+1), [noisy, clean], void index last

    def __post_init__(self) -> None:
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "letters", tuple(self.letters))
        n = len(self.letters) + 1
        if probs.shape != (n, n):
            raise ValueError(f"probability table must be {n}x{n}, got {probs.shape}")
        if len(set(self.letters)) != len(self.letters):
            raise ValueError("noise model letters must be distinct")
        if probs.min() < -_COLUMN_TOL or probs.max() > 1 + _COLUMN_TOL:
            raise ValueError("probabilities must lie in [0, 1]")
        sums = probs.sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > _COLUMN_TOL:
            raise ValueError(f"columns must sum to 1, got sums {sums}")

    @property
    def void(self) -> int:
        return len(self.letters)

    def letter_index(self, ch: str) -> int:
        try:
            return self.letters.index(ch)
        except ValueError:
            raise ValueError(f"symbol {ch!r} is not covered by the noise model") from None

    def indices(self, text: str) -> np.ndarray:
        return np.asarray([self.letter_index(ch) for ch in text], dtype=np.int64)

    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs)

    def aligned_log_tables(self, alphabet: Alphabet):
        """(log_sub, log_del, log_ins) reindexed to the alphabet's letter order."""
        idx = np.asarray([self.letter_index(ch) for ch in alphabet.letters], dtype=np.int64)
        logs = self.log_probs()
        log_sub = logs[np.ix_(idx, idx)]
        log_del = logs[self.void, idx]
        log_ins = logs[idx, self.void]
        return log_sub, log_del, log_ins

    @classmethod
    def identity(cls, letters: Sequence[str]) -> "NoiseModel":
        n = len(letters) + 1
        return cls(tuple(letters), np.eye(n))

    @classmethod
    def uniform_errors(
        cls,
        letters: Sequence[str],
        sub_rate: float = 0.0,
        del_rate: float = 0.0,
        ins_rate: float = 0.0,
    ) -> "NoiseModel":
        """Symmetric model: each clean letter keeps 1 - sub_rate - del_rate
        of its mass, spreads sub_rate uniformly over the other letters and
        deletes with del_rate; each slot inserts (uniformly) with ins_rate.
        """
        n = len(letters)
        if sub_rate + del_rate > 1 or min(sub_rate, del_rate, ins_rate) < 0 or ins_rate > 1:
            raise ValueError("rates must be non-negative and feasible")
        probs = np.zeros((n + 1, n + 1))
        for c in range(n):
            probs[c, c] = 1.0 - sub_rate - del_rate
            if n > 1:
                for r in range(n):
                    if r != c:
                        probs[r, c] = sub_rate / (n - 1)
            probs[n, c] = del_rate
        probs[:n, n] = ins_rate / n if n else 0.0
        probs[n, n] = 1.0 - ins_rate
        return cls(tuple(letters), probs)

    def save(self, path) -> None:
        payload = {
            "letters": list(self.letters),
            "probs": [float(x) for x in self.probs.ravel()],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path, normalize: bool = False, smooth: float = 0.0) -> "NoiseModel":
        """Load the JSON format; optionally additively smooth and/or
        renormalize columns (for hand-written or rounded tables)."""
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        letters = tuple(payload["letters"])
        n = len(letters) + 1
        probs = np.asarray(payload["probs"], dtype=np.float64).reshape(n, n)
        if smooth > 0:
            probs = probs + smooth
        if smooth > 0 or normalize:
            probs = probs / probs.sum(axis=0, keepdims=True)
        return cls(letters, probs)


def reference_confusions() -> NoiseModel:
    """The bundled weak-recognizer letter-confusion table (table1.json).

    The published percentages are rounded to one decimal, so columns are
    renormalized on load.
    """
    with resources.files("asgkit.data").joinpath("table1.json").open("r") as fh:
        payload = json.load(fh)
    letters = tuple(payload["letters"])
    n = len(letters) + 1
    probs = np.asarray(payload["probs"], dtype=np.float64).reshape(n, n)
    probs = probs / probs.sum(axis=0, keepdims=True)
    return NoiseModel(letters, probs)


_NONE, _DEL, _INS = 0, 1, 2


def log_likelihood(noisy: str, clean: str, nm: NoiseModel) -> float:
    """log p(noisy | clean): logadd over all valid alignments.

    Dynamic program over (clean consumed, noisy consumed, last op); a
    deletion may not follow a deletion and an insertion may not follow an
    insertion. Returns NEG_INF when no alignment has positive probability.
    """
    ci = nm.indices(clean)
    ni = nm.indices(noisy)
    logs = nm.log_probs()
    void = nm.void
    l2, l1 = ci.size, ni.size
    dp = np.full((l2 + 1, l1 + 1, 3), NEG_INF)
    dp[0, 0, _NONE] = 0.0
    for i in range(l2 + 1):
        for j in range(l1 + 1):
            for last in (_NONE, _DEL, _INS):
                val = dp[i, j, last]
                if val == NEG_INF:
                    continue
                if i < l2 and j < l1:
                    dp[i + 1, j + 1, _NONE] = logadd(
                        dp[i + 1, j + 1, _NONE], val + logs[ni[j], ci[i]]
                    )
                if i < l2 and last != _DEL:
                    dp[i + 1, j, _DEL] = logadd(dp[i + 1, j, _DEL], val + logs[void, ci[i]])
                if j < l1 and last != _INS:
                    dp[i, j + 1, _INS] = logadd(dp[i, j + 1, _INS], val + logs[ni[j], void])
    out = NEG_INF
    for last in (_NONE, _DEL, _INS):
        out = logadd(out, dp[l2, l1, last])
    return out


def log_likelihood_sub_only(noisy: str, clean: str, nm: NoiseModel) -> float:
    """Substitution-only likelihood: the unique alignment's log-probability."""
    if len(noisy) != len(clean):
        raise LengthMismatch(f"lengths differ: {len(noisy)} vs {len(clean)}")
    logs = nm.log_probs()
    total = 0.0
    for h, c in zip(noisy, clean):
        total += logs[nm.letter_index(h), nm.letter_index(c)]
    return float(total)


def estimate(
    pairs: Iterable[tuple[str, str]],
    letters: Sequence[str] | None = None,
) -> NoiseModel:
    """Frequency-based model from (hypothesis, reference) pairs.

    Each pair is aligned at minimum letter edit distance (SUB > DEL > INS
    tie-break); substitution and deletion counts normalize per clean
    letter, insertion counts over one slot per reference letter plus one.
    Letters never seen in a reference keep an identity column.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyCorpus("no hypothesis/reference pairs")
    for hyp, ref in pairs:
        if not hyp or not ref:
            raise ValueError("hypothesis and reference strings must be non-empty")
    if letters is None:
        letters = sorted({ch for hyp, ref in pairs for ch in hyp + ref})
    letters = tuple(letters)
    index = {ch: k for k, ch in enumerate(letters)}
    n = len(letters)
    counts = np.zeros((n + 1, n + 1))
    slots = 0
    for hyp, ref in pairs:
        for op, r, h in align(ref, hyp):
            if op == SUB:
                counts[index[h], index[r]] += 1
            elif op == DEL:
                counts[n, index[r]] += 1
            else:
                counts[index[h], n] += 1
        slots += len(ref) + 1
    probs = np.zeros((n + 1, n + 1))
    for c in range(n):
        total = counts[:, c].sum()
        if total > 0:
            probs[:, c] = counts[:, c] / total
        else:
            probs[c, c] = 1.0
    probs[:n, n] = counts[:n, n] / slots
    probs[n, n] = 1.0 - probs[:n, n].sum()
    return NoiseModel(letters, probs)


def scale(nm: NoiseModel, factor: float) -> NoiseModel:
    """Multiply every error probability by ``factor`` and renormalize.

    Off-diagonal substitution, deletion and insertion mass scales by the
    factor, capped proportionally so no column exceeds total mass 1; the
    diagonal (and the void/void corner) absorbs the remainder.
    """
    if not factor > 0:
        raise InvalidFactor(f"factor must be positive, got {factor}")
    n = len(nm.letters)
    probs = nm.probs.copy()
    for c in range(n + 1):
        col = probs[:, c]
        off = np.ones(n + 1, dtype=bool)
        off[c] = False
        scaled = col[off] * factor
        total = scaled.sum()
        if total > 1.0:
            scaled = scaled / total
            total = 1.0
        col[off] = scaled
        col[c] = 1.0 - total
    return NoiseModel(nm.letters, probs)


def corrupt(clean: str, nm: NoiseModel, seed) -> str:
    """Sample one noisy transcription; deterministic given the seed.

    ``seed`` is anything numpy's default_rng accepts (int, SeedSequence).

    Each insertion slot (before every clean letter and after the last)
    draws from the void column; each clean letter draws from its own
    column. A deletion immediately following a deletion is re-drawn from
    the column conditioned on not deleting, so the output always has
    positive likelihood under the model.
    """
    rng = np.random.default_rng(seed)
    n = len(nm.letters)
    void = n
    ins_col = nm.probs[:, void]
    out: list[str] = []
    prev_was_del = False
    for i in range(len(clean) + 1):
        r = int(rng.choice(n + 1, p=ins_col))
        if r != void:
            out.append(nm.letters[r])
            prev_was_del = False
        if i == len(clean):
            break
        col = nm.probs[:, nm.letter_index(clean[i])]
        r = int(rng.choice(n + 1, p=col))
        if r == void and prev_was_del:
            keep = col[:n]
            total = keep.sum()
            if total <= 0:
                raise ValueError(
                    f"letter {clean[i]!r} deletes with probability 1; cannot avoid "
                    "consecutive deletions"
                )
            r = int(rng.choice(n, p=keep / total))
        if r == void:
            prev_was_del = True
        else:
            out.append(nm.letters[r])
            prev_was_del = False
    return "".join(out)
