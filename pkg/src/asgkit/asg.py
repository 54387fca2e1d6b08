"""The ASG sequence criterion.

Emissions are a T x V matrix of per-frame token scores; transitions are a
V x V matrix g[i, j] scoring token i following token j, plus a start
vector for the first frame. A frame path pi scores
sum_t em[t, pi_t] + g[pi_t, pi_{t-1}]. The loss is the negative
log-probability of the transcription: the logadd of path scores over all
paths collapsing to it (the numerator), minus the logadd over all paths
of all transcriptions (the normalizer Z). Both terms and their exact
gradients are computed by forward-backward dynamic programs in O(T*V^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatch, TranscriptionTooLong
from .numerics import NEG_INF


@dataclass
class Transitions:
    """Bigram transition scores plus the start-score vector.

    scores[i, j] is the score of moving to token i from token j; start[i]
    scores token i in the first frame.
    """

    scores: np.ndarray
    start: np.ndarray

    def __post_init__(self) -> None:
        self.scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        self.start = np.ascontiguousarray(self.start, dtype=np.float64)
        v = self.start.shape[0]
        if self.scores.shape != (v, v):
            raise DimensionMismatch(
                f"transition matrix {self.scores.shape} does not match start vector ({v},)"
            )

    @classmethod
    def zeros(cls, num_tokens: int) -> "Transitions":
        return cls(np.zeros((num_tokens, num_tokens)), np.zeros(num_tokens))

    @property
    def num_tokens(self) -> int:
        return self.start.shape[0]

    def copy(self) -> "Transitions":
        return Transitions(self.scores.copy(), self.start.copy())


@dataclass
class LossResult:
    """Scalar loss with analytic gradients.

    loss == -numerator + normalizer. Gradients are with respect to the
    emission matrix, the transition matrix, and the start vector.
    """

    loss: float
    grad_emissions: np.ndarray
    grad_transitions: np.ndarray
    grad_start: np.ndarray
    numerator: float
    normalizer: float


def _check_dims(em: np.ndarray, trans: Transitions) -> np.ndarray:
    em = np.ascontiguousarray(em, dtype=np.float64)
    if em.ndim != 2 or em.shape[0] < 1:
        raise DimensionMismatch(f"emission matrix must be T x V, got {em.shape}")
    if em.shape[1] != trans.num_tokens:
        raise DimensionMismatch(
            f"emissions have {em.shape[1]} tokens but transitions {trans.num_tokens}"
        )
    return em


def path_score(path, em: np.ndarray, trans: Transitions) -> float:
    """Score of one frame path: emissions plus transitions along it."""
    em = _check_dims(em, trans)
    path = np.asarray(path, dtype=np.int64)
    t_frames, v = em.shape
    if path.shape != (t_frames,):
        raise DimensionMismatch(f"path length {path.shape} does not match {t_frames} frames")
    if path.size and (path.min() < 0 or path.max() >= v):
        raise DimensionMismatch("path labels out of range")
    total = float(em[0, path[0]] + trans.start[path[0]])
    for t in range(1, t_frames):
        total += float(em[t, path[t]] + trans.scores[path[t], path[t - 1]])
    return total


@njit(cache=True)
def _full_forward(em, g, gs):
    t_frames, v = em.shape
    z = np.empty((t_frames, v))
    for i in range(v):
        z[0, i] = em[0, i] + gs[i]
    for t in range(1, t_frames):
        for i in range(v):
            acc = -np.inf
            for j in range(v):
                acc = np.logaddexp(acc, z[t - 1, j] + g[i, j])
            z[t, i] = em[t, i] + acc
    total = -np.inf
    for i in range(v):
        total = np.logaddexp(total, z[t_frames - 1, i])
    return z, total


@njit(cache=True)
def _full_fb(em, g, gs):
    """Normalizer Z with gradients: posterior marginals of the full graph."""
    t_frames, v = em.shape
    z, total = _full_forward(em, g, gs)
    b = np.empty((t_frames, v))
    for i in range(v):
        b[t_frames - 1, i] = 0.0
    for t in range(t_frames - 2, -1, -1):
        for j in range(v):
            acc = -np.inf
            for i in range(v):
                acc = np.logaddexp(acc, g[i, j] + em[t + 1, i] + b[t + 1, i])
            b[t, j] = acc
    dem = np.zeros((t_frames, v))
    dg = np.zeros((v, v))
    dgs = np.zeros(v)
    for t in range(t_frames):
        for i in range(v):
            dem[t, i] = np.exp(z[t, i] + b[t, i] - total)
    for i in range(v):
        dgs[i] = dem[0, i]
    for t in range(1, t_frames):
        for i in range(v):
            for j in range(v):
                dg[i, j] += np.exp(z[t - 1, j] + g[i, j] + em[t, i] + b[t, i] - total)
    return total, dem, dg, dgs


@njit(cache=True)
def _cons_forward(y, em, g, gs):
    t_frames = em.shape[0]
    length = y.shape[0]
    a = np.full((t_frames, length), -np.inf)
    a[0, 0] = em[0, y[0]] + gs[y[0]]
    for t in range(1, t_frames):
        for l in range(length):
            stay = a[t - 1, l] + g[y[l], y[l]]
            if l > 0 and y[l] != y[l - 1]:
                adv = a[t - 1, l - 1] + g[y[l], y[l - 1]]
                stay = np.logaddexp(stay, adv)
            a[t, l] = em[t, y[l]] + stay
    return a, a[t_frames - 1, length - 1]


@njit(cache=True)
def _cons_fb(y, em, g, gs):
    """Constrained-graph score with gradients over the (frame, position) lattice."""
    t_frames, v = em.shape
    length = y.shape[0]
    a, total = _cons_forward(y, em, g, gs)
    b = np.full((t_frames, length), -np.inf)
    b[t_frames - 1, length - 1] = 0.0
    for t in range(t_frames - 2, -1, -1):
        for l in range(length):
            acc = em[t + 1, y[l]] + g[y[l], y[l]] + b[t + 1, l]
            if l + 1 < length and y[l + 1] != y[l]:
                acc = np.logaddexp(
                    acc, em[t + 1, y[l + 1]] + g[y[l + 1], y[l]] + b[t + 1, l + 1]
                )
            b[t, l] = acc
    dem = np.zeros((t_frames, v))
    dg = np.zeros((v, v))
    dgs = np.zeros(v)
    for t in range(t_frames):
        for l in range(length):
            dem[t, y[l]] += np.exp(a[t, l] + b[t, l] - total)
    dgs[y[0]] += np.exp(a[0, 0] + b[0, 0] - total)
    for t in range(1, t_frames):
        for l in range(length):
            dg[y[l], y[l]] += np.exp(
                a[t - 1, l] + g[y[l], y[l]] + em[t, y[l]] + b[t, l] - total
            )
            if l > 0 and y[l] != y[l - 1]:
                dg[y[l], y[l - 1]] += np.exp(
                    a[t - 1, l - 1] + g[y[l], y[l - 1]] + em[t, y[l]] + b[t, l] - total
                )
    return total, dem, dg, dgs


def _check_tokens(tokens, em: np.ndarray) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or tokens.size == 0:
        raise DimensionMismatch("transcription must be a non-empty token sequence")
    if tokens.size > em.shape[0]:
        raise TranscriptionTooLong(
            f"{tokens.size} tokens cannot align to {em.shape[0]} frames"
        )
    if tokens.min() < 0 or tokens.max() >= em.shape[1]:
        raise DimensionMismatch("token indices out of range")
    return tokens


def normalizer(em: np.ndarray, trans: Transitions) -> float:
    """Logadd of path scores over all V^T frame paths (the Z term)."""
    em = _check_dims(em, trans)
    _, total = _full_forward(em, trans.scores, trans.start)
    return float(total)


def constrained_score(tokens, em: np.ndarray, trans: Transitions) -> float:
    """Logadd of path scores over all frame paths collapsing to ``tokens``."""
    em = _check_dims(em, trans)
    tokens = _check_tokens(tokens, em)
    _, total = _cons_forward(tokens, em, trans.scores, trans.start)
    return float(total)


def full_forward_backward(em: np.ndarray, trans: Transitions):
    """Normalizer Z and its gradients (posterior marginals of the full graph)."""
    em = _check_dims(em, trans)
    z, dem, dg, dgs = _full_fb(em, trans.scores, trans.start)
    return float(z), dem, dg, dgs


def asg_loss(tokens, em: np.ndarray, trans: Transitions) -> LossResult:
    """ASG loss -S(Y) + Z with exact analytic gradients.

    The emission gradient is the difference of posterior marginals under
    the full graph and the constrained graph; transition and start
    gradients accumulate the corresponding arc posteriors.
    """
    em = _check_dims(em, trans)
    tokens = _check_tokens(tokens, em)
    z, dem_z, dg_z, dgs_z = _full_fb(em, trans.scores, trans.start)
    s, dem_s, dg_s, dgs_s = _cons_fb(tokens, em, trans.scores, trans.start)
    if s == NEG_INF:
        raise ValueError("transcription admits no alignment (repeated adjacent tokens?)")
    return LossResult(
        loss=float(z - s),
        grad_emissions=dem_z - dem_s,
        grad_transitions=dg_z - dg_s,
        grad_start=dgs_z - dgs_s,
        numerator=float(s),
        normalizer=float(z),
    )
