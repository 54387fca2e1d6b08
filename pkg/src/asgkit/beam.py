"""Noise-aware sequence loss approximated by a differentiable beam search.

The loss scores a *noisy* transcription by summing, over clean-candidate
frame paths and letter alignments, the acoustic path score plus an
alpha-weighted noise log-probability. A hypothesis tracks a cursor into
the noisy letter sequence; whenever a frame starts a new token the just
finished letter is explained by one of three moves:

- deletion: the letter never reached the transcript (cursor unchanged);
- substitution: it became the letter under the cursor (cursor + 1);
- insertion + substitution: the letter under the cursor was inserted and
  the one after it is the substitution (cursor + 2).

After each frame, hypotheses sharing (cursor, current token, last move,
current resolved letter) are merged by logadd and the N best are kept.
After the last frame the open letter is completed the same way and only
hypotheses that explained every noisy letter contribute. A deletion may
not immediately follow a deletion.

The numerator score is the logadd over surviving paths; the gradient is
the exact gradient of that retained-graph quantity, obtained by a
backward pass over the kept hypotheses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .asg import LossResult, Transitions, _check_dims, _full_fb
from .errors import DimensionMismatch, EmptyBeam
from .eval import ler_pair
from .noise import NoiseModel
from .numerics import NEG_INF, logadd, logadd_all
from .tokens import Alphabet

OP_NONE, OP_SUB, OP_DEL, OP_INS_SUB = 0, 1, 2, 3


@dataclass(frozen=True)
class BeamConfig:
    """Beam width and noise-model weighting.

    alpha balances acoustic scores against noise log-probabilities; 0.5
    is a good default for substitution-only models, 0.1 for models with
    insertions and deletions. The per-op multipliers rescale deletion,
    insertion and substitution log-probabilities individually (all 1 by
    default; exposed for experimentation, no effect claimed).
    relax_consecutive lifts the no-consecutive-deletion constraint for
    ablation.
    """

    beam_size: int = 300
    alpha: float = 0.5
    relax_consecutive: bool = False
    alpha_sub: float = 1.0
    alpha_del: float = 1.0
    alpha_ins: float = 1.0

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be at least 1")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError("alpha must be finite and non-negative")


def exhaustive_beam_size(num_noisy_letters: int, alphabet: Alphabet) -> int:
    """Beam size guaranteeing no pruning (every merge key fits)."""
    return (num_noisy_letters + 1) * alphabet.size * 4 * alphabet.num_letters


@njit(cache=True)
def _beam_forward(em, g, gs, noisy, log_sub_w, log_del_w, log_ins_w, beam_size, rep, relax):
    t_frames, v = em.shape
    l1 = noisy.shape[0]
    nl = log_del_w.shape[0]
    buckets = (l1 + 1) * v * 4 * nl
    maxk = min(beam_size, buckets)
    maxarc = maxk * (1 + 3 * (v - 1))
    if maxarc < v:
        maxarc = v

    ent_count = np.zeros(t_frames, np.int64)
    ent_cursor = np.empty((t_frames, maxk), np.int64)
    ent_token = np.empty((t_frames, maxk), np.int64)
    ent_lastop = np.empty((t_frames, maxk), np.int64)
    ent_letter = np.empty((t_frames, maxk), np.int64)
    ent_score = np.empty((t_frames, maxk))

    arc_count = np.zeros(t_frames, np.int64)
    arc_parent = np.empty((t_frames, maxarc), np.int64)
    arc_child = np.empty((t_frames, maxarc), np.int64)
    arc_weight = np.empty((t_frames, maxarc))

    cand_parent = np.empty(maxarc, np.int64)
    cand_bucket = np.empty(maxarc, np.int64)
    cand_w = np.empty(maxarc)
    cand_contrib = np.empty(maxarc)

    bucket_score = np.full(buckets, -np.inf)
    bucket_entry = np.full(buckets, -1, np.int64)
    touched = np.empty(buckets, np.int64)

    fin_weight = np.full(maxk, -np.inf)

    for t in range(t_frames):
        ncand = 0
        # remaining completions after frame t: one per later frame plus the
        # final one; each consumes at most two noisy letters
        cap = 2 * (t_frames - t)
        if t == 0:
            for tok in range(v):
                if tok == rep:
                    continue
                if l1 > cap:
                    continue
                b = ((0 * v + tok) * 4 + OP_NONE) * nl + tok
                cand_parent[ncand] = -1
                cand_bucket[ncand] = b
                cand_w[ncand] = em[0, tok] + gs[tok]
                cand_contrib[ncand] = cand_w[ncand]
                ncand += 1
        else:
            for k in range(ent_count[t - 1]):
                cur = ent_cursor[t - 1, k]
                tok = ent_token[t - 1, k]
                lop = ent_lastop[t - 1, k]
                let = ent_letter[t - 1, k]
                sc = ent_score[t - 1, k]
                # same token: the segment continues, nothing is completed
                if l1 - cur <= cap:
                    w = em[t, tok] + g[tok, tok]
                    b = ((cur * v + tok) * 4 + lop) * nl + let
                    cand_parent[ncand] = k
                    cand_bucket[ncand] = b
                    cand_w[ncand] = w
                    cand_contrib[ncand] = sc + w
                    ncand += 1
                for tok2 in range(v):
                    if tok2 == tok:
                        continue
                    let2 = let if tok2 == rep else tok2
                    base = em[t, tok2] + g[tok2, tok]
                    # deletion of the finished letter
                    if (relax or lop != OP_DEL) and log_del_w[let] > -np.inf:
                        if l1 - cur <= cap and (relax or cur < l1):
                            b = ((cur * v + tok2) * 4 + OP_DEL) * nl + let2
                            w = base + log_del_w[let]
                            cand_parent[ncand] = k
                            cand_bucket[ncand] = b
                            cand_w[ncand] = w
                            cand_contrib[ncand] = sc + w
                            ncand += 1
                    # substitution into the letter under the cursor
                    if cur < l1 and log_sub_w[noisy[cur], let] > -np.inf:
                        if l1 - (cur + 1) <= cap:
                            b = (((cur + 1) * v + tok2) * 4 + OP_SUB) * nl + let2
                            w = base + log_sub_w[noisy[cur], let]
                            cand_parent[ncand] = k
                            cand_bucket[ncand] = b
                            cand_w[ncand] = w
                            cand_contrib[ncand] = sc + w
                            ncand += 1
                    # the cursor letter was inserted, the next one substituted
                    if cur + 1 < l1:
                        lw = log_ins_w[noisy[cur]] + log_sub_w[noisy[cur + 1], let]
                        if lw > -np.inf and l1 - (cur + 2) <= cap:
                            b = (((cur + 2) * v + tok2) * 4 + OP_INS_SUB) * nl + let2
                            w = base + lw
                            cand_parent[ncand] = k
                            cand_bucket[ncand] = b
                            cand_w[ncand] = w
                            cand_contrib[ncand] = sc + w
                            ncand += 1
        ntouched = 0
        for m in range(ncand):
            b = cand_bucket[m]
            if bucket_score[b] == -np.inf:
                touched[ntouched] = b
                ntouched += 1
            bucket_score[b] = np.logaddexp(bucket_score[b], cand_contrib[m])
        if ntouched == 0:
            return (0, -np.inf, ent_count, ent_cursor, ent_token, ent_lastop,
                    ent_letter, ent_score, arc_count, arc_parent, arc_child,
                    arc_weight, fin_weight)
        # ascending bucket id = (cursor, token, lastop, letter) tie order
        tb = np.sort(touched[:ntouched])
        sc_t = np.empty(ntouched)
        for i in range(ntouched):
            sc_t[i] = -bucket_score[tb[i]]
        order = np.argsort(sc_t, kind="mergesort")
        keep = ntouched if ntouched < beam_size else beam_size
        for r in range(keep):
            b = tb[order[r]]
            let = b % nl
            rest = b // nl
            lop = rest % 4
            rest = rest // 4
            tok = rest % v
            cur = rest // v
            ent_cursor[t, r] = cur
            ent_token[t, r] = tok
            ent_lastop[t, r] = lop
            ent_letter[t, r] = let
            ent_score[t, r] = bucket_score[b]
            bucket_entry[b] = r
        ent_count[t] = keep
        nkept = 0
        for m in range(ncand):
            e = bucket_entry[cand_bucket[m]]
            if e >= 0:
                arc_parent[t, nkept] = cand_parent[m]
                arc_child[t, nkept] = e
                arc_weight[t, nkept] = cand_w[m]
                nkept += 1
        arc_count[t] = nkept
        for i in range(ntouched):
            bucket_score[touched[i]] = -np.inf
            bucket_entry[touched[i]] = -1

    # complete the open letter after the last frame; the cursor must land
    # exactly at the end of the noisy transcription
    last = t_frames - 1
    total = -np.inf
    for k in range(ent_count[last]):
        cur = ent_cursor[last, k]
        lop = ent_lastop[last, k]
        let = ent_letter[last, k]
        w = -np.inf
        if cur == l1:
            if relax or lop != OP_DEL:
                w = log_del_w[let]
        elif cur == l1 - 1:
            w = log_sub_w[noisy[cur], let]
        elif cur == l1 - 2:
            w = log_ins_w[noisy[cur]] + log_sub_w[noisy[cur + 1], let]
        fin_weight[k] = w
        if w > -np.inf:
            total = np.logaddexp(total, ent_score[last, k] + w)
    ok = 1 if total > -np.inf else 0
    return (ok, total, ent_count, ent_cursor, ent_token, ent_lastop, ent_letter,
            ent_score, arc_count, arc_parent, arc_child, arc_weight, fin_weight)


@njit(cache=True)
def _beam_backward(t_frames, v, total, ent_count, ent_token, ent_score,
                   arc_count, arc_parent, arc_child, arc_weight, fin_weight):
    maxk = ent_score.shape[1]
    beta = np.full((t_frames, maxk), -np.inf)
    for k in range(ent_count[t_frames - 1]):
        beta[t_frames - 1, k] = fin_weight[k]
    dem = np.zeros((t_frames, v))
    dg = np.zeros((v, v))
    dgs = np.zeros(v)
    for t in range(t_frames - 1, 0, -1):
        for m in range(arc_count[t]):
            p = arc_parent[t, m]
            c = arc_child[t, m]
            w = arc_weight[t, m]
            beta[t - 1, p] = np.logaddexp(beta[t - 1, p], w + beta[t, c])
            post = np.exp(ent_score[t - 1, p] + w + beta[t, c] - total)
            dem[t, ent_token[t, c]] += post
            dg[ent_token[t, c], ent_token[t - 1, p]] += post
    for m in range(arc_count[0]):
        c = arc_child[0, m]
        w = arc_weight[0, m]
        post = np.exp(w + beta[0, c] - total)
        dem[0, ent_token[0, c]] += post
        dgs[ent_token[0, c]] += post
    return dem, dg, dgs, beta


def _weighted(table: np.ndarray, weight: float) -> np.ndarray:
    """alpha-weight log-probabilities, keeping log(0) at -inf (0*-inf trap)."""
    out = np.full(table.shape, -np.inf)
    mask = ~np.isneginf(table)
    out[mask] = table[mask] * weight
    return np.ascontiguousarray(out)


def _prepare(noisy_tokens, em, trans, noise_model: NoiseModel, alphabet: Alphabet,
             config: BeamConfig):
    em = _check_dims(em, trans)
    if em.shape[1] != alphabet.size:
        raise DimensionMismatch(
            f"emissions have {em.shape[1]} tokens but alphabet size is {alphabet.size}"
        )
    noisy_tokens = np.asarray(noisy_tokens, dtype=np.int64)
    if noisy_tokens.size == 0:
        raise ValueError("noisy transcription must be non-empty")
    noisy_letters = np.asarray(
        [alphabet.letter_index(ch) for ch in alphabet.decode(noisy_tokens)],
        dtype=np.int64,
    )
    log_sub, log_del, log_ins = noise_model.aligned_log_tables(alphabet)
    a = config.alpha
    return (
        em,
        noisy_letters,
        _weighted(log_sub, a * config.alpha_sub),
        _weighted(log_del, a * config.alpha_del),
        _weighted(np.ascontiguousarray(log_ins), a * config.alpha_ins),
    )


def _run_forward(noisy_tokens, em, trans, noise_model, alphabet, config):
    em, noisy_letters, sub_w, del_w, ins_w = _prepare(
        noisy_tokens, em, trans, noise_model, alphabet, config
    )
    out = _beam_forward(
        em, trans.scores, trans.start, noisy_letters, sub_w, del_w, ins_w,
        config.beam_size, alphabet.rep, config.relax_consecutive,
    )
    if not out[0]:
        raise EmptyBeam(
            "no hypothesis explains the noisy transcription within the frame budget"
        )
    return em, out


def beam_score(noisy_tokens, em, trans: Transitions, noise_model: NoiseModel,
               alphabet: Alphabet, config: BeamConfig = BeamConfig()) -> float:
    """Beam approximation of the noise-aware numerator score."""
    _, out = _run_forward(noisy_tokens, em, trans, noise_model, alphabet, config)
    return float(out[1])


def noisy_asg_loss(noisy_tokens, em, trans: Transitions, noise_model: NoiseModel,
                   alphabet: Alphabet, config: BeamConfig = BeamConfig()) -> LossResult:
    """Noise-aware loss -S(noisy) + Z with retained-graph gradients.

    Z and its marginals come from the exact full-graph forward-backward;
    the numerator posterior is computed over the hypotheses kept by the
    beam. The noise model itself receives no gradient.
    """
    em, out = _run_forward(noisy_tokens, em, trans, noise_model, alphabet, config)
    (_, total, ent_count, _, ent_token, _, _, ent_score,
     arc_count, arc_parent, arc_child, arc_weight, fin_weight) = out
    t_frames, v = em.shape
    dem_s, dg_s, dgs_s, _ = _beam_backward(
        t_frames, v, total, ent_count, ent_token, ent_score,
        arc_count, arc_parent, arc_child, arc_weight, fin_weight,
    )
    z, dem_z, dg_z, dgs_z = _full_fb(em, trans.scores, trans.start)
    return LossResult(
        loss=float(z - total),
        grad_emissions=dem_z - dem_s,
        grad_transitions=dg_z - dg_s,
        grad_start=dgs_z - dgs_s,
        numerator=float(total),
        normalizer=float(z),
    )


@dataclass
class BeamTranscription:
    """One clean-transcription candidate from the beam."""

    text: str
    weight: float
    ler: Optional[float]


def _derive_token(letters: tuple[int, ...], prev_token: int, rep: int) -> int:
    if len(letters) >= 2 and letters[-1] == letters[-2] and prev_token != rep:
        return rep
    return letters[-1]


def beam_transcriptions(noisy_tokens, em, trans: Transitions, noise_model: NoiseModel,
                        alphabet: Alphabet, config: BeamConfig = BeamConfig(),
                        top_k: int = 10, reference: str | None = None) -> list[BeamTranscription]:
    """Clean-transcription candidates with softmax-normalized weights.

    Runs the beam keyed by the realized letter prefix (so hypotheses of
    the same transcription merge, hypotheses of different transcriptions
    never do), groups survivors by transcription, logadds their alignment
    scores and normalizes with a softmax over all surviving groups.
    Weights of the returned top_k therefore sum to at most 1, exactly 1
    when top_k covers every surviving transcription. The LER column
    compares against ``reference`` when given.
    """
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    em, noisy_letters, sub_w, del_w, ins_w = _prepare(
        noisy_tokens, em, trans, noise_model, alphabet, config
    )
    t_frames = em.shape[0]
    l1 = noisy_letters.size
    g, gs = trans.scores, trans.start
    rep = alphabet.rep
    relax = config.relax_consecutive

    # hypothesis key: (letters so far, cursor, last op); value: [score, token]
    hyps: dict[tuple[tuple[int, ...], int, int], list] = {}
    for tok in range(alphabet.num_letters):
        if l1 <= 2 * t_frames:
            hyps[((tok,), 0, OP_NONE)] = [float(em[0, tok] + gs[tok]), tok]

    for t in range(1, t_frames):
        cap = 2 * (t_frames - t)
        nxt: dict[tuple[tuple[int, ...], int, int], list] = {}

        def add(key, score, token):
            slot = nxt.get(key)
            if slot is None:
                nxt[key] = [score, token]
            else:
                slot[0] = logadd(slot[0], score)

        for (letters, cur, lop), (sc, tok) in hyps.items():
            let = letters[-1]
            if l1 - cur <= cap:
                add((letters, cur, lop), sc + float(em[t, tok] + g[tok, tok]), tok)
            for tok2 in range(alphabet.size):
                if tok2 == tok:
                    continue
                let2 = let if tok2 == rep else tok2
                letters2 = letters + (let2,)
                base = sc + float(em[t, tok2] + g[tok2, tok])
                if (relax or lop != OP_DEL) and del_w[let] > NEG_INF:
                    if l1 - cur <= cap and (relax or cur < l1):
                        add((letters2, cur, OP_DEL), base + float(del_w[let]), tok2)
                if cur < l1 and sub_w[noisy_letters[cur], let] > NEG_INF:
                    if l1 - (cur + 1) <= cap:
                        add((letters2, cur + 1, OP_SUB),
                            base + float(sub_w[noisy_letters[cur], let]), tok2)
                if cur + 1 < l1:
                    lw = float(ins_w[noisy_letters[cur]] + sub_w[noisy_letters[cur + 1], let])
                    if lw > NEG_INF and l1 - (cur + 2) <= cap:
                        add((letters2, cur + 2, OP_INS_SUB), base + lw, tok2)
        ranked = sorted(nxt.items(), key=lambda kv: (-kv[1][0], kv[0][1], kv[0][0], kv[0][2]))
        hyps = dict(ranked[: config.beam_size])
        if not hyps:
            raise EmptyBeam("no hypothesis survived")

    groups: dict[tuple[int, ...], float] = {}
    for (letters, cur, lop), (sc, tok) in hyps.items():
        let = letters[-1]
        if cur == l1:
            w = float(del_w[let]) if (relax or lop != OP_DEL) else NEG_INF
        elif cur == l1 - 1:
            w = float(sub_w[noisy_letters[cur], let])
        elif cur == l1 - 2:
            w = float(ins_w[noisy_letters[cur]] + sub_w[noisy_letters[cur + 1], let])
        else:
            w = NEG_INF
        if w == NEG_INF:
            continue
        total = sc + w
        groups[letters] = logadd(groups.get(letters, NEG_INF), total)
    if not groups:
        raise EmptyBeam("no hypothesis explained every noisy letter")

    norm = logadd_all(list(groups.values()))
    ranked_groups = sorted(groups.items(), key=lambda kv: (-kv[1], kv[0]))
    out = []
    for letters, sc in ranked_groups[:top_k]:
        text = "".join(alphabet.letters[i] for i in letters)
        ler = ler_pair(text, reference) if reference is not None else None
        out.append(BeamTranscription(text=text, weight=math.exp(sc - norm), ler=ler))
    return out
