"""Toy acoustic model, synthetic data, and the two-phase training loop.

The intended workflow mirrors a denoising experiment: pretrain with the
plain ASG loss on (possibly corrupted) transcripts, then fine-tune with
the noise-aware loss and the true noise model. The acoustic model is a
one-hidden-layer tanh MLP applied frame-wise; it stands in for a real
encoder so the criteria can be exercised end-to-end on a desk-scale CPU
budget.
"""

from __future__ import annotations

import json
import logging
import math
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .asg import Transitions, asg_loss
from .beam import BeamConfig, noisy_asg_loss
from .errors import AsgKitError, EmptyBeam, NonFiniteLoss
from .eval import letter_error_rate, viterbi
from .noise import NoiseModel
from .tokens import Alphabet

logger = logging.getLogger(__name__)


@dataclass
class AcousticMLP:
    """Frame-wise one-hidden-layer tanh network producing token scores."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def create(cls, feature_dim: int, hidden_dim: int, num_tokens: int, seed: int) -> "AcousticMLP":
        rng = np.random.default_rng(seed)
        w1 = rng.uniform(-1.0, 1.0, (feature_dim, hidden_dim)) / math.sqrt(feature_dim)
        w2 = rng.uniform(-1.0, 1.0, (hidden_dim, num_tokens)) / math.sqrt(hidden_dim)
        return cls(w1=w1, b1=np.zeros(hidden_dim), w2=w2, b2=np.zeros(num_tokens))

    @property
    def num_tokens(self) -> int:
        return self.b2.shape[0]

    def hidden(self, feats: np.ndarray) -> np.ndarray:
        return np.tanh(feats @ self.w1 + self.b1)

    def emissions(self, feats: np.ndarray) -> np.ndarray:
        return self.hidden(feats) @ self.w2 + self.b2

    def backprop(self, feats: np.ndarray, hidden: np.ndarray, d_em: np.ndarray):
        dw2 = hidden.T @ d_em
        db2 = d_em.sum(axis=0)
        dh = (d_em @ self.w2.T) * (1.0 - hidden * hidden)
        dw1 = feats.T @ dh
        db1 = dh.sum(axis=0)
        return dw1, db1, dw2, db2

    def copy(self) -> "AcousticMLP":
        return AcousticMLP(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


@dataclass
class Utterance:
    uid: str
    features: np.ndarray
    text: str


@dataclass(frozen=True)
class SyntheticSpec:
    """Synthetic letter-sequence corpus with one-hot-plus-noise features.

    Strings never repeat a symbol twice in a row (so every transcript is
    trivially encodable and frame-local features identify the letter);
    the space never starts or ends an utterance.
    """

    letters: str = "abcdef "
    num_utterances: int = 2000
    min_letters: int = 5
    max_letters: int = 15
    min_frames_per_letter: int = 1
    max_frames_per_letter: int = 3
    noise_sigma: float = 0.1
    feature_dim: Optional[int] = None

    def __post_init__(self) -> None:
        if self.min_frames_per_letter < 1 or self.max_frames_per_letter < self.min_frames_per_letter:
            raise ValueError("frames per letter must satisfy 1 <= min <= max")
        if self.min_letters < 1 or self.max_letters < self.min_letters:
            raise ValueError("letters per utterance must satisfy 1 <= min <= max")
        if len([c for c in self.letters if c != " "]) < 2:
            raise ValueError("need at least two non-space letters")
        if self.feature_dim is not None and self.feature_dim < len(self.letters):
            raise ValueError("feature_dim must cover one-hot letter features")

    @property
    def dim(self) -> int:
        return self.feature_dim if self.feature_dim is not None else len(self.letters)


def generate_dataset(spec: SyntheticSpec, seed: int) -> list[Utterance]:
    """Deterministic synthetic corpus: per letter, 1+ frames of its one-hot
    feature vector plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    letters = spec.letters
    out = []
    for i in range(spec.num_utterances):
        n = int(rng.integers(spec.min_letters, spec.max_letters + 1))
        chars: list[str] = []
        for pos in range(n):
            options = [
                c for c in letters
                if (not chars or c != chars[-1])
                and not (c == " " and (pos == 0 or pos == n - 1))
            ]
            chars.append(options[int(rng.integers(len(options)))])
        durations = rng.integers(
            spec.min_frames_per_letter, spec.max_frames_per_letter + 1, size=n
        )
        t_frames = int(durations.sum())
        feats = np.zeros((t_frames, spec.dim))
        row = 0
        for ch, dur in zip(chars, durations):
            feats[row:row + dur, letters.index(ch)] = 1.0
            row += dur
        if spec.noise_sigma > 0:
            feats += spec.noise_sigma * rng.standard_normal(feats.shape)
        out.append(Utterance(uid=f"utt{i:05d}", features=feats, text="".join(chars)))
    return out


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "asg"  # "asg" or "l2g"
    learning_rate: float = 1.0
    transition_lr: float = 5e-4
    grad_clip_norm: float = 0.05
    batch_size: int = 32
    epochs: int = 1
    beam: BeamConfig = field(default_factory=BeamConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.loss not in ("asg", "l2g"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if min(self.learning_rate, self.transition_lr) < 0 or self.grad_clip_norm <= 0:
            raise ValueError("rates must be non-negative and clip positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    heldout_ler: float
    beam_failures: int


# Worker-side state for parallel loss evaluation; populated by the pool
# initializer so per-task payloads stay small.
_STATE: dict = {}


def _init_worker(state: dict) -> None:
    _STATE.clear()
    _STATE.update(state)


def _utterance_loss(kind, model: AcousticMLP, trans: Transitions, feats, tokens,
                    alphabet, noise_model, beam_cfg):
    """Per-utterance scaled loss and gradients, or None on an empty beam."""
    hidden = model.hidden(feats)
    em = hidden @ model.w2 + model.b2
    try:
        if kind == "asg":
            res = asg_loss(tokens, em, trans)
        else:
            res = noisy_asg_loss(tokens, em, trans, noise_model, alphabet, beam_cfg)
    except EmptyBeam:
        return None
    scale = 1.0 / math.sqrt(len(tokens))
    dw1, db1, dw2, db2 = model.backprop(feats, hidden, res.grad_emissions * scale)
    return (
        res.loss * scale,
        (dw1, db1, dw2, db2, res.grad_transitions * scale, res.grad_start * scale),
    )


def _eval_chunk(args):
    params, indices = args
    w1, b1, w2, b2, g, gs = params
    model = AcousticMLP(w1, b1, w2, b2)
    trans = Transitions(g, gs)
    st = _STATE
    return [
        _utterance_loss(st["kind"], model, trans, st["features"][i], st["tokens"][i],
                        st["alphabet"], st["noise_model"], st["beam"])
        for i in indices
    ]


def _global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def heldout_ler(model: AcousticMLP, trans: Transitions, alphabet: Alphabet,
                heldout: Sequence[Utterance]) -> float:
    hyps = {}
    refs = {}
    for utt in heldout:
        em = model.emissions(utt.features)
        hyps[utt.uid] = viterbi(em, trans, alphabet).transcription
        refs[utt.uid] = utt.text
    return letter_error_rate(hyps, refs)


def train_loop(
    model: AcousticMLP,
    trans: Transitions,
    data: Sequence[Utterance],
    cfg: TrainConfig,
    alphabet: Alphabet,
    noise_model: Optional[NoiseModel] = None,
    heldout: Optional[Sequence[Utterance]] = None,
    workers: int = 1,
):
    """Plain SGD over per-utterance losses scaled by 1/sqrt(len(tokens)).

    Batch gradients average the per-utterance gradients (summed in
    utterance order, so worker count does not change the result), the
    global gradient norm is clipped, and model weights and transition
    scores get separate learning rates. Utterances whose transcript
    cannot be encoded are skipped once with a warning; an empty beam
    skips that utterance for the batch and is counted per epoch.

    Returns (model, transitions, history) without mutating the inputs.
    """
    if cfg.loss == "l2g" and noise_model is None:
        raise ValueError("the l2g loss requires a noise model")
    model = model.copy()
    trans = trans.copy()

    tokens_list = []
    usable = []
    skipped = 0
    for i, utt in enumerate(data):
        try:
            toks = alphabet.encode(utt.text)
        except (AsgKitError, ValueError):
            toks = np.empty(0, dtype=np.int64)
        if toks.size == 0:
            skipped += 1
            tokens_list.append(None)
            continue
        tokens_list.append(toks)
        usable.append(i)
    if skipped:
        logger.warning("skipping %d utterances with unusable transcripts", skipped)
    if not usable and cfg.epochs > 0:
        raise ValueError("no usable training utterances")

    rng = np.random.default_rng(cfg.seed)
    history: list[EpochStats] = []

    pool = None
    if workers > 1:
        state = {
            "kind": cfg.loss,
            "features": [u.features for u in data],
            "tokens": tokens_list,
            "alphabet": alphabet,
            "noise_model": noise_model,
            "beam": cfg.beam,
        }
        ctx = multiprocessing.get_context("fork")
        pool = ctx.Pool(workers, initializer=_init_worker, initargs=(state,))

    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(usable))
            loss_sum = 0.0
            loss_count = 0
            beam_failures = 0
            for start in range(0, len(order), cfg.batch_size):
                batch = [usable[j] for j in order[start:start + cfg.batch_size]]
                params = (model.w1, model.b1, model.w2, model.b2, trans.scores, trans.start)
                if pool is not None:
                    chunks = np.array_split(np.asarray(batch), workers)
                    tasks = [(params, chunk.tolist()) for chunk in chunks if chunk.size]
                    results = [r for part in pool.map(_eval_chunk, tasks) for r in part]
                else:
                    results = [
                        _utterance_loss(cfg.loss, model, trans, data[i].features,
                                        tokens_list[i], alphabet, noise_model, cfg.beam)
                        for i in batch
                    ]
                grads = None
                contributed = 0
                for i, res in zip(batch, results):
                    if res is None:
                        beam_failures += 1
                        continue
                    loss_value, parts = res
                    if not math.isfinite(loss_value):
                        raise NonFiniteLoss(
                            f"utterance {data[i].uid}: loss={loss_value} (epoch {epoch})"
                        )
                    loss_sum += loss_value
                    loss_count += 1
                    contributed += 1
                    if grads is None:
                        grads = [p.copy() for p in parts]
                    else:
                        for acc, p in zip(grads, parts):
                            acc += p
                if grads is None:
                    continue
                grads = [g / contributed for g in grads]
                norm = _global_norm(grads)
                if norm > cfg.grad_clip_norm:
                    factor = cfg.grad_clip_norm / norm
                    grads = [g * factor for g in grads]
                dw1, db1, dw2, db2, dg, dgs = grads
                model.w1 -= cfg.learning_rate * dw1
                model.b1 -= cfg.learning_rate * db1
                model.w2 -= cfg.learning_rate * dw2
                model.b2 -= cfg.learning_rate * db2
                trans.scores -= cfg.transition_lr * dg
                trans.start -= cfg.transition_lr * dgs
            ler = heldout_ler(model, trans, alphabet, heldout) if heldout else float("nan")
            history.append(EpochStats(
                epoch=epoch,
                mean_loss=loss_sum / loss_count if loss_count else float("nan"),
                heldout_ler=ler,
                beam_failures=beam_failures,
            ))
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return model, trans, history


def save_checkpoint(path, model: AcousticMLP, trans: Transitions, alphabet: Alphabet,
                    meta: Optional[dict] = None) -> None:
    payload = {
        "format": "asgkit-checkpoint-v1",
        "alphabet": {"letters": alphabet.letters, "rep_symbol": alphabet.rep_symbol},
        "model": {
            "w1": model.w1.tolist(),
            "b1": model.b1.tolist(),
            "w2": model.w2.tolist(),
            "b2": model.b2.tolist(),
        },
        "transitions": {
            "scores": trans.scores.tolist(),
            "start": trans.start.tolist(),
        },
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "asgkit-checkpoint-v1":
        raise ValueError(f"{path}: not an asgkit checkpoint")
    alphabet = Alphabet(
        letters=payload["alphabet"]["letters"],
        rep_symbol=payload["alphabet"]["rep_symbol"],
    )
    m = payload["model"]
    model = AcousticMLP(
        w1=np.asarray(m["w1"], dtype=np.float64),
        b1=np.asarray(m["b1"], dtype=np.float64),
        w2=np.asarray(m["w2"], dtype=np.float64),
        b2=np.asarray(m["b2"], dtype=np.float64),
    )
    trans = Transitions(
        np.asarray(payload["transitions"]["scores"], dtype=np.float64),
        np.asarray(payload["transitions"]["start"], dtype=np.float64),
    )
    return model, trans, alphabet, payload.get("meta", {})


def write_features(path, utterances: Sequence[Utterance]) -> None:
    """Text feature format: `<id> <T> <D>` header then T rows of D floats."""
    with open(path, "w", encoding="utf-8") as fh:
        for utt in utterances:
            t_frames, dim = utt.features.shape
            fh.write(f"{utt.uid} {t_frames} {dim}\n")
            for row in utt.features:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_features(path) -> list[tuple[str, np.ndarray]]:
    """Read a feature file, or a directory of feature files (sorted by name)."""
    p = Path(path)
    if p.is_dir():
        out = []
        for child in sorted(p.iterdir()):
            if child.is_file():
                out.extend(read_features(child))
        return out
    out = []
    with open(p, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{i + 1}: expected `<id> <T> <D>` header")
        uid, t_frames, dim = parts[0], int(parts[1]), int(parts[2])
        rows = lines[i + 1:i + 1 + t_frames]
        if len(rows) != t_frames:
            raise ValueError(f"{path}: truncated features for {uid}")
        feats = np.asarray([[float(x) for x in row.split()] for row in rows])
        if feats.shape != (t_frames, dim):
            raise ValueError(f"{path}: bad feature block for {uid}")
        out.append((uid, feats))
        i += 1 + t_frames
    return out
