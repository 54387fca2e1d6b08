"""Randomized verification suites: fast paths against exhaustive oracles.

Shared by the test suite and the `oraclecheck` / `gradcheck` commands so
the acceptance checks are user-runnable. Every generator is driven by a
seeded Generator; results carry the worst observed error so callers can
compare against their own tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import asg, beam, noise, oracle
from .errors import EmptyBeam
from .numerics import finite_diff_check
from .tokens import Alphabet


@dataclass
class CheckResult:
    name: str
    instances: int
    worst: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name:<20} instances={self.instances:<6} "
                f"worst={self.worst:.3e} tol={self.tolerance:.0e} {status}")


def random_asg_instance(rng: np.random.Generator, max_frames=6, max_tokens=4, max_length=4):
    t_frames = int(rng.integers(1, max_frames + 1))
    v = int(rng.integers(2, max_tokens + 1))
    em = rng.normal(0.0, 1.0, (t_frames, v))
    trans = asg.Transitions(rng.normal(0.0, 1.0, (v, v)), rng.normal(0.0, 1.0, v))
    length = int(rng.integers(1, min(t_frames, max_length) + 1))
    tokens = [int(rng.integers(0, v))]
    while len(tokens) < length:
        nxt = int(rng.integers(0, v))
        if nxt != tokens[-1]:
            tokens.append(nxt)
    return np.asarray(tokens), em, trans


def random_noise_model(rng: np.random.Generator, letters: str,
                       zero_fraction: float = 0.3) -> noise.NoiseModel:
    """Column-stochastic model with a controllable share of exact zeros."""
    n = len(letters)
    raw = rng.uniform(0.05, 1.0, (n + 1, n + 1))
    mask = rng.random((n + 1, n + 1)) < zero_fraction
    raw[mask] = 0.0
    for c in range(n + 1):
        raw[c, c] += 0.5  # keep every column feasible
    raw /= raw.sum(axis=0, keepdims=True)
    return noise.NoiseModel(tuple(letters), raw)


def random_text(rng: np.random.Generator, letters: str, max_len: int, min_len: int = 1) -> str:
    """Random string without triple letters (so it is always encodable)."""
    n = int(rng.integers(min_len, max_len + 1))
    out: list[str] = []
    while len(out) < n:
        ch = letters[int(rng.integers(len(letters)))]
        if len(out) >= 2 and out[-1] == ch and out[-2] == ch:
            continue
        out.append(ch)
    return "".join(out)


def random_beam_instance(rng: np.random.Generator, letters="ab", max_frames=5,
                         max_noisy=3, zero_fraction=0.25):
    alphabet = Alphabet(letters=letters, rep_symbol="2")
    v = alphabet.size
    t_frames = int(rng.integers(1, max_frames + 1))
    em = rng.normal(0.0, 1.0, (t_frames, v))
    trans = asg.Transitions(rng.normal(0.0, 1.0, (v, v)), rng.normal(0.0, 1.0, v))
    nm = random_noise_model(rng, letters, zero_fraction)
    text = random_text(rng, letters, max_noisy)
    noisy_tokens = alphabet.encode(text)
    return noisy_tokens, em, trans, nm, alphabet


def check_asg_oracle(instances: int, seed: int) -> list[CheckResult]:
    """Normalizer and constrained score against exhaustive enumeration."""
    rng = np.random.default_rng(seed)
    worst_z = 0.0
    worst_s = 0.0
    for _ in range(instances):
        tokens, em, trans = random_asg_instance(rng)
        worst_z = max(worst_z, abs(
            asg.normalizer(em, trans) - oracle.exhaustive_normalizer(em, trans)
        ))
        worst_s = max(worst_s, abs(
            asg.constrained_score(tokens, em, trans)
            - oracle.exhaustive_constrained_score(tokens, em, trans)
        ))
    return [
        CheckResult("asg-normalizer", instances, worst_z, 1e-9),
        CheckResult("asg-constrained", instances, worst_s, 1e-9),
    ]


def check_noise_oracle(instances: int, seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    letters = "abc"
    worst = 0.0
    for _ in range(instances):
        nm = random_noise_model(rng, letters)
        clean = random_text(rng, letters, 6)
        noisy = random_text(rng, letters, 6, min_len=0)
        got = noise.log_likelihood(noisy, clean, nm)
        want = oracle.exhaustive_noise_likelihood(noisy, clean, nm)
        if got == want:  # both may be -inf
            continue
        worst = max(worst, abs(got - want))
    return [CheckResult("noise-likelihood", instances, worst, 1e-12)]


def check_beam_oracle(instances: int, seed: int) -> list[CheckResult]:
    """Exhaustive-width beam against triple enumeration, alpha in {0, .5, 1}."""
    rng = np.random.default_rng(seed)
    alphas = (0.0, 0.5, 1.0)
    worst = 0.0
    for k in range(instances):
        noisy_tokens, em, trans, nm, alphabet = random_beam_instance(rng)
        alpha = alphas[k % len(alphas)]
        cfg = beam.BeamConfig(
            beam_size=beam.exhaustive_beam_size(len(alphabet.decode(noisy_tokens)), alphabet),
            alpha=alpha,
        )
        want = oracle.exhaustive_noisy_score(
            noisy_tokens, em, trans, nm, alphabet, alpha,
            limit=oracle.EnumLimit(max_frames=6, max_tokens=4, max_length=6),
        )
        try:
            got = beam.beam_score(noisy_tokens, em, trans, nm, alphabet, cfg)
        except EmptyBeam:
            got = float("-inf")
        if got == want:  # including both infeasible
            continue
        worst = max(worst, abs(got - want))
    return [CheckResult("beam-vs-oracle", instances, worst, 1e-9)]


def check_beam_monotonic(instances: int, seed: int) -> list[CheckResult]:
    """Score must be non-decreasing in N and reach the oracle at the top N."""
    rng = np.random.default_rng(seed)
    worst_mono = 0.0
    worst_gap = 0.0
    sizes = [1, 2, 4, 8, 16, 32, 64, 128, 256]
    for _ in range(instances):
        noisy_tokens, em, trans, nm, alphabet = random_beam_instance(rng)
        want = oracle.exhaustive_noisy_score(
            noisy_tokens, em, trans, nm, alphabet, 0.5,
            limit=oracle.EnumLimit(max_frames=6, max_tokens=4, max_length=6),
        )
        prev = None
        for n in sizes:
            try:
                got = beam.beam_score(
                    noisy_tokens, em, trans, nm, alphabet,
                    beam.BeamConfig(beam_size=n, alpha=0.5),
                )
            except EmptyBeam:
                got = float("-inf")
            if prev is not None and got > float("-inf"):
                worst_mono = max(worst_mono, prev - got)
            prev = got
        if prev == float("-inf") and want == float("-inf"):
            continue
        worst_gap = max(worst_gap, abs(prev - want))
    return [
        CheckResult("beam-monotonic", instances, worst_mono, 1e-12),
        CheckResult("beam-converges", instances, worst_gap, 1e-9),
    ]


def _pack(em, trans):
    return np.concatenate([em.ravel(), trans.scores.ravel(), trans.start])


def _unpack(params, t_frames, v):
    em = params[: t_frames * v].reshape(t_frames, v)
    g = params[t_frames * v: t_frames * v + v * v].reshape(v, v)
    gs = params[t_frames * v + v * v:]
    return em, asg.Transitions(g.copy(), gs.copy())


def _gradcheck_one(loss_fn: Callable, tokens, em, trans, step=1e-5) -> float:
    t_frames, v = em.shape
    res = loss_fn(tokens, em, trans)
    analytic = np.concatenate([
        res.grad_emissions.ravel(),
        res.grad_transitions.ravel(),
        res.grad_start,
    ])

    def scalar(params):
        em2, trans2 = _unpack(params, t_frames, v)
        return loss_fn(tokens, em2, trans2).loss

    return finite_diff_check(scalar, _pack(em, trans), analytic, step=step)


def check_asg_gradients(instances: int, seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        tokens, em, trans = random_asg_instance(rng, max_frames=4, max_tokens=3, max_length=3)
        worst = max(worst, _gradcheck_one(asg.asg_loss, tokens, em, trans))
    return [CheckResult("asg-gradients", instances, worst, 1e-4)]


def check_beam_gradients(instances: int, seed: int) -> list[CheckResult]:
    """Finite-difference check with an exhaustive beam (no pruning kinks)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        noisy_tokens, em, trans, nm, alphabet = random_beam_instance(
            rng, max_frames=4, max_noisy=3
        )
        cfg = beam.BeamConfig(
            beam_size=beam.exhaustive_beam_size(len(alphabet.decode(noisy_tokens)), alphabet),
            alpha=0.5,
        )

        def loss_fn(tokens, em2, trans2):
            return beam.noisy_asg_loss(tokens, em2, trans2, nm, alphabet, cfg)

        try:
            err = _gradcheck_one(loss_fn, noisy_tokens, em, trans)
        except EmptyBeam:  # infeasible draw (noisy longer than the frame budget)
            continue
        worst = max(worst, err)
    return [CheckResult("beam-gradients", instances, worst, 1e-4)]


def check_reduction(instances: int, seed: int) -> list[CheckResult]:
    """Identity noise model: the noise-aware loss must equal the ASG loss."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        alphabet = Alphabet(letters="abc", rep_symbol="2")
        text = random_text(rng, "abc", 4)
        tokens = alphabet.encode(text)
        t_frames = int(rng.integers(len(tokens), 7))
        em = rng.normal(0.0, 1.0, (t_frames, alphabet.size))
        trans = asg.Transitions(
            rng.normal(0.0, 1.0, (alphabet.size, alphabet.size)),
            rng.normal(0.0, 1.0, alphabet.size),
        )
        nm = noise.NoiseModel.identity(tuple("abc"))
        cfg = beam.BeamConfig(
            beam_size=beam.exhaustive_beam_size(len(text), alphabet), alpha=0.7
        )
        got = beam.noisy_asg_loss(tokens, em, trans, nm, alphabet, cfg)
        want = asg.asg_loss(tokens, em, trans)
        worst = max(worst, abs(got.loss - want.loss))
        worst = max(worst, float(np.max(np.abs(got.grad_emissions - want.grad_emissions))))
        worst = max(worst, float(np.max(np.abs(got.grad_transitions - want.grad_transitions))))
        worst = max(worst, float(np.max(np.abs(got.grad_start - want.grad_start))))
    return [CheckResult("identity-reduction", instances, worst, 1e-9)]


def run_oracle_suite(instances: int, seed: int) -> list[CheckResult]:
    results = []
    results += check_asg_oracle(instances, seed)
    results += check_noise_oracle(instances, seed + 1)
    results += check_beam_oracle(max(1, instances // 5), seed + 2)
    results += check_beam_monotonic(max(1, instances // 10), seed + 3)
    return results


def run_gradient_suite(instances: int, seed: int) -> list[CheckResult]:
    results = []
    results += check_asg_gradients(instances, seed)
    results += check_beam_gradients(instances, seed + 1)
    results += check_reduction(instances, seed + 2)
    return results
