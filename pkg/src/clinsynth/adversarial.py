"""Adversarial sequence training: categorical generator vs. n-gram logistic
discriminator, with REINFORCE updates and an exact enumeration oracle."""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import serialize
from .ngram import NGramModel, score_perplexity, train_ngram
from .preprocess import BOS, EOS, TokenSequence, build_vocabulary

TokenContext = tuple[str, ...]

ENUMERATION_GUARD = 1_000_000


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


@dataclass
class CategoricalGenerator:
    """Sequence policy: one logit vector over the alphabet per context.

    The context is the previous order-1 tokens, left-padded with a start
    marker; unseen contexts default to zero logits (uniform). When
    ``end_token`` is set, drawing it terminates the sequence early.
    """

    tokens: tuple[str, ...]
    order: int = 1
    max_length: int = 16
    end_token: str | None = None
    logits: dict[TokenContext, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("generator tokens must be unique")
        if self.end_token is not None and self.end_token not in self.tokens:
            raise ValueError("end_token must be one of the generator tokens")
        self._index = {t: i for i, t in enumerate(self.tokens)}

    def start_context(self) -> TokenContext:
        return (BOS,) * (self.order - 1)

    def shift_context(self, context: TokenContext, token: str) -> TokenContext:
        if self.order == 1:
            return ()
        return (context + (token,))[-(self.order - 1):]

    def logit_vector(self, context: TokenContext) -> np.ndarray:
        vec = self.logits.get(context)
        if vec is None:
            return np.zeros(len(self.tokens))
        return vec

    def distribution(self, context: TokenContext) -> np.ndarray:
        return _softmax(self.logit_vector(context))

    def copy(self) -> "CategoricalGenerator":
        return replace(self, logits={c: v.copy() for c, v in self.logits.items()})


@dataclass(frozen=True)
class SampledSequence:
    tokens: tuple[str, ...]
    log_prob: float
    steps: tuple[tuple[TokenContext, int], ...]  # (context, chosen token index)


def _sample_one(generator: CategoricalGenerator, rng: random.Random) -> SampledSequence:
    context = generator.start_context()
    tokens: list[str] = []
    steps: list[tuple[TokenContext, int]] = []
    log_prob = 0.0
    for _ in range(generator.max_length):
        dist = generator.distribution(context)
        r = rng.random()
        acc = 0.0
        idx = len(dist) - 1
        for i, p in enumerate(dist):
            acc += p
            if r < acc:
                idx = i
                break
        steps.append((context, idx))
        log_prob += math.log(dist[idx])
        token = generator.tokens[idx]
        if token == generator.end_token:
            break
        tokens.append(token)
        context = generator.shift_context(context, token)
    return SampledSequence(tokens=tuple(tokens), log_prob=log_prob, steps=tuple(steps))


def generator_sample(
    generator: CategoricalGenerator, seed: int, n: int
) -> list[SampledSequence]:
    """Draw n sequences with per-sequence log probabilities; seeded and deterministic."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    return [_sample_one(generator, rng) for _ in range(n)]


def _discriminator_features(tokens: Sequence[str], order: int) -> Counter:
    padded = [BOS] * (order - 1) + list(tokens) + [EOS]
    return Counter(tuple(padded[i : i + order]) for i in range(len(padded) - order + 1))


@dataclass
class Discriminator:
    """Logistic classifier over padded n-gram count features."""

    feature_order: int = 2
    weights: dict[tuple[str, ...], float] = field(default_factory=dict)
    bias: float = 0.0

    def score(self, tokens: Sequence[str]) -> float:
        feats = _discriminator_features(tokens, self.feature_order)
        z = self.bias + sum(self.weights.get(k, 0.0) * v for k, v in feats.items())
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)

    def copy(self) -> "Discriminator":
        return Discriminator(self.feature_order, dict(self.weights), self.bias)


def discriminator_step(
    discriminator: Discriminator,
    real: Sequence[TokenSequence],
    fake: Sequence[TokenSequence],
    learning_rate: float,
) -> tuple[Discriminator, float]:
    """One mean-gradient descent step on binary cross-entropy; returns the
    updated discriminator and the pre-step loss."""
    if not real or not fake:
        raise ValueError("both batches must be nonempty")
    updated = discriminator.copy()
    grads: dict[tuple[str, ...], float] = {}
    grad_bias = 0.0
    loss = 0.0
    batch = [(seq, 1.0) for seq in real] + [(seq, 0.0) for seq in fake]
    for tokens, label in batch:
        feats = _discriminator_features(tokens, discriminator.feature_order)
        score = discriminator.score(tokens)
        loss -= label * math.log(max(score, 1e-300)) + (1 - label) * math.log(
            max(1.0 - score, 1e-300)
        )
        err = score - label
        for key, value in feats.items():
            grads[key] = grads.get(key, 0.0) + err * value
        grad_bias += err
    n = len(batch)
    for key, grad in grads.items():
        delta = learning_rate * grad / n
        if delta != 0.0:
            updated.weights[key] = updated.weights.get(key, 0.0) - delta
    updated.bias -= learning_rate * grad_bias / n
    return updated, loss / n


def reinforce_step(
    generator: CategoricalGenerator,
    samples: Sequence[SampledSequence],
    rewards: Sequence[float],
    learning_rate: float,
    baseline: bool = True,
) -> CategoricalGenerator:
    """Ascend the REINFORCE estimate sum_i (R_i - b) * grad log p(sequence_i).

    The gradient of log p at a visited (context, choice) step is the one-hot
    choice vector minus the softmax of that context's current logits. With
    the mean-reward baseline enabled, a batch of equal rewards is a no-op.
    """
    if len(samples) != len(rewards):
        raise ValueError("need exactly one reward per sampled sequence")
    if any(not math.isfinite(r) for r in rewards):
        raise ValueError("rewards must be finite")
    if baseline:
        # the mean of identical rewards is that reward exactly, so a
        # zero-variance batch is a guaranteed no-op
        b = rewards[0] if all(r == rewards[0] for r in rewards) \
            else sum(rewards) / len(rewards)
    else:
        b = 0.0
    grad: dict[TokenContext, np.ndarray] = {}
    for sample, reward in zip(samples, rewards):
        advantage = reward - b
        if advantage == 0.0:
            continue
        for context, choice in sample.steps:
            vec = grad.get(context)
            if vec is None:
                vec = np.zeros(len(generator.tokens))
                grad[context] = vec
            vec -= advantage * generator.distribution(context)
            vec[choice] += advantage
    updated = generator.copy()
    for context, vec in grad.items():
        updated.logits[context] = updated.logit_vector(context) + learning_rate * vec
    return updated


def exact_expected_reward(
    generator: CategoricalGenerator,
    reward_fn: Callable[[tuple[str, ...]], float],
    max_length: int | None = None,
) -> tuple[float, dict[TokenContext, np.ndarray]]:
    """Enumerate every sequence up to max_length: exact E[R] and its logit gradient.

    grad E[R] = sum_s p(s) R(s) grad log p(s), accumulated per context.
    Guarded to |alphabet|^max_length <= 1e6 enumerable sequences.
    """
    length = generator.max_length if max_length is None else max_length
    if len(generator.tokens) ** length > ENUMERATION_GUARD:
        raise ValueError(
            f"enumeration of {len(generator.tokens)}^{length} sequences exceeds the guard"
        )
    expected = 0.0
    grad: dict[TokenContext, np.ndarray] = {}

    def accumulate(prob: float, tokens: tuple[str, ...],
                   steps: list[tuple[TokenContext, int]]) -> None:
        nonlocal expected
        reward = reward_fn(tokens)
        weighted = prob * reward
        expected += weighted
        if weighted == 0.0:
            return
        for context, choice in steps:
            vec = grad.get(context)
            if vec is None:
                vec = np.zeros(len(generator.tokens))
                grad[context] = vec
            vec -= weighted * generator.distribution(context)
            vec[choice] += weighted

    def recurse(context: TokenContext, prob: float, tokens: tuple[str, ...],
                steps: list[tuple[TokenContext, int]], depth: int) -> None:
        if depth == length:
            accumulate(prob, tokens, steps)
            return
        dist = generator.distribution(context)
        for idx, token in enumerate(generator.tokens):
            p = prob * dist[idx]
            steps.append((context, idx))
            if token == generator.end_token:
                accumulate(p, tokens, steps)
            else:
                recurse(generator.shift_context(context, token), p, tokens + (token,),
                        steps, depth + 1)
            steps.pop()

    recurse(generator.start_context(), 1.0, (), [], 0)
    return expected, grad


@dataclass(frozen=True)
class GanConfig:
    epochs: int = 30
    batch_size: int = 32
    d_steps: int = 2
    g_steps: int = 2
    d_learning_rate: float = 0.5
    g_learning_rate: float = 0.15
    generator_order: int = 2
    discriminator_order: int = 2
    max_length: int = 16
    baseline: bool = True
    nll_order: int = 2
    nll_alpha: float = 0.01
    eval_samples: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1 or self.eval_samples < 1:
            raise ValueError("batch sizes must be >= 1")


@dataclass
class GanTrainState:
    generator: CategoricalGenerator
    discriminator: Discriminator
    generator_losses: list[float]
    discriminator_losses: list[float]
    nll_rewards: list[float]
    config: GanConfig

    def __post_init__(self):
        lengths = {len(self.generator_losses), len(self.discriminator_losses),
                   len(self.nll_rewards)}
        if len(lengths) != 1:
            raise ValueError("curve lengths must all equal the number of epochs run")


def _mean_nll(model: NGramModel, sequences: Sequence[TokenSequence]) -> float:
    # per-token mean negative log-likelihood; log of perplexity
    return math.log(score_perplexity(model, sequences))


def train_adversarial(
    real_sequences: Iterable[TokenSequence], config: GanConfig = GanConfig()
) -> GanTrainState:
    """Alternate discriminator and REINFORCE generator steps.

    The generator's reward is the discriminator's score of each sampled
    sequence. Per epoch the state logs mean -log D(fake), the mean
    discriminator loss, and the mean negative log-likelihood of generator
    samples under a frozen n-gram model of the real corpus. Fully
    deterministic for a given config (the seed lives in the config).
    """
    real = [list(s) for s in real_sequences]
    if not real:
        raise ValueError("real corpus must be nonempty")
    rng = random.Random(config.seed)

    alphabet = sorted({t for seq in real for t in seq})
    if not alphabet:
        raise ValueError("real corpus has no tokens")
    generator = CategoricalGenerator(
        tokens=tuple(alphabet) + (EOS,),
        order=config.generator_order,
        max_length=config.max_length,
        end_token=EOS,
    )
    discriminator = Discriminator(feature_order=config.discriminator_order)

    vocabulary = build_vocabulary(real)
    reference_lm = train_ngram(real, config.nll_order, config.nll_alpha, vocabulary)

    generator_losses: list[float] = []
    discriminator_losses: list[float] = []
    nll_rewards: list[float] = []

    for _ in range(config.epochs):
        epoch_d_losses = []
        for _ in range(config.d_steps):
            fake = [list(_sample_one(generator, rng).tokens) for _ in range(config.batch_size)]
            real_batch = [real[rng.randrange(len(real))] for _ in range(config.batch_size)]
            discriminator, d_loss = discriminator_step(
                discriminator, real_batch, fake, config.d_learning_rate
            )
            epoch_d_losses.append(d_loss)
        for _ in range(config.g_steps):
            samples = [_sample_one(generator, rng) for _ in range(config.batch_size)]
            rewards = [discriminator.score(s.tokens) for s in samples]
            generator = reinforce_step(
                generator, samples, rewards, config.g_learning_rate, config.baseline
            )
        eval_samples = [_sample_one(generator, rng) for _ in range(config.eval_samples)]
        generator_losses.append(
            -sum(math.log(max(discriminator.score(s.tokens), 1e-300))
                 for s in eval_samples) / len(eval_samples)
        )
        discriminator_losses.append(sum(epoch_d_losses) / len(epoch_d_losses))
        nll_rewards.append(_mean_nll(reference_lm, [list(s.tokens) for s in eval_samples]))

    return GanTrainState(
        generator=generator,
        discriminator=discriminator,
        generator_losses=generator_losses,
        discriminator_losses=discriminator_losses,
        nll_rewards=nll_rewards,
        config=config,
    )


def export_curves(state: GanTrainState, path: str | Path) -> None:
    """CSV of the per-epoch loss and reward curves for external plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,gen_loss,disc_loss,nll_reward\n")
        rows = zip(state.generator_losses, state.discriminator_losses, state.nll_rewards)
        for epoch, (g, d, r) in enumerate(rows):
            fh.write(f"{epoch},{g!r},{d!r},{r!r}\n")


def save_gan(state: GanTrainState, path: str | Path) -> None:
    config = state.config
    payload = {
        "tokens": list(state.generator.tokens),
        "generator_order": state.generator.order,
        "max_length": state.generator.max_length,
        "end_token": state.generator.end_token,
        "logits": {
            serialize.join_context(ctx): [float(x) for x in vec]
            for ctx, vec in sorted(state.generator.logits.items())
        },
        "discriminator_order": state.discriminator.feature_order,
        "discriminator_weights": {
            serialize.join_context(key): value
            for key, value in sorted(state.discriminator.weights.items())
        },
        "discriminator_bias": state.discriminator.bias,
        "curves": {
            "gen_loss": state.generator_losses,
            "disc_loss": state.discriminator_losses,
            "nll_reward": state.nll_rewards,
        },
        "config": {
            "epochs": config.epochs, "batch_size": config.batch_size,
            "d_steps": config.d_steps, "g_steps": config.g_steps,
            "d_learning_rate": config.d_learning_rate,
            "g_learning_rate": config.g_learning_rate,
            "generator_order": config.generator_order,
            "discriminator_order": config.discriminator_order,
            "max_length": config.max_length, "baseline": config.baseline,
            "nll_order": config.nll_order, "nll_alpha": config.nll_alpha,
            "eval_samples": config.eval_samples, "seed": config.seed,
        },
    }
    serialize.dump_model("gan", payload, path)


def load_gan(path: str | Path) -> GanTrainState:
    doc = serialize.load_model(path, kind="gan")
    generator = CategoricalGenerator(
        tokens=tuple(doc["tokens"]),
        order=doc["generator_order"],
        max_length=doc["max_length"],
        end_token=doc["end_token"],
        logits={
            serialize.split_context(key): np.asarray(vec, dtype=float)
            for key, vec in doc["logits"].items()
        },
    )
    discriminator = Discriminator(
        feature_order=doc["discriminator_order"],
        weights={
            serialize.split_context(key): value
            for key, value in doc["discriminator_weights"].items()
        },
        bias=doc["discriminator_bias"],
    )
    return GanTrainState(
        generator=generator,
        discriminator=discriminator,
        generator_losses=list(doc["curves"]["gen_loss"]),
        discriminator_losses=list(doc["curves"]["disc_loss"]),
        nll_rewards=list(doc["curves"]["nll_reward"]),
        config=GanConfig(**doc["config"]),
    )
