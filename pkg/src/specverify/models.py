"""Deterministic seeded synthetic scoring models.

The target is an order-m hash-table model: the last m context tokens plus the
seed select a PCG64 stream, and the per-token scores are Gumbel-shaped draws
scaled by `logit_spread` and shifted by `logit_offset`. The Gumbel shape gives
the top-2 gap enough dispersion that, at the default constants, roughly a
third of steps land in the r > 0.9 relaxation zone while the top-1 logit
stays positive, around 10.

The draft model adds seeded Gaussian noise of scale sigma to the target's
logits; sigma = 0 reproduces the target exactly and larger sigma degrades
alignment monotonically. Everything is a pure function of declared seeds.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .logits import softmax
from .verify import TreeNode

DEFAULT_VOCAB_SIZE = 64
DEFAULT_ORDER = 2
DEFAULT_LOGIT_OFFSET = 0.5
DEFAULT_LOGIT_SPREAD = 2.0
DEFAULT_NOISE_SCALE = 0.5

_TARGET_SALT = 0x54474554  # "TGET"
_DRAFT_SALT = 0x44524654  # "DRFT"


class ScoringModel(Protocol):
    """Anything that scores a context into a logit vector over a fixed vocabulary."""

    @property
    def vocab_size(self) -> int: ...

    @property
    def order(self) -> int: ...

    def score(self, context: Sequence[int]) -> np.ndarray: ...


@dataclass(frozen=True)
class SyntheticTargetConfig:
    seed: int
    vocab_size: int = DEFAULT_VOCAB_SIZE
    order: int = DEFAULT_ORDER
    logit_offset: float = DEFAULT_LOGIT_OFFSET
    logit_spread: float = DEFAULT_LOGIT_SPREAD

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.logit_spread <= 0:
            raise ValueError("logit_spread must be > 0")


@dataclass(frozen=True)
class PerturbedDraftConfig:
    noise_seed: int
    noise_scale: float = DEFAULT_NOISE_SCALE

    def __post_init__(self) -> None:
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")


def window_rng(seed: int, window: Sequence[int], salt: int) -> np.random.Generator:
    """PCG64 stream keyed by (seed, salt, token window) via blake2b.

    Stable across platforms and processes; never uses Python's salted hash().
    """
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<qq", seed, salt))
    h.update(struct.pack(f"<{len(window)}q", *window))
    return np.random.Generator(np.random.PCG64(int.from_bytes(h.digest(), "little")))


def _check_context(context: Sequence[int], vocab_size: int) -> None:
    for tok in context:
        if not 0 <= tok < vocab_size:
            raise ValueError(f"context token {tok} out of vocabulary range [0, {vocab_size})")


class SyntheticTargetModel:
    """Order-m seeded table model emitting Gumbel-shaped logits."""

    def __init__(self, config: SyntheticTargetConfig):
        self.config = config

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    @property
    def order(self) -> int:
        return self.config.order

    def score(self, context: Sequence[int]) -> np.ndarray:
        cfg = self.config
        _check_context(context, cfg.vocab_size)
        window = tuple(context[-cfg.order :])
        rng = window_rng(cfg.seed, window, _TARGET_SALT)
        u = np.maximum(rng.random(cfg.vocab_size), 1e-12)
        gumbel = -np.log(-np.log(u))
        return cfg.logit_offset + cfg.logit_spread * gumbel


class PerturbedDraftModel:
    """Draft model: target logits plus seeded Gaussian noise of scale sigma."""

    def __init__(self, target: SyntheticTargetModel, config: PerturbedDraftConfig):
        self.target = target
        self.config = config

    @property
    def vocab_size(self) -> int:
        return self.target.vocab_size

    @property
    def order(self) -> int:
        return self.target.order

    def score(self, context: Sequence[int]) -> np.ndarray:
        z = self.target.score(context)
        if self.config.noise_scale == 0:
            return z
        window = tuple(context[-self.order :])
        rng = window_rng(self.config.noise_seed, window, _DRAFT_SALT)
        return z + self.config.noise_scale * rng.standard_normal(self.vocab_size)


class AdversarialDraftModel:
    """Drafter that always proposes the target's third-ranked token.

    Every proposal falls outside the target top-2, so every cycle is rejected
    at position 1 and tau pins to its floor of 1.0.
    """

    def __init__(self, target: SyntheticTargetModel):
        if target.vocab_size < 3:
            raise ValueError("adversarial drafter needs vocab_size >= 3")
        self.target = target

    @property
    def vocab_size(self) -> int:
        return self.target.vocab_size

    @property
    def order(self) -> int:
        return self.target.order

    def score(self, context: Sequence[int]) -> np.ndarray:
        z = self.target.score(context)
        order = np.lexsort((np.arange(z.size), -z))
        out = np.zeros_like(z)
        out[order[2]] = 1.0
        return out


def draft_chain(
    model: ScoringModel,
    context: Sequence[int],
    k: int,
    temperature: float = 1.0,
    mode: str = "greedy",
    rng: int | np.random.Generator | None = None,
) -> list[int]:
    """Autoregressively draft k tokens from the model.

    mode "greedy" takes the argmax at each step; mode "sample" draws from
    softmax(logits, temperature) using the given seed or generator, fully
    reproducibly.
    """
    if k < 1:
        raise ValueError(f"draft length k must be >= 1, got {k}")
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown draft mode {mode!r}")
    gen = np.random.default_rng(rng) if mode == "sample" else None
    ctx = list(context)
    out: list[int] = []
    for _ in range(k):
        z = model.score(ctx)
        if mode == "greedy":
            tok = int(np.argmax(z))
        else:
            p = softmax(z, temperature)
            tok = int(gen.choice(p.size, p=p))
        out.append(tok)
        ctx.append(tok)
    return out


def build_draft_tree(
    model: ScoringModel,
    context: Sequence[int],
    branching: int,
    depth: int,
) -> list[TreeNode]:
    """Draft a full branching^depth token tree of the model's top candidates.

    Children at each node are the top-`branching` tokens (logit-descending,
    ties by smallest id), so the first-child path is the greedy chain.
    """
    if branching < 1:
        raise ValueError("branching must be >= 1")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if branching**depth > 200_000:
        raise ValueError(f"tree of {branching}^{depth} nodes is too large to draft")

    def expand(ctx: list[int], level: int) -> tuple[TreeNode, ...]:
        if level == 0:
            return ()
        z = model.score(ctx)
        order = np.lexsort((np.arange(z.size), -z))
        nodes = []
        for tok in order[:branching]:
            tok = int(tok)
            nodes.append(TreeNode(tok, expand(ctx + [tok], level - 1)))
        return tuple(nodes)

    return list(expand(list(context), depth))
