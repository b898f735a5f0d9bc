"""Draft-verify decode loop with cycle accounting and an analytic cost model.

Each cycle drafts K tokens (or a token tree), scores the target at the K+1
positions needed for verification plus the bonus token, verifies, and commits.
The K+1 target scorings of a cycle are billed as ONE target pass — the
parallel-verification abstraction — so vanilla decoding costs one pass per
token while speculative decoding costs one pass plus K draft steps per cycle.
Simulated speedup is (committed * c_target) / (cycles * (c_target + K * c_draft)),
i.e. tau / (1 + K * c_draft / c_target); no wall-clock claims are made.

Cycles are atomic: decode stops after the first cycle that reaches max_tokens
committed, so the output can exceed max_tokens by up to K tokens. This keeps
tau exact (e.g. the K+1 ceiling with a perfectly aligned drafter).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .models import ScoringModel, build_draft_tree, draft_chain
from .verify import CycleResult, Decision, VerificationPolicy, verify_chain, verify_tree

DEFAULT_COST_RATIO = 0.05

# recorder(position, logits, chosen_draft, context) — see trace.TraceRecorder
Recorder = Callable[[int, np.ndarray, int | None, Sequence[int]], None]


@dataclass(frozen=True)
class CostModel:
    """Declared per-pass costs: c_target per parallel verification pass,
    c_draft per draft-token forward step."""

    c_target: float = 1.0
    c_draft: float = DEFAULT_COST_RATIO

    def __post_init__(self) -> None:
        if self.c_target <= 0:
            raise ValueError("c_target must be > 0")
        if self.c_draft < 0:
            raise ValueError("c_draft must be >= 0")


@dataclass(frozen=True)
class DecodeConfig:
    policy: VerificationPolicy
    k: int = 7
    max_tokens: int = 256
    temperature: float = 1.0
    seed: int = 0
    draft_mode: str = "greedy"
    stop_token: int | None = None
    mode: str = "chain"
    tree_top_k: int = 2

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.draft_mode not in ("greedy", "sample"):
            raise ValueError(f"unknown draft_mode {self.draft_mode!r}")
        if self.mode not in ("chain", "tree"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.tree_top_k < 1:
            raise ValueError("tree_top_k must be >= 1")


@dataclass
class DecodeMetrics:
    cycles: int
    total_committed: int
    tau: float
    exact_count: int
    relaxed_count: int
    rejected_count: int
    bonus_count: int
    target_passes: int
    draft_steps: int
    simulated_speedup: float
    agreement_rate: float | None = None


def simulated_speedup(total_committed: int, cycles: int, cost: CostModel, k: int) -> float:
    """Vanilla autoregressive cost over speculative cost under the declared model."""
    if cycles < 1:
        raise ValueError("speedup is undefined before the first cycle completes")
    return (total_committed * cost.c_target) / (cycles * (cost.c_target + k * cost.c_draft))


def agreement_rate(output_a: Sequence[int], output_b: Sequence[int]) -> float:
    """Positional token-match fraction over the shorter of the two sequences."""
    if len(output_a) == 0 or len(output_b) == 0:
        raise ValueError("agreement_rate needs non-empty sequences")
    n = min(len(output_a), len(output_b))
    hits = sum(1 for a, b in zip(output_a, output_b) if a == b)
    return hits / n


def greedy_decode(target: ScoringModel, prompt: Sequence[int], n_tokens: int) -> list[int]:
    """Plain autoregressive argmax decode of the target alone."""
    if len(prompt) == 0:
        raise ValueError("prompt must be non-empty")
    if n_tokens < 1:
        raise ValueError("n_tokens must be >= 1")
    ctx = list(prompt)
    out: list[int] = []
    for _ in range(n_tokens):
        out.append(int(np.argmax(target.score(ctx))))
        ctx.append(out[-1])
    return out


def _tally(metrics_counts: dict, result: CycleResult) -> None:
    for d in result.decisions:
        if d.label is Decision.EXACT:
            metrics_counts["exact"] += 1
        elif d.label is Decision.RELAXED:
            metrics_counts["relaxed"] += 1
        else:
            metrics_counts["rejected"] += 1
    if result.bonus_token is not None:
        metrics_counts["bonus"] += 1


def decode(
    target: ScoringModel,
    draft: ScoringModel,
    config: DecodeConfig,
    prompt: Sequence[int],
    cost: CostModel = CostModel(),
    recorder: Recorder | None = None,
    cycle_sink: list[CycleResult] | None = None,
) -> tuple[list[int], DecodeMetrics]:
    """Run the full draft-verify loop; returns (committed tokens, metrics).

    The returned sequence is the generated continuation (the prompt is not
    included). Fully deterministic given the models' seeds and config.seed.
    cycle_sink, when given, collects every cycle's CycleResult.
    """
    if len(prompt) == 0:
        raise ValueError("prompt must be non-empty")
    if target.vocab_size != draft.vocab_size:
        raise ValueError("target and draft must share a vocabulary")
    for tok in prompt:
        if not 0 <= tok < target.vocab_size:
            raise ValueError(f"prompt token {tok} out of vocabulary range")
    if recorder is not None and config.mode != "chain":
        raise ValueError("trace recording is only supported in chain mode")

    ctx = list(prompt)
    out: list[int] = []
    gen = np.random.default_rng(config.seed)
    counts = {"exact": 0, "relaxed": 0, "rejected": 0, "bonus": 0}
    cycles = 0
    draft_steps = 0
    position = 0
    done = False

    while not done and len(out) < config.max_tokens:
        if config.mode == "chain":
            drafted = draft_chain(
                draft, ctx, config.k, config.temperature, config.draft_mode, gen
            )
            vectors = [target.score(ctx + drafted[:i]) for i in range(config.k + 1)]
            if recorder is not None:
                for i in range(config.k + 1):
                    chosen = drafted[i] if i < config.k else None
                    recorder(position + i, vectors[i], chosen, ctx + drafted[:i])
            result = verify_chain(
                drafted, vectors[: config.k], config.policy, bonus_logits=vectors[config.k]
            )
            draft_steps += config.k
            position += config.k + 1
        else:
            tree = build_draft_tree(draft, ctx, config.tree_top_k, config.k)
            result = verify_tree(tree, target, ctx, config.policy)
            draft_steps += sum(
                config.tree_top_k**d for d in range(1, config.k + 1)
            )

        if cycle_sink is not None:
            cycle_sink.append(result)
        committed = list(result.committed_tokens)
        if config.stop_token is not None and config.stop_token in committed:
            committed = committed[: committed.index(config.stop_token) + 1]
            done = True
        cycles += 1
        _tally(counts, result)
        ctx.extend(committed)
        out.extend(committed)

    speedup = simulated_speedup(len(out), cycles, cost, config.k)
    metrics = DecodeMetrics(
        cycles=cycles,
        total_committed=len(out),
        tau=len(out) / cycles,
        exact_count=counts["exact"],
        relaxed_count=counts["relaxed"],
        rejected_count=counts["rejected"],
        bonus_count=counts["bonus"],
        target_passes=cycles,
        draft_steps=draft_steps,
        simulated_speedup=speedup,
    )
    return out, metrics


def with_agreement(metrics: DecodeMetrics, rate: float) -> DecodeMetrics:
    if not 0.0 <= rate <= 1.0:
        raise ValueError("agreement rate must be in [0, 1]")
    return replace(metrics, agreement_rate=rate)
