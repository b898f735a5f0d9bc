"""Verification policies for drafted tokens: strict exact-match and margin-aware.

A cycle verifies K drafted tokens against the target's per-position logits,
scanning left to right:

  * exact match  — the draft equals the target top-1: accept.
  * relaxed      — margin-aware only: the draft equals the target top-2 and
                   the logit ratio exceeds theta: accept the runner-up.
  * rejected     — anything else: emit the target top-1 as correction and
                   discard the rest of the draft.

If all K positions are accepted, a bonus token (argmax of a (K+1)-th target
vector supplied by the caller) is appended, so a cycle commits between 1 and
K+1 tokens. Margin-aware with theta = 1.0 is decision-identical to strict,
because the ratio never exceeds 1.

A simplified greedy-path tree verifier is also provided. Its semantics are an
extension beyond the chain rule: at each depth the exact-match child is
strictly preferred over a relaxed child, and among duplicate-token children
the first in canonical child order wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .logits import TopTwo, adaptive_margin_check, top_two

DEFAULT_THETA = 0.9


class Decision(str, Enum):
    EXACT = "exact"
    RELAXED = "relaxed"
    REJECTED = "rejected"


@dataclass(frozen=True)
class VerificationPolicy:
    """Verification rule: kind "strict" or "margin", with relaxation threshold theta."""

    kind: str
    theta: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("strict", "margin"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must be in (0, 1], got {self.theta}")

    @classmethod
    def strict(cls) -> "VerificationPolicy":
        return cls(kind="strict")

    @classmethod
    def margin_aware(cls, theta: float = DEFAULT_THETA) -> "VerificationPolicy":
        return cls(kind="margin", theta=theta)


@dataclass(frozen=True)
class PositionDecision:
    label: Decision
    draft_token: int
    emitted_token: int
    ratio: float | None


@dataclass(frozen=True)
class CycleResult:
    """Outcome of one draft-verify cycle.

    committed_tokens = accepted drafts, plus either the correction token (on
    rejection) or the bonus token (on full acceptance); always accepted + 1
    when a bonus source is available.
    """

    decisions: tuple[PositionDecision, ...]
    committed_tokens: tuple[int, ...]
    bonus_token: int | None
    accepted_count: int


def decide_position(top: TopTwo, draft_token: int, policy: VerificationPolicy) -> PositionDecision:
    """Apply the three-branch rule to a single position."""
    if draft_token == top.v1:
        return PositionDecision(Decision.EXACT, draft_token, draft_token, top.ratio)
    if (
        policy.kind == "margin"
        and draft_token == top.v2
        and adaptive_margin_check(top, policy.theta)
    ):
        return PositionDecision(Decision.RELAXED, draft_token, draft_token, top.ratio)
    return PositionDecision(Decision.REJECTED, draft_token, top.v1, top.ratio)


def verify_top_two_chain(
    draft: Sequence[int],
    top_twos: Sequence[TopTwo],
    policy: VerificationPolicy,
    bonus_top1: int | None = None,
) -> CycleResult:
    """Chain verification given precomputed per-position top-2 statistics.

    This is the decision core shared by live verification (full logit
    vectors) and trace replay (recorded top-k).
    """
    if len(draft) != len(top_twos):
        raise ValueError(
            f"draft length {len(draft)} != target positions {len(top_twos)}"
        )
    if len(draft) == 0:
        raise ValueError("cannot verify an empty draft")
    decisions: list[PositionDecision] = []
    committed: list[int] = []
    for tok, top in zip(draft, top_twos):
        d = decide_position(top, int(tok), policy)
        decisions.append(d)
        committed.append(d.emitted_token)
        if d.label is Decision.REJECTED:
            return CycleResult(
                decisions=tuple(decisions),
                committed_tokens=tuple(committed),
                bonus_token=None,
                accepted_count=len(decisions) - 1,
            )
    bonus = int(bonus_top1) if bonus_top1 is not None else None
    if bonus is not None:
        committed.append(bonus)
    return CycleResult(
        decisions=tuple(decisions),
        committed_tokens=tuple(committed),
        bonus_token=bonus,
        accepted_count=len(decisions),
    )


def verify_chain(
    draft: Sequence[int],
    target_logits: Sequence[np.ndarray],
    policy: VerificationPolicy,
    bonus_logits: np.ndarray | None = None,
) -> CycleResult:
    """Verify a drafted chain against per-position target logit vectors.

    target_logits[i] must be the target's distribution conditioned on the
    context plus draft[0..i-1] (the caller's responsibility). bonus_logits,
    when given, is the (K+1)-th vector whose argmax becomes the bonus token
    on full acceptance.
    """
    tops = [top_two(z) for z in target_logits]
    bonus_top1 = top_two(bonus_logits).v1 if bonus_logits is not None else None
    return verify_top_two_chain(draft, tops, policy, bonus_top1)


@dataclass(frozen=True)
class TreeNode:
    """One drafted token and its child alternatives for the next position."""

    token: int
    children: tuple["TreeNode", ...] = field(default=())


def chain_to_tree(tokens: Sequence[int]) -> list[TreeNode]:
    """Embed a drafted chain as a branching-1 token tree."""
    roots: list[TreeNode] = []
    for tok in reversed(tokens):
        roots = [TreeNode(int(tok), tuple(roots))]
    return roots


def _validate_tree(nodes: Sequence[TreeNode], vocab_size: int) -> None:
    stack = list(nodes)
    while stack:
        node = stack.pop()
        if not isinstance(node, TreeNode):
            raise ValueError(f"malformed tree node: {node!r}")
        if not 0 <= node.token < vocab_size:
            raise ValueError(
                f"tree token {node.token} out of vocabulary range [0, {vocab_size})"
            )
        stack.extend(node.children)


def verify_tree(
    roots: Sequence[TreeNode],
    target_scorer,
    context: Sequence[int],
    policy: VerificationPolicy,
) -> CycleResult:
    """Walk a token tree, greedily following the best qualifying child.

    At each depth the child equal to the target top-1 is followed as an exact
    match; failing that — under the margin policy — a child equal to the
    target top-2 with ratio > theta is followed as a relaxed acceptance. When
    no child qualifies the walk stops and the target top-1 is committed as
    correction; exhausting a path appends a bonus token. Result shape matches
    verify_chain.
    """
    if not roots:
        raise ValueError("cannot verify an empty tree")
    _validate_tree(roots, target_scorer.vocab_size)
    ctx = list(context)
    children: Sequence[TreeNode] = roots
    decisions: list[PositionDecision] = []
    committed: list[int] = []
    while children:
        top = top_two(target_scorer.score(ctx))
        chosen: TreeNode | None = None
        label = Decision.REJECTED
        for child in children:
            if child.token == top.v1:
                chosen, label = child, Decision.EXACT
                break
        if chosen is None and policy.kind == "margin":
            for child in children:
                if child.token == top.v2 and adaptive_margin_check(top, policy.theta):
                    chosen, label = child, Decision.RELAXED
                    break
        if chosen is None:
            # no qualifying child; record the first alternative as the
            # representative rejected draft
            decisions.append(
                PositionDecision(Decision.REJECTED, children[0].token, top.v1, top.ratio)
            )
            committed.append(top.v1)
            return CycleResult(
                decisions=tuple(decisions),
                committed_tokens=tuple(committed),
                bonus_token=None,
                accepted_count=len(decisions) - 1,
            )
        decisions.append(PositionDecision(label, chosen.token, chosen.token, top.ratio))
        committed.append(chosen.token)
        ctx.append(chosen.token)
        children = chosen.children
    bonus = top_two(target_scorer.score(ctx)).v1
    committed.append(bonus)
    return CycleResult(
        decisions=tuple(decisions),
        committed_tokens=tuple(committed),
        bonus_token=bonus,
        accepted_count=len(decisions),
    )
