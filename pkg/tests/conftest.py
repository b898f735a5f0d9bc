import numpy as np
import pytest

from specverify.models import (
    PerturbedDraftConfig,
    PerturbedDraftModel,
    SyntheticTargetConfig,
    SyntheticTargetModel,
)


@pytest.fixture
def target():
    return SyntheticTargetModel(SyntheticTargetConfig(seed=42))


@pytest.fixture
def draft(target):
    return PerturbedDraftModel(target, PerturbedDraftConfig(noise_seed=7, noise_scale=0.5))


def make_pair(target_seed=42, noise_seed=7, noise_scale=0.5, **target_kwargs):
    tgt = SyntheticTargetModel(SyntheticTargetConfig(seed=target_seed, **target_kwargs))
    drf = PerturbedDraftModel(tgt, PerturbedDraftConfig(noise_seed=noise_seed, noise_scale=noise_scale))
    return tgt, drf


def random_contexts(seed, n, vocab_size=64, length=2):
    rng = np.random.default_rng(seed)
    return [tuple(int(t) for t in rng.integers(0, vocab_size, length)) for _ in range(n)]
