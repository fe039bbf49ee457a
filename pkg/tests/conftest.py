"""Shared fixtures: small deterministic datasets used across test modules."""

import numpy as np
import pytest

from stepcontrast import InstanceSequence, SynthConfig, synth_generate


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_sequence():
    """163-instance, 6-feature labeled sequence (3 regimes)."""
    return synth_generate(SynthConfig(n_regimes=3, instances_per_regime_mean=60,
                                      n_channels=6, noise_std=0.1, seed=0))


@pytest.fixture
def unlabeled_sequence(rng):
    return InstanceSequence(rng.normal(size=(40, 5)).astype(np.float32))
