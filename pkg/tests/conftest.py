"""Shared fixtures: small corpora and baselined engines, built once."""

from __future__ import annotations

import pytest

from apiward.config import EngineConfig
from apiward.engine import Engine
from apiward.eval_harness import default_templates, generate_corpus


def small_config() -> EngineConfig:
    # Fewer epochs than production defaults: unit tests exercise the
    # machinery, not the detection margins (the acceptance suite does).
    return EngineConfig(ae_epochs=6, ae_batch_size=64)


@pytest.fixture(scope="session")
def tiny_corpus():
    """360 benign training requests over the default templates, no attacks."""
    return generate_corpus(default_templates(), 360, [], rng_seed=101, benign_test_n=36)


@pytest.fixture(scope="session")
def baselined_engine(tiny_corpus):
    """A detection-phase engine trained on the tiny corpus (shared, read-only)."""
    engine = Engine(small_config())
    for rec in tiny_corpus.train:
        engine.ingest(rec)
    engine.baseline()
    return engine


@pytest.fixture()
def fresh_engine():
    return Engine(small_config())
