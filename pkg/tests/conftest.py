"""Shared fixtures: one tiny synthetic task reused across runner/CLI tests."""

import pytest

from switchprompt.data import generate_synthetic_domains, sample_fewshot
from switchprompt.keywords import compute_stats, select_keywords
from switchprompt.runner import RunConfig


@pytest.fixture(scope="session")
def tiny_task():
    return generate_synthetic_domains(
        seed=0, num_classes=3, examples_per_class=24, filler_prob=0.4,
        tokens_per_example=8, filler_vocab=20, keywords_per_class=3,
    )


@pytest.fixture(scope="session")
def tiny_split(tiny_task):
    return sample_fewshot(tiny_task.dataset, shots=4, seed=0)


@pytest.fixture(scope="session")
def tiny_keywords(tiny_task):
    general = compute_stats(tiny_task.general_corpus, "general")
    domain = compute_stats(tiny_task.domain_corpus, "domain")
    return select_keywords(general, domain, alpha=-1.0, n=6)


@pytest.fixture
def tiny_config():
    return RunConfig(
        variant="switchprompt",
        embed_dim=8,
        num_layers=2,
        num_heads=2,
        ffn_dim=16,
        soft_prompt_len=3,
        num_keywords=6,
        batch_size=6,
        epochs=2,
        lr=0.02,
        seeds=[0],
        shots=4,
        vocab_cap=200,
        save_checkpoints=False,
    )
