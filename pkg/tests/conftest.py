import pytest

from labelaudit.classifier import EncoderConfig, TrainConfig
from labelaudit.synth import NoisePlan, SynthSpec, generate


@pytest.fixture(scope="session")
def fast_encoder():
    # small hash space is plenty for the synthetic vocab and keeps tests quick
    return EncoderConfig(hash_dim=4096, max_tokens=64)


@pytest.fixture(scope="session")
def fast_train():
    return TrainConfig(epochs=8, seed=0)


@pytest.fixture(scope="session")
def clean_corpus_small():
    spec = SynthSpec(sources=2, instances_per_source=60, seed=11, signal_strength=0.6)
    corpus, ledger = generate(spec)
    return corpus, ledger, spec


@pytest.fixture(scope="session")
def flipped_corpus_small():
    spec = SynthSpec(
        sources=3,
        instances_per_source=80,
        seed=7,
        signal_strength=0.6,
        noise_plan={"s00": NoisePlan(flip_rate=0.10)},
    )
    corpus, ledger = generate(spec)
    return corpus, ledger, spec
