import pytest

from labelaudit.corpus import write_corpus_jsonl
from labelaudit.metrics import f1_positive
from labelaudit.synth import (
    NoisePlan,
    SynthError,
    SynthSpec,
    VocabSpec,
    default_vocab,
    generate,
    load_noise_ledger,
    save_noise_ledger,
    true_label,
)


def test_generate_clean_has_empty_ledger(clean_corpus_small):
    corpus, ledger, spec = clean_corpus_small
    assert ledger.flipped_ids == ()
    assert len(corpus) == spec.sources * spec.instances_per_source


def test_generate_exact_flip_count():
    spec = SynthSpec(
        sources=1,
        instances_per_source=1000,
        seed=1,
        noise_plan={"s00": NoisePlan(flip_rate=0.10)},
    )
    corpus, ledger = generate(spec)
    assert len(ledger.flipped_ids) == 100
    assert ledger.per_source == {"s00": 100}
    assert all(i in corpus for i in ledger.flipped_ids)


def test_generate_byte_identical_for_same_seed(tmp_path):
    paths = []
    for k in range(2):
        spec = SynthSpec(
            sources=2,
            instances_per_source=50,
            seed=9,
            noise_plan={"s01": NoisePlan(flip_rate=0.2)},
        )
        corpus, _ = generate(spec)
        p = tmp_path / f"c{k}.jsonl"
        write_corpus_jsonl(corpus, p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_pos_to_neg_changes_only_positive_labels():
    spec = SynthSpec(
        sources=1,
        instances_per_source=300,
        seed=4,
        noise_plan={"s00": NoisePlan(flip_rate=0.1, direction="pos_to_neg")},
    )
    corpus, ledger = generate(spec)
    assert len(ledger.flipped_ids) == 30
    for i in ledger.flipped_ids:
        assert corpus.label(i, spec.variable) == 0  # observed after flip
        assert true_label(corpus, ledger, i, spec.variable) == 1


def test_symmetric_flips_touch_both_classes():
    spec = SynthSpec(
        sources=1,
        instances_per_source=400,
        seed=6,
        noise_plan={"s00": NoisePlan(flip_rate=0.2)},
    )
    corpus, ledger = generate(spec)
    originals = {true_label(corpus, ledger, i, spec.variable) for i in ledger.flipped_ids}
    assert originals == {0, 1}


def test_demographic_correlated_flips_stay_in_subgroup():
    spec = SynthSpec(
        sources=1,
        instances_per_source=600,
        seed=8,
        noise_plan={
            "s00": NoisePlan(flip_rate=0.05, direction="pos_to_neg", demographic=("race", "black"))
        },
    )
    corpus, ledger = generate(spec)
    assert len(ledger.flipped_ids) == 30
    assert all(corpus[i].demographics.race == "black" for i in ledger.flipped_ids)


def test_random_selection_supported():
    spec = SynthSpec(
        sources=1,
        instances_per_source=200,
        seed=2,
        noise_plan={"s00": NoisePlan(flip_rate=0.1, selection="random")},
    )
    _, ledger = generate(spec)
    assert len(ledger.flipped_ids) == 20


def test_vocab_theme_sets_must_be_disjoint():
    with pytest.raises(SynthError, match="disjoint"):
        VocabSpec(
            positive=("a", "b"),
            negative=("b", "c"),
            ambiguous_positive=("d",),
            ambiguous_negative=("e",),
            filler=("f",),
        )


def test_flip_rate_bounds():
    with pytest.raises(SynthError, match="flip_rate"):
        NoisePlan(flip_rate=0.5)


def test_noise_plan_unknown_source_errors():
    spec = SynthSpec(
        sources=1, instances_per_source=10, seed=0, noise_plan={"zz": NoisePlan(flip_rate=0.1)}
    )
    with pytest.raises(SynthError, match="unknown source"):
        generate(spec)


def centroid_f1_on_true_labels(corpus, ledger, variable):
    preds, gold = [], []
    for inc in corpus:
        toks = f"{inc.note_a} {inc.note_b}".split()
        pos = sum(t.startswith(("pt", "pa")) for t in toks)
        neg = sum(t.startswith(("nt", "na")) for t in toks)
        preds.append(1 if pos - neg > 0 else 0)
        gold.append(true_label(corpus, ledger, inc.incident_id, variable))
    return f1_positive(preds, gold).f1


@pytest.mark.parametrize("signal", [0.3, 0.5])
def test_true_labels_linearly_recoverable(signal):
    spec = SynthSpec(sources=2, instances_per_source=150, seed=13, signal_strength=signal)
    corpus, ledger = generate(spec)
    assert centroid_f1_on_true_labels(corpus, ledger, spec.variable) >= 0.95


def test_recoverability_holds_under_flips():
    spec = SynthSpec(
        sources=2,
        instances_per_source=150,
        seed=13,
        signal_strength=0.5,
        noise_plan={"s00": NoisePlan(flip_rate=0.2)},
    )
    corpus, ledger = generate(spec)
    # the centroid oracle recovers TRUE labels, not the flipped ones
    assert centroid_f1_on_true_labels(corpus, ledger, spec.variable) >= 0.95


def test_noise_ledger_roundtrip(tmp_path, flipped_corpus_small):
    _, ledger, _ = flipped_corpus_small
    path = tmp_path / "ledger.json"
    save_noise_ledger(ledger, path)
    assert load_noise_ledger(path) == ledger


def test_default_vocab_shapes():
    vocab = default_vocab()
    assert len(vocab.positive) == len(vocab.negative) == 12
    assert len(vocab.ambiguous(1)) == len(vocab.ambiguous(0)) == 4
    assert not set(vocab.ambiguous(1)) & set(vocab.positive)


def test_systematic_flips_prefer_confusable_instances():
    spec = SynthSpec(
        sources=1,
        instances_per_source=400,
        seed=12,
        ambiguous_share=0.4,
        noise_plan={"s00": NoisePlan(flip_rate=0.2, direction="pos_to_neg")},
    )
    corpus, ledger = generate(spec)
    amb = set(spec.vocab.ambiguous_positive)

    def score(i):
        return sum(1 for t in f"{corpus[i].note_a} {corpus[i].note_b}".split() if t in amb)

    flipped_scores = [score(i) for i in ledger.flipped_ids]
    clean_pos = [
        inc.incident_id
        for inc in corpus
        if inc.incident_id not in set(ledger.flipped_ids)
        and true_label(corpus, ledger, inc.incident_id, spec.variable) == 1
    ]
    clean_scores = [score(i) for i in clean_pos]
    assert min(flipped_scores) >= max(0, min(clean_scores))
    assert sum(flipped_scores) / len(flipped_scores) > sum(clean_scores) / len(clean_scores)
