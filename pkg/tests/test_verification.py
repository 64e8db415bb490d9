import pytest

from labelaudit.classifier import TrainConfig
from labelaudit.discovery import DiscoveryConfig, run_discovery
from labelaudit.synth import NoisePlan, SynthSpec, generate
from labelaudit.verification import (
    Adjudication,
    CorrectedView,
    VerificationError,
    apply_corrections,
    incremental_curves_csv,
    load_incremental_plans,
    load_removal_experiment,
    oracle_adjudications,
    run_incremental,
    run_removal_experiment,
    save_incremental_plans,
    save_removal_experiment,
)


# ---------------------------------------------------------------------------
# apply_corrections


@pytest.fixture(scope="module")
def small_flagged():
    spec = SynthSpec(
        sources=2,
        instances_per_source=40,
        seed=2,
        noise_plan={"s00": NoisePlan(flip_rate=0.2, direction="pos_to_neg")},
    )
    corpus, noise = generate(spec)
    unflipped = next(
        inc.incident_id
        for inc in corpus
        if inc.source == "s00" and inc.incident_id not in set(noise.flipped_ids)
    )
    flags = list(noise.flipped_ids) + [unflipped]
    return corpus, spec, noise, flags


def adj(i, incident_id, verdict, annotator="a1"):
    return Adjudication(
        adjudication_id=f"adj-{i}",
        incident_id=incident_id,
        annotator_id=annotator,
        verdict=verdict,
        version=i,
    )


def test_apply_corrections_flips_and_keeps(small_flagged):
    corpus, spec, noise, flags = small_flagged
    ids = corpus.ids()
    flipped = noise.flipped_ids[0]
    adjudications = [adj(1, flipped, "flip"), adj(2, flags[-1], "keep")]
    view = apply_corrections(corpus, ids, spec.variable, adjudications, flags)
    assert view.overrides == {flipped: 1}  # pos_to_neg flip restored to 1
    assert view.provenance == ("adj-1", "adj-2")
    assert view.uncertain == ()


def test_apply_corrections_uncertain_listed(small_flagged):
    corpus, spec, _, flags = small_flagged
    view = apply_corrections(
        corpus, corpus.ids(), spec.variable, [adj(1, flags[0], "uncertain")], flags
    )
    assert view.overrides == {}
    assert view.uncertain == (flags[0],)


def test_apply_corrections_empty_is_identity(small_flagged):
    corpus, spec, _, flags = small_flagged
    view = apply_corrections(corpus, corpus.ids(), spec.variable, [], flags)
    assert view.overrides == {}
    assert view.provenance == ()


def test_apply_corrections_double_flip_restores(small_flagged):
    corpus, spec, noise, flags = small_flagged
    flipped = noise.flipped_ids[0]
    adjudications = [adj(1, flipped, "flip"), adj(2, flipped, "flip")]
    view = apply_corrections(corpus, corpus.ids(), spec.variable, adjudications, flags)
    assert view.overrides == {}  # back to the recorded label
    assert view.provenance == ("adj-1", "adj-2")  # both records retained


def test_apply_corrections_unflagged_id_errors(small_flagged):
    corpus, spec, _, flags = small_flagged
    with pytest.raises(VerificationError, match="unflagged"):
        apply_corrections(
            corpus, corpus.ids(), spec.variable, [adj(1, "s01-00000", "flip")], flags
        )


def test_oracle_adjudications(small_flagged):
    _, _, noise, flags = small_flagged
    adjudications = oracle_adjudications(flags, noise.flipped_ids)
    verdicts = {a.incident_id: a.verdict for a in adjudications}
    assert all(verdicts[i] == "flip" for i in noise.flipped_ids)
    assert verdicts[flags[-1]] == "keep"


# ---------------------------------------------------------------------------
# Removal experiment


@pytest.fixture(scope="module")
def removal_setup(fast_encoder):
    spec = SynthSpec(
        sources=5,
        instances_per_source=150,
        seed=43,
        signal_strength=0.4,
        ambiguous_share=0.18,
        noise_plan={"s00": NoisePlan(flip_rate=0.15)},
    )
    corpus, noise = generate(spec)
    ledger = run_discovery(
        corpus,
        spec.variable,
        "s00",
        DiscoveryConfig(k=5, repetitions=3, threshold=3),
        fast_encoder,
        TrainConfig(epochs=6),
        base_seed=1,
        jobs=2,
    )
    return corpus, spec, noise, ledger


def test_removal_orders_arms(removal_setup, fast_encoder):
    corpus, spec, _, ledger = removal_setup
    exp = run_removal_experiment(
        corpus,
        spec.variable,
        "s00",
        ledger,
        n_seeds=3,
        encoder_config=fast_encoder,
        train_config=TrainConfig(epochs=6),
        base_seed=7,
    )
    assert exp.mean("flags_removed") > exp.mean("original")
    assert exp.mean("flags_removed") >= exp.mean("random_dropped")
    assert all(len(v) == 3 for v in exp.arms.values())
    assert all(r > 0 for r in exp.removed_per_seed)


def test_removal_empty_flags_errors(removal_setup, fast_encoder):
    corpus, spec, _, ledger = removal_setup
    import dataclasses

    empty = dataclasses.replace(ledger, flags=())
    with pytest.raises(VerificationError, match="no flags"):
        run_removal_experiment(
            corpus,
            spec.variable,
            "s00",
            empty,
            n_seeds=2,
            encoder_config=fast_encoder,
            train_config=TrainConfig(epochs=2),
        )


def test_removal_roundtrip(tmp_path, removal_setup, fast_encoder):
    corpus, spec, _, ledger = removal_setup
    exp = run_removal_experiment(
        corpus,
        spec.variable,
        "s00",
        ledger,
        n_seeds=2,
        encoder_config=fast_encoder,
        train_config=TrainConfig(epochs=3),
        base_seed=9,
    )
    path = tmp_path / "removal.json"
    save_removal_experiment(exp, path)
    assert load_removal_experiment(path).to_dict() == exp.to_dict()


# ---------------------------------------------------------------------------
# Incremental paradigm


@pytest.fixture(scope="module")
def incremental_plans(fast_encoder):
    # drift story: the target source's true prevalence is elevated and its
    # annotators under-code the confusable positive subtype; the flip quota
    # covers that whole subtype so the mislabeling is a consistent regime
    spec = SynthSpec(
        sources=5,
        instances_per_source=200,
        seed=47,
        signal_strength=0.5,
        source_positive_rates={"s00": 0.7},
        ambiguous_share=0.29,
        ambiguous_share_negative=0.05,
        noise_plan={"s00": NoisePlan(flip_rate=0.20, direction="pos_to_neg")},
    )
    corpus, noise = generate(spec)
    flags = list(noise.flipped_ids)
    corrected = apply_corrections(
        corpus, corpus.ids(), spec.variable, oracle_adjudications(flags, noise.flipped_ids), flags
    )
    # cold start: each point retrains to convergence on the revealed data, so
    # final points reflect data consistency rather than optimizer path effects
    plans = run_incremental(
        corpus,
        spec.variable,
        "s00",
        corrected,
        step_size=120,
        encoder_config=fast_encoder,
        train_config=TrainConfig(epochs=4),
        n_seeds=2,
        epochs_per_step=20,
        cold_start=True,
        base_seed=3,
        jobs=2,
    )
    return corpus, spec, corrected, plans


def test_incremental_curve_x_axis(incremental_plans):
    _, _, _, plans = incremental_plans
    for plan in plans.values():
        xs = [p.instances_fed for p in plan.curve]
        assert xs == sorted(xs)
        assert xs[-1] == plan.total
        assert all(b - a == plan.step_size for a, b in zip(xs, xs[1:-1] or []))


def test_incremental_prefix_identical_before_target_data(incremental_plans):
    # while only others data has been revealed, the corrected and uncorrected
    # arms are the same training run evaluated on the same gold
    corpus, spec, _, plans = incremental_plans
    import math

    from labelaudit.corpus import balance
    from labelaudit.seeding import derive_seed

    view = balance(corpus, spec.variable, derive_seed(3, "balance"))
    n_target = sum(1 for i in view.ids if corpus[i].source == "s00")
    others_train_len = plans["OthersTarget"].total - math.floor(0.8 * n_target)
    prefix = [
        (a, b)
        for a, b in zip(plans["OthersTarget"].curve, plans["OthersCorrectedTarget"].curve)
        if a.instances_fed <= others_train_len
    ]
    assert prefix
    for a, b in prefix:
        assert a == b


def test_incremental_corrected_final_points_beat_uncorrected(incremental_plans):
    _, _, _, plans = incremental_plans
    for base, corrected in (
        ("OthersTarget", "OthersCorrectedTarget"),
        ("TargetOthers", "CorrectedTargetOthers"),
    ):
        assert plans[corrected].final_point().f1_target > plans[base].final_point().f1_target
        assert plans[corrected].final_point().f1_others >= plans[base].final_point().f1_others


def test_incremental_single_step_when_t_exceeds_n(fast_encoder):
    spec = SynthSpec(sources=2, instances_per_source=40, seed=3, signal_strength=0.6)
    corpus, _ = generate(spec)
    corrected = CorrectedView(base_ids=tuple(corpus.ids()), overrides={}, provenance=())
    with pytest.warns(UserWarning, match="single step"):
        plans = run_incremental(
            corpus,
            spec.variable,
            "s00",
            corrected,
            step_size=10_000,
            encoder_config=fast_encoder,
            train_config=TrainConfig(epochs=2),
            n_seeds=1,
            epochs_per_step=2,
        )
    assert all(len(plan.curve) == 1 for plan in plans.values())


def test_incremental_roundtrip_and_csv(tmp_path, incremental_plans):
    _, _, _, plans = incremental_plans
    path = tmp_path / "plans.json"
    save_incremental_plans(plans, path)
    loaded = load_incremental_plans(path)
    assert {k: p.to_dict() for k, p in loaded.items()} == {
        k: p.to_dict() for k, p in plans.items()
    }
    csv_text = incremental_curves_csv(plans)
    header, *rows = csv_text.strip().splitlines()
    assert header == "composition,instances_fed,f1_target,f1_others,seed"
    expected_rows = sum(len(c) * len(p.per_seed_curves) for p in plans.values() for c in [p.curve])
    assert len(rows) == expected_rows


def test_incremental_cold_start_differs(fast_encoder):
    spec = SynthSpec(sources=2, instances_per_source=60, seed=5, signal_strength=0.6)
    corpus, _ = generate(spec)
    corrected = CorrectedView(base_ids=tuple(corpus.ids()), overrides={}, provenance=())
    kwargs = dict(
        variable=spec.variable,
        target_source="s00",
        corrected_view=corrected,
        step_size=30,
        encoder_config=fast_encoder,
        train_config=TrainConfig(epochs=2),
        n_seeds=1,
        epochs_per_step=1,
    )
    warm = run_incremental(corpus, **kwargs)
    cold = run_incremental(corpus, cold_start=True, **kwargs)
    assert warm["OthersTarget"].curve != cold["OthersTarget"].curve
