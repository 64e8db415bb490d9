"""Measure cross-source annotation inconsistency with composition-contrast delta-F1.

One source gets systematic label drift; training compositions that include
its data should gain F1 on its own test set and lose F1 on everyone
else's, relative to a same-size model trained purely on other sources.
"""

from labelaudit.classifier import EncoderConfig, TrainConfig
from labelaudit.inconsistency import run_state_inconsistency, summarize_reports
from labelaudit.synth import NoisePlan, SynthSpec, generate

spec = SynthSpec(
    sources=6,
    instances_per_source=150,
    seed=3,
    signal_strength=0.45,
    ambiguous_share=0.3,
    noise_plan={"s00": NoisePlan(flip_rate=0.30)},  # drifting source
)
corpus, _ = generate(spec)
encoder = EncoderConfig(hash_dim=4096, max_tokens=64)
train = TrainConfig(epochs=15, curriculum_ordered=True)

reports = []
for target in ("s00", "s01"):
    report = run_state_inconsistency(
        corpus, spec.variable, target, m=2, n=3,
        encoder_config=encoder, train_config=train, base_seed=5, jobs=2,
    )
    reports.append(report)
    print(f"\ntarget {target}:")
    for kind, scores in report.aggregates.items():
        print(f"  {kind:13s} target-test F1 {scores['target']:.3f}  "
              f"others-test F1 {scores['others']:.3f}")
    print(f"  delta_f1_target = {report.delta_f1_target:+.4f}  "
          f"delta_f1_others = {report.delta_f1_others:+.4f}")
    if report.delta_f1_target > 0.03 and report.delta_f1_others < -0.01:
        print("  -> inconsistent with the other sources (drift signature)")
    else:
        print("  -> consistent with the other sources")

print("\n" + summarize_reports(reports)["summary"])
