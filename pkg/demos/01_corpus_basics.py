"""Generate a synthetic multi-source corpus and walk the preprocessing steps.

Covers: generation with injected label noise, JSONL round-trip, sparse-source
exclusion, per-source class balancing, and the stratified 8:1:1 split.
"""

import tempfile
from pathlib import Path

from labelaudit.corpus import balance, exclude_sparse_sources, ingest, split_8_1_1, write_corpus_jsonl
from labelaudit.synth import NoisePlan, SynthSpec, generate

spec = SynthSpec(
    sources=4,
    instances_per_source=200,
    seed=42,
    signal_strength=0.5,
    noise_plan={"s00": NoisePlan(flip_rate=0.10)},
)
corpus, noise = generate(spec)
print(f"generated {len(corpus)} incidents across {len(corpus.sources())} sources")
print(f"injected {len(noise.flipped_ids)} label flips into s00 (ground truth ledger)")

sample = corpus[corpus.ids()[0]]
print(f"\nfirst incident {sample.incident_id} (source {sample.source}):")
print(f"  note_a: {sample.note_a[:60]}...")
print(f"  label:  {sample.labels[spec.variable]}, demographics: {sample.demographics}")

# the JSONL interchange format round-trips exactly
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "corpus.jsonl"
    write_corpus_jsonl(corpus, path)
    again = ingest(path)
    assert again.ids() == corpus.ids()
    print(f"\nwrote + re-ingested {path.name}: {len(again)} incidents, byte-stable format")

kept, log = exclude_sparse_sources(corpus, spec.variable, min_positives=10)
print("\nsparse-source exclusion:")
for entry in log:
    print(f"  {entry['source']}: {entry['positives']} positives -> "
          f"{'excluded' if entry['excluded'] else 'retained'}")

view = balance(kept, spec.variable, seed=7)
labels = [kept.label(i, spec.variable) for i in view.ids]
print(f"\nbalanced view: {len(view)} instances, "
      f"{labels.count(1)} positive / {labels.count(0)} negative")

plan = split_8_1_1(kept, view.ids, spec.variable, seed=7)
print(f"8:1:1 split: {len(plan.train)} train / {len(plan.validation)} val / {len(plan.test)} test")
for name, part in plan.parts().items():
    positives = sum(1 for i in part if kept.label(i, spec.variable) == 1)
    print(f"  {name}: {positives}/{len(part)} positive (stratified)")
