"""Flag suspect instances by repeated k-fold error counting, then adjudicate.

Runs discovery against a noisy source, checks the flags against the
generator's ground-truth flip ledger, pushes the flags through a
two-annotator review session (the same store the HTTP service uses), and
applies the exported corrections.
"""

import tempfile

from labelaudit.classifier import EncoderConfig, TrainConfig
from labelaudit.discovery import DiscoveryConfig, histogram_csv, run_discovery, summarize_flags
from labelaudit.review.store import SessionStore
from labelaudit.synth import NoisePlan, SynthSpec, generate
from labelaudit.verification import Adjudication, apply_corrections

spec = SynthSpec(
    sources=5,
    instances_per_source=150,
    seed=21,
    signal_strength=0.45,
    ambiguous_share=0.06,
    source_ambiguous_shares={"s00": 0.12},
    noise_plan={"s00": NoisePlan(flip_rate=0.10)},
)
corpus, noise = generate(spec)
ledger = run_discovery(
    corpus, spec.variable, "s00",
    DiscoveryConfig(k=5, repetitions=5, threshold=5),
    EncoderConfig(hash_dim=4096, max_tokens=64),
    TrainConfig(epochs=15),
    base_seed=2, jobs=2,
)

stats = summarize_flags(ledger)
print(f"{stats['flagged']} flags out of {stats['total']} annotations ({stats['percent']}%)")
print("error-count histogram:")
print(histogram_csv(ledger))

flips = set(noise.flipped_ids)
hits = sum(1 for f in ledger.flags if f in flips)
print(f"oracle check: {hits}/{len(ledger.flags)} flags are true injected flips "
      f"({len(flips & set(ledger.counts))} flips existed)")

# dual-annotator review over the flags; both annotators follow the oracle here
with tempfile.TemporaryDirectory() as tmp:
    store = SessionStore(tmp)
    session = store.create_session(ledger, corpus, ["reviewer-a", "reviewer-b"])
    print(f"\nreview session {session.session_id}: {len(session.items)} items, "
          f"worst error counts first")
    for item in session.items:
        verdict = "flip" if item.incident_id in flips else "keep"
        for annotator in ("reviewer-a", "reviewer-b"):
            store.submit(session.session_id, item.incident_id, annotator, verdict, version=1)
    iaa = store.compute_iaa(session.session_id)
    print(f"inter-annotator agreement: kappa = {iaa['kappa']:.3f} over {iaa['items_used']} items")

    export = store.export(session.session_id, "consensus_only")
    print(f"export v{export['export_version']}: {len(export['adjudications'])} consensus flips, "
          f"{len(export['disagreements'])} disagreements")

    adjudications = [Adjudication.from_dict(d) for d in export["adjudications"]]
    corrected = apply_corrections(corpus, corpus.ids(), spec.variable, adjudications, ledger.flags)
    print(f"corrected view: {len(corrected.overrides)} label overrides, "
          f"{len(corrected.provenance)} adjudication records in provenance")
