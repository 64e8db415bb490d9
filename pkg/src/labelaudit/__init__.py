"""labelaudit: cross-source annotation-quality auditing for binary text corpora.

Measures inter-source labeling inconsistency (composition-contrast ΔF1),
flags likely mislabeled instances by repeated k-fold error counting,
verifies flags with removal/correction retraining experiments, quantifies
demographic odds-ratio shifts, and hosts a human adjudication service.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Corpus,
    CorpusError,
    CorpusPartition,
    DatasetView,
    Incident,
    SplitPlan,
    balance,
    build_partition,
    exclude_sparse_sources,
    ingest,
    sample_exclusive_subsets,
    split_8_1_1,
    write_corpus_jsonl,
)
from .classifier import (  # noqa: F401
    EncoderConfig,
    FeatureSpace,
    ModelCheckpoint,
    TrainConfig,
    encode,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from .metrics import (  # noqa: F401
    ConfusionCounts,
    MetricError,
    TTestResult,
    cohen_kappa,
    f1_positive,
    pooled_f1,
    welch_t,
)
from .synth import NoiseLedger, NoisePlan, SynthSpec, VocabSpec, generate  # noqa: F401
