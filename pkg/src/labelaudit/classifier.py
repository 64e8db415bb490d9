"""Binary text classifier over concatenated note pairs.

The encoder is pluggable: the default maps lowercased, truncated token
streams to a signed hashed bag of n-grams (64-bit FNV-1a, sign from a
second hash, unit L2 norm); an alternative loads precomputed per-incident
embedding vectors from JSONL. The head is a logistic regression trained
with mean binary cross-entropy and Adam, selecting the epoch with the best
validation F1.

Training is deterministic: weights start at zero (the problem is convex),
and the seed governs only shuffling. In plain mode the training list is
canonicalized (sorted) before shuffling, so two orderings of the same id
multiset produce identical checkpoints; in curriculum mode the given
segment order is preserved and shuffling happens within segments only.
"""

from __future__ import annotations

import base64
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from .corpus import Corpus, Incident
from .metrics import f1_positive
from .seeding import rng_for

SEPARATOR = "[SEP]"
_TOKEN_RE = re.compile(r"\w+", re.UNICODE)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class ClassifierError(ValueError):
    """Invalid classifier input or configuration."""


class TrainingDivergedError(ClassifierError):
    """Non-finite loss encountered during training."""


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a; fixed here for cross-language reproducibility."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "hashed_ngrams"  # or "precomputed"
    max_tokens: int = 512
    ngram_orders: tuple[int, ...] = (1, 2)
    hash_dim: int = 262144
    embedding_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("hashed_ngrams", "precomputed"):
            raise ClassifierError(f"unknown encoder kind {self.kind!r}")
        if self.max_tokens < 1:
            raise ClassifierError("max_tokens must be >= 1")
        if self.kind == "hashed_ngrams":
            if self.hash_dim < 1 or self.hash_dim & (self.hash_dim - 1):
                raise ClassifierError(f"hash_dim must be a power of two, got {self.hash_dim}")
            if not self.ngram_orders or any(n < 1 for n in self.ngram_orders):
                raise ClassifierError("ngram_orders must be positive integers")
            object.__setattr__(self, "ngram_orders", tuple(sorted(set(self.ngram_orders))))
        if self.kind == "precomputed" and not self.embedding_path:
            raise ClassifierError("precomputed encoder requires embedding_path")

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": self.kind,
            "max_tokens": self.max_tokens,
            "ngram_orders": list(self.ngram_orders),
            "hash_dim": self.hash_dim,
            "embedding_path": self.embedding_path,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "EncoderConfig":
        kwargs = dict(d)
        if "ngram_orders" in kwargs:
            kwargs["ngram_orders"] = tuple(kwargs["ngram_orders"])  # type: ignore[arg-type]
        return cls(**kwargs)  # type: ignore[arg-type]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    seed: int = 0
    curriculum_ordered: bool = False

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ClassifierError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ClassifierError("learning_rate must be >= 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ClassifierError("adam betas must lie in (0, 1)")
        if self.batch_size < 1:
            raise ClassifierError("batch_size must be >= 1")

    def to_dict(self) -> dict[str, object]:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "curriculum_ordered": self.curriculum_ordered,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "TrainConfig":
        return cls(**dict(d))  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Encoders


def tokenize(incident: Incident, max_tokens: int) -> list[str]:
    """Concatenate note_a, separator, note_b; lowercase; split on word
    boundaries; truncate to ``max_tokens`` tokens."""
    text = f"{incident.note_a} {SEPARATOR} {incident.note_b}".lower()
    return _TOKEN_RE.findall(text)[:max_tokens]


class HashedNgramEncoder:
    """Signed feature hashing of token n-grams, L2-normalized."""

    def __init__(self, config: EncoderConfig):
        if config.kind != "hashed_ngrams":
            raise ClassifierError("HashedNgramEncoder requires kind='hashed_ngrams'")
        self.config = config
        self._memo: dict[str, tuple[int, float]] = {}

    @property
    def dim(self) -> int:
        return self.config.hash_dim

    def _slot(self, ngram: str) -> tuple[int, float]:
        cached = self._memo.get(ngram)
        if cached is None:
            data = ngram.encode("utf-8")
            index = fnv1a64(data) & (self.config.hash_dim - 1)
            sign = 1.0 if fnv1a64(b"sign:" + data) & 1 else -1.0
            cached = (index, sign)
            self._memo[ngram] = cached
        return cached

    def encode(self, incident: Incident) -> tuple[np.ndarray, np.ndarray]:
        """Sparse row (indices, values) for one incident."""
        if not incident.note_a and not incident.note_b:
            raise ClassifierError(
                f"incident {incident.incident_id!r} has no note text to encode"
            )
        tokens = tokenize(incident, self.config.max_tokens)
        accum: dict[int, float] = {}
        for order in self.config.ngram_orders:
            for i in range(len(tokens) - order + 1):
                index, sign = self._slot(" ".join(tokens[i : i + order]))
                accum[index] = accum.get(index, 0.0) + sign
        indices = np.fromiter(sorted(accum), dtype=np.int64, count=len(accum))
        values = np.array([accum[i] for i in indices.tolist()], dtype=np.float64)
        norm = float(np.linalg.norm(values))
        if norm > 0:
            values /= norm
        return indices, values


class PrecomputedEncoder:
    """Looks up externally computed embedding vectors by incident id."""

    def __init__(self, config: EncoderConfig):
        if config.kind != "precomputed":
            raise ClassifierError("PrecomputedEncoder requires kind='precomputed'")
        self.config = config
        path = Path(config.embedding_path or "")
        if not path.exists():
            raise ClassifierError(f"embedding file not found: {path}")
        self._vectors: dict[str, np.ndarray] = {}
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                self._vectors[rec["incident_id"]] = np.asarray(rec["vector"], dtype=np.float64)
        if not self._vectors:
            raise ClassifierError(f"embedding file {path} holds no vectors")
        dims = {v.shape[0] for v in self._vectors.values()}
        if len(dims) != 1:
            raise ClassifierError(f"inconsistent embedding dimensions: {sorted(dims)}")
        self._dim = dims.pop()

    @property
    def dim(self) -> int:
        return self._dim

    def encode(self, incident: Incident) -> tuple[np.ndarray, np.ndarray]:
        vec = self._vectors.get(incident.incident_id)
        if vec is None:
            raise ClassifierError(
                f"no precomputed embedding for incident {incident.incident_id!r}"
            )
        indices = np.nonzero(vec)[0].astype(np.int64)
        return indices, vec[indices]


def make_encoder(config: EncoderConfig):
    if config.kind == "hashed_ngrams":
        return HashedNgramEncoder(config)
    return PrecomputedEncoder(config)


def encode(incident: Incident, config: EncoderConfig) -> np.ndarray:
    """Dense feature vector for one incident (convenience wrapper)."""
    encoder = make_encoder(config)
    indices, values = encoder.encode(incident)
    out = np.zeros(encoder.dim)
    out[indices] = values
    return out


class FeatureSpace:
    """Per-corpus encoding cache; assembles CSR matrices for id lists."""

    def __init__(self, corpus: Corpus, config: EncoderConfig):
        self.corpus = corpus
        self.config = config
        self.encoder = make_encoder(config)
        self._rows: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def dim(self) -> int:
        return self.encoder.dim

    def row(self, incident_id: str) -> tuple[np.ndarray, np.ndarray]:
        cached = self._rows.get(incident_id)
        if cached is None:
            cached = self.encoder.encode(self.corpus[incident_id])
            self._rows[incident_id] = cached
        return cached

    def matrix(self, ids: Sequence[str]) -> sparse.csr_array:
        indptr = np.zeros(len(ids) + 1, dtype=np.int64)
        index_chunks: list[np.ndarray] = []
        value_chunks: list[np.ndarray] = []
        for k, incident_id in enumerate(ids):
            indices, values = self.row(incident_id)
            indptr[k + 1] = indptr[k] + len(indices)
            index_chunks.append(indices)
            value_chunks.append(values)
        data = np.concatenate(value_chunks) if value_chunks else np.zeros(0)
        cols = np.concatenate(index_chunks) if index_chunks else np.zeros(0, dtype=np.int64)
        return sparse.csr_array((data, cols, indptr), shape=(len(ids), self.dim))


# ---------------------------------------------------------------------------
# Logistic head


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss_and_grad(
    weights: np.ndarray, bias: float, X, y: np.ndarray
) -> tuple[float, np.ndarray, float]:
    """Mean binary cross-entropy and its analytic gradient.

    Uses the logit form mean(softplus(z) - y*z), which is exact and stable
    for any z; the gradient in z is sigmoid(z) - y.
    """
    z = X @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    residual = (sigmoid(z) - y) / len(y)
    grad_w = X.T @ residual
    grad_b = float(np.sum(residual))
    return loss, np.asarray(grad_w, dtype=np.float64), grad_b


class OnlineTrainer:
    """Adam-on-minibatch trainer whose state survives across calls.

    ``run_epochs`` may be called repeatedly on growing data (warm starts in
    incremental training); the optimizer moments, step counter, and shuffle
    RNG all carry over.
    """

    def __init__(self, dim: int, config: TrainConfig):
        self.config = config
        self.weights = np.zeros(dim, dtype=np.float64)
        self.bias = 0.0
        self._m = np.zeros(dim + 1, dtype=np.float64)
        self._v = np.zeros(dim + 1, dtype=np.float64)
        self._t = 0
        self._rng = rng_for(config.seed, "shuffle")

    def _epoch_order(self, n: int, segment_bounds: Sequence[tuple[int, int]] | None) -> np.ndarray:
        if self.config.curriculum_ordered and segment_bounds:
            parts = []
            for start, end in segment_bounds:
                parts.append(start + self._rng.permutation(end - start))
            return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
        return self._rng.permutation(n)

    def _adam_step(self, grad_w: np.ndarray, grad_b: float) -> None:
        cfg = self.config
        grad = np.concatenate([grad_w, [grad_b]])
        self._t += 1
        self._m = cfg.adam_beta1 * self._m + (1 - cfg.adam_beta1) * grad
        self._v = cfg.adam_beta2 * self._v + (1 - cfg.adam_beta2) * grad * grad
        m_hat = self._m / (1 - cfg.adam_beta1**self._t)
        v_hat = self._v / (1 - cfg.adam_beta2**self._t)
        step = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        self.weights -= step[:-1]
        self.bias -= float(step[-1])

    def run_epochs(
        self,
        X,
        y: np.ndarray,
        epochs: int,
        segment_bounds: Sequence[tuple[int, int]] | None = None,
    ) -> list[float]:
        """Train for ``epochs`` passes; returns the post-epoch full-set losses."""
        n = X.shape[0]
        losses: list[float] = []
        for _ in range(epochs):
            order = self._epoch_order(n, segment_bounds)
            for start in range(0, n, self.config.batch_size):
                batch = order[start : start + self.config.batch_size]
                Xb = X[batch]
                z = Xb @ self.weights + self.bias
                residual = (sigmoid(z) - y[batch]) / len(batch)
                grad_w = np.asarray(Xb.T @ residual, dtype=np.float64)
                self._adam_step(grad_w, float(np.sum(residual)))
            loss, _, _ = bce_loss_and_grad(self.weights, self.bias, X, y)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss after step {self._t} "
                    f"(lr={self.config.learning_rate}, max|w|={np.max(np.abs(self.weights))})"
                )
            losses.append(loss)
        return losses

    def probabilities(self, X) -> np.ndarray:
        return sigmoid(np.asarray(X @ self.weights + self.bias, dtype=np.float64))


# ---------------------------------------------------------------------------
# Checkpoints, train, predict

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelCheckpoint:
    weights: np.ndarray
    bias: float
    encoder_config: EncoderConfig
    train_config: TrainConfig
    selected_epoch: int
    validation_f1: float | None
    train_loss_by_epoch: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.weights)) or not math.isfinite(self.bias):
            raise ClassifierError("checkpoint weights must be finite")
        if self.selected_epoch > self.train_config.epochs:
            raise ClassifierError("selected_epoch exceeds configured epochs")

    def to_dict(self) -> dict[str, object]:
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "encoder_config": self.encoder_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "selected_epoch": self.selected_epoch,
            "validation_f1": self.validation_f1,
            "train_loss_by_epoch": list(self.train_loss_by_epoch),
            "bias": self.bias,
            "weights_b64": base64.b64encode(
                np.ascontiguousarray(self.weights, dtype="<f8").tobytes()
            ).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "ModelCheckpoint":
        version = d.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ClassifierError(f"unsupported checkpoint format_version {version!r}")
        weights = np.frombuffer(
            base64.b64decode(str(d["weights_b64"])), dtype="<f8"
        ).astype(np.float64)
        return cls(
            weights=weights,
            bias=float(d["bias"]),  # type: ignore[arg-type]
            encoder_config=EncoderConfig.from_dict(d["encoder_config"]),  # type: ignore[arg-type]
            train_config=TrainConfig.from_dict(d["train_config"]),  # type: ignore[arg-type]
            selected_epoch=int(d["selected_epoch"]),  # type: ignore[arg-type]
            validation_f1=None if d.get("validation_f1") is None else float(d["validation_f1"]),  # type: ignore[arg-type]
            train_loss_by_epoch=tuple(d.get("train_loss_by_epoch") or ()),  # type: ignore[arg-type]
        )


def save_checkpoint(checkpoint: ModelCheckpoint, path: str | Path) -> None:
    Path(path).write_text(json.dumps(checkpoint.to_dict(), sort_keys=True), encoding="utf-8")


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    return ModelCheckpoint.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _labels_for(
    corpus: Corpus,
    variable: str,
    ids: Sequence[str],
    overrides: Mapping[str, int] | None,
) -> np.ndarray:
    values = []
    for i in ids:
        if overrides and i in overrides:
            values.append(int(overrides[i]))
            continue
        label = corpus.label(i, variable)
        if label not in (0, 1):
            raise ClassifierError(f"incident {i!r} has no 0/1 label for {variable!r}")
        values.append(int(label))
    return np.array(values, dtype=np.float64)


def _segment_layout(segments: Sequence[Sequence[str]]) -> tuple[list[str], list[tuple[int, int]]]:
    flat: list[str] = []
    bounds: list[tuple[int, int]] = []
    for seg in segments:
        start = len(flat)
        flat.extend(seg)
        bounds.append((start, len(flat)))
    return flat, bounds


def train(
    corpus: Corpus,
    variable: str,
    train_ids: Sequence[str] | Sequence[Sequence[str]],
    val_ids: Sequence[str] | None,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    *,
    label_overrides: Mapping[str, int] | None = None,
    feature_space: FeatureSpace | None = None,
) -> ModelCheckpoint:
    """Train the logistic head; return the best-validation-F1 epoch's weights.

    ``train_ids`` is either a flat id list or a list of id segments. In
    curriculum mode segments keep their order across epochs and shuffling
    is confined to each segment; otherwise the flattened ids are sorted
    and fully shuffled each epoch. With ``val_ids=None`` no model selection
    happens and the final epoch is returned.
    """
    if train_ids and not isinstance(train_ids[0], str):
        flat, bounds = _segment_layout(train_ids)  # type: ignore[arg-type]
    else:
        flat, bounds = list(train_ids), [(0, len(train_ids))]  # type: ignore[arg-type]
    if not flat:
        raise ClassifierError("training set is empty")
    if not train_config.curriculum_ordered:
        flat, bounds = sorted(flat), [(0, len(flat))]

    fs = feature_space or FeatureSpace(corpus, encoder_config)
    y = _labels_for(corpus, variable, flat, label_overrides)
    if len(np.unique(y)) < 2:
        raise ClassifierError("training set holds a single class; cannot fit")
    X = fs.matrix(flat)

    X_val = y_val = None
    if val_ids is not None:
        X_val = fs.matrix(val_ids)
        y_val = _labels_for(corpus, variable, val_ids, label_overrides)

    trainer = OnlineTrainer(fs.dim, train_config)
    losses: list[float] = []
    best: tuple[float, int, np.ndarray, float] | None = None
    for epoch in range(1, train_config.epochs + 1):
        losses.extend(trainer.run_epochs(X, y, 1, bounds))
        if X_val is not None:
            preds = (trainer.probabilities(X_val) > 0.5).astype(int)
            score = f1_positive(preds.tolist(), y_val.astype(int).tolist()).f1
            if best is None or score > best[0]:
                best = (score, epoch, trainer.weights.copy(), trainer.bias)
    if best is not None:
        val_f1, selected_epoch, weights, bias = best
    else:
        val_f1, selected_epoch, weights, bias = None, train_config.epochs, trainer.weights, trainer.bias
    return ModelCheckpoint(
        weights=weights,
        bias=bias,
        encoder_config=encoder_config,
        train_config=train_config,
        selected_epoch=selected_epoch,
        validation_f1=val_f1,
        train_loss_by_epoch=tuple(losses),
    )


@dataclass(frozen=True)
class Prediction:
    incident_id: str
    probability: float
    label: int


def predict(
    checkpoint: ModelCheckpoint,
    corpus: Corpus,
    ids: Sequence[str],
    *,
    feature_space: FeatureSpace | None = None,
) -> list[Prediction]:
    """Probabilities and hard labels; label 1 iff probability > 0.5."""
    fs = feature_space or FeatureSpace(corpus, checkpoint.encoder_config)
    X = fs.matrix(ids)
    probs = sigmoid(np.asarray(X @ checkpoint.weights + checkpoint.bias, dtype=np.float64))
    return [
        Prediction(incident_id=i, probability=float(p), label=int(p > 0.5))
        for i, p in zip(ids, probs)
    ]
