"""Rule evaluation over embeddings: hard thresholds and a smooth relaxation.

A condition ``Cj`` is satisfied when ``S(e_x, e_Cj) >= theta_j`` (satisfied
at equality).  The first rule whose conjunction holds decides the label;
with no fallback and no firing rule the outcome is the reserved
``NO_MATCH`` label.

For training, each condition becomes an independent Bernoulli with
``s_j = logistic((S_j - theta_j) / tau)`` and the label distribution is
computed EXACTLY by enumerating all 2^m condition assignments (m <= 16).
Independence across conditions is the minimal completion of the hard
semantics and is exact in the tau -> 0 limit.

Positive sentiment is flagged when ``S_j <= theta_j + gamma_j``.  The two
flags are reported independently: for gamma > 0 the band overlaps the
satisfied region, and we do not resolve that ambiguity here.
"""

from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingStore, KernelConfig, condition_key, similarity
from .errors import PkEngineError, PkValidationError
from .pk import NO_MATCH, ProcessKnowledge, parse_pk, serialize_pk

MAX_ENUMERATED_CONDITIONS = 16
PROB_FLOOR = 1e-12

MODEL_FORMAT = "pkil-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ConditionEvaluation:
    """One condition's similarity, threshold, and derived flags."""

    condition_id: str
    similarity: float
    threshold: float
    satisfied: bool
    positive_sentiment: bool
    sentiment_band: float

    def to_dict(self) -> dict:
        return {
            "condition_id": self.condition_id,
            "similarity": self.similarity,
            "threshold": self.threshold,
            "satisfied": self.satisfied,
            "positive_sentiment": self.positive_sentiment,
            "sentiment_band": self.sentiment_band,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionEvaluation":
        return cls(**d)


@dataclass
class ThresholdModel:
    """Learned per-condition thresholds and sentiment bands plus kernel config."""

    pk: ProcessKnowledge
    kernel: KernelConfig
    thetas: dict[str, float]
    gammas: dict[str, float]
    tau: float = 0.05
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = set(self.pk.condition_ids)
        if set(self.thetas) != ids:
            raise PkValidationError("thetas must cover exactly the pk conditions")
        if set(self.gammas) != ids:
            raise PkValidationError("gammas must cover exactly the pk conditions")
        if not self.tau > 0:
            raise PkValidationError("tau must be positive")

    @classmethod
    def initial(
        cls,
        pk: ProcessKnowledge,
        kernel: KernelConfig,
        tau: float = 0.05,
        theta0: float = 0.0,
    ) -> "ThresholdModel":
        ids = pk.condition_ids
        return cls(
            pk=pk,
            kernel=kernel,
            thetas={c: theta0 for c in ids},
            gammas={c: 0.0 for c in ids},
            tau=tau,
        )


@dataclass(frozen=True)
class LabelDistribution:
    """Probabilities over pk labels (plus NO_MATCH when no fallback exists)."""

    probs: dict[str, float]

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise PkValidationError(f"probabilities sum to {total}, not 1")
        for label, p in self.probs.items():
            if not -1e-12 <= p <= 1.0 + 1e-12:
                raise PkValidationError(f"P({label}) = {p} outside [0, 1]")

    def get(self, label: str) -> float:
        return self.probs.get(label, 0.0)

    def argmax(self) -> str:
        return max(self.probs.items(), key=lambda kv: kv[1])[0]


# --------------------------------------------------------------------------
# Truth table


@functools.lru_cache(maxsize=64)
def truth_table(pk: ProcessKnowledge) -> tuple[tuple[str, ...], np.ndarray]:
    """Label of every condition assignment, indexed by bitmask.

    Bit j of the index is the truth value of ``pk.conditions[j]``.  Built
    by overwriting from the last rule to the first so that first-match
    precedence holds.
    """
    m = len(pk.conditions)
    if m > MAX_ENUMERATED_CONDITIONS:
        raise PkEngineError(
            f"{m} conditions exceed the {MAX_ENUMERATED_CONDITIONS}-condition enumeration bound"
        )
    labels = list(pk.label_set)
    if pk.fallback_label is None:
        labels.append(NO_MATCH)
        default_index = labels.index(NO_MATCH)
    else:
        default_index = labels.index(pk.fallback_label)
    index_of = {label: i for i, label in enumerate(labels)}
    pos = {cid: j for j, cid in enumerate(pk.condition_ids)}

    assignments = np.arange(1 << m, dtype=np.int64)
    table = np.full(1 << m, default_index, dtype=np.int64)
    for rule in reversed(pk.rules):
        mask = 0
        for cid in rule.conditions:
            mask |= 1 << pos[cid]
        hits = (assignments & mask) == mask
        table[hits] = index_of[rule.label]
    return tuple(labels), table


def hard_label(pk: ProcessKnowledge, satisfied: dict[str, bool]) -> str:
    """First-match label for a full condition truth assignment."""
    missing = [cid for cid in pk.condition_ids if cid not in satisfied]
    if missing:
        raise PkValidationError(f"satisfied map missing conditions: {', '.join(missing)}")
    index = 0
    for j, cid in enumerate(pk.condition_ids):
        if satisfied[cid]:
            index |= 1 << j
    labels, table = truth_table(pk)
    return labels[table[index]]


def rule_trace(pk: ProcessKnowledge, satisfied: dict[str, bool]) -> tuple[str, list[str]]:
    """Label plus a per-rule explanation of why each rule fired or not.

    Missing condition ids count as unsatisfied.  The label itself comes
    from :func:`hard_label` — every caller (embedding evaluation, expert
    edit checks, prompt verdicts, live UI traces) shares that single code
    path; only the explanation lines are produced here.
    """
    completed = {cid: bool(satisfied.get(cid, False)) for cid in pk.condition_ids}
    label = hard_label(pk, completed)
    trace: list[str] = []
    fired = False
    for i, rule in enumerate(pk.rules):
        unmet = [cid for cid in rule.conditions if not completed[cid]]
        if not unmet and not fired:
            fired = True
            trace.append(f"rule {i + 1} [{rule.as_source()}]: fired")
        elif unmet:
            trace.append(f"rule {i + 1} [{rule.as_source()}]: unmet {', '.join(unmet)}")
        else:
            trace.append(f"rule {i + 1} [{rule.as_source()}]: shadowed by earlier match")
    if not fired:
        if pk.fallback_label is not None:
            trace.append(f"else: fired -> {label}")
        else:
            trace.append(f"no rule fired and no else clause: {NO_MATCH}")
    return label, trace


# --------------------------------------------------------------------------
# Evaluation


def evaluate_conditions(
    model: ThresholdModel, x_embedding: np.ndarray, store: EmbeddingStore
) -> list[ConditionEvaluation]:
    """Similarity of the input against every condition embedding (``cond:<id>``)."""
    out = []
    for cond in model.pk.conditions:
        sim = similarity(model.kernel, x_embedding, store.get(condition_key(cond.id)))
        theta = model.thetas[cond.id]
        gamma = model.gammas[cond.id]
        out.append(
            ConditionEvaluation(
                condition_id=cond.id,
                similarity=sim,
                threshold=theta,
                satisfied=sim >= theta,
                positive_sentiment=sim <= theta + gamma,
                sentiment_band=gamma,
            )
        )
    return out


def satisfaction_probs(model: ThresholdModel, similarities: np.ndarray) -> np.ndarray:
    """Per-condition logistic satisfaction probabilities s_j."""
    thetas = np.array([model.thetas[c] for c in model.pk.condition_ids])
    z = (similarities - thetas) / model.tau
    return _sigmoid(z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def assignment_probs(s: np.ndarray) -> np.ndarray:
    """Probability of each of the 2^m assignments under independent coins.

    Index bit j carries condition j's truth, matching :func:`truth_table`.
    """
    p = np.ones(1, dtype=np.float64)
    for sj in s:
        p = np.concatenate([p * (1.0 - sj), p * sj])
    return p


def distribution_from_sat_probs(pk: ProcessKnowledge, s: np.ndarray) -> LabelDistribution:
    """Exact label distribution for given satisfaction probabilities."""
    m = len(pk.conditions)
    if m > MAX_ENUMERATED_CONDITIONS:
        raise PkEngineError(
            f"{m} conditions exceed the {MAX_ENUMERATED_CONDITIONS}-condition enumeration bound"
        )
    if len(s) != m:
        raise PkValidationError(f"expected {m} satisfaction probabilities, got {len(s)}")
    labels, table = truth_table(pk)
    mass = np.bincount(table, weights=assignment_probs(np.asarray(s, dtype=np.float64)),
                       minlength=len(labels))
    return LabelDistribution(probs={label: float(p) for label, p in zip(labels, mass)})


def soft_label_distribution(
    model: ThresholdModel, x_embedding: np.ndarray, store: EmbeddingStore
) -> LabelDistribution:
    evals = evaluate_conditions(model, x_embedding, store)
    sims = np.array([e.similarity for e in evals])
    return distribution_from_sat_probs(model.pk, satisfaction_probs(model, sims))


def predict(
    model: ThresholdModel, x_embedding: np.ndarray, store: EmbeddingStore
) -> tuple[str, list[ConditionEvaluation]]:
    """Hard label plus the per-condition evaluations as explanation payload."""
    evals = evaluate_conditions(model, x_embedding, store)
    satisfied = {e.condition_id: e.satisfied for e in evals}
    return hard_label(model.pk, satisfied), evals


# --------------------------------------------------------------------------
# Model file


def pk_checksum(pk: ProcessKnowledge) -> str:
    """SHA-256 of the canonical serialization, comment-insensitive."""
    return hashlib.sha256(serialize_pk(pk).encode("utf-8")).hexdigest()


def save_model(model: ThresholdModel, path: str | Path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel": model.kernel.to_dict(),
        "tau": model.tau,
        "thetas": {c: model.thetas[c] for c in model.pk.condition_ids},
        "gammas": {c: model.gammas[c] for c in model.pk.condition_ids},
        "pk_sha256": pk_checksum(model.pk),
        "pk_source": serialize_pk(model.pk),
        "metadata": model.metadata,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ThresholdModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PkEngineError(f"{path}: not a valid model file: {exc}")
    if doc.get("format") != MODEL_FORMAT:
        raise PkEngineError(f"{path}: unrecognized model format {doc.get('format')!r}")
    try:
        pk = parse_pk(doc["pk_source"])
        if pk_checksum(pk) != doc["pk_sha256"]:
            raise PkEngineError(f"{path}: pk checksum does not match embedded source")
        return ThresholdModel(
            pk=pk,
            kernel=KernelConfig.from_dict(doc["kernel"]),
            thetas={k: float(v) for k, v in doc["thetas"].items()},
            gammas={k: float(v) for k, v in doc["gammas"].items()},
            tau=float(doc["tau"]),
            metadata=doc.get("metadata", {}),
        )
    except KeyError as exc:
        raise PkEngineError(f"{path}: model file missing field {exc}")
