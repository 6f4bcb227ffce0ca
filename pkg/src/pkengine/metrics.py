"""Evaluation metrics: accuracy, AUC-ROC, agreement kappas, benefit rate.

Multiclass AUC is the macro average of one-vs-rest AUCs over labels
present in the golds; a NO_MATCH prediction simply contributes score 0
for every real label.  With exactly two gold labels the score reduces to
pairwise concordance of P(positive).  Agreement ships as both Fleiss
(any rater count) and Cohen (two raters); reports must name which one
was used, since neither is canonical here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import LabelDistribution
from .errors import PkEngineError


@dataclass
class EvalResult:
    accuracy: float
    auc_roc: float | None
    per_label: dict[str, dict] = field(default_factory=dict)
    condition_accuracy: dict[str, float] | None = None
    n: int = 0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "auc_roc": self.auc_roc,
            "per_label": self.per_label,
            "condition_accuracy": self.condition_accuracy,
            "n": self.n,
        }

    def format_table(self) -> str:
        lines = [
            f"{'n':<24}{self.n}",
            f"{'accuracy':<24}{self.accuracy:.4f}",
            f"{'auc_roc':<24}{self.auc_roc:.4f}" if self.auc_roc is not None
            else f"{'auc_roc':<24}n/a",
        ]
        for label in sorted(self.per_label):
            row = self.per_label[label]
            auc = f"{row['auc']:.4f}" if row.get("auc") is not None else "n/a"
            lines.append(
                f"  {label:<22}support={row['support']:<6} recall={row['recall']:.4f} auc={auc}"
            )
        if self.condition_accuracy:
            for cid in sorted(self.condition_accuracy):
                lines.append(f"  cond {cid:<17}accuracy={self.condition_accuracy[cid]:.4f}")
        return "\n".join(lines)


def accuracy(preds: list[str], golds: list[str]) -> float:
    if len(preds) != len(golds):
        raise PkEngineError(f"length mismatch: {len(preds)} preds vs {len(golds)} golds")
    if not golds:
        raise PkEngineError("empty inputs")
    return sum(p == g for p, g in zip(preds, golds)) / len(golds)


def _binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Tie-corrected Mann-Whitney AUC via midranks."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    n_pos = int(positives.sum())
    n_neg = len(scores) - n_pos
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_roc(
    scores: list[tuple[LabelDistribution, str]], positive_label: str | None = None
) -> float:
    """AUC over (distribution, gold) pairs.

    Two distinct gold labels: concordance of P(positive), positive being
    the lexicographically larger label unless overridden.  More labels:
    macro one-vs-rest over gold labels with both classes present.
    """
    if len(scores) < 2:
        raise PkEngineError("auc_roc needs at least 2 scored items")
    golds = [g for _, g in scores]
    labels = sorted(set(golds))
    for label in labels:
        if not any(label in dist.probs for dist, _ in scores):
            raise PkEngineError(f"gold label {label!r} absent from every distribution's support")

    if len(labels) == 2:
        pos = positive_label if positive_label is not None else labels[-1]
        if pos not in labels:
            raise PkEngineError(f"positive label {pos!r} not among gold labels {labels}")
        s = np.array([dist.get(pos) for dist, _ in scores])
        y = np.array([g == pos for g in golds])
        return _binary_auc(s, y)

    aucs = []
    for label in labels:
        y = np.array([g == label for g in golds])
        if y.all() or not y.any():
            continue
        s = np.array([dist.get(label) for dist, _ in scores])
        aucs.append(_binary_auc(s, y))
    if not aucs:
        raise PkEngineError("no label had both positive and negative examples")
    return float(np.mean(aucs))


def fleiss_kappa(ratings: list[list[str]]) -> float:
    """Fleiss' kappa over an items x raters matrix of labels."""
    if not ratings:
        raise PkEngineError("empty ratings matrix")
    n_raters = len(ratings[0])
    if n_raters < 2:
        raise PkEngineError("need at least 2 raters")
    categories = sorted({label for row in ratings for label in row})
    for row in ratings:
        if len(row) != n_raters:
            raise PkEngineError("ragged ratings matrix")
        if any(label is None for label in row):
            raise PkEngineError("every cell must be filled")
    counts = np.zeros((len(ratings), len(categories)))
    cat_index = {c: k for k, c in enumerate(categories)}
    for i, row in enumerate(ratings):
        for label in row:
            counts[i, cat_index[label]] += 1
    p_i = (np.sum(counts**2, axis=1) - n_raters) / (n_raters * (n_raters - 1))
    pa = float(np.mean(p_i))
    p_cat = counts.sum(axis=0) / (len(ratings) * n_raters)
    pe = float(np.sum(p_cat**2))
    if pe == 1.0:
        return 1.0 if pa == 1.0 else 0.0
    return (pa - pe) / (1.0 - pe)


def cohen_kappa(rater_a: list[str], rater_b: list[str]) -> float:
    """Cohen's kappa for exactly two raters."""
    if len(rater_a) != len(rater_b):
        raise PkEngineError("rater lists must have equal length")
    if not rater_a:
        raise PkEngineError("empty ratings")
    n = len(rater_a)
    po = sum(a == b for a, b in zip(rater_a, rater_b)) / n
    categories = sorted(set(rater_a) | set(rater_b))
    pe = sum(
        (rater_a.count(c) / n) * (rater_b.count(c) / n) for c in categories
    )
    if pe == 1.0:
        return 1.0 if po == 1.0 else 0.0
    return (po - pe) / (1.0 - pe)


def explanation_benefit_rate(votes: list[bool]) -> float:
    """Fraction of reviewers who found an explanation beneficial."""
    if not votes:
        raise PkEngineError("empty votes")
    return sum(bool(v) for v in votes) / len(votes)


def evaluate(
    golds: list[str],
    preds: list[str],
    distributions: list[LabelDistribution] | None = None,
    condition_truths: list[tuple[dict[str, bool], dict[str, bool]]] | None = None,
    positive_label: str | None = None,
) -> EvalResult:
    """Assemble the standard evaluation summary.

    ``condition_truths`` pairs predicted with gold per-condition values;
    condition accuracy is computed per condition over items carrying a
    gold value for it.
    """
    acc = accuracy(preds, golds)
    per_label: dict[str, dict] = {}
    auc = None
    label_aucs: dict[str, float | None] = {}
    if distributions is not None:
        scored = list(zip(distributions, golds))
        auc = auc_roc(scored, positive_label=positive_label)
        for label in sorted(set(golds)):
            y = np.array([g == label for g in golds])
            if y.all() or not y.any():
                label_aucs[label] = None
            else:
                s = np.array([dist.get(label) for dist in distributions])
                label_aucs[label] = _binary_auc(s, y)
    for label in sorted(set(golds)):
        support = sum(g == label for g in golds)
        correct = sum(p == g == label for p, g in zip(preds, golds))
        per_label[label] = {
            "support": support,
            "recall": correct / support,
            "auc": label_aucs.get(label),
        }
    cond_acc = None
    if condition_truths is not None:
        hits: dict[str, int] = {}
        totals: dict[str, int] = {}
        for pred_map, gold_map in condition_truths:
            for cid, gold_value in gold_map.items():
                totals[cid] = totals.get(cid, 0) + 1
                if pred_map.get(cid) == gold_value:
                    hits[cid] = hits.get(cid, 0) + 1
        cond_acc = {cid: hits.get(cid, 0) / totals[cid] for cid in totals}
    return EvalResult(
        accuracy=acc,
        auc_roc=auc,
        per_label=per_label,
        condition_accuracy=cond_acc,
        n=len(golds),
    )
