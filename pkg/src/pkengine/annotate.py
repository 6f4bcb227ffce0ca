"""Fragment-level explanations: sentence splitting, windowing, reports.

Posts are split into sentences by a deterministic rule (terminator
followed by whitespace, with a small fixed abbreviation list), then
windowed into contiguous non-overlapping fragments of exactly three
sentences (the final window holds the remainder).  The post-level label
always comes from the whole-post embedding, matching how thresholds were
trained; fragments only drive the explanation tags.  An alternative that
ORs condition hits over fragments exists behind ``label_source`` but is
off by default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .embeddings import EmbeddingStore, condition_key, fragment_key
from .engine import ConditionEvaluation, ThresholdModel, evaluate_conditions, hard_label
from .errors import EmbeddingError, PkEngineError
from .pk import NO_MATCH, Rule

WINDOW_SENTENCES = 3

ABBREVIATIONS = frozenset(
    {"dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "vs", "etc", "e.g", "i.e", "no"}
)

_TERMINATORS = ".!?"


@dataclass(frozen=True)
class Fragment:
    post_id: str
    index: int
    sentence_span: tuple[int, int]  # half-open [start, end)
    text: str


@dataclass
class FragmentAnnotation:
    fragment: Fragment
    satisfied: list[str]
    positive_sentiment: list[str]
    similarities: dict[str, float]


@dataclass
class AnnotationReport:
    post_id: str
    final_label: str
    fired_rule: Rule | None  # None encodes NO_MATCH / fallback
    fragment_annotations: list[FragmentAnnotation]
    post_level_evaluations: list[ConditionEvaluation]
    condition_texts: dict[str, str] = field(default_factory=dict)


def split_sentences(text: str) -> list[str]:
    """Deterministic rule-based sentence split.

    A run of ``.!?`` followed by whitespace (or end of text) ends a
    sentence unless the preceding word is a known abbreviation.  The
    returned sentences are the original substrings with surrounding
    whitespace trimmed, so joining them (modulo the consumed separators)
    reproduces the input.
    """
    if not text or not text.strip():
        raise PkEngineError("empty text")
    boundaries: list[int] = []
    n = len(text)
    i = 0
    while i < n:
        if text[i] in _TERMINATORS:
            j = i
            while j + 1 < n and text[j + 1] in _TERMINATORS:
                j += 1
            if j + 1 >= n or text[j + 1].isspace():
                k = i - 1
                while k >= 0 and not text[k].isspace():
                    k -= 1
                word = text[k + 1 : i].lower()
                is_abbrev = text[i] == "." and j == i and word in ABBREVIATIONS
                if not is_abbrev:
                    boundaries.append(j + 1)
            i = j + 1
        else:
            i += 1
    sentences: list[str] = []
    start = 0
    for b in boundaries:
        chunk = text[start:b].strip()
        if chunk:
            sentences.append(chunk)
        start = b
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def fragment(post_id: str, text: str) -> list[Fragment]:
    """Contiguous non-overlapping 3-sentence windows covering the post."""
    sentences = split_sentences(text)
    fragments = []
    for idx, lo in enumerate(range(0, len(sentences), WINDOW_SENTENCES)):
        hi = min(lo + WINDOW_SENTENCES, len(sentences))
        fragments.append(
            Fragment(
                post_id=post_id,
                index=idx,
                sentence_span=(lo, hi),
                text=" ".join(sentences[lo:hi]),
            )
        )
    return fragments


def _embed_text(
    key: str,
    text: str,
    store: EmbeddingStore | None,
    embedder: Callable[[str], np.ndarray] | None,
) -> np.ndarray:
    if store is not None and key in store:
        return store.get(key)
    if embedder is not None:
        return embedder(text)
    raise EmbeddingError(f"no embedding for {key!r} and no embedder provided")


def annotate(
    model: ThresholdModel,
    post_id: str,
    text: str,
    store: EmbeddingStore | None = None,
    embedder: Callable[[str], np.ndarray] | None = None,
    label_source: str = "post",
) -> AnnotationReport:
    """Label a post and tag its fragments with condition evidence.

    The post embedding is looked up by post id, fragments by content
    hash; either may fall back to the provided embedder.
    """
    if label_source not in ("post", "fragments"):
        raise PkEngineError(f"unknown label_source {label_source!r}")
    post_vec = _embed_text(post_id, text, store, embedder)
    cond_store = store_with_conditions(model, store, embedder)
    post_evals = evaluate_conditions(model, post_vec, cond_store)
    annotations: list[FragmentAnnotation] = []
    for frag in fragment(post_id, text):
        vec = _embed_text(fragment_key(frag.text), frag.text, store, embedder)
        evals = evaluate_conditions(model, vec, cond_store)
        annotations.append(
            FragmentAnnotation(
                fragment=frag,
                satisfied=[e.condition_id for e in evals if e.satisfied],
                positive_sentiment=[e.condition_id for e in evals if e.positive_sentiment],
                similarities={e.condition_id: e.similarity for e in evals},
            )
        )

    if label_source == "post":
        satisfied = {e.condition_id: e.satisfied for e in post_evals}
    else:
        satisfied = {
            cid: any(cid in ann.satisfied for ann in annotations)
            for cid in model.pk.condition_ids
        }
    label = hard_label(model.pk, satisfied)
    fired = _first_matching_rule(model, satisfied)
    return AnnotationReport(
        post_id=post_id,
        final_label=label,
        fired_rule=fired,
        fragment_annotations=annotations,
        post_level_evaluations=post_evals,
        condition_texts={c.id: c.text for c in model.pk.conditions},
    )


def store_with_conditions(
    model: ThresholdModel,
    store: EmbeddingStore | None,
    embedder: Callable[[str], np.ndarray] | None,
) -> EmbeddingStore:
    """A store guaranteed to hold every ``cond:<id>`` vector."""
    if store is not None and all(condition_key(c.id) in store for c in model.pk.conditions):
        return store
    if embedder is None:
        raise EmbeddingError("condition embeddings missing from store and no embedder provided")
    dim = store.dim if store is not None else len(embedder(model.pk.conditions[0].text))
    merged = EmbeddingStore(dim=dim, name="conditions")
    for cond in model.pk.conditions:
        key = condition_key(cond.id)
        if store is not None and key in store:
            merged.add(key, store.get(key))
        else:
            merged.add(key, embedder(cond.text))
    return merged


def _first_matching_rule(model: ThresholdModel, satisfied: dict[str, bool]) -> Rule | None:
    for rule in model.pk.rules:
        if all(satisfied.get(cid, False) for cid in rule.conditions):
            return rule
    return None


NO_MATCH_LINE = "no process-knowledge rule matched"


def render_report(report: AnnotationReport, format: str = "human") -> str:
    """Render a report for clinicians (human) or round-tripping (structured)."""
    if format == "structured":
        return _render_structured(report)
    if format != "human":
        raise PkEngineError(f"unknown format {format!r}")
    lines = [f"post: {report.post_id}"]
    if report.final_label == NO_MATCH:
        lines.append(f"label: {NO_MATCH} ({NO_MATCH_LINE})")
    else:
        lines.append(f"label: {report.final_label}")
    if report.fired_rule is not None:
        lines.append(f"rule: {report.fired_rule.as_source()}")
    elif report.final_label != NO_MATCH:
        lines.append(f"rule: else -> {report.final_label}")
    else:
        lines.append(f"rule: none ({NO_MATCH_LINE})")
    lines.append("conditions satisfied (whole post):")
    any_sat = False
    for ev in report.post_level_evaluations:
        if ev.satisfied:
            any_sat = True
            text = report.condition_texts.get(ev.condition_id, "")
            lines.append(f"  {ev.condition_id}  {ev.similarity:+.3f}  {text}")
    if not any_sat:
        lines.append("  (none)")
    for ann in report.fragment_annotations:
        lo, hi = ann.fragment.sentence_span
        lines.append(f"fragment {ann.fragment.index + 1} (sentences {lo + 1}-{hi}):")
        lines.append(f"  {ann.fragment.text}")
        for cid in ann.satisfied:
            text = report.condition_texts.get(cid, "")
            lines.append(f"  matches {cid} ({ann.similarities[cid]:+.3f}): {text}")
        for cid in ann.positive_sentiment:
            text = report.condition_texts.get(cid, "")
            lines.append(f"  positive sentiment near {cid}: {text}")
    return "\n".join(lines)


def _render_structured(report: AnnotationReport) -> str:
    records = [
        {
            "record": "post",
            "post_id": report.post_id,
            "final_label": report.final_label,
            "fired_rule": (
                {"conditions": list(report.fired_rule.conditions), "label": report.fired_rule.label}
                if report.fired_rule is not None
                else None
            ),
            "condition_texts": report.condition_texts,
        }
    ]
    records.extend(
        {"record": "evaluation", **ev.to_dict()} for ev in report.post_level_evaluations
    )
    for ann in report.fragment_annotations:
        records.append(
            {
                "record": "fragment",
                "index": ann.fragment.index,
                "sentence_span": list(ann.fragment.sentence_span),
                "text": ann.fragment.text,
                "satisfied": ann.satisfied,
                "positive_sentiment": ann.positive_sentiment,
                "similarities": ann.similarities,
            }
        )
    return "\n".join(json.dumps(rec) for rec in records) + "\n"


def parse_report(text: str) -> AnnotationReport:
    """Inverse of the structured rendering."""
    post_rec = None
    evaluations: list[ConditionEvaluation] = []
    fragments: list[FragmentAnnotation] = []
    post_id = ""
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        kind = rec.pop("record")
        if kind == "post":
            post_rec = rec
            post_id = rec["post_id"]
        elif kind == "evaluation":
            evaluations.append(ConditionEvaluation.from_dict(rec))
        elif kind == "fragment":
            fragments.append(
                FragmentAnnotation(
                    fragment=Fragment(
                        post_id=post_id,
                        index=rec["index"],
                        sentence_span=tuple(rec["sentence_span"]),
                        text=rec["text"],
                    ),
                    satisfied=rec["satisfied"],
                    positive_sentiment=rec["positive_sentiment"],
                    similarities=rec["similarities"],
                )
            )
        else:
            raise PkEngineError(f"unknown record type {kind!r}")
    if post_rec is None:
        raise PkEngineError("structured report missing the post record")
    fired = post_rec["fired_rule"]
    return AnnotationReport(
        post_id=post_rec["post_id"],
        final_label=post_rec["final_label"],
        fired_rule=Rule(tuple(fired["conditions"]), fired["label"]) if fired else None,
        fragment_annotations=fragments,
        post_level_evaluations=evaluations,
        condition_texts=post_rec["condition_texts"],
    )
