"""Synthetic corpus generation from condition-keyed templates.

Each generated post embeds the text of every condition it is meant to
satisfy inside a carrier sentence, padded with neutral filler sentences.
With the deterministic hash embedder this yields a corpus whose
condition similarities are separable, so the whole train/eval pipeline
can run without any external language model.

Also ships the trivial lexicon sentiment oracle used for gamma fitting
in tests: the real system takes oracle verdicts as an input artifact.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .dataset import LabeledPost
from .engine import rule_trace
from .pk import ProcessKnowledge

# Each carrier mentions the condition text twice so the hashed signal
# survives dilution by surrounding sentences.
CONDITION_TEMPLATES = [
    "Lately it has been {text}; yes, {text}.",
    "I keep coming back to {text}, truly {text}.",
    "Honestly, {text} describes me; {text} exactly.",
    "My week was dominated by {text}, always {text}.",
]

FILLER_SENTENCES = [
    "The bus was late again this morning.",
    "My neighbor plays loud music on weekends.",
    "Dinner was pasta with too much garlic.",
    "The printer at work jammed twice.",
    "Rain kept tapping on the window all afternoon.",
    "I reorganized the garage shelves.",
    "The football match ended in a draw.",
    "Groceries cost more than last month.",
]

POSITIVE_FILLERS = [
    "I enjoyed a lovely walk in the park.",
    "A friend made me laugh until my cheeks hurt.",
    "The sunrise today was genuinely beautiful.",
]

POSITIVE_WORDS = frozenset(
    {"enjoy", "enjoyed", "lovely", "laugh", "beautiful", "wonderful", "happy", "great"}
)

_TOKEN_RE = re.compile(r"[a-z]+")


def lexicon_sentiment(text: str) -> bool:
    """True when any positive lexicon word occurs. Deliberately naive."""
    return any(tok in POSITIVE_WORDS for tok in _TOKEN_RE.findall(text.lower()))


def _case_assignments(pk: ProcessKnowledge) -> list[dict[str, bool]]:
    """One canonical truth assignment per rule, plus all-false if a fallback exists."""
    cases = []
    for rule in pk.rules:
        truths = {cid: cid in rule.conditions for cid in pk.condition_ids}
        label, _ = rule_trace(pk, truths)
        if label == rule.label:  # skip rules shadowed by earlier ones
            cases.append(truths)
    if pk.fallback_label is not None:
        cases.append({cid: False for cid in pk.condition_ids})
    return cases


def generate_corpus(
    pk: ProcessKnowledge,
    n: int,
    seed: int = 0,
    positive_share: float = 0.25,
) -> list[tuple[LabeledPost, dict[str, bool]]]:
    """Generate n labeled posts cycling through one case per rule.

    Returns (post, condition_truths) pairs; the post's gold label is the
    hard label of its truths.  A share of posts gets a positive filler
    sentence so the lexicon sentiment oracle has signal.
    """
    rng = np.random.default_rng(seed)
    cases = _case_assignments(pk)
    text_of = {c.id: c.text for c in pk.conditions}
    out: list[tuple[LabeledPost, dict[str, bool]]] = []
    for i in range(n):
        truths = cases[i % len(cases)]
        label, _ = rule_trace(pk, truths)
        sentences = []
        for cid in pk.condition_ids:
            if truths[cid]:
                template = CONDITION_TEMPLATES[rng.integers(len(CONDITION_TEMPLATES))]
                sentences.append(template.format(text=text_of[cid].lower()))
        n_filler = int(rng.integers(1, 3))
        for _ in range(n_filler):
            sentences.append(FILLER_SENTENCES[rng.integers(len(FILLER_SENTENCES))])
        if rng.random() < positive_share:
            sentences.append(POSITIVE_FILLERS[rng.integers(len(POSITIVE_FILLERS))])
        order = rng.permutation(len(sentences))
        text = " ".join(sentences[j] for j in order)
        post = LabeledPost(id=f"synth-{i:04d}", text=text, gold_label=label)
        out.append((post, dict(truths)))
    return out


def write_corpus(
    corpus: list[tuple[LabeledPost, dict[str, bool]]], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for post, truths in corpus:
            fh.write(
                json.dumps(
                    {
                        "id": post.id,
                        "text": post.text,
                        "label": post.gold_label,
                        "conditions": truths,
                    }
                )
                + "\n"
            )
