"""Construction of process-knowledge-augmented datasets.

Machine proposals come from max-over-stores cosine similarity against a
fixed 0.5 threshold; experts then retain or edit each proposal under
optimistic concurrency (revision checks).  Edits must entail their label
through the rule order, which guarantees every finalized post's
condition truths reproduce its label.  All review state is reconstructed
by replaying a single append-only log file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingStore, condition_key
from .engine import rule_trace
from .errors import (
    ConsistencyError,
    EmbeddingError,
    PkEngineError,
    ReviewConflictError,
)
from .metrics import cohen_kappa, fleiss_kappa
from .pk import NO_MATCH, ProcessKnowledge

PROVENANCE_MACHINE = "machine"
PROVENANCE_RETAINED = "expert-retained"
PROVENANCE_EDITED = "expert-edited"

PROPOSAL_THRESHOLD = 0.5


@dataclass
class LabeledPost:
    id: str
    text: str
    gold_label: str | None = None
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise PkEngineError("post id must be non-empty")
        if not self.text:
            raise PkEngineError(f"post {self.id!r}: text must be non-empty")


@dataclass
class PkAugmentedPost:
    id: str
    text: str
    label: str
    condition_truths: dict[str, bool] | None
    provenance: str
    reviewers: tuple[str, ...] = ()
    no_match_flag: bool = False
    source: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec: dict = {"id": self.id, "text": self.text, "label": self.label}
        if self.condition_truths is not None:
            rec["conditions"] = dict(self.condition_truths)
        rec["provenance"] = self.provenance
        if self.reviewers:
            rec["reviewers"] = list(self.reviewers)
        if self.no_match_flag:
            rec["no_match"] = True
        if self.source:
            rec["source"] = self.source
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "PkAugmentedPost":
        return cls(
            id=rec["id"],
            text=rec["text"],
            label=rec["label"],
            condition_truths=rec.get("conditions"),
            provenance=rec["provenance"],
            reviewers=tuple(rec.get("reviewers", ())),
            no_match_flag=bool(rec.get("no_match", False)),
            source=rec.get("source", {}),
        )


@dataclass
class Decision:
    reviewer: str
    action: str  # retain | edit
    label: str
    condition_truths: dict[str, bool]
    based_on_revision: int
    timestamp: str = ""

    def to_dict(self) -> dict:
        return {
            "reviewer": self.reviewer,
            "action": self.action,
            "label": self.label,
            "condition_truths": dict(self.condition_truths),
            "based_on_revision": self.based_on_revision,
            "timestamp": self.timestamp,
        }


@dataclass
class MachineProposal:
    label: str
    condition_truths: dict[str, bool]
    per_store: dict[str, dict[str, float]]
    mandatory_edit: bool

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "condition_truths": dict(self.condition_truths),
            "per_store": {k: dict(v) for k, v in self.per_store.items()},
            "mandatory_edit": self.mandatory_edit,
        }


@dataclass
class ReviewTask:
    post: LabeledPost
    proposal: MachineProposal
    decisions: list[Decision] = field(default_factory=list)
    revision: int = 0

    @property
    def id(self) -> str:
        return self.post.id

    def to_dict(self) -> dict:
        return {
            "post": {
                "id": self.post.id,
                "text": self.post.text,
                "gold_label": self.post.gold_label,
                "source": self.post.source,
            },
            "proposal": self.proposal.to_dict(),
            "decisions": [d.to_dict() for d in self.decisions],
            "revision": self.revision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReviewTask":
        return cls(
            post=LabeledPost(
                id=d["post"]["id"],
                text=d["post"]["text"],
                gold_label=d["post"].get("gold_label"),
                source=d["post"].get("source", {}),
            ),
            proposal=MachineProposal(
                label=d["proposal"]["label"],
                condition_truths=d["proposal"]["condition_truths"],
                per_store={k: dict(v) for k, v in d["proposal"]["per_store"].items()},
                mandatory_edit=d["proposal"]["mandatory_edit"],
            ),
            decisions=[Decision(**dd) for dd in d.get("decisions", [])],
            revision=d.get("revision", 0),
        )


def propose(
    pk: ProcessKnowledge,
    posts: list[LabeledPost],
    stores: list[EmbeddingStore],
    threshold: float = PROPOSAL_THRESHOLD,
) -> list[ReviewTask]:
    """Machine-propose labels: condition satisfied iff max cosine over stores
    reaches the threshold; the threshold applies after the max."""
    if not stores:
        raise PkEngineError("propose needs at least one embedding store")
    tasks = []
    for post in posts:
        per_store: dict[str, dict[str, float]] = {}
        truths: dict[str, bool] = {}
        for cond in pk.conditions:
            best = -np.inf
            for store in stores:
                if post.id not in store:
                    raise EmbeddingError(
                        f"post {post.id!r} missing from store {store.name!r}"
                    )
                sim = float(np.dot(store.get(post.id), store.get(condition_key(cond.id))))
                per_store.setdefault(store.name, {})[cond.id] = sim
                best = max(best, sim)
            truths[cond.id] = best >= threshold
        label, _ = rule_trace(pk, truths)
        tasks.append(
            ReviewTask(
                post=post,
                proposal=MachineProposal(
                    label=label,
                    condition_truths=truths,
                    per_store=per_store,
                    mandatory_edit=label == NO_MATCH,
                ),
            )
        )
    return tasks


def apply_decision(
    pk: ProcessKnowledge,
    task: ReviewTask,
    reviewer: str,
    action: str,
    based_on_revision: int,
    label: str | None = None,
    condition_truths: dict[str, bool] | None = None,
    timestamp: str = "",
) -> ReviewTask:
    """Record a retain/edit verdict, enforcing revision and rule consistency.

    Mutates and returns the task.  A retain copies the machine proposal;
    an edit must supply a label whose condition truths entail it (the
    rejection carries the rule trace).  A stale ``based_on_revision``
    raises :class:`ReviewConflictError` with the current revision.
    """
    if action not in ("retain", "edit"):
        raise PkEngineError(f"unknown action {action!r}")
    if based_on_revision != task.revision:
        raise ReviewConflictError(
            f"task {task.id!r}: decision based on revision {based_on_revision}, "
            f"current is {task.revision}",
            current_revision=task.revision,
        )
    if any(d.reviewer == reviewer for d in task.decisions):
        raise PkEngineError(f"reviewer {reviewer!r} already decided task {task.id!r}")

    if action == "retain":
        if task.proposal.mandatory_edit:
            _, trace = rule_trace(pk, task.proposal.condition_truths)
            raise ConsistencyError(
                f"task {task.id!r} is flagged for mandatory edit; retain not allowed",
                trace=trace,
            )
        label = task.proposal.label
        condition_truths = dict(task.proposal.condition_truths)
    else:
        if label is None or condition_truths is None:
            raise PkEngineError("edit requires both a label and condition truths")
        missing = [c for c in pk.condition_ids if c not in condition_truths]
        if missing:
            raise PkEngineError(f"edit missing condition truths for: {', '.join(missing)}")
        entailed, trace = rule_trace(pk, condition_truths)
        if entailed != label:
            raise ConsistencyError(
                f"edited label {label!r} inconsistent: truths entail {entailed!r}",
                trace=trace,
            )

    task.decisions.append(
        Decision(
            reviewer=reviewer,
            action=action,
            label=label,
            condition_truths=dict(condition_truths),
            based_on_revision=based_on_revision,
            timestamp=timestamp,
        )
    )
    task.revision += 1
    return task


@dataclass
class AgreementPolicy:
    min_reviewers: int = 3


@dataclass
class FinalizeReport:
    total_tasks: int
    finalized: int
    retained: int
    edited: int
    excluded_ties: int
    edited_fraction: float | None
    kappa: float | None
    kappa_statistic: str | None
    cohen: float | None = None

    def to_dict(self) -> dict:
        return {
            "total_tasks": self.total_tasks,
            "finalized": self.finalized,
            "retained": self.retained,
            "edited": self.edited,
            "excluded_ties": self.excluded_ties,
            "edited_fraction": self.edited_fraction,
            "kappa": self.kappa,
            "kappa_statistic": self.kappa_statistic,
            "cohen": self.cohen,
        }


def finalize(
    pk: ProcessKnowledge,
    tasks: list[ReviewTask],
    policy: AgreementPolicy | None = None,
) -> tuple[list[PkAugmentedPost], FinalizeReport]:
    """Majority-vote finalization plus agreement statistics.

    Label ties are flagged and excluded.  The winning label's condition
    truths come from the earliest decision that voted for it (valid by
    construction, since every accepted edit entails its label).  Kappa is
    Fleiss over the first k decisions per task, k being the smallest
    decision count; Cohen is reported alongside when k == 2.
    """
    policy = policy or AgreementPolicy()
    unreviewed = [t.id for t in tasks if len(t.decisions) < policy.min_reviewers]
    if unreviewed:
        raise PkEngineError(
            f"tasks below {policy.min_reviewers} decisions: {', '.join(unreviewed[:5])}"
        )
    if not tasks:
        raise PkEngineError("no tasks to finalize")

    posts: list[PkAugmentedPost] = []
    retained = edited = ties = 0
    for task in tasks:
        votes: dict[str, int] = {}
        for d in task.decisions:
            votes[d.label] = votes.get(d.label, 0) + 1
        top = max(votes.values())
        winners = [label for label, count in votes.items() if count == top]
        if len(winners) > 1:
            ties += 1
            continue
        winner = winners[0]
        chosen = next(d for d in task.decisions if d.label == winner)
        provenance = PROVENANCE_EDITED if chosen.action == "edit" else PROVENANCE_RETAINED
        if provenance == PROVENANCE_EDITED:
            edited += 1
        else:
            retained += 1
        posts.append(
            PkAugmentedPost(
                id=task.post.id,
                text=task.post.text,
                label=winner,
                condition_truths=dict(chosen.condition_truths),
                provenance=provenance,
                reviewers=tuple(sorted({d.reviewer for d in task.decisions})),
                no_match_flag=winner == NO_MATCH,
                source=task.post.source,
            )
        )

    k = min(len(t.decisions) for t in tasks)
    kappa = statistic = cohen = None
    if k >= 2:  # agreement is undefined for a single rater
        ratings = [[d.label for d in t.decisions[:k]] for t in tasks]
        kappa = fleiss_kappa(ratings)
        statistic = "fleiss"
        if k == 2:
            cohen = cohen_kappa([r[0] for r in ratings], [r[1] for r in ratings])
    finalized = len(posts)
    report = FinalizeReport(
        total_tasks=len(tasks),
        finalized=finalized,
        retained=retained,
        edited=edited,
        excluded_ties=ties,
        edited_fraction=edited / finalized if finalized else None,
        kappa=kappa,
        kappa_statistic=statistic,
        cohen=cohen,
    )
    return posts, report


# --------------------------------------------------------------------------
# Dataset files


def export_dataset(posts: list[PkAugmentedPost], path: str | Path) -> None:
    seen: set[str] = set()
    for post in posts:
        if post.id in seen:
            raise PkEngineError(f"duplicate post id {post.id!r}")
        seen.add(post.id)
    with open(path, "w", encoding="utf-8") as fh:
        for post in posts:
            fh.write(json.dumps(post.to_record()) + "\n")


def import_dataset(path: str | Path) -> list[PkAugmentedPost]:
    posts: list[PkAugmentedPost] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                post = PkAugmentedPost.from_record(rec)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise PkEngineError(f"{path}:{lineno}: malformed record: {exc}")
            if post.id in seen:
                raise PkEngineError(f"{path}:{lineno}: duplicate id {post.id!r}")
            seen.add(post.id)
            posts.append(post)
    return posts


def load_posts(path: str | Path) -> list[LabeledPost]:
    """Read {"id", "text", optional "label"} JSONL into LabeledPosts."""
    posts: list[LabeledPost] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                post = LabeledPost(
                    id=rec["id"],
                    text=rec["text"],
                    gold_label=rec.get("label"),
                    source=rec.get("source", {}),
                )
            except (json.JSONDecodeError, KeyError, TypeError, PkEngineError) as exc:
                raise PkEngineError(f"{path}:{lineno}: malformed record: {exc}")
            if post.id in seen:
                raise PkEngineError(f"{path}:{lineno}: duplicate id {post.id!r}")
            seen.add(post.id)
            posts.append(post)
    return posts


# --------------------------------------------------------------------------
# Append-only review log


class ReviewLog:
    """Single-file append log; state is reconstructable by replay."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, record: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
            fh.flush()

    def replay(self) -> list[dict]:
        if not self.path.exists():
            return []
        records = []
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise PkEngineError(f"{self.path}:{lineno}: corrupt log record: {exc}")
        return records


class ReviewState:
    """In-memory review state driven purely by log events."""

    def __init__(self, pk: ProcessKnowledge):
        self.pk = pk
        self.tasks: dict[str, ReviewTask] = {}
        self.votes: dict[str, list[bool]] = {}

    def apply_event(self, event: dict) -> None:
        kind = event.get("event")
        if kind == "task":
            task = ReviewTask.from_dict(event["task"])
            if task.id in self.tasks:
                raise PkEngineError(f"duplicate task {task.id!r} in log")
            self.tasks[task.id] = task
        elif kind == "decision":
            task = self.tasks.get(event["task_id"])
            if task is None:
                raise PkEngineError(f"decision for unknown task {event['task_id']!r}")
            apply_decision(
                self.pk,
                task,
                reviewer=event["reviewer"],
                action=event["action"],
                based_on_revision=event["based_on_revision"],
                label=event.get("label"),
                condition_truths=event.get("condition_truths"),
                timestamp=event.get("timestamp", ""),
            )
        elif kind == "vote":
            self.votes.setdefault(event["post_id"], []).append(bool(event["beneficial"]))
        else:
            raise PkEngineError(f"unknown log event {kind!r}")

    @classmethod
    def from_log(cls, pk: ProcessKnowledge, log: ReviewLog) -> "ReviewState":
        state = cls(pk)
        for event in log.replay():
            state.apply_event(event)
        return state
