"""FastAPI review service: expert retain/edit loop, reports, statistics.

All mutations (decisions, benefit votes) append to the review log after
validating against a copy of the in-memory state, so killing the process
and replaying the log reconstructs identical state and byte-identical
/stats output.  Optimistic concurrency: decisions carry the revision
they were based on and stale submissions get 409 with the current
revision.  Label/truth inconsistencies get 422 with the rule trace.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

import numpy as np
from fastapi import Depends, FastAPI, HTTPException, Request, Response

from ..annotate import annotate, render_report
from ..dataset import (
    AgreementPolicy,
    ReviewLog,
    ReviewState,
    ReviewTask,
    apply_decision,
    finalize,
)
from ..engine import ThresholdModel, pk_checksum, rule_trace
from ..errors import ConsistencyError, PkEngineError, ReviewConflictError
from ..pk import ProcessKnowledge
from . import schemas

SERVICE_TOKEN_ENV = "PK_SERVICE_TOKEN"


@dataclass
class ServiceState:
    pk: ProcessKnowledge
    log: ReviewLog
    review: ReviewState
    model: ThresholdModel | None = None
    store: object | None = None
    embedder: Callable[[str], np.ndarray] | None = None
    min_reviewers: int = 1
    lock: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def open(
        cls,
        pk: ProcessKnowledge,
        log_path,
        model: ThresholdModel | None = None,
        store=None,
        embedder=None,
        min_reviewers: int = 1,
    ) -> "ServiceState":
        if model is not None and pk_checksum(model.pk) != pk_checksum(pk):
            raise PkEngineError("model's pk checksum does not match the loaded pk")
        log = ReviewLog(log_path)
        review = ReviewState.from_log(pk, log)
        return cls(
            pk=pk, log=log, review=review, model=model, store=store,
            embedder=embedder, min_reviewers=min_reviewers,
        )

    def add_tasks(self, tasks: list[ReviewTask]) -> None:
        with self.lock:
            for task in tasks:
                event = {"event": "task", "task": task.to_dict()}
                self.review.apply_event(event)
                self.log.append(event)


def _auth_dependency(request: Request):
    token = os.environ.get(SERVICE_TOKEN_ENV)
    if not token:
        return
    header = request.headers.get("Authorization", "")
    if header != f"Bearer {token}":
        raise HTTPException(status_code=401, detail="missing or invalid bearer token")


def _task_summary(task: ReviewTask, min_reviewers: int) -> schemas.TaskSummary:
    if not task.decisions:
        status = "pending"
    elif len(task.decisions) < min_reviewers:
        status = "partial"
    else:
        status = "reviewed"
    return schemas.TaskSummary(
        id=task.id,
        status=status,
        revision=task.revision,
        proposal_label=task.proposal.label,
        mandatory_edit=task.proposal.mandatory_edit,
        decisions=len(task.decisions),
    )


def _task_detail(task: ReviewTask) -> schemas.TaskDetail:
    return schemas.TaskDetail(
        id=task.id,
        post=schemas.PostView(
            id=task.post.id, text=task.post.text, gold_label=task.post.gold_label
        ),
        proposal=schemas.ProposalView(**task.proposal.to_dict()),
        decisions=[schemas.DecisionView(**d.to_dict()) for d in task.decisions],
        revision=task.revision,
    )


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="process-knowledge review service",
                  dependencies=[Depends(_auth_dependency)])
    app.state.service = state

    def get_task(task_id: str) -> ReviewTask:
        task = state.review.tasks.get(task_id)
        if task is None:
            raise HTTPException(status_code=404, detail=f"unknown task {task_id!r}")
        return task

    @app.get("/pk", response_model=schemas.PkView)
    def pk_view():
        return schemas.PkView(
            conditions=[schemas.ConditionView(id=c.id, text=c.text) for c in state.pk.conditions],
            rules=[
                schemas.RuleView(conditions=list(r.conditions), label=r.label)
                for r in state.pk.rules
            ],
            fallback_label=state.pk.fallback_label,
            labels=list(state.pk.label_set),
        )

    @app.get("/tasks", response_model=schemas.TaskPage)
    def list_tasks(page: int = 1, page_size: int = 50):
        if page < 1 or page_size < 1:
            raise HTTPException(status_code=422, detail="page and page_size must be >= 1")
        tasks = list(state.review.tasks.values())
        start = (page - 1) * page_size
        items = [_task_summary(t, state.min_reviewers) for t in tasks[start : start + page_size]]
        return schemas.TaskPage(items=items, page=page, page_size=page_size, total=len(tasks))

    @app.get("/tasks/{task_id}", response_model=schemas.TaskDetail)
    def task_detail(task_id: str):
        return _task_detail(get_task(task_id))

    @app.post("/tasks/{task_id}/decision", response_model=schemas.TaskDetail)
    def post_decision(task_id: str, body: schemas.DecisionRequest):
        with state.lock:
            task = get_task(task_id)
            event = {
                "event": "decision",
                "task_id": task_id,
                "reviewer": body.reviewer,
                "action": body.action,
                "based_on_revision": body.based_on_revision,
                "label": body.label,
                "condition_truths": body.conditions,
                "timestamp": datetime.now(timezone.utc).isoformat(),
            }
            # validate against a copy first so the log never records rejects
            probe = ReviewTask.from_dict(task.to_dict())
            try:
                apply_decision(
                    state.pk, probe, body.reviewer, body.action,
                    based_on_revision=body.based_on_revision,
                    label=body.label, condition_truths=body.conditions,
                    timestamp=event["timestamp"],
                )
            except ReviewConflictError as exc:
                raise HTTPException(
                    status_code=409,
                    detail={"detail": str(exc), "current_revision": exc.current_revision},
                )
            except ConsistencyError as exc:
                raise HTTPException(
                    status_code=422, detail={"detail": str(exc), "trace": exc.trace}
                )
            except PkEngineError as exc:
                raise HTTPException(status_code=422, detail={"detail": str(exc)})
            state.log.append(event)
            state.review.apply_event(event)
            return _task_detail(state.review.tasks[task_id])

    @app.post("/trace", response_model=schemas.TraceResponse)
    def trace(body: schemas.TraceRequest):
        satisfied = {cid: bool(body.conditions.get(cid, False)) for cid in state.pk.condition_ids}
        label, trace_lines = rule_trace(state.pk, satisfied)
        fired = None
        for rule in state.pk.rules:
            if all(satisfied[cid] for cid in rule.conditions):
                fired = schemas.RuleView(conditions=list(rule.conditions), label=rule.label)
                break
        return schemas.TraceResponse(label=label, fired_rule=fired, trace=trace_lines)

    @app.get("/reports/{post_id}", response_model=schemas.ReportResponse)
    def report(post_id: str):
        task = get_task(post_id)
        if state.model is None:
            raise HTTPException(status_code=409, detail="no trained model loaded")
        try:
            rep = annotate(
                state.model, post_id, task.post.text,
                store=state.store, embedder=state.embedder,
            )
        except PkEngineError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return schemas.ReportResponse(
            post_id=post_id,
            final_label=rep.final_label,
            human=render_report(rep, format="human"),
            structured=render_report(rep, format="structured"),
        )

    @app.post("/votes/{post_id}", response_model=schemas.VoteResponse)
    def vote(post_id: str, body: schemas.VoteRequest):
        with state.lock:
            get_task(post_id)
            event = {"event": "vote", "post_id": post_id, "beneficial": body.beneficial}
            state.log.append(event)
            state.review.apply_event(event)
            votes = state.review.votes[post_id]
            return schemas.VoteResponse(
                post_id=post_id,
                votes=len(votes),
                benefit_rate=sum(votes) / len(votes),
            )

    @app.get("/stats", response_model=schemas.StatsResponse)
    def stats():
        tasks = list(state.review.tasks.values())
        retain_decisions = sum(
            1 for t in tasks for d in t.decisions if d.action == "retain"
        )
        edit_decisions = sum(1 for t in tasks for d in t.decisions if d.action == "edit")
        reviewed = [t for t in tasks if len(t.decisions) >= state.min_reviewers]
        retained = edited = ties = 0
        edited_fraction = kappa = cohen = None
        statistic = None
        if reviewed:
            _, rep = finalize(
                state.pk, reviewed, AgreementPolicy(min_reviewers=state.min_reviewers)
            )
            retained, edited, ties = rep.retained, rep.edited, rep.excluded_ties
            edited_fraction = rep.edited_fraction
            kappa, statistic, cohen = rep.kappa, rep.kappa_statistic, rep.cohen
        all_votes = [v for votes in state.review.votes.values() for v in votes]
        return schemas.StatsResponse(
            tasks_total=len(tasks),
            fully_reviewed=len(reviewed),
            min_reviewers=state.min_reviewers,
            retain_decisions=retain_decisions,
            edit_decisions=edit_decisions,
            retained_posts=retained,
            edited_posts=edited,
            excluded_ties=ties,
            edited_fraction=edited_fraction,
            kappa=kappa,
            kappa_statistic=statistic,
            cohen=cohen,
            benefit_votes=len(all_votes),
            benefit_votes_true=sum(all_votes),
            benefit_rate=sum(all_votes) / len(all_votes) if all_votes else None,
        )

    @app.get("/export")
    def export():
        reviewed = [
            t for t in state.review.tasks.values()
            if len(t.decisions) >= state.min_reviewers
        ]
        if not reviewed:
            return Response(content="", media_type="application/x-ndjson")
        posts, _ = finalize(
            state.pk, reviewed, AgreementPolicy(min_reviewers=state.min_reviewers)
        )
        body = "".join(json.dumps(p.to_record()) + "\n" for p in posts)
        return Response(content=body, media_type="application/x-ndjson")

    return app
