"""Pydantic request/response models for the review service API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ConditionView(BaseModel):
    id: str
    text: str


class RuleView(BaseModel):
    conditions: list[str]
    label: str


class PkView(BaseModel):
    conditions: list[ConditionView]
    rules: list[RuleView]
    fallback_label: str | None
    labels: list[str]


class PostView(BaseModel):
    id: str
    text: str
    gold_label: str | None = None


class ProposalView(BaseModel):
    label: str
    condition_truths: dict[str, bool]
    per_store: dict[str, dict[str, float]]
    mandatory_edit: bool


class DecisionView(BaseModel):
    reviewer: str
    action: str
    label: str
    condition_truths: dict[str, bool]
    based_on_revision: int
    timestamp: str


class TaskSummary(BaseModel):
    id: str
    status: str  # pending | partial | reviewed
    revision: int
    proposal_label: str
    mandatory_edit: bool
    decisions: int


class TaskDetail(BaseModel):
    id: str
    post: PostView
    proposal: ProposalView
    decisions: list[DecisionView]
    revision: int


class TaskPage(BaseModel):
    items: list[TaskSummary]
    page: int
    page_size: int
    total: int


class DecisionRequest(BaseModel):
    reviewer: str = Field(min_length=1)
    action: str  # retain | edit
    based_on_revision: int
    label: str | None = None
    conditions: dict[str, bool] | None = None


class TraceRequest(BaseModel):
    conditions: dict[str, bool]


class TraceResponse(BaseModel):
    label: str
    fired_rule: RuleView | None
    trace: list[str]


class ReportResponse(BaseModel):
    post_id: str
    final_label: str
    human: str
    structured: str


class VoteRequest(BaseModel):
    beneficial: bool


class VoteResponse(BaseModel):
    post_id: str
    votes: int
    benefit_rate: float


class StatsResponse(BaseModel):
    tasks_total: int
    fully_reviewed: int
    min_reviewers: int
    retain_decisions: int
    edit_decisions: int
    retained_posts: int
    edited_posts: int
    excluded_ties: int
    edited_fraction: float | None
    kappa: float | None
    kappa_statistic: str | None
    cohen: float | None
    benefit_votes: int
    benefit_votes_true: int
    benefit_rate: float | None


class ErrorBody(BaseModel):
    detail: str
    current_revision: int | None = None
    trace: list[str] | None = None
