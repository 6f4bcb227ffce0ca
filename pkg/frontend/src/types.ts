// API payload types mirroring the review service's response models.

export interface ConditionView {
  id: string;
  text: string;
}

export interface RuleView {
  conditions: string[];
  label: string;
}

export interface PkView {
  conditions: ConditionView[];
  rules: RuleView[];
  fallback_label: string | null;
  labels: string[];
}

export interface PostView {
  id: string;
  text: string;
  gold_label: string | null;
}

export interface ProposalView {
  label: string;
  condition_truths: Record<string, boolean>;
  per_store: Record<string, Record<string, number>>;
  mandatory_edit: boolean;
}

export interface DecisionView {
  reviewer: string;
  action: "retain" | "edit";
  label: string;
  condition_truths: Record<string, boolean>;
  based_on_revision: number;
  timestamp: string;
}

export interface TaskSummary {
  id: string;
  status: "pending" | "partial" | "reviewed";
  revision: number;
  proposal_label: string;
  mandatory_edit: boolean;
  decisions: number;
}

export interface TaskDetail {
  id: string;
  post: PostView;
  proposal: ProposalView;
  decisions: DecisionView[];
  revision: number;
}

export interface TaskPage {
  items: TaskSummary[];
  page: number;
  page_size: number;
  total: number;
}

export interface DecisionRequest {
  reviewer: string;
  action: "retain" | "edit";
  based_on_revision: number;
  label?: string;
  conditions?: Record<string, boolean>;
}

export interface TraceResponse {
  label: string;
  fired_rule: RuleView | null;
  trace: string[];
}

export interface ReportResponse {
  post_id: string;
  final_label: string;
  human: string;
  structured: string;
}

export interface StatsResponse {
  tasks_total: number;
  fully_reviewed: number;
  min_reviewers: number;
  retain_decisions: number;
  edit_decisions: number;
  retained_posts: number;
  edited_posts: number;
  excluded_ties: number;
  edited_fraction: number | null;
  kappa: number | null;
  kappa_statistic: string | null;
  cohen: number | null;
  benefit_votes: number;
  benefit_votes_true: number;
  benefit_rate: number | null;
}

export interface VoteResponse {
  post_id: string;
  votes: number;
  benefit_rate: number;
}
