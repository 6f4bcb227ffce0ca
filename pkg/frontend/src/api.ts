// Typed client for the review service. The UI never computes labels itself:
// every label it shows comes from this API (proposals, traces, reports).

import type {
  DecisionRequest,
  PkView,
  ReportResponse,
  StatsResponse,
  TaskDetail,
  TaskPage,
  TraceResponse,
  VoteResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    public status: number,
    public currentRevision: number | null = null,
    public trace: string[] | null = null,
  ) {
    super(message);
  }
}

interface ErrorDetail {
  detail?: string | { detail?: string; current_revision?: number; trace?: string[] };
}

export class ReviewApi {
  constructor(
    private baseUrl: string,
    private token: string | null = null,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      ...init,
      headers: { ...this.headers(), ...(init?.headers ?? {}) },
    });
    if (!response.ok) {
      let body: ErrorDetail = {};
      try {
        body = (await response.json()) as ErrorDetail;
      } catch {
        // non-JSON error body; fall through with the status line only
      }
      const detail = body.detail;
      if (typeof detail === "object" && detail !== null) {
        throw new ApiError(
          detail.detail ?? `HTTP ${response.status}`,
          response.status,
          detail.current_revision ?? null,
          detail.trace ?? null,
        );
      }
      throw new ApiError(detail ?? `HTTP ${response.status}`, response.status);
    }
    return (await response.json()) as T;
  }

  pk(): Promise<PkView> {
    return this.request<PkView>("/pk");
  }

  tasks(page = 1, pageSize = 50): Promise<TaskPage> {
    return this.request<TaskPage>(`/tasks?page=${page}&page_size=${pageSize}`);
  }

  task(id: string): Promise<TaskDetail> {
    return this.request<TaskDetail>(`/tasks/${encodeURIComponent(id)}`);
  }

  submitDecision(id: string, body: DecisionRequest): Promise<TaskDetail> {
    return this.request<TaskDetail>(`/tasks/${encodeURIComponent(id)}/decision`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  trace(conditions: Record<string, boolean>): Promise<TraceResponse> {
    return this.request<TraceResponse>("/trace", {
      method: "POST",
      body: JSON.stringify({ conditions }),
    });
  }

  report(postId: string): Promise<ReportResponse> {
    return this.request<ReportResponse>(`/reports/${encodeURIComponent(postId)}`);
  }

  vote(postId: string, beneficial: boolean): Promise<VoteResponse> {
    return this.request<VoteResponse>(`/votes/${encodeURIComponent(postId)}`, {
      method: "POST",
      body: JSON.stringify({ beneficial }),
    });
  }

  stats(): Promise<StatsResponse> {
    return this.request<StatsResponse>("/stats");
  }

  async exportDataset(): Promise<string> {
    const response = await this.fetchImpl(`${this.baseUrl}/export`, {
      headers: this.headers(),
    });
    if (!response.ok) throw new ApiError(`HTTP ${response.status}`, response.status);
    return response.text();
  }
}
