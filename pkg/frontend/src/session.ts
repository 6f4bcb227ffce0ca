// Review session state machine: step task to task, toggle condition
// truths with live rule traces from the service, retain or edit with
// optimistic-concurrency handling, and vote on explanation benefit.

import { ApiError, ReviewApi } from "./api.js";
import { RetryQueue } from "./queue.js";
import type {
  DecisionRequest,
  PkView,
  TaskDetail,
  TraceResponse,
  VoteResponse,
} from "./types.js";

export interface SubmitResult {
  outcome: "accepted" | "conflict" | "inconsistent" | "queued";
  task?: TaskDetail;
  message?: string;
  trace?: string[] | null;
  currentRevision?: number | null;
}

export class ReviewSession {
  pk: PkView | null = null;
  current: TaskDetail | null = null;
  taskIds: string[] = [];
  cursor = -1;
  /** Local edit buffer: condition truths being toggled by the expert. */
  truths: Record<string, boolean> = {};
  /** Latest live trace for the buffer, fetched from the service. */
  liveTrace: TraceResponse | null = null;

  private decisionQueue: RetryQueue<{ taskId: string; body: DecisionRequest }>;
  private voteQueue: RetryQueue<{ postId: string; beneficial: boolean }>;

  constructor(
    private api: ReviewApi,
    public reviewer: string,
  ) {
    this.decisionQueue = new RetryQueue(async ({ taskId, body }) => {
      await this.api.submitDecision(taskId, body);
    });
    this.voteQueue = new RetryQueue(async ({ postId, beneficial }) => {
      await this.api.vote(postId, beneficial);
    });
  }

  get pendingSubmissions(): number {
    return this.decisionQueue.pending + this.voteQueue.pending;
  }

  async start(): Promise<void> {
    this.pk = await this.api.pk();
    const page = await this.api.tasks(1, 500);
    this.taskIds = page.items.map((t) => t.id);
    this.cursor = -1;
    await this.next();
  }

  async loadTask(id: string): Promise<TaskDetail> {
    this.current = await this.api.task(id);
    this.truths = { ...this.current.proposal.condition_truths };
    this.liveTrace = null;
    return this.current;
  }

  async next(): Promise<TaskDetail | null> {
    if (this.cursor + 1 >= this.taskIds.length) return null;
    this.cursor += 1;
    return this.loadTask(this.taskIds[this.cursor]!);
  }

  /** Toggle one condition in the edit buffer and refresh the live trace. */
  async toggle(conditionId: string): Promise<TraceResponse> {
    this.truths[conditionId] = !this.truths[conditionId];
    this.liveTrace = await this.api.trace(this.truths);
    return this.liveTrace;
  }

  async refreshTrace(): Promise<TraceResponse> {
    this.liveTrace = await this.api.trace(this.truths);
    return this.liveTrace;
  }

  /** One-click retain of the machine proposal. */
  retain(): Promise<SubmitResult> {
    return this.submit({ action: "retain" });
  }

  /** Submit the edit buffer; the label is whatever the live trace entails. */
  async edit(): Promise<SubmitResult> {
    const trace = this.liveTrace ?? (await this.refreshTrace());
    return this.submit({
      action: "edit",
      label: trace.label,
      conditions: { ...this.truths },
    });
  }

  private async submit(
    partial: Pick<DecisionRequest, "action" | "label" | "conditions">,
  ): Promise<SubmitResult> {
    if (!this.current) throw new Error("no task loaded");
    const body: DecisionRequest = {
      reviewer: this.reviewer,
      based_on_revision: this.current.revision,
      ...partial,
    };
    const taskId = this.current.id;
    try {
      const status = await this.decisionQueue.submit({ taskId, body });
      if (status === "queued") {
        return { outcome: "queued", message: "offline: decision parked for retry" };
      }
      const task = await this.api.task(taskId);
      this.current = task;
      return { outcome: "accepted", task };
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // stale revision: reload so the expert can rebase, never overwrite
        const fresh = await this.loadTask(taskId);
        return {
          outcome: "conflict",
          task: fresh,
          message: error.message,
          currentRevision: error.currentRevision,
        };
      }
      if (error instanceof ApiError && error.status === 422) {
        return { outcome: "inconsistent", message: error.message, trace: error.trace };
      }
      throw error;
    }
  }

  async vote(beneficial: boolean): Promise<SubmitResult> {
    if (!this.current) throw new Error("no task loaded");
    const status = await this.voteQueue.submit({ postId: this.current.id, beneficial });
    return status === "sent"
      ? { outcome: "accepted" }
      : { outcome: "queued", message: "offline: vote parked for retry" };
  }

  /** Retry anything parked while offline. */
  async flushQueues(): Promise<number> {
    return (await this.decisionQueue.flush()) + (await this.voteQueue.flush());
  }
}

export type { TraceResponse, VoteResponse };
