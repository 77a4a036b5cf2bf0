// Keyword discovery flow, two steps: mark the microposts whose predicted
// class looks correct, then click one token inside the marked set.

import { ApiError, TaskServiceClient } from "./api.js";
import { SessionState } from "./session.js";
import type { PickSubmission, PickTask, SubmitResponse } from "./types.js";

export class KeywordPickFlow {
  private marked = new Set<string>();
  lastError: string | null = null;

  constructor(
    private readonly client: TaskServiceClient,
    private readonly session: SessionState,
  ) {}

  get task(): PickTask | null {
    const current = this.session.currentTask;
    return current && current.kind === "keyword_pick" ? current : null;
  }

  async loadNext(): Promise<PickTask | null> {
    if (this.task) {
      return this.task;
    }
    const envelope = await this.client.nextTask(this.session.workerId);
    if (envelope.task === null || envelope.task.kind !== "keyword_pick") {
      return null;
    }
    this.marked = new Set();
    this.session.claim(envelope.task);
    return envelope.task;
  }

  markedIds(): string[] {
    const task = this.task;
    if (!task) {
      return [];
    }
    // keep payload order, not click order
    return task.items.map((item) => item.item_id).filter((id) => this.marked.has(id));
  }

  toggleMark(itemId: string): boolean {
    const task = this.task;
    if (!task || !task.items.some((item) => item.item_id === itemId)) {
      throw new Error(`item ${itemId} is not part of the task`);
    }
    if (this.marked.has(itemId)) {
      this.marked.delete(itemId);
      return false;
    }
    this.marked.add(itemId);
    return true;
  }

  /** Step 2 is available only once at least one micropost is marked. */
  get tokenStepEnabled(): boolean {
    return this.marked.size > 0;
  }

  /** The exact click targets: tokens of the marked microposts only. */
  clickableTokens(): Set<string> {
    const task = this.task;
    if (!task) {
      return new Set();
    }
    const tokens = new Set<string>();
    for (const item of task.items) {
      if (this.marked.has(item.item_id)) {
        for (const token of item.tokens) {
          tokens.add(token);
        }
      }
    }
    return tokens;
  }

  buildSubmission(token: string): PickSubmission {
    const task = this.task;
    if (!task) {
      throw new Error("no keyword task in flight");
    }
    if (!this.tokenStepEnabled) {
      throw new Error("mark at least one micropost before picking a token");
    }
    if (!this.clickableTokens().has(token)) {
      throw new Error(`token ${token!} does not occur in a marked micropost`);
    }
    return {
      task_id: task.task_id,
      worker_id: this.session.workerId,
      correct_ids: this.markedIds(),
      token,
    };
  }

  async clickToken(token: string): Promise<SubmitResponse> {
    const submission = this.buildSubmission(token);
    try {
      const response = await this.client.submit(submission);
      this.lastError = null;
      this.session.release();
      this.marked = new Set();
      return response;
    } catch (error) {
      if (error instanceof ApiError) {
        this.lastError = error.detail;
      }
      throw error;
    }
  }
}
