// Classification flow: show one micropost with the guidance examples,
// capture a binary choice, submit, fetch the next task.

import { ApiError, TaskServiceClient } from "./api.js";
import { SessionState } from "./session.js";
import type { ClassifySubmission, ClassifyTask, SubmitResponse } from "./types.js";

export class ClassificationFlow {
  lastError: string | null = null;

  constructor(
    private readonly client: TaskServiceClient,
    private readonly session: SessionState,
  ) {}

  get task(): ClassifyTask | null {
    const current = this.session.currentTask;
    return current && current.kind === "classify" ? current : null;
  }

  async loadNext(): Promise<ClassifyTask | null> {
    if (this.task) {
      return this.task;
    }
    const envelope = await this.client.nextTask(this.session.workerId);
    if (envelope.task === null || envelope.task.kind !== "classify") {
      return null;
    }
    this.session.claim(envelope.task);
    return envelope.task;
  }

  buildSubmission(label: 0 | 1): ClassifySubmission {
    const task = this.task;
    if (!task) {
      throw new Error("no classification task in flight");
    }
    return { task_id: task.task_id, worker_id: this.session.workerId, label };
  }

  /** Submit the choice; on rejection the task stays claimed for re-display. */
  async choose(label: 0 | 1): Promise<SubmitResponse> {
    const submission = this.buildSubmission(label);
    try {
      const response = await this.client.submit(submission);
      this.lastError = null;
      this.session.release();
      return response;
    } catch (error) {
      if (error instanceof ApiError) {
        this.lastError = error.detail;
      }
      throw error;
    }
  }
}
