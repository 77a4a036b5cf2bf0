// One worker session per browser tab: at most one task in flight.

import type { Task } from "./types.js";

export class SessionState {
  private current: Task | null = null;

  constructor(readonly workerId: string) {
    if (!workerId) {
      throw new Error("worker id must be non-empty");
    }
  }

  get currentTask(): Task | null {
    return this.current;
  }

  claim(task: Task): void {
    if (this.current !== null) {
      throw new Error(
        `task ${this.current.task_id} is still in flight; finish it first`,
      );
    }
    this.current = task;
  }

  release(): void {
    this.current = null;
  }
}
