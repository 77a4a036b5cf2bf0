// Thin typed client over the task service endpoints. The fetch function is
// injectable so tests can run against a scripted server.

import type {
  LoopHistory,
  LoopStatus,
  SubmitResponse,
  Submission,
  TaskEnvelope,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

export class TaskServiceClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    const body = (await response.json()) as T & { detail?: string };
    if (!response.ok) {
      throw new ApiError(response.status, body.detail ?? "request failed");
    }
    return body;
  }

  status(): Promise<LoopStatus> {
    return this.get("/status");
  }

  nextTask(workerId: string): Promise<TaskEnvelope> {
    return this.get(`/task?worker=${encodeURIComponent(workerId)}`);
  }

  history(): Promise<LoopHistory> {
    return this.get("/history");
  }

  async submit(submission: Submission): Promise<SubmitResponse> {
    const response = await this.fetchFn(this.baseUrl + "/submit", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(submission),
    });
    const body = (await response.json()) as SubmitResponse & { detail?: string };
    if (!response.ok) {
      throw new ApiError(response.status, body.detail ?? "submission rejected");
    }
    return body;
  }
}
