import { describe, expect, it } from "vitest";

import { ApiError, TaskServiceClient } from "../src/api.js";
import { SessionState } from "../src/session.js";
import { MockServer } from "./mock_server.js";

describe("task service client", () => {
  it("fetches status and tasks", async () => {
    const server = new MockServer("hack", [{ item_id: "u1", text: "x" }], [], 1);
    const client = new TaskServiceClient("", server.fetch);
    const status = await client.status();
    expect(status.phase).toBe("classify");
    const envelope = await client.nextTask("w1");
    expect(envelope.task?.kind).toBe("classify");
  });

  it("wraps service errors with status and detail", async () => {
    const server = new MockServer("hack", [{ item_id: "u1", text: "x" }], [], 1);
    const client = new TaskServiceClient("", server.fetch);
    try {
      await client.submit({ task_id: "nope", worker_id: "w", label: 1 });
      expect.unreachable();
    } catch (error) {
      expect(error).toBeInstanceOf(ApiError);
      expect((error as ApiError).status).toBe(404);
      expect((error as ApiError).detail).toMatch(/unknown task/);
    }
  });

  it("encodes worker ids in the task query", async () => {
    const urls: string[] = [];
    const client = new TaskServiceClient("", async (url) => {
      urls.push(url);
      return { ok: true, status: 200, json: async () => ({ task: null, phase: "x" }) };
    });
    await client.nextTask("worker with spaces");
    expect(urls[0]).toBe("/task?worker=worker%20with%20spaces");
  });
});

describe("session state", () => {
  it("allows at most one task in flight", () => {
    const session = new SessionState("w1");
    const task = {
      task_id: "t",
      kind: "classify",
      iteration: 1,
      keyword: "hack",
      item_id: "u1",
      text: "x",
      instructions: { task: "", positive_example: "", negative_example: "" },
    } as const;
    session.claim(task);
    expect(() => session.claim(task)).toThrow(/in flight/);
    session.release();
    session.claim(task);
  });

  it("requires a worker id", () => {
    expect(() => new SessionState("")).toThrow();
  });
});
