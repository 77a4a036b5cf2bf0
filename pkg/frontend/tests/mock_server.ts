// An in-memory task service speaking the same wire protocol, for flow tests.

import type { FetchLike } from "../src/api.js";
import type { PickItem, Submission } from "../src/types.js";

interface ClassifyItem {
  item_id: string;
  text: string;
}

export class MockServer {
  submissions: Submission[] = [];
  phase: "classify" | "keyword_pick" | "done" = "classify";
  private counts = new Map<string, string[]>(); // task_id -> worker ids

  constructor(
    private readonly keyword: string,
    private readonly classifyItems: ClassifyItem[],
    private readonly pickItems: PickItem[],
    private readonly redundancy: number,
    private readonly nPicks: number = 1,
  ) {
    for (const item of classifyItems) {
      this.counts.set(this.taskId(item.item_id), []);
    }
  }

  private taskId(itemId: string): string {
    return `classify-001-${this.keyword}-${itemId}`;
  }

  private pickSubmissions(): Submission[] {
    return this.submissions.filter((s) => "token" in s);
  }

  private nextClassifyTask(worker: string) {
    for (const item of this.classifyItems) {
      const taskId = this.taskId(item.item_id);
      const seen = this.counts.get(taskId)!;
      if (seen.length >= this.redundancy || seen.includes(worker)) {
        continue;
      }
      return {
        task_id: taskId,
        kind: "classify",
        iteration: 1,
        keyword: this.keyword,
        item_id: item.item_id,
        text: item.text,
        instructions: {
          task: "label it",
          positive_example: "positive guidance",
          negative_example: "negative guidance",
        },
      };
    }
    return null;
  }

  fetch: FetchLike = async (url, init) => {
    const respond = (status: number, body: unknown) => ({
      ok: status < 400,
      status,
      json: async () => body,
    });

    if (url.startsWith("/status")) {
      return respond(200, {
        iteration: 1,
        completed_iterations: this.phase === "done" ? 1 : 0,
        phase: this.phase,
        done: this.submissions.length,
        quota: this.classifyItems.length * this.redundancy,
        keywords: [],
        pending: [this.keyword],
        metrics: null,
        converged: false,
        exhausted: false,
      });
    }
    if (url.startsWith("/task")) {
      const worker = decodeURIComponent(url.split("worker=")[1] ?? "");
      if (this.phase === "classify") {
        return respond(200, { task: this.nextClassifyTask(worker), phase: this.phase });
      }
      if (this.phase === "keyword_pick") {
        const answered = this.pickSubmissions().some(
          (s) => s.worker_id === worker,
        );
        if (answered || this.pickSubmissions().length >= this.nPicks) {
          return respond(200, { task: null, phase: this.phase });
        }
        return respond(200, {
          task: {
            task_id: "pick-001",
            kind: "keyword_pick",
            iteration: 1,
            items: this.pickItems,
            instructions: { step1: "mark", step2: "click" },
          },
          phase: this.phase,
        });
      }
      return respond(200, { task: null, phase: this.phase });
    }
    if (url.startsWith("/submit")) {
      const body = JSON.parse(init?.body ?? "{}") as Submission;
      if ("label" in body) {
        if (this.phase !== "classify") {
          return respond(409, { detail: "phase closed" });
        }
        const seen = this.counts.get(body.task_id);
        if (!seen) {
          return respond(404, { detail: "unknown task" });
        }
        if (seen.includes(body.worker_id)) {
          return respond(409, { detail: "duplicate submission by the same worker" });
        }
        seen.push(body.worker_id);
        this.submissions.push(body);
        const complete = [...this.counts.values()].every(
          (workers) => workers.length >= this.redundancy,
        );
        if (complete) {
          this.phase = "keyword_pick";
        }
        return respond(200, {
          accepted: true,
          phase: this.phase,
          done: this.submissions.length,
          quota: this.classifyItems.length * this.redundancy,
        });
      }
      const allowed = new Set(
        this.pickItems
          .filter((item) => body.correct_ids.includes(item.item_id))
          .flatMap((item) => item.tokens),
      );
      if (!allowed.has(body.token)) {
        return respond(422, { detail: "token must occur in one of the marked microposts" });
      }
      this.submissions.push(body);
      if (this.pickSubmissions().length >= this.nPicks) {
        this.phase = "done";
      }
      return respond(200, {
        accepted: true,
        phase: this.phase,
        done: this.pickSubmissions().length,
        quota: this.nPicks,
      });
    }
    if (url.startsWith("/history")) {
      return respond(200, {
        iterations: this.phase === "done" ? 1 : 0,
        keywords: [],
        metrics: [],
        converged: false,
        exhausted: false,
      });
    }
    return respond(404, { detail: `no route for ${url}` });
  };
}
