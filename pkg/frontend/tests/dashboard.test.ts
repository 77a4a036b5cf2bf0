import { describe, expect, it } from "vitest";

import {
  banner,
  formatExpectation,
  formatPercent,
  historyRows,
  phaseLabel,
  progressText,
} from "../src/dashboard.js";
import type { LoopHistory, LoopStatus } from "../src/types.js";

function status(overrides: Partial<LoopStatus> = {}): LoopStatus {
  return {
    iteration: 2,
    completed_iterations: 1,
    phase: "classify",
    done: 30,
    quota: 150,
    keywords: [{ keyword: "hack", expectation: 0.2031 }],
    pending: ["breach"],
    metrics: null,
    converged: false,
    exhausted: false,
    ...overrides,
  };
}

describe("dashboard formatting", () => {
  it("expectations render with two decimals", () => {
    expect(formatExpectation(0.2)).toBe("0.20");
    expect(formatExpectation(0.20349)).toBe("0.20");
    expect(formatExpectation(1)).toBe("1.00");
  });

  it("metrics render as percent with two decimals", () => {
    expect(formatPercent(0.7481)).toBe("74.81");
  });

  it("history rows carry iteration, keyword, expectation, and metrics", () => {
    const history: LoopHistory = {
      iterations: 1,
      keywords: [{ keyword: "hack", expectation: 0.2 }],
      metrics: [
        {
          iteration: 1,
          keywords: "hack",
          expectations: [0.2],
          auc: 0.6669,
          accuracy: 0.7104,
          val_auc: 0.65,
          val_accuracy: 0.7,
        },
      ],
      converged: false,
      exhausted: false,
    };
    expect(historyRows(history)).toEqual([
      {
        iteration: 1,
        keyword: "hack",
        expectation: "0.20",
        auc: "66.69",
        accuracy: "71.04",
      },
    ]);
  });

  it("phase labels and quota progress", () => {
    expect(phaseLabel(status())).toContain("classification");
    expect(progressText(status())).toBe("30 / 150 submissions");
    expect(progressText(status({ phase: "inferring" }))).toBe("");
  });

  it("banners: unreachable, converged, exhausted, finished", () => {
    expect(banner(null)).toMatch(/unreachable/);
    expect(banner(status({ converged: true }))).toMatch(/converged/);
    expect(banner(status({ exhausted: true }))).toMatch(/no new keyword/);
    expect(banner(status({ phase: "done" }))).toMatch(/finished/);
    expect(banner(status())).toBeNull();
  });
});
