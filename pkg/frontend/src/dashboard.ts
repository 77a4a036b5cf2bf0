// Dashboard view models: keyword history with expectations, per-iteration
// metrics, phase and quota progress. Pure formatting, no DOM.

import type { LoopHistory, LoopStatus, MetricsRow } from "./types.js";

export interface HistoryRow {
  iteration: number;
  keyword: string;
  expectation: string; // two decimals
  auc: string; // percent, two decimals
  accuracy: string;
}

export function formatExpectation(value: number): string {
  return value.toFixed(2);
}

export function formatPercent(fraction: number): string {
  return (100 * fraction).toFixed(2);
}

export function historyRows(history: LoopHistory): HistoryRow[] {
  const byIteration = new Map<number, MetricsRow>();
  for (const row of history.metrics) {
    byIteration.set(row.iteration, row);
  }
  return history.metrics.map((row) => ({
    iteration: row.iteration,
    keyword: row.keywords,
    expectation: row.expectations.map(formatExpectation).join("+"),
    auc: formatPercent(row.auc),
    accuracy: formatPercent(row.accuracy),
  }));
}

export function phaseLabel(status: LoopStatus): string {
  switch (status.phase) {
    case "classify":
      return `iteration ${status.iteration}: micropost classification`;
    case "inferring":
      return `iteration ${status.iteration}: inferring expectation and retraining`;
    case "keyword_pick":
      return `iteration ${status.iteration}: keyword discovery`;
    case "done":
      return "loop finished";
    default:
      return status.phase;
  }
}

export function progressText(status: LoopStatus): string {
  if (status.phase === "classify" || status.phase === "keyword_pick") {
    return `${status.done} / ${status.quota} submissions`;
  }
  return "";
}

export function banner(status: LoopStatus | null): string | null {
  if (status === null) {
    return "service unreachable, retrying...";
  }
  if (status.converged) {
    return "loop converged: validation AUC plateaued";
  }
  if (status.exhausted) {
    return "loop finished: no new keyword candidates remain";
  }
  if (status.phase === "done") {
    return "loop finished: iteration cap reached";
  }
  return null;
}
