// DOM wiring: a 2-second status poll drives the dashboard, and the task
// area swaps between the classification and keyword-pick flows.

import { TaskServiceClient } from "./api.js";
import { ClassificationFlow } from "./classify.js";
import { banner, historyRows, phaseLabel, progressText } from "./dashboard.js";
import { KeywordPickFlow } from "./pick.js";
import { SessionState } from "./session.js";
import type { LoopStatus, PickTask } from "./types.js";

const POLL_INTERVAL_MS = 2000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function workerId(): string {
  const key = "keywordloop-worker";
  let id = localStorage.getItem(key);
  if (!id) {
    id = `worker-${Math.random().toString(36).slice(2, 10)}`;
    localStorage.setItem(key, id);
  }
  return id;
}

const client = new TaskServiceClient("");
const session = new SessionState(workerId());
const classify = new ClassificationFlow(client, session);
const pick = new KeywordPickFlow(client, session);

let lastStatus: LoopStatus | null = null;

function renderBanner(): void {
  const text = banner(lastStatus);
  const node = el<HTMLDivElement>("banner");
  node.textContent = text ?? "";
  node.style.display = text ? "block" : "none";
}

function renderStatus(): void {
  if (!lastStatus) {
    renderBanner();
    return;
  }
  el<HTMLDivElement>("phase").textContent = phaseLabel(lastStatus);
  el<HTMLDivElement>("progress").textContent = progressText(lastStatus);
  renderBanner();
}

async function renderHistory(): Promise<void> {
  const history = await client.history();
  const body = el<HTMLTableSectionElement>("history-body");
  body.replaceChildren();
  for (const row of historyRows(history)) {
    const tr = document.createElement("tr");
    for (const value of [
      String(row.iteration),
      row.keyword,
      row.expectation,
      row.auc,
      row.accuracy,
    ]) {
      const td = document.createElement("td");
      td.textContent = value;
      tr.appendChild(td);
    }
    body.appendChild(tr);
  }
}

function renderError(message: string | null): void {
  const node = el<HTMLDivElement>("error");
  node.textContent = message ?? "";
  node.style.display = message ? "block" : "none";
}

function renderIdle(message: string): void {
  const area = el<HTMLDivElement>("task");
  area.replaceChildren();
  const p = document.createElement("p");
  p.className = "idle";
  p.textContent = message;
  area.appendChild(p);
}

async function renderClassifyTask(): Promise<boolean> {
  const task = await classify.loadNext();
  if (!task) {
    return false;
  }
  const area = el<HTMLDivElement>("task");
  area.replaceChildren();

  const guide = document.createElement("div");
  guide.className = "guidance";
  guide.innerHTML =
    `<p>${task.instructions.task}</p>` +
    `<p class="example good">event instance (label 1): ` +
    `<em>${task.instructions.positive_example}</em></p>` +
    `<p class="example bad">event category only (label 0): ` +
    `<em>${task.instructions.negative_example}</em></p>`;
  area.appendChild(guide);

  const text = document.createElement("blockquote");
  text.textContent = task.text;
  area.appendChild(text);

  const buttons = document.createElement("div");
  buttons.className = "choices";
  for (const [label, caption] of [
    [1, "event-related"],
    [0, "not event-related"],
  ] as const) {
    const button = document.createElement("button");
    button.textContent = caption;
    button.onclick = async () => {
      try {
        await classify.choose(label);
        renderError(null);
      } catch {
        renderError(classify.lastError ?? "submission rejected");
      }
      await refresh();
    };
    buttons.appendChild(button);
  }
  area.appendChild(buttons);
  return true;
}

function renderPickItems(task: PickTask): void {
  const area = el<HTMLDivElement>("task");
  const list = el<HTMLDivElement>("pick-items");
  list.replaceChildren();
  const clickable = pick.clickableTokens();
  for (const item of task.items) {
    const row = document.createElement("div");
    row.className = "pick-item";

    const checkbox = document.createElement("input");
    checkbox.type = "checkbox";
    checkbox.checked = pick.markedIds().includes(item.item_id);
    checkbox.onchange = () => {
      pick.toggleMark(item.item_id);
      renderPickItems(task);
    };
    row.appendChild(checkbox);

    const badge = document.createElement("span");
    badge.className = `badge class-${item.predicted_class}`;
    badge.textContent = `model: ${item.predicted_class} (${item.prediction.toFixed(2)})`;
    row.appendChild(badge);

    const text = document.createElement("span");
    text.className = "tokens";
    for (const token of item.tokens) {
      const button = document.createElement("button");
      button.className = "token";
      button.textContent = token;
      button.disabled = !clickable.has(token);
      button.onclick = async () => {
        try {
          await pick.clickToken(token);
          renderError(null);
        } catch {
          renderError(pick.lastError ?? "token rejected");
        }
        await refresh();
      };
      text.appendChild(button);
    }
    row.appendChild(text);
    list.appendChild(row);
  }
  el<HTMLParagraphElement>("pick-hint").textContent = pick.tokenStepEnabled
    ? "step 2: click the keyword that best indicates the predicted class"
    : "step 1: mark at least one correctly predicted micropost";
  area.style.display = "block";
}

async function renderPickTask(): Promise<boolean> {
  const task = await pick.loadNext();
  if (!task) {
    return false;
  }
  const area = el<HTMLDivElement>("task");
  area.replaceChildren();
  const steps = document.createElement("p");
  steps.textContent = `${task.instructions.step1} ${task.instructions.step2}`;
  area.appendChild(steps);
  const hint = document.createElement("p");
  hint.id = "pick-hint";
  area.appendChild(hint);
  const list = document.createElement("div");
  list.id = "pick-items";
  area.appendChild(list);
  renderPickItems(task);
  return true;
}

async function refresh(): Promise<void> {
  try {
    lastStatus = await client.status();
  } catch {
    lastStatus = null;
    renderBanner();
    return;
  }
  renderStatus();
  await renderHistory();
  try {
    if (lastStatus.phase === "classify") {
      if (!(await renderClassifyTask())) {
        renderIdle("no open task for you in this phase; waiting...");
      }
    } else if (lastStatus.phase === "keyword_pick") {
      if (!(await renderPickTask())) {
        renderIdle("keyword task already answered; waiting for the next phase");
      }
    } else if (lastStatus.phase === "inferring") {
      renderIdle("the model is training; this usually takes a few seconds");
    } else {
      renderIdle("the loop is finished, thanks for annotating");
    }
  } catch {
    renderError("request failed; will retry");
  }
}

el<HTMLSpanElement>("worker").textContent = session.workerId;
void refresh();
setInterval(() => void refresh(), POLL_INTERVAL_MS);
