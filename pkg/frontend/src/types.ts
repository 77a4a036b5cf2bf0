// Wire types for the task service; field names match docs/api.md.

export interface ClassifyInstructions {
  task: string;
  positive_example: string;
  negative_example: string;
}

export interface PickInstructions {
  step1: string;
  step2: string;
}

export interface ClassifyTask {
  task_id: string;
  kind: "classify";
  iteration: number;
  keyword: string;
  item_id: string;
  text: string;
  instructions: ClassifyInstructions;
}

export interface PickItem {
  item_id: string;
  text: string;
  tokens: string[];
  prediction: number;
  predicted_class: 0 | 1;
  disagreement: number;
}

export interface PickTask {
  task_id: string;
  kind: "keyword_pick";
  iteration: number;
  items: PickItem[];
  instructions: PickInstructions;
}

export type Task = ClassifyTask | PickTask;

export interface TaskEnvelope {
  task: Task | null;
  phase: string;
}

export interface KeywordRow {
  keyword: string;
  expectation: number;
}

export interface MetricsRow {
  iteration: number;
  keywords: string;
  expectations: number[];
  auc: number;
  accuracy: number;
  val_auc: number;
  val_accuracy: number;
}

export interface LoopStatus {
  iteration: number;
  completed_iterations: number;
  phase: string;
  done: number;
  quota: number;
  keywords: KeywordRow[];
  pending: string[];
  metrics: MetricsRow | null;
  converged: boolean;
  exhausted: boolean;
}

export interface LoopHistory {
  iterations: number;
  keywords: KeywordRow[];
  metrics: MetricsRow[];
  converged: boolean;
  exhausted: boolean;
}

export interface SubmitResponse {
  accepted: boolean;
  phase: string;
  done: number;
  quota: number;
}

export interface ClassifySubmission {
  task_id: string;
  worker_id: string;
  label: 0 | 1;
}

export interface PickSubmission {
  task_id: string;
  worker_id: string;
  correct_ids: string[];
  token: string;
}

export type Submission = ClassifySubmission | PickSubmission;
