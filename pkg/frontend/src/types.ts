/** Wire types mirroring the project service's JSON API (/api/v1). */

export interface SegmentJson {
  start: number;
  end: number;
  codes: string[];
}

export interface AnnotationJson {
  annotator: "human" | "llm";
  segments: SegmentJson[];
}

export interface TextJson {
  id: string;
  body: string;
  context: string[];
  created_order: number;
}

export interface SplitJson {
  example_ids: string[];
  validation_ids: string[];
  test_ids: string[];
  test_frozen: boolean;
}

export interface IterationEntry {
  run_id: string;
  scope: string;
  example_ids: string[];
  instruction_snapshot: string[];
  mean_iou: number | null;
  mean_mhd: number | null;
  n_texts: number;
}

export interface RunSummary {
  run_id: string;
  scope: string;
  status: "running" | "complete" | "failed";
  n_targets: number;
}

export interface ProjectJson {
  project_id: string;
  texts: TextJson[];
  human_layer: Record<string, AnnotationJson>;
  split: SplitJson;
  custom_instructions: string[];
  iteration_history: IterationEntry[];
  runs: RunSummary[];
}

export interface MetricsRow {
  text_id: string;
  iou: number;
  mhd: number | null;
  human_char_count: number;
  llm_char_count: number;
  created_order: number;
  flags: string[];
}

export interface ReportJson {
  per_text: MetricsRow[];
  mean_iou: number | null;
  mean_mhd: number | null;
  exclusive_mean_iou: number | null;
  exclusive_mean_mhd: number | null;
  n_both_uncoded: number;
  n_one_sided: number;
}

export interface ReportTextJson {
  text_id: string;
  body: string;
  context: string[];
  created_order: number;
  metrics: MetricsRow;
  human: AnnotationJson;
  llm: AnnotationJson;
  human_markdown: string;
  llm_markdown: string;
}

export interface ReportResponse {
  run_id: string;
  scope: string;
  sort: string;
  report: ReportJson;
  texts: ReportTextJson[];
}

export interface RunStatus {
  run_id: string;
  scope: string;
  status: "running" | "complete" | "failed";
  n_targets: number;
  n_done: number;
  error: string;
}

export interface ApiErrorDetail {
  error: string;
  message: string;
}

export type SortKey = "iou_asc" | "iou_desc" | "mhd_asc" | "mhd_desc" | "order";
