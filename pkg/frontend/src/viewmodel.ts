/** Pure view-model helpers.
 *
 * The UI is stateless authority-wise: every number displayed comes from the
 * API, with only cosmetic two-decimal rounding here. Ordering always mirrors
 * the report endpoint's order rather than re-sorting client-side.
 */

import type {
  IterationEntry,
  ProjectJson,
  ReportResponse,
  TextJson,
} from "./types.js";

/** Cosmetic rounding for metric badges (two decimals, like the reports). */
export function formatMetric(value: number | null | undefined): string {
  if (value === null || value === undefined) {
    return "–";
  }
  return value.toFixed(2);
}

export function metricBadges(row: { iou: number; mhd: number | null }): {
  iou: string;
  mhd: string;
} {
  return { iou: formatMetric(row.iou), mhd: formatMetric(row.mhd) };
}

/** The card order shown in the list: exactly the API's report order when a
 * report is displayed, corpus order otherwise. */
export function displayOrder(
  project: ProjectJson,
  report: ReportResponse | null,
): string[] {
  if (report) {
    return report.texts.map((t) => t.text_id);
  }
  return [...project.texts]
    .sort((a, b) => a.created_order - b.created_order || (a.id < b.id ? -1 : 1))
    .map((t) => t.id);
}

export interface SparklinePoint {
  runId: string;
  iou: number | null;
  mhd: number | null;
}

/** One sparkline point per iteration-history entry, in history order. */
export function sparklinePoints(history: IterationEntry[]): SparklinePoint[] {
  return history.map((h) => ({ runId: h.run_id, iou: h.mean_iou, mhd: h.mean_mhd }));
}

/** Polyline coordinates for an inline SVG sparkline; null values are skipped. */
export function sparklinePath(
  values: (number | null)[],
  width: number,
  height: number,
  lo: number,
  hi: number,
): string {
  const pts: string[] = [];
  const n = values.length;
  values.forEach((v, i) => {
    if (v === null) return;
    const x = n === 1 ? width / 2 : (i / (n - 1)) * width;
    const clamped = Math.max(lo, Math.min(hi, v));
    const y = height - ((clamped - lo) / (hi - lo)) * height;
    pts.push(`${x.toFixed(1)},${y.toFixed(1)}`);
  });
  return pts.join(" ");
}

export interface TextCardState {
  text: TextJson;
  annotated: boolean;
  positive: boolean;
  isExample: boolean;
  inTestSet: boolean;
  inValidation: boolean;
}

export function cardStates(project: ProjectJson): Map<string, TextCardState> {
  const out = new Map<string, TextCardState>();
  const examples = new Set(project.split.example_ids);
  const test = new Set(project.split.test_ids);
  const validation = new Set(project.split.validation_ids);
  for (const text of project.texts) {
    const ann = project.human_layer[text.id];
    out.set(text.id, {
      text,
      annotated: ann !== undefined,
      positive: (ann?.segments.length ?? 0) > 0,
      isExample: examples.has(text.id),
      inTestSet: test.has(text.id),
      inValidation: validation.has(text.id),
    });
  }
  return out;
}

/** The example-id list after toggling one text on or off. */
export function toggledExamples(current: string[], textId: string, on: boolean): string[] {
  const set = current.filter((id) => id !== textId);
  if (on) {
    set.push(textId);
  }
  return set;
}

/** Metric deltas vs the previous iteration, for the post-run banner. */
export function iterationDelta(
  history: IterationEntry[],
): { iou: number; mhd: number } | null {
  if (history.length < 2) {
    return null;
  }
  const last = history[history.length - 1]!;
  const prev = history[history.length - 2]!;
  if (last.mean_iou === null || prev.mean_iou === null) {
    return null;
  }
  return {
    iou: last.mean_iou - prev.mean_iou,
    mhd: (last.mean_mhd ?? 0) - (prev.mean_mhd ?? 0),
  };
}

/** Service errors surface verbatim: "Kind: message". */
export function toastText(kind: string, message: string): string {
  return `${kind}: ${message}`;
}
