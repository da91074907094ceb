/** Pure span-overlay computation.
 *
 * The API provides character offsets; the UI must render exactly those
 * offsets with no client-side re-tokenization. A text body is cut into
 * contiguous slices at every span boundary; each slice knows whether the
 * human layer, the LLM layer, or both cover it (overlaps render both).
 */

import type { AnnotationJson, SegmentJson } from "./types.js";

export interface Slice {
  start: number;
  end: number;
  text: string;
  human: boolean;
  llm: boolean;
  /** codes whose segment covers this slice, human first */
  codes: string[];
}

function covering(segments: SegmentJson[], start: number): SegmentJson | undefined {
  return segments.find((s) => s.start <= start && start < s.end);
}

export function sliceBody(
  body: string,
  human: AnnotationJson | undefined,
  llm: AnnotationJson | undefined,
): Slice[] {
  const humanSegs = human?.segments ?? [];
  const llmSegs = llm?.segments ?? [];
  const cuts = new Set<number>([0, body.length]);
  for (const seg of [...humanSegs, ...llmSegs]) {
    if (seg.start < 0 || seg.end > body.length || seg.start >= seg.end) {
      throw new Error(`segment [${seg.start}, ${seg.end}) out of range for body length ${body.length}`);
    }
    cuts.add(seg.start);
    cuts.add(seg.end);
  }
  const bounds = [...cuts].sort((a, b) => a - b);
  const slices: Slice[] = [];
  for (let i = 0; i + 1 < bounds.length; i++) {
    const start = bounds[i]!;
    const end = bounds[i + 1]!;
    if (start === end) continue;
    const h = covering(humanSegs, start);
    const l = covering(llmSegs, start);
    const codes = [...(h?.codes ?? []), ...(l?.codes ?? []).filter((c) => !(h?.codes ?? []).includes(c))];
    slices.push({ start, end, text: body.slice(start, end), human: !!h, llm: !!l, codes });
  }
  return slices;
}

/** Recover the exact body from slices (the no-re-tokenization invariant). */
export function joinSlices(slices: Slice[]): string {
  return slices.map((s) => s.text).join("");
}

/** Convert a DOM selection offset range into a segment draft; empty or
 * reversed selections yield null (a no-op in the UI). */
export function selectionToSpan(
  anchor: number,
  focus: number,
  bodyLength: number,
): { start: number; end: number } | null {
  const start = Math.max(0, Math.min(anchor, focus));
  const end = Math.min(bodyLength, Math.max(anchor, focus));
  if (start >= end) {
    return null;
  }
  return { start, end };
}

/** True when [start, end) overlaps any existing segment (inline rejection). */
export function overlapsExisting(
  span: { start: number; end: number },
  segments: SegmentJson[],
): boolean {
  return segments.some((s) => span.start < s.end && s.start < span.end);
}
