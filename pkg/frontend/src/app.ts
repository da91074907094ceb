/** Workbench UI: corpus list with side-by-side human/LLM overlays, metric
 * triage, example curation, instruction editing, and run controls.
 *
 * All state of record lives in the service; this module fetches, renders,
 * and writes back. Human highlights render in the yellow family, LLM
 * highlights in the blue family; overlap regions carry both.
 */

import { ApiClient, ApiError } from "./api.js";
import { overlapsExisting, selectionToSpan, sliceBody } from "./highlights.js";
import {
  cardStates,
  displayOrder,
  formatMetric,
  iterationDelta,
  metricBadges,
  sparklinePath,
  sparklinePoints,
  toastText,
  toggledExamples,
} from "./viewmodel.js";
import type {
  ProjectJson,
  ReportResponse,
  ReportTextJson,
  SegmentJson,
  SortKey,
} from "./types.js";

interface AppState {
  projectId: string | null;
  project: ProjectJson | null;
  report: ReportResponse | null;
  sort: SortKey;
  runActive: boolean;
}

const state: AppState = {
  projectId: null,
  project: null,
  report: null,
  sort: "iou_asc",
  runActive: false,
};

const api = new ApiClient("");

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function toast(message: string, isError = true): void {
  const host = document.getElementById("toasts")!;
  const node = el("div", isError ? "toast toast-error" : "toast", message);
  host.appendChild(node);
  setTimeout(() => node.remove(), 5000);
}

function reportError(err: unknown): void {
  if (err instanceof ApiError) {
    toast(toastText(err.kind, err.message));
  } else {
    toast(String(err));
  }
}

async function refresh(): Promise<void> {
  if (!state.projectId) return;
  state.project = await api.getProject(state.projectId);
  const complete = state.project.runs.filter(
    (r) => r.status === "complete" && state.project!.iteration_history.some((h) => h.run_id === r.run_id),
  );
  const latest = complete[complete.length - 1];
  state.report = latest
    ? await api.getReport(state.projectId, latest.run_id, state.sort)
    : null;
  render();
}

// --- annotation editing -------------------------------------------------------

function codesFromInput(raw: string): string[] {
  return raw
    .split(/[;,]/)
    .map((c) => c.trim())
    .filter((c) => c.length > 0);
}

async function commitSegment(
  textId: string,
  span: { start: number; end: number },
  codes: string[],
): Promise<void> {
  const existing = state.project?.human_layer[textId]?.segments ?? [];
  const segments: SegmentJson[] = [...existing, { start: span.start, end: span.end, codes }];
  segments.sort((a, b) => a.start - b.start);
  await api.putAnnotation(state.projectId!, textId, segments);
  await refresh();
}

async function removeSegment(textId: string, index: number): Promise<void> {
  const existing = state.project?.human_layer[textId]?.segments ?? [];
  const segments = existing.filter((_, i) => i !== index);
  await api.putAnnotation(state.projectId!, textId, segments);
  await refresh();
}

function selectionOffsets(container: HTMLElement): { start: number; end: number } | null {
  const selection = window.getSelection();
  if (!selection || selection.rangeCount === 0 || selection.isCollapsed) return null;
  const range = selection.getRangeAt(0);
  const toAbsolute = (node: Node, offset: number): number | null => {
    let span: HTMLElement | null =
      node instanceof HTMLElement ? node : (node.parentElement as HTMLElement | null);
    while (span && span !== container && !span.dataset.start) {
      span = span.parentElement;
    }
    if (!span || span === container || span.dataset.start === undefined) return null;
    return parseInt(span.dataset.start, 10) + offset;
  };
  const anchor = toAbsolute(range.startContainer, range.startOffset);
  const focus = toAbsolute(range.endContainer, range.endOffset);
  if (anchor === null || focus === null) return null;
  const bodyLength = parseInt(container.dataset.length ?? "0", 10);
  return selectionToSpan(anchor, focus, bodyLength);
}

// --- rendering ------------------------------------------------------------------

function renderBody(
  textId: string,
  body: string,
  human: SegmentJson[],
  llm: SegmentJson[],
  editable: boolean,
): HTMLElement {
  const container = el("div", "body-text");
  container.dataset.length = String(body.length);
  const slices = sliceBody(
    body,
    { annotator: "human", segments: human },
    { annotator: "llm", segments: llm },
  );
  for (const slice of slices) {
    const classes = ["slice"];
    if (slice.human && slice.llm) classes.push("hl-both");
    else if (slice.human) classes.push("hl-human");
    else if (slice.llm) classes.push("hl-llm");
    const span = el("span", classes.join(" "), slice.text);
    span.dataset.start = String(slice.start);
    span.dataset.end = String(slice.end);
    if (slice.codes.length) span.title = slice.codes.join("; ");
    container.appendChild(span);
  }
  if (editable) {
    container.addEventListener("mouseup", () => {
      const span = selectionOffsets(container);
      if (!span) return; // empty selection is a no-op
      const existing = state.project?.human_layer[textId]?.segments ?? [];
      if (overlapsExisting(span, existing)) {
        toast("Selection overlaps an existing segment", true);
        window.getSelection()?.removeAllRanges();
        return;
      }
      openCodeEntry(container, textId, span);
    });
  }
  return container;
}

function openCodeEntry(
  container: HTMLElement,
  textId: string,
  span: { start: number; end: number },
): void {
  container.parentElement?.querySelector(".code-entry")?.remove();
  const form = el("div", "code-entry");
  const input = el("input") as HTMLInputElement;
  input.placeholder = `codes for [${span.start}, ${span.end}) — semicolon-separated`;
  const commit = el("button", "", "apply");
  commit.addEventListener("click", () => {
    const codes = codesFromInput(input.value);
    if (!codes.length) {
      toast("Enter at least one code");
      return;
    }
    commitSegment(textId, span, codes).catch(reportError);
    form.remove();
  });
  input.addEventListener("keydown", (e) => {
    if (e.key === "Enter") commit.click();
    if (e.key === "Escape") form.remove();
  });
  form.append(input, commit);
  container.insertAdjacentElement("afterend", form);
  input.focus();
}

function segmentChips(
  textId: string,
  segments: SegmentJson[],
  kind: "human" | "llm",
): HTMLElement {
  const host = el("div", `chips chips-${kind}`);
  segments.forEach((seg, index) => {
    const chip = el("span", `chip chip-${kind}`, seg.codes.join("; "));
    chip.title = `[${seg.start}, ${seg.end})`;
    if (kind === "human") {
      const remove = el("button", "chip-x", "×");
      remove.addEventListener("click", () => removeSegment(textId, index).catch(reportError));
      chip.appendChild(remove);
    }
    host.appendChild(chip);
  });
  return host;
}

function renderCard(
  textId: string,
  reportRow: ReportTextJson | undefined,
): HTMLElement {
  const project = state.project!;
  const cards = cardStates(project);
  const card = cards.get(textId)!;
  const human = project.human_layer[textId]?.segments ?? [];
  const llm = reportRow?.llm.segments ?? [];

  const root = el("article", "card");
  const head = el("header", "card-head");
  head.appendChild(el("span", "card-id", textId));

  if (reportRow) {
    const badges = metricBadges(reportRow.metrics);
    const b1 = el("span", "badge badge-iou", `IoU ${badges.iou}`);
    const b2 = el("span", "badge badge-mhd", `MHD ${badges.mhd}`);
    head.append(b1, b2);
    for (const flag of reportRow.metrics.flags) {
      head.appendChild(el("span", "badge badge-flag", flag));
    }
  }

  const exampleLabel = el("label", "example-toggle");
  const checkbox = el("input") as HTMLInputElement;
  checkbox.type = "checkbox";
  checkbox.checked = card.isExample;
  checkbox.disabled = !card.annotated && !card.isExample;
  checkbox.addEventListener("change", () => {
    const next = toggledExamples(project.split.example_ids, textId, checkbox.checked);
    api
      .setExamples(state.projectId!, next)
      .then(refresh)
      .catch((err) => {
        checkbox.checked = !checkbox.checked; // roll back the optimistic flip
        reportError(err);
      });
  });
  exampleLabel.append(checkbox, document.createTextNode(" example"));
  head.appendChild(exampleLabel);

  if (card.inTestSet) head.appendChild(el("span", "badge badge-test", "test set"));
  if (!card.annotated) head.appendChild(el("span", "badge badge-uncoded", "unannotated"));
  root.appendChild(head);

  for (const line of card.text.context) {
    root.appendChild(el("div", "context-line", `CONTEXT: ${line}`));
  }
  root.appendChild(renderBody(textId, card.text.body, human, llm, true));
  if (human.length) root.appendChild(segmentChips(textId, human, "human"));
  if (llm.length) root.appendChild(segmentChips(textId, llm, "llm"));
  return root;
}

function renderSparkline(): HTMLElement {
  const project = state.project!;
  const points = sparklinePoints(project.iteration_history);
  const host = el("div", "sparkline");
  host.appendChild(el("span", "spark-label", `iterations: ${points.length}`));
  if (!points.length) return host;
  const svgNS = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(svgNS, "svg");
  svg.setAttribute("width", "120");
  svg.setAttribute("height", "28");
  svg.setAttribute("class", "spark-svg");
  const iou = document.createElementNS(svgNS, "polyline");
  iou.setAttribute("points", sparklinePath(points.map((p) => p.iou), 120, 28, 0, 1));
  iou.setAttribute("class", "spark-iou");
  const mhd = document.createElementNS(svgNS, "polyline");
  mhd.setAttribute("points", sparklinePath(points.map((p) => p.mhd), 120, 28, 0, 2));
  mhd.setAttribute("class", "spark-mhd");
  svg.append(iou, mhd);
  host.appendChild(svg);
  const last = points[points.length - 1]!;
  host.appendChild(
    el("span", "spark-values", `IoU ${formatMetric(last.iou)} · MHD ${formatMetric(last.mhd)}`),
  );
  return host;
}

function renderHeader(): void {
  const host = document.getElementById("controls")!;
  host.textContent = "";
  const project = state.project!;

  host.appendChild(renderSparkline());

  const delta = iterationDelta(project.iteration_history);
  if (delta) {
    const text = `Δ vs previous: IoU ${delta.iou >= 0 ? "+" : ""}${delta.iou.toFixed(2)}, ` +
      `MHD ${delta.mhd >= 0 ? "+" : ""}${delta.mhd.toFixed(2)}`;
    host.appendChild(el("span", "delta", text));
  }

  const sortSelect = el("select") as HTMLSelectElement;
  for (const key of ["iou_asc", "iou_desc", "mhd_asc", "mhd_desc", "order"] as SortKey[]) {
    const option = el("option", "", key) as HTMLOptionElement;
    option.value = key;
    sortSelect.appendChild(option);
  }
  sortSelect.value = state.sort;
  sortSelect.disabled = state.report === null; // no completed run yet
  sortSelect.addEventListener("change", () => {
    state.sort = sortSelect.value as SortKey;
    refresh().catch(reportError);
  });
  host.appendChild(sortSelect);

  const scopeSelect = el("select") as HTMLSelectElement;
  for (const scope of ["validation", "remainder", "test"]) {
    const option = el("option", "", scope) as HTMLOptionElement;
    option.value = scope;
    scopeSelect.appendChild(option);
  }
  host.appendChild(scopeSelect);

  const runButton = el("button", "run-button", state.runActive ? "running…" : "run");
  runButton.disabled = state.runActive;
  runButton.addEventListener("click", () => {
    launchRun(scopeSelect.value).catch(reportError);
  });
  host.appendChild(runButton);

  const progress = el("span", "run-progress");
  progress.id = "run-progress";
  host.appendChild(progress);

  const instructions = el("textarea", "instructions") as HTMLTextAreaElement;
  instructions.value = project.custom_instructions.join("\n");
  instructions.rows = 2;
  instructions.placeholder = "custom prompt instructions, one per line";
  const saveInstructions = el("button", "", "save instructions");
  saveInstructions.addEventListener("click", () => {
    const lines = instructions.value.split("\n").map((l) => l.trim()).filter(Boolean);
    api.setInstructions(state.projectId!, lines).then(refresh).catch(reportError);
  });
  const instrWrap = el("div", "instructions-wrap");
  instrWrap.append(instructions, saveInstructions);
  host.appendChild(instrWrap);

  const exportLink = el("a", "export-link", "export zip") as HTMLAnchorElement;
  exportLink.href = api.exportUrl(state.projectId!);
  host.appendChild(exportLink);
}

async function launchRun(scope: string): Promise<void> {
  const runId = await api.startRun(state.projectId!, scope);
  state.runActive = true;
  render();
  const progress = () => document.getElementById("run-progress");
  await api.watchRun(state.projectId!, runId, (status) => {
    const node = progress();
    if (node) node.textContent = `${status.n_done}/${status.n_targets}`;
  });
  state.runActive = false;
  await refresh();
  toast(`run ${runId} finished`, false);
}

function render(): void {
  const project = state.project;
  const list = document.getElementById("texts")!;
  list.textContent = "";
  if (!project) return;
  renderHeader();
  const rows = new Map<string, ReportTextJson>(
    (state.report?.texts ?? []).map((t) => [t.text_id, t]),
  );
  const means = document.getElementById("means")!;
  means.textContent = state.report
    ? `mean IoU ${formatMetric(state.report.report.mean_iou)} · ` +
      `mean MHD ${formatMetric(state.report.report.mean_mhd)} (${state.report.scope})`
    : "no completed run yet";
  for (const textId of displayOrder(project, state.report)) {
    list.appendChild(renderCard(textId, rows.get(textId)));
  }
}

export async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const requested = params.get("project");
  const projects = await api.listProjects();
  const picker = document.getElementById("project-picker") as HTMLSelectElement;
  picker.textContent = "";
  for (const id of projects) {
    const option = el("option", "", id) as HTMLOptionElement;
    option.value = id;
    picker.appendChild(option);
  }
  picker.addEventListener("change", () => {
    state.projectId = picker.value;
    refresh().catch(reportError);
  });
  state.projectId = requested && projects.includes(requested) ? requested : projects[0] ?? null;
  if (state.projectId) {
    picker.value = state.projectId;
    await refresh();
  } else {
    document.getElementById("means")!.textContent =
      "no projects yet — create one with `codealign import`";
  }
}
