/** Contract tests against the live project service (started by globalSetup).
 *
 * These verify the workbench's reading of the API: displayed values and
 * orderings must equal what the service returns, edits must persist across a
 * reload, and service rejections must surface as typed errors.
 */

import { beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { displayOrder, metricBadges, sparklinePoints, toastText } from "../src/viewmodel.js";
import { sliceBody, joinSlices } from "../src/highlights.js";
import { BASE } from "./globalSetup.js";

const api = new ApiClient(BASE);

const corpus = [
  { id: "m1", text: "The checkout flow kept timing out on me.", order: 0 },
  { id: "m2", text: "Great selection, terrible search filters.", order: 1 },
  { id: "m3", text: "I gave up after the app crashed twice.", order: 2 },
  { id: "m4", text: "Shipping was fast and the box looked nice.", order: 3 },
  { id: "m5", text: "Why does every page ask me to log in again?", order: 4 },
  { id: "m6", text: "No complaints really, it just works.", order: 5 },
];

const annotations: Record<string, { start: number; end: number; codes: string[] }[]> = {
  m1: [{ start: 4, end: 33, codes: ["reliability"] }],
  m2: [{ start: 17, end: 40, codes: ["search experience"] }],
  m3: [{ start: 20, end: 37, codes: ["reliability"] }],
  m4: [],
  m5: [{ start: 0, end: 43, codes: ["authentication friction"] }],
  m6: [],
};

let pid: string;

beforeAll(async () => {
  pid = await api.createProject(corpus, `ui-contract-${Date.now()}`);
  for (const [tid, segments] of Object.entries(annotations)) {
    await api.putAnnotation(pid, tid, segments);
  }
});

describe("annotate then reload", () => {
  it("persists the committed segment across a full reload", async () => {
    const reloaded = await api.getProject(pid);
    expect(reloaded.human_layer["m1"]!.segments).toEqual(annotations["m1"]);
    expect(reloaded.human_layer["m4"]!.segments).toEqual([]);
  });

  it("renders exactly the API offsets", async () => {
    const project = await api.getProject(pid);
    const text = project.texts.find((t) => t.id === "m1")!;
    const slices = sliceBody(text.body, project.human_layer["m1"], undefined);
    expect(joinSlices(slices)).toBe(text.body);
    const highlighted = slices.filter((s) => s.human);
    expect(highlighted).toHaveLength(1);
    expect(highlighted[0]).toMatchObject({ start: 4, end: 33 });
    expect(text.body.slice(highlighted[0]!.start, highlighted[0]!.end)).toBe(
      "checkout flow kept timing out",
    );
  });
});

describe("example curation against the test set", () => {
  it("marking a test-set text as example surfaces TestSetViolation", async () => {
    await api.setTestSet(pid, ["m5"]);
    let toast = "";
    try {
      await api.setExamples(pid, ["m5"]);
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      const apiErr = err as ApiError;
      expect(apiErr.kind).toBe("TestSetViolation");
      toast = toastText(apiErr.kind, apiErr.message);
    }
    expect(toast).toMatch(/^TestSetViolation: /);
  });
});

describe("runs, reports, and the sparkline", () => {
  it("two iterations: sparkline point count equals history length and displayed values equal API responses", async () => {
    await api.setExamples(pid, ["m1", "m4"]);
    const first = await api.startRun(pid, "validation");
    expect((await api.waitForRun(pid, first)).status).toBe("complete");

    await api.setExamples(pid, ["m1", "m4", "m3"]);
    const second = await api.startRun(pid, "validation");
    expect((await api.waitForRun(pid, second)).status).toBe("complete");

    const project = await api.getProject(pid);
    expect(project.iteration_history).toHaveLength(2);
    const points = sparklinePoints(project.iteration_history);
    expect(points).toHaveLength(project.iteration_history.length);
    expect(points.map((p) => p.runId)).toEqual([first, second]);

    const report = await api.getReport(pid, second, "iou_asc");
    // ordering displayed = ordering returned
    expect(displayOrder(project, report)).toEqual(report.texts.map((t) => t.text_id));
    const ious = report.texts.map((t) => t.metrics.iou);
    expect([...ious].sort((a, b) => a - b)).toEqual(ious);

    // badge strings are exactly the API values at display precision
    for (const row of report.texts) {
      const badges = metricBadges(row.metrics);
      expect(badges.iou).toBe(row.metrics.iou.toFixed(2));
      if (row.metrics.mhd !== null) {
        expect(badges.mhd).toBe(row.metrics.mhd.toFixed(2));
      }
    }

    // the history summary and the report agree
    const last = project.iteration_history[1]!;
    expect(last.mean_iou).toBe(report.report.mean_iou);
    expect(last.mean_mhd).toBe(report.report.mean_mhd);
  });

  it("desc ordering mirrors the API as well", async () => {
    const project = await api.getProject(pid);
    const runId = project.iteration_history[project.iteration_history.length - 1]!.run_id;
    const desc = await api.getReport(pid, runId, "iou_desc");
    const vals = desc.texts.map((t) => t.metrics.iou);
    expect([...vals].sort((a, b) => b - a)).toEqual(vals);
    expect(displayOrder(project, desc)).toEqual(desc.texts.map((t) => t.text_id));
  });
});
