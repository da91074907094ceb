/** Typed client for the project service; the UI's only data source. */

import type {
  ApiErrorDetail,
  ProjectJson,
  ReportResponse,
  RunStatus,
  SegmentJson,
  SortKey,
} from "./types.js";

export class ApiError extends Error {
  readonly kind: string;
  readonly status: number;

  constructor(status: number, detail: ApiErrorDetail) {
    super(detail.message);
    this.kind = detail.error;
    this.status = status;
  }
}

async function check<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return (await resp.json()) as T;
  }
  let detail: ApiErrorDetail = { error: `HTTP${resp.status}`, message: resp.statusText };
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "object") {
      detail = body.detail as ApiErrorDetail;
    } else if (body && typeof body.detail === "string") {
      detail = { error: `HTTP${resp.status}`, message: body.detail };
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private url(path: string): string {
    return `${this.base}/api/v1${path}`;
  }

  async createProject(
    corpus: { id: string; text: string; context?: string[]; order?: number }[],
    projectId?: string,
  ): Promise<string> {
    const resp = await fetch(this.url("/projects"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ corpus, project_id: projectId }),
    });
    const body = await check<{ project_id: string }>(resp);
    return body.project_id;
  }

  async listProjects(): Promise<string[]> {
    const body = await check<{ projects: string[] }>(await fetch(this.url("/projects")));
    return body.projects;
  }

  async getProject(projectId: string): Promise<ProjectJson> {
    return check(await fetch(this.url(`/projects/${projectId}`)));
  }

  async putAnnotation(projectId: string, textId: string, segments: SegmentJson[]): Promise<void> {
    await check(
      await fetch(this.url(`/projects/${projectId}/texts/${textId}/annotation`), {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ segments }),
      }),
    );
  }

  async setExamples(projectId: string, textIds: string[]): Promise<void> {
    await check(
      await fetch(this.url(`/projects/${projectId}/examples`), {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ text_ids: textIds }),
      }),
    );
  }

  async setInstructions(projectId: string, lines: string[]): Promise<void> {
    await check(
      await fetch(this.url(`/projects/${projectId}/instructions`), {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ lines }),
      }),
    );
  }

  async setTestSet(projectId: string, textIds: string[]): Promise<void> {
    await check(
      await fetch(this.url(`/projects/${projectId}/testset`), {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ text_ids: textIds }),
      }),
    );
  }

  async startRun(projectId: string, scope: string): Promise<string> {
    const resp = await fetch(this.url(`/projects/${projectId}/runs`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ scope }),
    });
    const body = await check<{ run_id: string }>(resp);
    return body.run_id;
  }

  async runStatus(projectId: string, runId: string): Promise<RunStatus> {
    return check(await fetch(this.url(`/projects/${projectId}/runs/${runId}`)));
  }

  async getReport(projectId: string, runId: string, sort: SortKey): Promise<ReportResponse> {
    return check(
      await fetch(this.url(`/projects/${projectId}/runs/${runId}/report?sort=${sort}`)),
    );
  }

  exportUrl(projectId: string): string {
    return this.url(`/projects/${projectId}/export`);
  }

  /** Poll a run until it leaves the running state (works without EventSource). */
  async waitForRun(projectId: string, runId: string, timeoutMs = 30000): Promise<RunStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.runStatus(projectId, runId);
      if (status.status !== "running") {
        return status;
      }
      if (Date.now() > deadline) {
        throw new Error(`run ${runId} still active after ${timeoutMs}ms`);
      }
      await new Promise((r) => setTimeout(r, 50));
    }
  }

  /** Follow a run via server-sent events until it reaches a terminal status. */
  watchRun(
    projectId: string,
    runId: string,
    onStatus: (status: RunStatus) => void,
  ): Promise<RunStatus> {
    return new Promise((resolve, reject) => {
      const source = new EventSource(this.url(`/projects/${projectId}/runs/${runId}/events`));
      source.addEventListener("status", (event) => {
        const status = JSON.parse((event as MessageEvent).data) as RunStatus;
        onStatus(status);
        if (status.status !== "running") {
          source.close();
          resolve(status);
        }
      });
      source.onerror = () => {
        source.close();
        // fall back to one status poll so a dropped stream still settles
        this.runStatus(projectId, runId).then(resolve, reject);
      };
    });
  }
}
