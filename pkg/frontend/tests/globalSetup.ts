/** Boots the real project service for the contract tests. */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export const PORT = 8931;
export const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | undefined;
let workdir: string | undefined;

async function waitForReady(): Promise<void> {
  const deadline = Date.now() + 45000;
  for (;;) {
    try {
      const resp = await fetch(`${BASE}/api/v1/projects`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error("project service did not become ready");
    }
    await new Promise((r) => setTimeout(r, 200));
  }
}

export async function setup(): Promise<void> {
  workdir = mkdtempSync(join(tmpdir(), "codealign-ui-test-"));
  server = spawn(
    "codealign",
    ["serve", "--port", String(PORT), "--project-dir", workdir],
    { stdio: "ignore" },
  );
  server.on("error", (err) => {
    throw new Error(`failed to launch project service: ${err}`);
  });
  await waitForReady();
}

export async function teardown(): Promise<void> {
  server?.kill("SIGTERM");
  await new Promise((r) => setTimeout(r, 300));
  server?.kill("SIGKILL");
  if (workdir) {
    rmSync(workdir, { recursive: true, force: true });
  }
}
