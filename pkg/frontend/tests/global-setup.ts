// Spawns the mock-backed session service for the integration tests.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";

export const BASE_URL = "http://127.0.0.1:8931";

let server: ChildProcess | undefined;

const FIXTURES = {
  rules: [
    {
      stage: "filter",
      task: "query_check",
      match: { contains: "economic indicators" },
      respond: {
        tool_call: {
          name: "report_query_check",
          arguments: {
            chain_exists: false,
            sql_answerable: false,
            requested_functions: [],
            unspecified_values: [],
            vague_reason: "data-insufficiency",
          },
        },
      },
    },
    {
      stage: "filter",
      task: "alternatives",
      match: { contains: "economic indicators" },
      respond: {
        tool_call: {
          name: "propose_alternatives",
          arguments: {
            alternatives: [
              "I want to compute the emotion distribution of the posts.",
              "I want to count the posts that mention 'rain'.",
              "I want to retrieve the posts with negative sentiment.",
            ],
          },
        },
      },
    },
  ],
};

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE_URL}/sessions/probe/verdict`);
      if (response.status === 404) {
        return;
      }
    } catch {
      // not up yet
    }
    await new Promise((resolveSleep) => setTimeout(resolveSleep, 150));
  }
  throw new Error("session service did not come up on 8931");
}

export async function setup(): Promise<void> {
  const workDir = mkdtempSync(join(tmpdir(), "semquery-ui-"));
  writeFileSync(join(workDir, "fixtures.json"), JSON.stringify(FIXTURES));
  writeFileSync(
    join(workDir, "config.json"),
    JSON.stringify({
      provider: { kind: "mock", fixtures: "fixtures.json" },
      prices: { prompt_per_1k: 0.03, completion_per_1k: 0.06 },
    }),
  );
  const repoRoot = resolve(__dirname, "..", "..");
  server = spawn(
    "python3",
    ["-m", "semquery.cli", "serve", "--config", join(workDir, "config.json"),
     "--host", "127.0.0.1", "--port", "8931"],
    { cwd: repoRoot, stdio: "ignore" },
  );
  await waitForServer();
}

export async function teardown(): Promise<void> {
  if (server && !server.killed) {
    server.kill("SIGTERM");
  }
}
