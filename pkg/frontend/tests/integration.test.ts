/** End-to-end: a real node served by the Python CLI, driven only through
 * the console's own API client. */

import { type ChildProcess, spawn } from "node:child_process";
import { readFile, mkdtemp, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { applyStreams, initialState } from "../src/state.js";
import { renderDashboard } from "../src/render.js";

const REPO = resolve(__dirname, "..", "..");
const API = "http://127.0.0.1:8893";
const NODE_PORT = "16750";

let server: ChildProcess;
let workdir: string;

function python(args: string[]): ChildProcess {
  return spawn("python3", ["-m", "lablink.cli", ...args], {
    cwd: REPO,
    env: { ...process.env, PYTHONPATH: join(REPO, "src") },
    stdio: ["ignore", "ignore", "ignore"],
  });
}

async function waitForApi(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${API}/v1/session`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("serve node did not come up");
}

beforeAll(async () => {
  workdir = await mkdtemp(join(tmpdir(), "console-e2e-"));
  server = python([
    "--port", NODE_PORT,
    "serve", "--api-port", "8893", "--scenario", "food_choice",
  ]);
  await waitForApi(30_000);
}, 60_000);

afterAll(async () => {
  server?.kill();
  await rm(workdir, { recursive: true, force: true });
});

describe("console against a live food_choice node", () => {
  it("displays the stream list within two seconds", async () => {
    const client = new ApiClient(API);
    const started = Date.now();
    const streams = await client.streams();
    const html = renderDashboard(applyStreams(initialState(API), streams));
    expect(Date.now() - started).toBeLessThan(2000);
    expect(html).toContain("item-presentations");
    expect(html).toContain("control-events");
  }, 10_000);

  it("reports the running demo session", async () => {
    const client = new ApiClient(API);
    const session = await client.session();
    expect(session.state).toBe("Running");
    expect(session.spec?.participants.map((p) => p.role)).toContain("Controller");
  });

  it("a Controller marker lands in the recorded score", async () => {
    const client = new ApiClient(API);
    const out = join(workdir, "take.json");
    // the node announces to the default rendezvous ports, so the
    // recorder has to listen on one of them
    const recorder = python([
      "--port", "16572",
      "record", "--out", out, "--duration", "6", "--wait", "10",
      "--name", "control-events",
    ]);
    const recorded = new Promise<number | null>((resolveExit) =>
      recorder.on("exit", resolveExit),
    );
    // give the recorder time to discover and subscribe, then fire
    await new Promise((r) => setTimeout(r, 4000));
    const result = await client.sendControl("coach", "highlight.cup", "Running");
    expect(result.outcome).toBe("accepted");

    expect(await recorded).toBe(0);
    const doc = JSON.parse(await readFile(out, "utf8"));
    const labels = doc.signal_tracks.flatMap(
      (track: { samples: [number, string[]][] }) =>
        track.samples.map(([, values]) => values[0]),
    );
    expect(labels).toContain("highlight.cup");
  }, 40_000);

  it("an Executor send attempt is visibly denied", async () => {
    const client = new ApiClient(API);
    const result = await client.sendControl("display", "nudge", "Running");
    expect(result.outcome).toBe("denied");
    if (result.outcome === "denied") {
      expect(result.reason).toContain("no agency");
    }
  });
});
