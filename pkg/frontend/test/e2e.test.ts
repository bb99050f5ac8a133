// End-to-end: a scripted 20-query session against the live Python service
// drives the status through not-ready -> estimated -> adapted.
//
// Requires python3 with the eralign package importable; run via
// `npm run test:e2e` (set RUN_E2E=1). Skipped otherwise so the pure
// component tests stay hermetic.

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";

import { SessionClient } from "../src/api.js";
import { stageOf, type SessionStage } from "../src/types.js";

const RUN = process.env.RUN_E2E === "1";
const ROOT = resolve(__dirname, "../..");
const PYTHON = process.env.PYTHON ?? "python3";

let server: ChildProcess | null = null;
let base = "";
let relevance: Record<string, string[]> = {};
let queryIds: string[] = [];

function interleaved(ids: string[]): string[] {
  return [...ids].sort((a, b) => {
    const [ca, ia] = a.slice(1).split("_");
    const [cb, ib] = b.slice(1).split("_");
    return ia === ib ? ca.localeCompare(cb) : ia.localeCompare(ib);
  });
}

async function waitForService(url: string, tries = 100): Promise<void> {
  for (let i = 0; i < tries; i++) {
    try {
      const resp = await fetch(`${url}/session/none/status`);
      if (resp.status === 404) return; // service is answering
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`service at ${url} did not come up`);
}

describe.skipIf(!RUN)("scripted feedback session against the live service", () => {
  beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "eralign-e2e-"));
    const gen = spawnSync(PYTHON, [
      join(ROOT, "scripts/make_synth_corpus.py"),
      "--out", dir, "--classes", "6", "--distractors", "300",
      "--relevant-per-class", "12", "--queries-per-class", "8",
      "--private-dim", "64", "--private-scale", "1.0",
      "--seed", "13",
    ], { cwd: ROOT, encoding: "utf-8" });
    if (gen.status !== 0) {
      throw new Error(`corpus generation failed: ${gen.stderr}`);
    }
    const truth = JSON.parse(readFileSync(join(dir, "relevance.json"), "utf-8"));
    relevance = truth.relevance;
    queryIds = interleaved(Object.keys(truth.classes));

    const port = 18000 + Math.floor(Math.random() * 10000);
    base = `http://127.0.0.1:${port}`;
    server = spawn(PYTHON, [
      "-m", "eralign.cli", "serve",
      "--store", join(dir, "archive.efs"),
      "--query-store", join(dir, "queries.efs"),
      "--relevance", join(dir, "relevance.json"),
      "--manifest", join(dir, "manifest.jsonl"),
      "--sessions-dir", join(dir, "sessions"),
      "--port", String(port),
      "--out", join(dir, "serve-run"),
    ], { cwd: ROOT, stdio: ["ignore", "pipe", "pipe"] });
    await waitForService(base);
  }, 60_000);

  afterAll(() => {
    server?.kill("SIGTERM");
  });

  it("drives not-ready -> estimated -> adapted in 20 queries", async () => {
    const client = await SessionClient.create(base);
    const stages: SessionStage[] = [];
    for (const qid of queryIds.slice(0, 20)) {
      const response = await client.query(qid, 30);
      expect(response.results.length).toBeGreaterThan(0);
      const ranked = response.results.map((r) => r.id);
      const relevant = new Set(relevance[qid]);
      const picks = ranked.filter((id) => relevant.has(id)).slice(0, 3);
      for (const id of [...relevant].sort()) {
        if (picks.length === 3) break;
        if (!picks.includes(id)) picks.push(id);
      }
      const fb = await client.feedback(response.query_id, picks);
      stages.push(stageOf(fb.session));
    }
    expect(stages[0]).toBe("not-ready");
    expect(stages).toContain("estimated");
    expect(stages).toContain("adapted");
    const order = ["not-ready", "estimated", "adapted"];
    const observed = stages.map((s) => order.indexOf(s));
    for (let i = 1; i < observed.length; i++) {
      expect(observed[i]).toBeGreaterThanOrEqual(observed[i - 1]);
    }

    const status = await client.status();
    expect(status.adapted).toBe(true);
    expect(status.counters.n_t).toBeGreaterThanOrEqual(15);

    // adapted queries re-rank; the before/after comparison endpoint works
    const qid = queryIds[25];
    const adapted = await client.query(qid, 10, "adapted");
    const raw = await client.query(qid, 10, "raw");
    expect(adapted.mode).toBe("adapted");
    expect(raw.mode).toBe("raw");
    expect(adapted.results.map((r) => r.id)).not.toEqual(raw.results.map((r) => r.id));

    const metrics = await client.metrics();
    expect(metrics.adapted).toBe(true);
    expect(metrics.after_map).not.toBeNull();
  }, 120_000);
});
