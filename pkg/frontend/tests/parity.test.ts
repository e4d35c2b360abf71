// Scripted three-round audit entered through the UI's own modules against a
// live service; displayed risk must match the CLI's status output exactly at
// the displayed precision, and phantom draws must surface as phantom tasks.

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AuditApi } from "../src/api.js";
import { buildChecklist, PHANTOM_LABEL } from "../src/checklist.js";
import { formatRisk } from "../src/format.js";
import { validateInterpretation, toEntry, type InterpretationForm } from "../src/forms.js";
import { OfflineQueue } from "../src/queue.js";
import type { ContestShape, InterpretationEntry } from "../src/types.js";

const run = promisify(execFile);
const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const here = fileURLToPath(new URL(".", import.meta.url));

let server: ChildProcess | null = null;
let statePath = "";
let truth: Record<string, { contests: Record<string, { marks: string[] }> }> = {};
let contest = "";

const shape: ContestShape = {
  contestId: "mayor",
  socialChoice: "plurality",
  candidates: ["alice", "bob"],
};

async function waitForServer(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const res = await fetch(`${BASE}/audit/state`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("audit service did not come up");
}

beforeAll(async () => {
  const workdir = mkdtempSync(join(tmpdir(), "rlaudit-ui-"));
  const { stdout } = await run("python3", [join(here, "fixture.py"), workdir]);
  const fixture = JSON.parse(stdout.trim());
  statePath = fixture.state;
  contest = fixture.contest;
  truth = JSON.parse(readFileSync(fixture.truth, "utf-8"));
  server = spawn("audit", ["serve", "--state", statePath, "--port", String(PORT)], {
    stdio: "ignore",
  });
  await waitForServer();
}, 60_000);

afterAll(() => {
  server?.kill();
});

async function cliStatus(): Promise<any> {
  const { stdout } = await run("audit", ["status", "--state", statePath, "--json"]);
  return JSON.parse(stdout);
}

describe("UI parity against a live service", () => {
  const api = new AuditApi(BASE);
  let sawPhantomTask = false;

  it("drives a scripted three-round audit through the UI modules", async () => {
    for (const round of [1, 2, 3]) {
      const drawRes = await fetch(`${BASE}/audit/round/${round}/draw`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ counts: { [contest]: 10 } }),
      });
      expect(drawRes.ok).toBe(true);

      const tasks = await api.draws(round);
      const checklist = buildChecklist(tasks);
      expect(checklist.length).toBe(10);
      const queue = new OfflineQueue<InterpretationEntry>(async (entry) => {
        await api.submitInterpretations(round, [entry]);
      });
      for (const item of checklist) {
        let form: InterpretationForm;
        if (item.phantom) {
          sawPhantomTask = true;
          expect(item.label).toBe(PHANTOM_LABEL);
          form = { kind: "missing" };
        } else {
          const marks = truth[item.label]!.contests[contest]!.marks;
          form = { kind: "marks", marks };
        }
        const validated = validateInterpretation(shape, form);
        expect(validated.ok).toBe(true);
        if (validated.ok) {
          queue.enqueue(toEntry(item.contest, item.stratum || null, item.index, validated.record));
        }
      }
      const flushed = await queue.flush();
      expect(flushed.submitted).toBe(10);
      expect(flushed.conflicts).toEqual([]);

      const afterClose = await api.closeRound(round);
      expect(afterClose.round).toBe(round);

      // parity check: what the UI would display vs what the CLI reports
      const uiAssertions = await api.assertions();
      const cli = await cliStatus();
      expect(uiAssertions.length).toBeGreaterThan(0);
      for (const a of uiAssertions) {
        const cliMatch = cli.contests[a.contest].assertions.find(
          (c: any) => c.assertion_id === a.assertion_id,
        );
        expect(cliMatch).toBeDefined();
        expect(formatRisk(a.p)).toBe(formatRisk(cliMatch.p));
        expect(a.draws).toBe(cliMatch.draws);
        expect(a.status).toBe(cliMatch.status);
      }
      expect(cli.round).toBe(round);
    }
    expect(sawPhantomTask).toBe(true);
  }, 120_000);

  it("duplicate submissions surface as conflicts, server order authoritative", async () => {
    const tasks = await api.draws(3);
    const first = tasks[0]!;
    const queue = new OfflineQueue<InterpretationEntry>(async (entry) => {
      await api.submitInterpretations(3, [entry]);
    });
    queue.enqueue(toEntry(first.contest, first.stratum || null, first.index, null));
    const result = await queue.flush();
    // round 3 is closed: the server rejects, the queue drops and reports
    expect(result.submitted).toBe(0);
    expect(result.conflicts).toHaveLength(1);
    expect(result.remaining).toBe(0);
  });
});
