// DOM wiring for the audit-board station. All statistics come from the
// service; this file only renders snapshots and forwards form submissions.

import { ApiError, AuditApi } from "./api.js";
import { buildChecklist, pendingCount, type ChecklistItem } from "./checklist.js";
import { formatRisk, riskClass, statusLabel } from "./format.js";
import { validateInterpretation, toEntry, type InterpretationForm } from "./forms.js";
import { OfflineQueue } from "./queue.js";
import type { AuditSnapshot, ContestShape, DrawTask, InterpretationEntry } from "./types.js";

type QueuedEntry = InterpretationEntry & { round: number };

const api = new AuditApi("");
const queue = new OfflineQueue<QueuedEntry>(async (queued) => {
  const { round, ...entry } = queued;
  await api.submitInterpretations(round, [entry]);
});

// contest shapes are served statically next to the page by the operator
declare global {
  interface Window {
    CONTEST_SHAPES?: Record<string, ContestShape>;
  }
}

let snapshot: AuditSnapshot | null = null;
let tasks: DrawTask[] = [];
let selected: ChecklistItem | null = null;

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

async function refresh() {
  try {
    snapshot = await api.state();
    const round = snapshot.round;
    tasks = round > 0 ? await api.draws(round) : [];
    render();
    el<HTMLElement>("connection").textContent = "";
  } catch (err) {
    el<HTMLElement>("connection").textContent =
      err instanceof ApiError ? `${err.code}: ${err.message}` : "offline - entries are queued";
  }
}

function render() {
  if (!snapshot) return;
  el<HTMLElement>("decision").textContent =
    `${snapshot.decision} (round ${snapshot.round}, risk limit ${snapshot.risk_limit})`;
  renderRisk(snapshot);
  renderChecklist();
  el<HTMLElement>("queue-depth").textContent =
    queue.length > 0 ? `${queue.length} entr${queue.length === 1 ? "y" : "ies"} queued` : "";
}

function renderRisk(snap: AuditSnapshot) {
  const rows: string[] = [];
  for (const [cid, contest] of Object.entries(snap.contests)) {
    rows.push(
      `<tr class="contest-row"><td colspan="2">${cid} [${contest.method}]</td>` +
        `<td class="${riskClass(contest.measured_risk, snap.risk_limit)}">` +
        `${formatRisk(contest.measured_risk)}</td><td>${contest.status}</td></tr>`,
    );
    for (const a of contest.assertions) {
      rows.push(
        `<tr><td></td><td title="${a.description}">${a.assertion_id}</td>` +
          `<td class="${riskClass(a.p, snap.risk_limit)}">${formatRisk(a.p)}</td>` +
          `<td>${statusLabel(a.status)} after ${a.draws} draws</td></tr>`,
      );
    }
  }
  el<HTMLElement>("risk-body").innerHTML = rows.join("");
}

function renderChecklist() {
  const items = buildChecklist(tasks);
  el<HTMLElement>("pending").textContent = `${pendingCount(items)} of ${items.length} pending`;
  el<HTMLElement>("checklist").innerHTML = items
    .map(
      (item, i) =>
        `<li class="${item.done ? "done" : "todo"}${item.phantom ? " phantom" : ""}">` +
        `<button data-i="${i}" ${item.done ? "disabled" : ""}>` +
        `${item.contest}${item.stratum ? " / " + item.stratum : ""} #${item.index}: ${item.label}` +
        `</button></li>`,
    )
    .join("");
  el<HTMLElement>("checklist").querySelectorAll("button").forEach((btn) => {
    btn.addEventListener("click", () => {
      selected = items[Number(btn.dataset.i)] ?? null;
      renderEntryForm();
    });
  });
}

function shapeFor(contest: string): ContestShape | null {
  return window.CONTEST_SHAPES?.[contest] ?? null;
}

function renderEntryForm() {
  const host = el<HTMLElement>("entry");
  if (!selected) {
    host.innerHTML = "";
    return;
  }
  const shape = shapeFor(selected.contest);
  if (selected.phantom || !shape) {
    host.innerHTML =
      `<p>${selected.label}</p>` +
      `<button id="submit-missing">record as missing</button>`;
    el<HTMLButtonElement>("submit-missing").onclick = () => submit({ kind: "missing" });
    return;
  }
  let fields = "";
  if (shape.socialChoice === "weighted") {
    fields = shape.candidates
      .map((c) => `<label>${c} <input data-cand="${c}" type="number" min="0"></label>`)
      .join("");
  } else if (shape.socialChoice === "irv") {
    fields = shape.candidates
      .map((c) => `<label>${c} rank <input data-cand="${c}" type="number" min="1"></label>`)
      .join("");
  } else {
    fields = shape.candidates
      .map((c) => `<label><input data-cand="${c}" type="checkbox"> ${c}</label>`)
      .join("");
  }
  host.innerHTML =
    `<p>${selected.contest} #${selected.index}: ${selected.label}</p>` +
    `<form id="entry-form">${fields}` +
    `<div id="entry-errors" class="errors"></div>` +
    `<button type="submit">submit</button>` +
    `<button type="button" id="submit-missing">card missing</button></form>`;
  el<HTMLButtonElement>("submit-missing").onclick = () => submit({ kind: "missing" });
  el<HTMLFormElement>("entry-form").onsubmit = (ev) => {
    ev.preventDefault();
    submit(collectForm(shape));
  };
}

function collectForm(shape: ContestShape): InterpretationForm {
  const inputs = Array.from(
    el<HTMLFormElement>("entry-form").querySelectorAll<HTMLInputElement>("input[data-cand]"),
  );
  if (shape.socialChoice === "weighted") {
    const scores: Record<string, string> = {};
    for (const input of inputs) scores[input.dataset.cand!] = input.value;
    return { kind: "scores", scores };
  }
  if (shape.socialChoice === "irv") {
    const ranks: Record<string, string> = {};
    for (const input of inputs) ranks[input.dataset.cand!] = input.value;
    return { kind: "ranks", ranks };
  }
  return { kind: "marks", marks: inputs.filter((i) => i.checked).map((i) => i.dataset.cand!) };
}

async function submit(form: InterpretationForm) {
  if (!selected || !snapshot) return;
  const shape = shapeFor(selected.contest) ?? {
    contestId: selected.contest,
    socialChoice: "plurality" as const,
    candidates: [],
  };
  const result = validateInterpretation(shape, form);
  if (!result.ok) {
    el<HTMLElement>("entry-errors").textContent = Object.entries(result.errors)
      .map(([field, msg]) => `${field}: ${msg}`)
      .join("; ");
    return;
  }
  const entry = {
    ...toEntry(selected.contest, selected.stratum || null, selected.index, result.record),
    round: snapshot.round,
  };
  queue.enqueue(entry);
  selected = null;
  renderEntryForm();
  const flushed = await queue.flush();
  for (const conflict of flushed.conflicts) {
    el<HTMLElement>("connection").textContent = `conflict: ${conflict.message}`;
  }
  await refresh();
}

async function closeRound() {
  if (!snapshot || snapshot.round === 0) return;
  try {
    await api.closeRound(snapshot.round);
    await refresh();
  } catch (err) {
    el<HTMLElement>("connection").textContent =
      err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
  }
}

document.addEventListener("DOMContentLoaded", () => {
  el<HTMLButtonElement>("close-round").onclick = closeRound;
  el<HTMLButtonElement>("retry-queue").onclick = async () => {
    await queue.flush();
    await refresh();
  };
  refresh();
  setInterval(refresh, 3000);
});
