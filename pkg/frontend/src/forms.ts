// Client-side validation of interpretation entries. This mirrors the server's
// record invariants so data-entry mistakes surface inline instead of as a
// round-trip rejection; the server remains authoritative.

import type { ContestShape, InterpretationEntry } from "./types.js";

export interface MarksForm {
  kind: "marks";
  marks: string[];
}

export interface ScoresForm {
  kind: "scores";
  scores: Record<string, string>; // raw input strings
}

export interface RanksForm {
  kind: "ranks";
  ranks: Record<string, string>; // raw input strings, blank = unranked
}

export interface MissingForm {
  kind: "missing";
}

export type InterpretationForm = MarksForm | ScoresForm | RanksForm | MissingForm;

export type FieldErrors = Record<string, string>;

export type ValidationResult =
  | { ok: true; record: Record<string, unknown> | null }
  | { ok: false; errors: FieldErrors };

export function validateInterpretation(
  shape: ContestShape,
  form: InterpretationForm,
): ValidationResult {
  if (form.kind === "missing") {
    return { ok: true, record: null };
  }
  const errors: FieldErrors = {};
  if (form.kind === "marks") {
    if (!["plurality", "approval", "supermajority"].includes(shape.socialChoice)) {
      return { ok: false, errors: { form: "this contest does not take marks" } };
    }
    const unknown = form.marks.filter((m) => !shape.candidates.includes(m));
    if (unknown.length) {
      errors.marks = `unknown candidate(s): ${unknown.join(", ")}`;
    }
    if (new Set(form.marks).size !== form.marks.length) {
      errors.marks = "duplicate marks";
    }
    if (Object.keys(errors).length) return { ok: false, errors };
    return {
      ok: true,
      record: { contests: { [shape.contestId]: { marks: form.marks } } },
    };
  }
  if (form.kind === "scores") {
    if (shape.socialChoice !== "weighted") {
      return { ok: false, errors: { form: "this contest does not take scores" } };
    }
    const bound = shape.scoreUpperBound ?? Infinity;
    const scores: Record<string, number> = {};
    for (const [cand, raw] of Object.entries(form.scores)) {
      if (!shape.candidates.includes(cand)) {
        errors[cand] = "unknown candidate";
        continue;
      }
      if (raw.trim() === "") continue; // unscored candidate: zero
      const value = Number(raw);
      if (!Number.isFinite(value)) {
        errors[cand] = "not a number";
      } else if (value < 0 || value > bound) {
        errors[cand] = `score must be between 0 and ${bound}`;
      } else {
        scores[cand] = value;
      }
    }
    if (Object.keys(errors).length) return { ok: false, errors };
    return {
      ok: true,
      record: { contests: { [shape.contestId]: { scores } } },
    };
  }
  // ranks
  if (shape.socialChoice !== "irv") {
    return { ok: false, errors: { form: "this contest does not take ranks" } };
  }
  const ranks: Record<string, number> = {};
  const seen = new Map<number, string>();
  for (const [cand, raw] of Object.entries(form.ranks)) {
    if (raw.trim() === "") continue;
    if (!shape.candidates.includes(cand)) {
      errors[cand] = "unknown candidate";
      continue;
    }
    const value = Number(raw);
    if (!Number.isInteger(value) || value < 1) {
      errors[cand] = "ranks are positive whole numbers";
      continue;
    }
    const clash = seen.get(value);
    if (clash !== undefined) {
      errors[cand] = `rank ${value} already used by ${clash}`;
      continue;
    }
    seen.set(value, cand);
    ranks[cand] = value;
  }
  if (Object.keys(errors).length) return { ok: false, errors };
  return {
    ok: true,
    record: { contests: { [shape.contestId]: { ranks } } },
  };
}

export function toEntry(
  contest: string,
  stratum: string | null,
  index: number,
  record: Record<string, unknown> | null,
): InterpretationEntry {
  return { contest, stratum: stratum || null, index, record };
}
