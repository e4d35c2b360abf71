// Retrieval checklist: what the audit board walks the warehouse with.

import type { DrawTask } from "./types.js";

export interface ChecklistItem {
  contest: string;
  stratum: string;
  index: number;
  label: string;
  phantom: boolean;
  done: boolean;
}

export const PHANTOM_LABEL = "phantom - record as missing";

export function buildChecklist(tasks: DrawTask[]): ChecklistItem[] {
  return tasks.map((t) => ({
    contest: t.contest,
    stratum: t.stratum,
    index: t.index,
    label: t.phantom ? PHANTOM_LABEL : t.location_id ?? `card #${t.index}`,
    phantom: t.phantom,
    done: t.entered,
  }));
}

export function pendingCount(items: ChecklistItem[]): number {
  return items.filter((t) => !t.done).length;
}
