// Wire types for the audit service. The UI renders these verbatim; it never
// computes statistics of its own.

export interface AssertionView {
  contest: string;
  assertion_id: string;
  description: string;
  kind: string;
  p: number;
  p_exact: string | null;
  draws: number;
  status: string;
  allocation?: string[];
}

export interface ContestView {
  method: string;
  status: string;
  measured_risk: number;
  assertions: Omit<AssertionView, "contest">[];
  diagnostics: string[];
  next_round_estimate: number | null;
}

export interface RoundSummary {
  round: number;
  closed: boolean;
  escalated: boolean;
  draws: number;
  entered: number;
}

export interface AuditSnapshot {
  decision: string;
  round: number;
  risk_limit: number;
  contests: Record<string, ContestView>;
  rounds: RoundSummary[];
}

export interface DrawTask {
  contest: string;
  stratum: string;
  index: number;
  phantom: boolean;
  location_id: string | null;
  cvr_id: string | null;
  entered: boolean;
}

// Shape of one contest as the entry form needs it.
export interface ContestShape {
  contestId: string;
  socialChoice: "plurality" | "approval" | "supermajority" | "weighted" | "irv";
  candidates: string[];
  scoreUpperBound?: number;
}

export interface InterpretationEntry {
  contest: string;
  stratum: string | null;
  index: number;
  record: Record<string, unknown> | null;
}
