// Presentation helpers. The displayed precision here is the parity contract
// with the CLI: both sides are compared after passing through formatRisk.

export const RISK_DIGITS = 4;

export function formatRisk(p: number): string {
  if (!Number.isFinite(p)) return "-";
  return p.toPrecision(RISK_DIGITS);
}

export function statusLabel(status: string): string {
  switch (status) {
    case "rejected_null":
      return "confirmed";
    case "unresolved":
      return "unresolved - hand count";
    default:
      return "pending";
  }
}

// Color classes are presentation only; thresholds carry no statistical weight.
export function riskClass(p: number, riskLimit: number): string {
  if (p <= riskLimit) return "risk-ok";
  if (p <= 2 * riskLimit) return "risk-close";
  return "risk-high";
}
