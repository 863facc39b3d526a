import type { SessionSummary } from "./types.js";

/** One row of the residual panel; every number comes from the server. */
export interface ResidualRow {
  id: number;
  source: string;
  manual: boolean;
  pre: number[];
  post: number[];
  residualMm: number;
}

export function residualRows(summary: SessionSummary): ResidualRow[] {
  return summary.landmarks.map((lm) => ({
    id: lm.id,
    source: lm.source,
    manual: lm.source === "manual",
    pre: lm.pre,
    post: lm.post,
    residualMm: lm.residual_mm,
  }));
}

/** Stable descending sort by residual; equal residuals keep input order. */
export function sortByResidualDesc(rows: ResidualRow[]): ResidualRow[] {
  return rows
    .map((row, i) => ({ row, i }))
    .sort((a, b) => b.row.residualMm - a.row.residualMm || a.i - b.i)
    .map(({ row }) => row);
}

export interface ResidualSummaryLine {
  nLandmarks: number;
  nManual: number;
  meanResidualMm: number | null;
  maxResidualMm: number | null;
}

export function summarize(rows: ResidualRow[], summary: SessionSummary): ResidualSummaryLine {
  if (rows.length === 0) {
    return { nLandmarks: 0, nManual: 0, meanResidualMm: null, maxResidualMm: null };
  }
  const residuals = rows.map((r) => r.residualMm);
  return {
    nLandmarks: summary.n_landmarks,
    nManual: summary.n_manual,
    meanResidualMm: residuals.reduce((a, b) => a + b, 0) / residuals.length,
    maxResidualMm: Math.max(...residuals),
  };
}
