import { SessionSummary } from "./api.js";

export interface SummaryRow {
  level: number;
  trials: number;
  correct: number;
  proportion: number;
}

export function summaryRows(summary: SessionSummary): SummaryRow[] {
  return summary.levels.map((lv) => ({
    level: lv.level,
    trials: lv.trials,
    correct: lv.correct,
    proportion: lv.trials > 0 ? lv.correct / lv.trials : 0,
  }));
}

export function overallProportion(summary: SessionSummary): number {
  const trials = summary.levels.reduce((acc, lv) => acc + lv.trials, 0);
  const correct = summary.levels.reduce((acc, lv) => acc + lv.correct, 0);
  return trials > 0 ? correct / trials : 0;
}
