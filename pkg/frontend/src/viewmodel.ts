// Pure presentation logic: payloads in, display values out. Keeping
// these as plain functions is what lets the flow tests run without a
// browser.

import type {
  CaseRecord,
  ChatTurn,
  ClassLabel,
  Decision,
  Report,
} from "./types.js";
import { CLASS_LABELS, DISPLAY_NAMES, isChatRejection } from "./types.js";

export interface ProbabilityBar {
  label: ClassLabel;
  name: string;
  // normalized share of 100, full precision (drives the bar width)
  percent: number;
  // one-decimal label, e.g. "97.7%"
  display: string;
}

export function probabilityBars(
  distribution: Record<ClassLabel, number>,
): ProbabilityBar[] {
  let total = 0;
  for (const label of CLASS_LABELS) {
    total += Math.max(0, distribution[label] ?? 0);
  }
  return CLASS_LABELS.map((label) => {
    const raw = Math.max(0, distribution[label] ?? 0);
    // a degenerate all-zero payload renders as an even split rather
    // than dividing by zero
    const percent = total > 0 ? (100 * raw) / total : 100 / CLASS_LABELS.length;
    return {
      label,
      name: DISPLAY_NAMES[label],
      percent,
      display: `${percent.toFixed(1)}%`,
    };
  });
}

export interface ConsensusBadge {
  text: string;
  kind: "unanimous" | "flagged";
}

export function consensusBadge(decision: Decision): ConsensusBadge {
  if (decision.consensus === "unanimous") {
    return { text: "Unanimous", kind: "unanimous" };
  }
  return { text: "Disagreement", kind: "flagged" };
}

export const REVIEW_BANNER_TEXT = "Specialist review required";

export function reviewBanner(record: CaseRecord): string | null {
  if (record.decision.needs_review || record.status === "flagged_for_review") {
    return REVIEW_BANNER_TEXT;
  }
  return null;
}

export function headline(decision: Decision): string {
  const name = DISPLAY_NAMES[decision.final_class];
  const confidence = (100 * decision.confidence).toFixed(1);
  return `${name} (${confidence}% confidence)`;
}

export interface RejectionNotice {
  category: string;
  message: string;
}

// Maps a 422 chat detail onto the inline notice; anything unexpected
// still produces a rendered message instead of a blank box.
export function rejectionNotice(detail: unknown): RejectionNotice {
  if (isChatRejection(detail)) {
    const label =
      detail.category === "non_clinical"
        ? "Outside clinical scope"
        : "Cannot answer as asked";
    return { category: detail.category, message: `${label}: ${detail.reason}` };
  }
  return {
    category: "invalid",
    message: typeof detail === "string" ? detail : "The query was not accepted.",
  };
}

export interface SectionView {
  heading: string;
  body: string;
  open: boolean;
}

export function sectionViews(report: Report): SectionView[] {
  return report.sections.map((section, index) => ({
    heading: section.heading,
    body: section.body,
    open: index === 0,
  }));
}

export interface TranscriptTurn {
  role: ChatTurn["role"];
  speaker: string;
  content: string;
}

export function transcript(history: ChatTurn[]): TranscriptTurn[] {
  return history.map((turn) => ({
    role: turn.role,
    speaker: turn.role === "user" ? "You" : "Assistant",
    content: turn.content,
  }));
}

export function apiErrorBanner(status: number, detail: unknown): string {
  const text =
    typeof detail === "string"
      ? detail
      : typeof detail === "object" && detail !== null && "message" in detail
        ? String((detail as { message: unknown }).message)
        : JSON.stringify(detail);
  return `Error ${status}: ${text}`;
}
