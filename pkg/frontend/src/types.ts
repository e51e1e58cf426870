// JSON shapes served by the /v1 API.

export type ClassLabel = "NV" | "BCC";

export const CLASS_LABELS: ClassLabel[] = ["NV", "BCC"];

export const DISPLAY_NAMES: Record<ClassLabel, string> = {
  NV: "Nevus",
  BCC: "Basal Cell Carcinoma",
};

export type Consensus = "unanimous" | "disagreement_flagged";

export type CaseStatus = "classified" | "reported" | "flagged_for_review";

export interface MemberPrediction {
  model_id: string;
  probs: Record<ClassLabel, number>;
  predicted: ClassLabel;
}

export interface Decision {
  final_class: ClassLabel;
  votes: Record<ClassLabel, number>;
  consensus: Consensus;
  confidence: number;
  needs_review: boolean;
  member_predictions: MemberPrediction[];
}

export interface ReportSection {
  key: string;
  heading: string;
  body: string;
}

export interface Report {
  disease_name: string;
  confidence_percent: number;
  sections: ReportSection[];
  specialist_review: boolean;
  specialist_notice: string | null;
  disclaimer: string;
  raw_text: string;
  parse_warning: boolean;
  created_at: string;
}

export interface ChatTurn {
  role: "user" | "assistant";
  content: string;
}

export interface CaseRecord {
  case_id: string;
  image_ref: string;
  decision: Decision;
  average_distribution: Record<ClassLabel, number>;
  status: CaseStatus;
  created_at: string;
  updated_at: string;
  report: Report | null;
  chat_history: ChatTurn[];
}

export interface CaseListEntry {
  case_id: string;
  created_at: string;
  updated_at: string;
  status: CaseStatus;
}

export interface ReportResponse {
  case: CaseRecord;
  generated: boolean;
}

export interface ChatResponse {
  reply: string;
  case: CaseRecord;
}

// 422 body for a query the guardrails turned away
export interface ChatRejection {
  rejected: true;
  category: string;
  reason: string;
}

export function isChatRejection(detail: unknown): detail is ChatRejection {
  return (
    typeof detail === "object" &&
    detail !== null &&
    (detail as { rejected?: unknown }).rejected === true &&
    typeof (detail as { category?: unknown }).category === "string"
  );
}
