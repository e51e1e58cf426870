// Canned payloads mirroring what the triage service serves, plus a
// tiny fetch router so flow tests can run against a scripted server.

import type { FetchLike } from "../src/api.js";
import type { CaseRecord, Report } from "../src/types.js";

export const DISCLAIMER =
  "This summary is generated for patient education and is not a medical " +
  "diagnosis. Always consult a qualified clinician about skin concerns.";

export function makeRecord(overrides: Partial<CaseRecord> = {}): CaseRecord {
  return {
    case_id: "case-1",
    image_ref: "cases/case-1/image.png",
    decision: {
      final_class: "BCC",
      votes: { NV: 0, BCC: 3 },
      consensus: "unanimous",
      confidence: 0.977,
      needs_review: false,
      member_predictions: [
        { model_id: "m-0", probs: { NV: 0.02, BCC: 0.98 }, predicted: "BCC" },
        { model_id: "m-1", probs: { NV: 0.03, BCC: 0.97 }, predicted: "BCC" },
        { model_id: "m-2", probs: { NV: 0.019, BCC: 0.981 }, predicted: "BCC" },
      ],
    },
    average_distribution: { NV: 0.023, BCC: 0.977 },
    status: "classified",
    created_at: "2026-08-19T10:00:00+00:00",
    updated_at: "2026-08-19T10:00:00+00:00",
    report: null,
    chat_history: [],
    ...overrides,
  };
}

export function makeFlaggedRecord(
  overrides: Partial<CaseRecord> = {},
): CaseRecord {
  return makeRecord({
    decision: {
      final_class: "BCC",
      votes: { NV: 1, BCC: 2 },
      consensus: "disagreement_flagged",
      confidence: 0.6,
      needs_review: true,
      member_predictions: [
        { model_id: "m-0", probs: { NV: 0.9, BCC: 0.1 }, predicted: "NV" },
        { model_id: "m-1", probs: { NV: 0.2, BCC: 0.8 }, predicted: "BCC" },
        { model_id: "m-2", probs: { NV: 0.1, BCC: 0.9 }, predicted: "BCC" },
      ],
    },
    average_distribution: { NV: 0.4, BCC: 0.6 },
    status: "flagged_for_review",
    ...overrides,
  });
}

export function makeReport(overrides: Partial<Report> = {}): Report {
  return {
    disease_name: "Basal Cell Carcinoma",
    confidence_percent: 97.7,
    sections: [
      {
        key: "overview",
        heading: "Overview",
        body: "The lesion shows uneven color and an irregular border.",
      },
      {
        key: "symptoms",
        heading: "Symptoms to monitor",
        body: "Watch for itching, bleeding, or crusting.",
      },
      {
        key: "treatment",
        heading: "Treatment options",
        body: "A biopsy confirms the finding; excision is common.",
      },
      {
        key: "warning_signs",
        heading: "Urgent warning signs",
        body: "Rapid growth or a non-healing sore needs prompt attention.",
      },
    ],
    specialist_review: false,
    specialist_notice: null,
    disclaimer: DISCLAIMER,
    raw_text: "1) Overview: ...",
    parse_warning: false,
    created_at: "2026-08-19T10:05:00+00:00",
    ...overrides,
  };
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export interface RecordedRequest {
  url: string;
  method: string;
  body: BodyInit | null | undefined;
}

export type RouteHandler = (
  init?: RequestInit,
) => Response | Promise<Response>;

// Keys look like "POST /v1/cases"; the query string is ignored when
// matching so "?force=true" variants share a route.
export function router(table: Record<string, RouteHandler>): {
  fetchFn: FetchLike;
  requests: RecordedRequest[];
  count: (key: string) => number;
} {
  const requests: RecordedRequest[] = [];
  const fetchFn: FetchLike = async (input, init) => {
    const method = init?.method ?? "GET";
    const key = `${method} ${input.split("?")[0]}`;
    requests.push({ url: input, method, body: init?.body });
    const handler = table[key];
    if (handler === undefined) {
      throw new Error(`no route for ${key}`);
    }
    return handler(init);
  };
  const count = (key: string): number =>
    requests.filter((r) => `${r.method} ${r.url.split("?")[0]}` === key).length;
  return { fetchFn, requests, count };
}
