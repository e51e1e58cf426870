// Typed client for the /v1 API. No diagnostic logic lives here: the
// browser renders what the server decided, nothing more.

import type {
  CaseListEntry,
  CaseRecord,
  CaseStatus,
  ChatResponse,
  ReportResponse,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(typeof detail === "string" ? detail : `request failed with ${status}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

async function readDetail(response: Response): Promise<unknown> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    return body.detail ?? body;
  } catch {
    return `request failed with ${response.status}`;
  }
}

export class TriageApi {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private url(path: string): string {
    return `${this.baseUrl}/v1${path}`;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.url(path), init);
    if (!response.ok) {
      throw new ApiError(response.status, await readDetail(response));
    }
    return (await response.json()) as T;
  }

  createCase(image: Blob | ArrayBuffer | Uint8Array): Promise<CaseRecord> {
    return this.request<CaseRecord>("/cases", {
      method: "POST",
      headers: { "Content-Type": "application/octet-stream" },
      body: image as BodyInit,
    });
  }

  async listCases(status?: CaseStatus): Promise<CaseListEntry[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    const body = await this.request<{ cases: CaseListEntry[] }>(
      `/cases${query}`,
    );
    return body.cases;
  }

  getCase(caseId: string): Promise<CaseRecord> {
    return this.request<CaseRecord>(`/cases/${encodeURIComponent(caseId)}`);
  }

  requestReport(caseId: string, force = false): Promise<ReportResponse> {
    const query = force ? "?force=true" : "";
    return this.request<ReportResponse>(
      `/cases/${encodeURIComponent(caseId)}/report${query}`,
      { method: "POST" },
    );
  }

  sendChat(caseId: string, query: string): Promise<ChatResponse> {
    return this.request<ChatResponse>(
      `/cases/${encodeURIComponent(caseId)}/chat`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ query }),
      },
    );
  }
}
