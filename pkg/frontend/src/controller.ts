// Application state machine. Owns the current case, drives the API
// client, and renders the page HTML; main.ts only wires events.

import { ApiError, TriageApi } from "./api.js";
import {
  renderDecision,
  renderErrorBanner,
  renderRejection,
  renderReport,
  renderTranscript,
} from "./render.js";
import type { CaseRecord } from "./types.js";
import { apiErrorBanner, rejectionNotice } from "./viewmodel.js";

export interface AppState {
  record: CaseRecord | null;
  error: string | null;
  rejection: { category: string; message: string } | null;
  chatDraft: string;
  chatPending: boolean;
  reportPending: boolean;
  uploadPending: boolean;
}

export class AppController {
  readonly api: TriageApi;
  state: AppState = {
    record: null,
    error: null,
    rejection: null,
    chatDraft: "",
    chatPending: false,
    reportPending: false,
    uploadPending: false,
  };

  constructor(api: TriageApi) {
    this.api = api;
  }

  dismissError(): void {
    this.state.error = null;
  }

  private fail(err: unknown): void {
    if (err instanceof ApiError) {
      this.state.error = apiErrorBanner(err.status, err.detail);
    } else {
      this.state.error = err instanceof Error ? err.message : String(err);
    }
  }

  async upload(image: Blob | ArrayBuffer | Uint8Array): Promise<void> {
    if (this.state.uploadPending) {
      return;
    }
    this.state.uploadPending = true;
    this.state.error = null;
    try {
      this.state.record = await this.api.createCase(image);
      this.state.rejection = null;
      this.state.chatDraft = "";
    } catch (err) {
      this.fail(err);
    } finally {
      this.state.uploadPending = false;
    }
  }

  async requestReport(force = false): Promise<void> {
    const record = this.state.record;
    if (record === null || this.state.reportPending) {
      return;
    }
    this.state.reportPending = true;
    this.state.error = null;
    try {
      const response = await this.api.requestReport(record.case_id, force);
      this.state.record = response.case;
    } catch (err) {
      this.fail(err);
    } finally {
      this.state.reportPending = false;
    }
  }

  // One chat request in flight at a time; the input is disabled while
  // pending. A rejected query keeps the draft so the patient can
  // rephrase instead of retyping.
  async sendChat(): Promise<void> {
    const record = this.state.record;
    const query = this.state.chatDraft.trim();
    if (record === null || this.state.chatPending || query === "") {
      return;
    }
    this.state.chatPending = true;
    this.state.error = null;
    this.state.rejection = null;
    try {
      const response = await this.api.sendChat(record.case_id, query);
      this.state.record = response.case;
      this.state.chatDraft = "";
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        this.state.rejection = rejectionNotice(err.detail);
      } else {
        this.fail(err);
      }
    } finally {
      this.state.chatPending = false;
    }
  }

  render(): string {
    const parts: string[] = [];
    if (this.state.error !== null) {
      parts.push(renderErrorBanner(this.state.error));
    }
    const record = this.state.record;
    if (record === null) {
      parts.push('<p class="empty-hint">Upload a lesion image to begin.</p>');
      return parts.join("\n");
    }
    parts.push(renderDecision(record));
    if (record.report !== null) {
      parts.push(renderReport(record.report));
    } else {
      parts.push(
        `<button data-action="report"${this.state.reportPending ? " disabled" : ""}>Generate report</button>`,
      );
    }
    parts.push(renderTranscript(record));
    if (this.state.rejection !== null) {
      parts.push(renderRejection(this.state.rejection));
    }
    parts.push(
      `<input data-role="chat-input" value="${escapeAttr(this.state.chatDraft)}"${this.state.chatPending ? " disabled" : ""} placeholder="Ask about this assessment">`,
    );
    parts.push(
      `<button data-action="chat"${this.state.chatPending ? " disabled" : ""}>Send</button>`,
    );
    return parts.join("\n");
  }
}

function escapeAttr(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/"/g, "&quot;");
}
