// HTML renderers. Pure string producers so the flow tests can assert
// on exactly what the browser would be given; main.ts owns the DOM.

import type { CaseRecord, Report } from "./types.js";
import {
  type RejectionNotice,
  consensusBadge,
  headline,
  probabilityBars,
  reviewBanner,
  sectionViews,
  transcript,
} from "./viewmodel.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderErrorBanner(message: string): string {
  return `<div class="banner banner-error" role="alert">${escapeHtml(message)}<button class="dismiss" data-action="dismiss-error">×</button></div>`;
}

export function renderReviewBanner(record: CaseRecord): string {
  const text = reviewBanner(record);
  if (text === null) {
    return "";
  }
  return `<div class="banner banner-review" role="alert">${escapeHtml(text)}</div>`;
}

export function renderProbabilityBars(record: CaseRecord): string {
  const rows = probabilityBars(record.average_distribution)
    .map(
      (bar) => `
      <div class="prob-row">
        <span class="prob-name">${escapeHtml(bar.name)}</span>
        <div class="prob-track">
          <div class="prob-fill prob-${bar.label.toLowerCase()}" style="width: ${bar.percent.toFixed(3)}%"></div>
        </div>
        <span class="prob-value">${bar.display}</span>
      </div>`,
    )
    .join("");
  return `<div class="prob-bars">${rows}</div>`;
}

export function renderDecision(record: CaseRecord): string {
  const badge = consensusBadge(record.decision);
  const tone = record.decision.needs_review ? "tentative" : "settled";
  return `
    <section class="decision decision-${tone}">
      <h2 class="headline">${escapeHtml(headline(record.decision))}</h2>
      <span class="badge badge-${badge.kind}">${escapeHtml(badge.text)}</span>
      ${renderReviewBanner(record)}
      ${renderProbabilityBars(record)}
    </section>`;
}

export function renderReport(report: Report): string {
  const sections = sectionViews(report)
    .map(
      (section) => `
      <details class="report-section"${section.open ? " open" : ""}>
        <summary>${escapeHtml(section.heading)}</summary>
        <p>${escapeHtml(section.body)}</p>
      </details>`,
    )
    .join("");
  const notice = report.specialist_notice
    ? `<p class="specialist-notice">${escapeHtml(report.specialist_notice)}</p>`
    : "";
  const warning = report.parse_warning
    ? `<p class="parse-warning">Report structure could not be fully parsed; showing raw text.</p>`
    : "";
  return `
    <section class="report">
      <h3>Assessment report</h3>
      ${warning}
      ${sections}
      ${notice}
      <footer class="disclaimer">${escapeHtml(report.disclaimer)}</footer>
    </section>`;
}

export function renderTranscript(record: CaseRecord): string {
  const turns = transcript(record.chat_history)
    .map(
      (turn) => `
      <div class="turn turn-${turn.role}">
        <span class="speaker">${escapeHtml(turn.speaker)}</span>
        <p>${escapeHtml(turn.content)}</p>
      </div>`,
    )
    .join("");
  return `<div class="transcript">${turns}</div>`;
}

export function renderRejection(notice: RejectionNotice): string {
  return `<div class="chat-rejection" data-category="${escapeHtml(notice.category)}">${escapeHtml(notice.message)}</div>`;
}
