"""Patient-facing report generation, chat, and guardrails.

The report prompt is a fixed template over the decided disease name and
confidence; flagged cases get an extra specialist-review sentence. Every
rendered report and every chat reply ends with the same fixed medical
disclaimer. Incoming chat queries pass a rule-based scope filter before
any LLM call is made.
"""

from __future__ import annotations

import datetime as _dt
import json
import re
from dataclasses import dataclass
from importlib import resources

from .errors import ConfigurationError, InputError
from .llmclient import ChatMessage, complete

__all__ = [
    "DISCLAIMER",
    "SPECIALIST_NOTICE",
    "PROMPT_TEMPLATE",
    "DISPLAY_NAMES",
    "ReportRequest",
    "AssessmentReport",
    "build_prompt",
    "parse_report_sections",
    "generate_report",
    "QueryDecision",
    "validate_query",
    "build_chat_messages",
    "chat_respond",
    "RubricScore",
    "score_report",
]

DISCLAIMER = (
    "This guidance supplements but does not replace professional medical "
    "evaluation."
)

SPECIALIST_NOTICE = (
    "This case requires specialist review due to diagnostic uncertainty."
)

PROMPT_TEMPLATE = (
    "Generate a dermatological assessment report for {disease} with "
    "{confidence}% confidence. Include: "
    "(1) Overview of lesion characteristics visible in the image, "
    "(2) Key symptoms requiring monitoring, "
    "(3) Treatment options based on current guidelines, "
    "(4) Urgent warning signs indicating immediate consultation."
)

DISPLAY_NAMES = {"NV": "Nevus", "BCC": "Basal Cell Carcinoma"}

SECTION_KEYS = (
    ("overview", "Overview"),
    ("symptoms_to_monitor", "Key symptoms to monitor"),
    ("treatment_options", "Treatment options"),
    ("urgent_warning_signs", "Urgent warning signs"),
)

REPORT_SYSTEM_PROMPT = (
    "You are a dermatology assistant drafting a patient-facing assessment "
    "report. Respond with exactly the four numbered sections requested, in "
    "order, using plain language. Do not invent measurements or history "
    "you were not given, and do not present the assessment as a definitive "
    "diagnosis."
)

CHAT_WINDOW = 8


def _utc_now_iso():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class ReportRequest:
    """What the report prompt needs from a classified case."""

    disease_name: str
    confidence_percent: float
    specialist_review: bool

    def __post_init__(self):
        if not self.disease_name:
            raise InputError("disease_name must be non-empty")
        if not (0.0 <= self.confidence_percent <= 100.0):
            raise InputError("confidence_percent must be in [0, 100]")

    @classmethod
    def from_decision(cls, decision):
        return cls(
            disease_name=DISPLAY_NAMES[decision.final_class],
            confidence_percent=100.0 * decision.confidence,
            specialist_review=decision.needs_review,
        )


def build_prompt(request):
    """Render the report prompt; flagged cases get the specialist line."""
    text = PROMPT_TEMPLATE.format(
        disease=request.disease_name,
        confidence=f"{request.confidence_percent:.1f}",
    )
    if request.specialist_review:
        text = f"{text}\n{SPECIALIST_NOTICE}"
    return text


_MARKER_RE = re.compile(r"^[\s#*>]*\(?([1-9])[).:\]]\s*(.*)$")


def parse_report_sections(text):
    """Split completion text into the four numbered sections.

    Returns (sections, parse_warning). When the four markers (1)..(4) are
    not all present in order, the whole text becomes a single section and
    parse_warning is True.
    """
    marks = []
    lines = text.splitlines()
    for index, line in enumerate(lines):
        matched = _MARKER_RE.match(line)
        if matched:
            marks.append((int(matched.group(1)), index, matched.group(2)))
    ordered = [m for m in marks if m[0] <= 4]
    numbers = [m[0] for m in ordered]
    if numbers != [1, 2, 3, 4]:
        return (
            [{"key": "overview", "heading": "Report", "body": text.strip()}],
            True,
        )
    sections = []
    for position, (number, line_index, remainder) in enumerate(ordered):
        end = ordered[position + 1][1] if position + 1 < len(ordered) else len(lines)
        key, default_heading = SECTION_KEYS[number - 1]
        heading = remainder.strip().strip("*").strip()
        body_lines = []
        if ":" in heading:
            heading, _, tail = heading.partition(":")
            heading = heading.strip()
            if tail.strip():
                body_lines.append(tail.strip())
        elif heading and len(heading.split()) > 12:
            # Marker line is prose, not a heading; keep it as body text.
            body_lines.append(heading)
            heading = default_heading
        body_lines.extend(lines[line_index + 1 : end])
        body = "\n".join(body_lines).strip()
        sections.append(
            {"key": key, "heading": heading or default_heading, "body": body}
        )
    return sections, False


@dataclass(frozen=True)
class AssessmentReport:
    """A structured patient-facing report."""

    disease_name: str
    confidence_percent: float
    sections: tuple
    specialist_review: bool
    disclaimer: str
    raw_text: str
    parse_warning: bool
    created_at: str

    def to_dict(self):
        return {
            "disease_name": self.disease_name,
            "confidence_percent": self.confidence_percent,
            "sections": [dict(section) for section in self.sections],
            "specialist_review": self.specialist_review,
            "specialist_notice": SPECIALIST_NOTICE if self.specialist_review else None,
            "disclaimer": self.disclaimer,
            "raw_text": self.raw_text,
            "parse_warning": self.parse_warning,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            disease_name=data["disease_name"],
            confidence_percent=float(data["confidence_percent"]),
            sections=tuple(dict(section) for section in data["sections"]),
            specialist_review=bool(data["specialist_review"]),
            disclaimer=data["disclaimer"],
            raw_text=data["raw_text"],
            parse_warning=bool(data.get("parse_warning", False)),
            created_at=data["created_at"],
        )

    def to_text(self):
        """Printable rendering; always ends with the disclaimer."""
        parts = [
            f"Assessment: {self.disease_name} "
            f"({self.confidence_percent:.1f}% confidence)"
        ]
        for section in self.sections:
            parts.append(f"\n{section['heading']}\n{section['body']}")
        if self.specialist_review:
            parts.append(f"\n{SPECIALIST_NOTICE}")
        parts.append(f"\n{self.disclaimer}")
        return "\n".join(parts)


def generate_report(request, config, transport=None, sleeper=None):
    """Ask the LLM for a report and structure the result."""
    messages = [
        ChatMessage("system", REPORT_SYSTEM_PROMPT),
        ChatMessage("user", build_prompt(request)),
    ]
    kwargs = {} if sleeper is None else {"sleeper": sleeper}
    text = complete(config, messages, transport=transport, **kwargs)
    sections, warning = parse_report_sections(text)
    return AssessmentReport(
        disease_name=request.disease_name,
        confidence_percent=request.confidence_percent,
        sections=tuple(sections),
        specialist_review=request.specialist_review,
        disclaimer=DISCLAIMER,
        raw_text=text,
        parse_warning=warning,
        created_at=_utc_now_iso(),
    )


# ---------------------------------------------------------------------------
# Query guardrails


@dataclass(frozen=True)
class QueryDecision:
    accepted: bool
    category: str | None = None
    reason: str | None = None


_REASONS = {
    "diagnostic_overreach": (
        "I cannot give a definitive diagnosis, prognosis, or prescription; "
        "please raise this with a clinician."
    ),
    "non_clinical": (
        "That question falls outside the scope of this skin lesion case."
    ),
}


def _load_packaged_json(name):
    path = resources.files("dermtriage").joinpath(f"data/{name}")
    try:
        with path.open("r", encoding="utf-8") as handle:
            return json.load(handle)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"missing packaged config {name}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"bad packaged config {name}: {exc}") from exc


_FILTER_CACHE = None


def _load_filters(path=None):
    global _FILTER_CACHE
    if path is not None:
        with open(path, "r", encoding="utf-8") as handle:
            return _compile_filters(json.load(handle))
    if _FILTER_CACHE is None:
        _FILTER_CACHE = _compile_filters(_load_packaged_json("query_filters.json"))
    return _FILTER_CACHE


def _compile_filters(raw):
    try:
        allow = [term.lower() for term in raw["allow_terms"]]
        blocked = [
            (group["category"], [re.compile(p, re.IGNORECASE) for p in group["patterns"]])
            for group in raw["blocked"]
        ]
    except (KeyError, TypeError, re.error) as exc:
        raise ConfigurationError(f"bad query filter config: {exc}") from exc
    return {"allow": allow, "blocked": blocked}


def validate_query(query, filters_path=None):
    """Rule-based scope check for patient chat queries.

    Blocked patterns win over allow terms; a query matching nothing at
    all is rejected as non-clinical.
    """
    if not query or not query.strip():
        raise InputError("query must be non-empty")
    rules = _load_filters(filters_path)
    lowered = query.lower()
    for category, patterns in rules["blocked"]:
        for pattern in patterns:
            if pattern.search(lowered):
                return QueryDecision(False, category, _REASONS[category])
    if any(term in lowered for term in rules["allow"]):
        return QueryDecision(True)
    return QueryDecision(False, "non_clinical", _REASONS["non_clinical"])


# ---------------------------------------------------------------------------
# Patient chat


def _chat_system_prompt(decision):
    request = ReportRequest.from_decision(decision)
    lines = [
        "You are a patient-education assistant for a skin lesion triage "
        "service.",
        f"Case context: the classifier ensemble assessed this lesion as "
        f"{request.disease_name} with {request.confidence_percent:.1f}% "
        f"confidence (consensus: {decision.consensus}).",
        "Answer questions about this assessment in plain, calm language.",
        "Never give a definitive diagnosis, never prescribe medication, and "
        "always encourage professional follow-up.",
    ]
    if decision.needs_review:
        lines.append(SPECIALIST_NOTICE)
    return "\n".join(lines)


def build_chat_messages(decision, history, query, window=CHAT_WINDOW):
    """System prompt plus the last ``window`` history turns plus the query."""
    messages = [ChatMessage("system", _chat_system_prompt(decision))]
    for turn in list(history)[-window:]:
        if isinstance(turn, ChatMessage):
            messages.append(turn)
        else:
            messages.append(ChatMessage(turn["role"], turn["content"]))
    messages.append(ChatMessage("user", query))
    return messages


def chat_respond(
    decision,
    history,
    query,
    config,
    transport=None,
    window=CHAT_WINDOW,
    sleeper=None,
):
    """Answer an in-scope patient query. The reply ends with the disclaimer.

    Callers are expected to run validate_query first; this function
    enforces it again and raises InputError on a rejected query rather
    than spending an LLM call.
    """
    decision_check = validate_query(query)
    if not decision_check.accepted:
        raise InputError(
            f"query rejected ({decision_check.category}): {decision_check.reason}"
        )
    messages = build_chat_messages(decision, history, query, window=window)
    kwargs = {} if sleeper is None else {"sleeper": sleeper}
    reply = complete(config, messages, transport=transport, **kwargs)
    reply = reply.rstrip()
    if not reply.endswith(DISCLAIMER):
        reply = f"{reply}\n\n{DISCLAIMER}"
    return reply


# ---------------------------------------------------------------------------
# Rubric scoring


@dataclass(frozen=True)
class RubricScore:
    per_domain: dict
    mean: float

    def to_dict(self):
        return {"per_domain": dict(self.per_domain), "mean": self.mean}


def score_report(report_text, rubric_path=None):
    """Score report text against the phrase rubric.

    Each domain scores min(10, sum of points of its phrases present in
    the text, case-insensitive). The aggregate is the mean over domains.
    """
    if isinstance(report_text, AssessmentReport):
        report_text = report_text.to_text()
    if rubric_path is None:
        raw = _load_packaged_json("rubric.json")
    else:
        try:
            with open(rubric_path, "r", encoding="utf-8") as handle:
                raw = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"bad rubric config: {exc}") from exc
    domains = raw.get("domains")
    if not isinstance(domains, dict) or not domains:
        raise ConfigurationError("rubric config needs a non-empty 'domains' map")
    lowered = report_text.lower()
    per_domain = {}
    for name, spec in domains.items():
        score = 0.0
        for phrase in spec.get("phrases", []):
            if str(phrase["text"]).lower() in lowered:
                score += float(phrase["points"])
        per_domain[name] = min(10.0, score)
    mean = sum(per_domain.values()) / len(per_domain)
    return RubricScore(per_domain=per_domain, mean=mean)
