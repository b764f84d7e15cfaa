"""Six-section clinical report assembly and LaTeX emission.

A report has a fixed section order: patient information, medical
history, ECG data analysis, pathological analysis, diagnosis, and
recommendations. Measured waveform text fills the data-analysis
section, the rendered diagnosis prompt fills the diagnosis section, and
a pluggable narrative backend writes the two free-text sections from a
structured prompt.

Backends: a deterministic template backend (no I/O), and an HTTP
backend that POSTs ``{"prompt": ...}`` JSON to a configured URL and
expects ``{"text": ...}`` back.

LaTeX output is emitted directly with all special characters escaped,
and a structural validator checks brace balance, environment pairing,
and unescaped specials.
"""

from __future__ import annotations

import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional, Protocol

from .ddp import DiagnosisSelection, render_prompt
from .delineation import WaveformFeatures, features_to_text
from .errors import BackendMalformedResponse, BackendUnavailable
from .signal_io import PatientMeta

SECTION_ORDER = (
    ("patient_information", "Patient Information"),
    ("medical_history", "Medical History"),
    ("ecg_data_analysis", "ECG Data Analysis"),
    ("pathological_analysis", "Pathological Analysis"),
    ("diagnosis", "Diagnosis"),
    ("recommendations", "Recommendations"),
)
NOT_AVAILABLE = "Not available"
BENIGN_DESCRIPTIONS = frozenset({"sinus rhythm", "normal ecg"})


@dataclass
class ReportDoc:
    """Six raw-text report sections in fixed order."""

    patient_information: str
    medical_history: str
    ecg_data_analysis: str
    pathological_analysis: str
    diagnosis: str
    recommendations: str

    def sections(self) -> list[tuple[str, str]]:
        return [(title, getattr(self, name)) for name, title in SECTION_ORDER]


class NarrativeBackend(Protocol):
    def generate(self, prompt: str) -> str: ...


def _narrative_prompt(section: str, diagnosis: str, features: str) -> str:
    return f"[{section}]\ndiagnosis: {diagnosis}\nfeatures: {features}"


def _parse_descriptions(diagnosis: str) -> list[str]:
    body = diagnosis.strip().rstrip(".")
    out = []
    for clause in body.split(";"):
        clause = clause.strip()
        if clause.endswith(" is present"):
            desc = clause[: -len(" is present")]
            out.append(desc[:1].lower() + desc[1:])
    return out


class TemplateBackend:
    """Deterministic fill-in narrative keyed on the diagnosis clauses."""

    def generate(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        match = re.match(r"\[(\w+)\]", prompt)
        section = match.group(1) if match else ""
        diag_match = re.search(r"^diagnosis: (.*)$", prompt, flags=re.MULTILINE)
        feat_match = re.search(r"^features: (.*)$", prompt, flags=re.MULTILINE)
        descriptions = _parse_descriptions(diag_match.group(1) if diag_match else "")
        features = feat_match.group(1) if feat_match else ""

        if section == "pathological_analysis":
            parts = [f"Waveform measurements are as follows. {features}".strip()]
            for desc in descriptions:
                parts.append(f"The tracing shows {desc}.")
            if not descriptions:
                parts.append("No labeled findings are stated for this tracing.")
            return " ".join(parts)
        if section == "recommendations":
            if any(d.lower() not in BENIGN_DESCRIPTIONS for d in descriptions):
                return (
                    "Clinical correlation and cardiology follow-up are "
                    "recommended. Compare with prior tracings if available."
                )
            return (
                "No further cardiac workup is indicated at this time. "
                "Routine follow-up is sufficient."
            )
        return NOT_AVAILABLE


class HttpBackend:
    """POST the prompt to a narrative service and return its text."""

    def __init__(self, url: str, timeout_ms: int = 5000) -> None:
        self.url = url
        self.timeout_ms = timeout_ms

    def generate(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        payload = json.dumps({"prompt": prompt}).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=payload,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(
                request, timeout=self.timeout_ms / 1000.0
            ) as response:
                body = response.read()
        except (urllib.error.URLError, OSError) as exc:
            raise BackendUnavailable(f"backend at {self.url}: {exc}") from exc
        try:
            obj = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BackendMalformedResponse(f"non-JSON response: {exc}") from exc
        if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
            raise BackendMalformedResponse(
                'response must be a JSON object with a string "text" field'
            )
        return obj["text"]


def _patient_info(meta: Optional[PatientMeta]) -> str:
    if meta is None:
        return NOT_AVAILABLE
    parts = []
    if meta.age is not None:
        parts.append(f"Age: {meta.age}.")
    if meta.sex:
        parts.append(f"Sex: {meta.sex}.")
    return " ".join(parts) if parts else NOT_AVAILABLE


def assemble(
    meta: Optional[PatientMeta],
    features: WaveformFeatures,
    sel: DiagnosisSelection,
    backend: NarrativeBackend,
) -> ReportDoc:
    """Fill the six sections from measurements, selection, and backend."""
    features_text = features_to_text(features)
    diagnosis = render_prompt(sel) or NOT_AVAILABLE
    return ReportDoc(
        patient_information=_patient_info(meta),
        medical_history=(meta.history if meta and meta.history else NOT_AVAILABLE),
        ecg_data_analysis=features_text,
        pathological_analysis=backend.generate(
            _narrative_prompt("pathological_analysis", diagnosis, features_text)
        ),
        diagnosis=diagnosis,
        recommendations=backend.generate(
            _narrative_prompt("recommendations", diagnosis, features_text)
        ),
    )


_ESCAPES = {
    "\\": r"\textbackslash{}",
    "{": r"\{",
    "}": r"\}",
    "%": r"\%",
    "$": r"\$",
    "&": r"\&",
    "#": r"\#",
    "_": r"\_",
    "~": r"\textasciitilde{}",
    "^": r"\textasciicircum{}",
}


def escape_latex(text: str) -> str:
    """Escape every special character in one character-wise pass."""
    return "".join(_ESCAPES.get(ch, ch) for ch in text)


PREAMBLE = "\\documentclass{article}\n\\begin{document}\n"
POSTAMBLE = "\\end{document}\n"


def render_latex(doc: ReportDoc) -> str:
    """Emit a complete document: one section per report field, escaped."""
    out = [PREAMBLE]
    for title, body in doc.sections():
        out.append(f"\\section{{{escape_latex(title)}}}\n")
        out.append(escape_latex(body) + "\n")
    out.append(POSTAMBLE)
    return "".join(out)


_SPECIALS = set("%$&#_~^")


def validate_latex(source: str) -> list[str]:
    """Structural checks; an empty list means the document passed.

    Verifies brace balance (escape-aware), matched begin/end environment
    pairs, and the absence of unescaped special characters.
    """
    violations: list[str] = []
    depth = 0
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\\":
            if i + 1 >= n:
                violations.append(f"trailing backslash at {i}")
                i += 1
            elif source[i + 1].isalpha():
                i += 1
                while i < n and source[i].isalpha():
                    i += 1
            else:
                i += 2  # escaped special or control symbol
        elif ch == "{":
            depth += 1
            i += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                violations.append(f"unbalanced closing brace at {i}")
                depth = 0
            i += 1
        elif ch in _SPECIALS:
            violations.append(f"unescaped {ch!r} at {i}")
            i += 1
        else:
            i += 1
    if depth != 0:
        violations.append(f"{depth} unclosed brace(s)")

    stack: list[str] = []
    for m in re.finditer(r"\\(begin|end)\{([^}]*)\}", source):
        kind, env = m.group(1), m.group(2)
        if kind == "begin":
            stack.append(env)
        elif not stack:
            violations.append(f"\\end{{{env}}} without matching begin")
        elif stack[-1] != env:
            violations.append(
                f"\\end{{{env}}} closes \\begin{{{stack[-1]}}}"
            )
            stack.pop()
        else:
            stack.pop()
    for env in stack:
        violations.append(f"\\begin{{{env}}} never closed")
    return violations
