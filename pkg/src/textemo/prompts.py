"""Prediction prompt templates and rendering.

Templates live in a plain-text file of records separated by ``--- <name>``
lines; the shipped defaults are the five prompts used by the experiments
(baseline, expert, gambler, cot, cot_fired). Bodies carry three slots —
{context}, {current speaker}, {current sentence} — replaced by pure textual
substitution. A doubled brace renders as a literal brace.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

PREDICTION_LABELS = frozenset({"happy", "sad", "neutral", "angry"})

SLOT_CONTEXT = "{context}"
SLOT_SPEAKER = "{current speaker}"
SLOT_SENTENCE = "{current sentence}"

_TOKEN_RE = re.compile(r"\{\{|\}\}|\{context\}|\{current speaker\}|\{current sentence\}")
_SEPARATOR_RE = re.compile(r"^---\s+(\S+)\s*$")

DEFAULT_TEMPLATE_RESOURCE = "templates.txt"


class EmptySentence(ValueError):
    """The current-sentence slot may not be empty."""


class UnknownTemplate(KeyError):
    """Requested template name is not in the template file."""


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def slot_count(self, slot: str) -> int:
        return self.body.count(slot)


def expected_labels() -> frozenset[str]:
    """The closed set of labels a prediction response may carry."""
    return PREDICTION_LABELS


def render(template: PromptTemplate, context: str, speaker: str, sentence: str) -> str:
    """Substitute the three slots into the template body.

    Raises EmptySentence when sentence is empty; slot markers disappear even
    for empty context/speaker values.
    """
    if not sentence:
        raise EmptySentence(f"template {template.name!r} rendered with an empty sentence")
    values = {
        "{{": "{",
        "}}": "}",
        SLOT_CONTEXT: context,
        SLOT_SPEAKER: speaker,
        SLOT_SENTENCE: sentence,
    }
    return _TOKEN_RE.sub(lambda m: values[m.group(0)], template.body)


def parse_template_file(text: str) -> dict[str, PromptTemplate]:
    """Parse ``--- <name>`` separated template records."""
    templates: dict[str, PromptTemplate] = {}
    name: str | None = None
    lines: list[str] = []

    def flush() -> None:
        if name is None:
            return
        body = "\n".join(lines).strip()
        if not body:
            raise ValueError(f"template {name!r} has an empty body")
        if name in templates:
            raise ValueError(f"duplicate template name {name!r}")
        templates[name] = PromptTemplate(name=name, body=body)

    for line in text.splitlines():
        sep = _SEPARATOR_RE.match(line)
        if sep:
            flush()
            name = sep.group(1)
            lines = []
        elif name is not None:
            lines.append(line)
        elif line.strip() and not line.lstrip().startswith("#"):
            # Preamble may carry comments and blank lines, nothing else.
            raise ValueError(f"content before the first '--- <name>' separator: {line!r}")
    flush()
    return templates


def load_templates(path: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Load templates from a file, or the shipped defaults when path is None."""
    if path is None:
        text = resources.files("textemo.data").joinpath(DEFAULT_TEMPLATE_RESOURCE).read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_template_file(text)


def get_template(name: str, path: str | Path | None = None) -> PromptTemplate:
    templates = load_templates(path)
    if name not in templates:
        raise UnknownTemplate(f"no template named {name!r}; have {sorted(templates)}")
    return templates[name]
