"""Prompt templates, prompt assembly and parsing of model replies."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from ..errors import ConfigError
from ..osm import RoadSegment
from .retrieval import Chunk

SPEC_FIELDS = ("lane_width", "bike_lane_width", "shoulder_width", "total_width")
TARGETS = ("all",) + SPEC_FIELDS

FEET = 0.3048
UNITS = {"m": 1.0, "meter": 1.0, "meters": 1.0, "ft": FEET, "feet": FEET}
MAX_WIDTH = 30.0
NO_CONTEXT = "(no context retrieved)"

_SECTION = re.compile(r"^\[([A-Za-z0-9_+\-]+)\]\s*$")
_FIELD_LINE = re.compile(
    r"^\s*(?:[-*]\s+)?([A-Za-z][A-Za-z _\-]*?)\s*[:=]\s*"
    r"(-?\d+(?:\.\d+)?)\s*([A-Za-z]+)?\s*[,;.]?\s*$"
)


class ExtractionError(ValueError):
    """A reply contained no usable width field."""


class SpecRangeError(ExtractionError):
    pass


@dataclass(frozen=True)
class ExtractionQuery:
    segment: RoadSegment
    target_field: str = "all"
    prior_context: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.target_field not in TARGETS:
            raise ValueError(f"unknown target field {self.target_field!r}")

    @property
    def fields(self) -> tuple[str, ...]:
        return SPEC_FIELDS if self.target_field == "all" else (self.target_field,)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    preamble: str


@dataclass(frozen=True)
class TemplateSet:
    templates: Mapping[str, PromptTemplate] = field(default_factory=dict)

    def __getitem__(self, name: str) -> PromptTemplate:
        try:
            return self.templates[name]
        except KeyError:
            known = ", ".join(sorted(self.templates)) or "none"
            raise ConfigError(f"unknown prompt template {name!r} (available: {known})") from None

    def names(self) -> list[str]:
        return list(self.templates)


def parse_templates(text: str) -> TemplateSet:
    """Split a template file into named sections.

    A line of the form ``[NAME]`` opens a section; everything up to the next
    header is that template's preamble. Text before the first header is
    ignored.
    """
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        m = _SECTION.match(line)
        if m:
            current = m.group(1)
            if current in sections:
                raise ConfigError(f"duplicate prompt template {current!r}")
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    return TemplateSet(
        {name: PromptTemplate(name, "\n".join(lines).strip()) for name, lines in sections.items()}
    )


def load_templates(path: str | Path | None = None) -> TemplateSet:
    if path is None:
        text = resources.files("sdpp.data").joinpath("prompts.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_templates(text)


def format_value(value: float) -> str:
    return repr(float(value))


def render_spec_fields(values: Mapping[str, float]) -> str:
    """One ``key: value m`` line per field; :func:`parse_spec_response` reads it back."""
    return "\n".join(f"{k}: {format_value(values[k])} m" for k in SPEC_FIELDS if k in values)


def _segment_lines(seg: RoadSegment) -> list[str]:
    return [
        f"highway_class: {seg.highway_class}",
        f"lane_count: {seg.lane_count}",
        f"oneway: {'yes' if seg.oneway else 'no'}",
        f"bike_lane: {'yes' if seg.has_bike_lane else 'no'}",
    ]


def build_prompt(query: ExtractionQuery, retrieved: Sequence[Chunk], template: PromptTemplate) -> str:
    """Assemble the full prompt text for one extraction query.

    Sections, in order: the template preamble, the retrieved manual excerpts,
    the segment attributes, previously extracted values (if any) and the
    required answer format. Only the preamble depends on the template.
    """
    out = [template.preamble, "", "### Road manual excerpts"]
    if retrieved:
        for c in retrieved:
            out += [f"[excerpt {c.index}]", c.text.strip(), ""]
    else:
        out += [NO_CONTEXT, ""]
    out += ["### Road segment", *_segment_lines(query.segment), ""]
    if query.prior_context:
        out.append("### Values already determined for this segment")
        out += [f"{k}: {format_value(v)}" for k, v in query.prior_context]
        out.append("")
    out += [
        "### Answer format",
        "Reply with exactly these lines, widths in meters, and nothing else:",
        *(f"{k}: <number> m" for k in query.fields),
    ]
    return "\n".join(out) + "\n"


def _normalize_key(raw: str) -> str:
    return re.sub(r"[\s\-]+", "_", raw.strip().lower())


def parse_spec_response(raw: str) -> dict[str, float]:
    """Pull width fields out of a free-form model reply.

    Recognizes ``key: value [unit]`` lines (``=`` also accepted, markdown
    bullets, bold and quotes stripped). Units are m/meter/meters/ft/feet; a
    bare number is taken as metres. Values are returned in metres.
    """
    found: dict[str, float] = {}
    for line in raw.splitlines():
        line = re.sub(r"[*`\"']", "", line)
        m = _FIELD_LINE.match(line)
        if not m:
            continue
        key = _normalize_key(m.group(1))
        if key not in SPEC_FIELDS:
            continue
        unit = (m.group(3) or "m").lower()
        if unit not in UNITS:
            continue
        value = float(m.group(2)) * UNITS[unit]
        if not 0.0 <= value <= MAX_WIDTH:
            raise SpecRangeError(f"{key} = {value:.4g} m outside [0, {MAX_WIDTH}] m")
        found[key] = value
    if not found:
        raise ExtractionError("no width field found in reply")
    return found
