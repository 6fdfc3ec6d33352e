"""Structured contracts for the reasoning agents: prompt builders and response parsers.

Every agent exchange is schema-constrained JSON. Builders are pure (identical
inputs give byte-identical message lists) and parsers accept the JSON object
anywhere in the reply, including inside code fences.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .imaging import ensure_rgb, png_bytes
from .masks import Edge, ExpansionSpec, Rect

EDGE_ORDER = (Edge.LEFT, Edge.RIGHT, Edge.TOP, Edge.BOTTOM)

_EDGE_ALIASES = {
    "left": "left",
    "right": "right",
    "top": "top",
    "up": "top",
    "bottom": "bottom",
    "down": "bottom",
}

OCCLUSION_SCHEMA = '{"target": "<string>", "occluders": ["<string>", ...]}'
BOUNDARY_SCHEMA = (
    '{"truncated": <true|false>, '
    '"expansion": {"left": <number>, "right": <number>, "top": <number>, "bottom": <number>}, '
    '"rationale": "<string>"}'
)
DESCRIPTION_SCHEMA = '{"description": "<string>"}'
COMBINED_SCHEMA = (
    '{"target": "<string>", "occluders": ["<string>", ...], '
    '"truncated": <true|false>, '
    '"expansion": {"left": <number>, "right": <number>, "top": <number>, "bottom": <number>}, '
    '"description": "<string>"}'
)


class AgentParseError(Exception):
    """Raised when an agent reply does not contain a valid schema instance."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


@dataclass(frozen=True)
class TaskQuery:
    image: np.ndarray
    query_text: str

    def __post_init__(self):
        ensure_rgb(self.image)
        if not self.query_text.strip():
            raise ValueError("query text must be non-empty")


@dataclass(frozen=True)
class OcclusionFinding:
    target_label: str
    occluder_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.target_label.strip():
            raise ValueError("target label must be non-empty")
        seen = set()
        for label in self.occluder_labels:
            low = label.strip().lower()
            if not low or low in seen or low == self.target_label.strip().lower():
                raise ValueError(f"invalid occluder list: {self.occluder_labels}")
            seen.add(low)


@dataclass(frozen=True)
class BoundaryFinding:
    truncated: bool
    expansion: ExpansionSpec
    rationale: str = ""

    def __post_init__(self):
        if not self.truncated and not self.expansion.is_zero():
            raise ValueError("untruncated finding must carry zero expansion")


@dataclass(frozen=True)
class DescriptionFinding:
    prompt_text: str

    def __post_init__(self):
        if not self.prompt_text.strip():
            raise ValueError("description must be non-empty")


def _image_part(image: np.ndarray) -> dict:
    import base64

    return {"type": "image_png_b64", "data": base64.b64encode(png_bytes(image)).decode("ascii")}


def _user_turn(image: np.ndarray, text: str) -> dict:
    return {"role": "user", "content": [{"type": "text", "text": text}, _image_part(image)]}


def build_occlusion_prompt(q: TaskQuery) -> list[dict]:
    system = (
        "You analyze front-back ordering of objects in a photograph. Identify the "
        "queried target object and list every scene element that sits in front of it "
        "and hides part of it, ordered by how much of the target each one covers. "
        "Do not list the target itself, shadows, or elements behind the target. "
        f"Reply with only a JSON object of the form {OCCLUSION_SCHEMA}."
    )
    user = (
        f"Target query: {q.query_text}\n"
        "Name the target object and its occluders in the attached image."
    )
    return [{"role": "system", "content": system}, _user_turn(q.image, user)]


def build_boundary_prompt(
    q: TaskQuery, touched: Optional[set[Edge]] = None, visible_bbox: Optional[Rect] = None
) -> list[dict]:
    """Truncation-assessment prompt. With a bbox prior the geometry is spelled
    out to anchor the reasoning; without one (image-only ablation) the agent
    judges from the picture alone."""
    system = (
        "You judge whether an object in a photograph is cut off by the image frame "
        "and estimate how far the canvas must grow on each side to fit the whole "
        "object. Expansion values are fractions of the original width or height "
        "(0.5 means grow that side by 50%); use 0 for sides that need no growth "
        "and set truncated to false with all zeros when the object fits entirely. "
        f"Reply with only a JSON object of the form {BOUNDARY_SCHEMA}."
    )
    lines = [f"Target query: {q.query_text}"]
    if visible_bbox is not None:
        h, w = q.image.shape[:2]
        lines.append(
            "Normalized bounding box of the target's visible pixels "
            f"[x0, y0, x1, y1]: [{visible_bbox.x / w:.4f}, {visible_bbox.y / h:.4f}, "
            f"{(visible_bbox.x + visible_bbox.width) / w:.4f}, "
            f"{(visible_bbox.y + visible_bbox.height) / h:.4f}]"
        )
        names = [e.value for e in EDGE_ORDER if touched and e in touched]
        lines.append(
            "The box touches these image edges: " + (", ".join(names) if names else "none")
        )
    lines.append("Estimate the boundary expansion needed for the attached image.")
    return [{"role": "system", "content": system}, _user_turn(q.image, "\n".join(lines))]


def build_description_prompt(q: TaskQuery) -> list[dict]:
    system = (
        "You write a rich one-paragraph description of a single object in a photograph "
        "as if nothing blocked the view of it. Describe the visible attributes first "
        "(color, texture, markings, pose), then plausible characteristics of the parts "
        "that are currently hidden. Describe the complete object only: never mention the "
        "elements covering it, the surrounding scene, or that anything is occluded. "
        f"Reply with only a JSON object of the form {DESCRIPTION_SCHEMA}."
    )
    user = f"Target query: {q.query_text}\nDescribe the complete object in the attached image."
    return [{"role": "system", "content": system}, _user_turn(q.image, user)]


def build_single_agent_prompt(q: TaskQuery) -> list[dict]:
    """Combined baseline prompt: occlusion, truncation, and description in one shot."""
    system = (
        "You analyze one queried object in a photograph and answer three things at once: "
        "(1) the target and every element in front of it hiding part of it; "
        "(2) whether the object is cut off by the image frame, with per-side canvas "
        "expansion fractions of the original width/height; "
        "(3) a one-paragraph description of the complete object, visible attributes "
        "first, then plausible hidden parts, never mentioning the occluders. "
        f"Reply with only a JSON object of the form {COMBINED_SCHEMA}."
    )
    user = f"Target query: {q.query_text}\nAnalyze the attached image."
    return [{"role": "system", "content": system}, _user_turn(q.image, user)]


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n?(.*?)```", re.DOTALL)


def _balanced_objects(text: str):
    depth = 0
    start = -1
    in_str = False
    escape = False
    for i, ch in enumerate(text):
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    yield text[start : i + 1]


def extract_json_object(text: str) -> dict:
    """First parseable JSON object in the reply, searching fenced blocks first."""
    candidates = []
    for block in _FENCE_RE.findall(text):
        candidates.extend(_balanced_objects(block))
    candidates.extend(_balanced_objects(text))
    for cand in candidates:
        try:
            obj = json.loads(cand)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise AgentParseError("no JSON object found in reply", text)


def _require(obj: dict, key: str, raw: str):
    if key not in obj:
        raise AgentParseError(f"missing required key {key!r}", raw)
    return obj[key]


def _parse_occlusion_fields(obj: dict, raw: str) -> OcclusionFinding:
    target = _require(obj, "target", raw)
    occluders = _require(obj, "occluders", raw)
    if not isinstance(target, str) or not target.strip():
        raise AgentParseError("'target' must be a non-empty string", raw)
    if not isinstance(occluders, list) or any(not isinstance(o, str) for o in occluders):
        raise AgentParseError("'occluders' must be a list of strings", raw)
    deduped: list[str] = []
    seen = set()
    for label in occluders:
        cleaned = label.strip()
        low = cleaned.lower()
        if not cleaned or low in seen or low == target.strip().lower():
            continue
        seen.add(low)
        deduped.append(cleaned)
    return OcclusionFinding(target.strip(), tuple(deduped))


def parse_occlusion_response(text: str) -> OcclusionFinding:
    return _parse_occlusion_fields(extract_json_object(text), text)


def _parse_boundary_fields(obj: dict, raw: str) -> tuple[BoundaryFinding, list[str]]:
    truncated = _require(obj, "truncated", raw)
    expansion = _require(obj, "expansion", raw)
    if not isinstance(truncated, bool):
        raise AgentParseError("'truncated' must be a boolean", raw)
    if not isinstance(expansion, dict):
        raise AgentParseError("'expansion' must be an object", raw)

    warnings: list[str] = []
    values = {"left": 0.0, "right": 0.0, "top": 0.0, "bottom": 0.0}
    for key, value in expansion.items():
        side = _EDGE_ALIASES.get(str(key).strip().lower())
        if side is None:
            raise AgentParseError(f"unknown expansion side {key!r}", raw)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise AgentParseError(f"expansion {key!r} must be a number", raw)
        v = float(value)
        if v < 0.0:
            warnings.append(f"expansion {side}={v} clamped to 0.0")
            v = 0.0
        elif v > 2.0:
            warnings.append(f"expansion {side}={v} clamped to 2.0")
            v = 2.0
        values[side] = v

    if not truncated and any(values.values()):
        warnings.append("truncated=false: discarding nonzero expansion")
        values = dict.fromkeys(values, 0.0)
    rationale = obj.get("rationale", "")
    if not isinstance(rationale, str):
        rationale = str(rationale)
    finding = BoundaryFinding(truncated, ExpansionSpec(**values), rationale)
    return finding, warnings


def parse_boundary_response(text: str) -> BoundaryFinding:
    finding, _ = parse_boundary_response_with_warnings(text)
    return finding


def parse_boundary_response_with_warnings(text: str) -> tuple[BoundaryFinding, list[str]]:
    return _parse_boundary_fields(extract_json_object(text), text)


_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")


def truncate_at_sentence(text: str, max_words: int) -> str:
    """Longest prefix of whole sentences within the word budget.

    A single over-budget sentence is hard-cut at the budget instead.
    """
    words_total = len(text.split())
    if words_total <= max_words:
        return text
    sentences = _SENTENCE_RE.split(text)
    kept: list[str] = []
    used = 0
    for sentence in sentences:
        n = len(sentence.split())
        if used + n > max_words:
            break
        kept.append(sentence)
        used += n
    if not kept:
        return " ".join(text.split()[:max_words])
    return " ".join(kept)


def _parse_description_fields(obj: dict, raw: str, max_words: int) -> DescriptionFinding:
    description = _require(obj, "description", raw)
    if not isinstance(description, str) or not description.strip():
        raise AgentParseError("'description' must be a non-empty string", raw)
    return DescriptionFinding(truncate_at_sentence(description.strip(), max_words))


def parse_description_response(text: str, max_words: int = 120) -> DescriptionFinding:
    return _parse_description_fields(extract_json_object(text), text, max_words)


def parse_single_agent_response(
    text: str, max_words: int = 120
) -> tuple[OcclusionFinding, BoundaryFinding, DescriptionFinding, list[str]]:
    obj = extract_json_object(text)
    occlusion = _parse_occlusion_fields(obj, text)
    boundary, warnings = _parse_boundary_fields(obj, text)
    description = _parse_description_fields(obj, text, max_words)
    return occlusion, boundary, description, warnings
