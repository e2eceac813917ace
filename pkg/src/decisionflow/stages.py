"""Prompt stages: template loading, rendering, and completion parsers.

Rendering fills ``{placeholder}`` slots in plain-text templates; literal JSON
examples survive because only lowercase identifier tokens are treated as
placeholders. Parsing recovers a JSON object from a completion, applying a
bounded set of syntactic repairs (trailing commas, bare keys, single quotes),
each logged. Semantic guessing is out of scope: a completion that does not
carry the expected fields fails with a classified error.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .core import NOT_MENTIONED, AttributeTable, RelevanceCell, canonical_name
from .errors import (
    AlignmentError,
    AnswerRangeError,
    CompletenessError,
    OutputParseError,
    SchemaError,
    TemplateError,
)

log = logging.getLogger(__name__)

STAGES = (
    "extract_info",
    "summarize_attributes",
    "weigh",
    "ground_and_decide",
    "rationale",
    "zero_shot",
    "cot",
    "joint",
)

# every schema identifier maps to exactly one parser ("freeform" to none:
# rationale text is used verbatim)
SCHEMA_BY_STAGE = {
    "extract_info": "information",
    "summarize_attributes": "attribute_table",
    "weigh": "weight",
    "ground_and_decide": "scores",
    "rationale": "freeform",
    "zero_shot": "decision",
    "cot": "decision",
    "joint": "decision",
}

PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")
FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)
TRAILING_COMMA_RE = re.compile(r",(\s*[}\]])")
BARE_KEY_RE = re.compile(r"([{,]\s*)([A-Za-z_][A-Za-z0-9_]*)(\s*:)")


@dataclass(frozen=True)
class StageTemplate:
    stage: str
    body: str
    expected_schema: str

    def placeholders(self) -> set[str]:
        return set(PLACEHOLDER_RE.findall(self.body))


def load_templates(directory: str | Path | None = None) -> dict[str, StageTemplate]:
    """Load one template per stage from a directory of ``<stage>.txt`` files.

    With no directory, the packaged defaults are used.
    """
    templates = {}
    for stage in STAGES:
        if directory is None:
            ref = resources.files("decisionflow").joinpath("templates", f"{stage}.txt")
            if not ref.is_file():
                raise TemplateError(f"packaged template for stage '{stage}' is missing")
            body = ref.read_text(encoding="utf-8")
        else:
            path = Path(directory) / f"{stage}.txt"
            if not path.is_file():
                raise TemplateError(f"no template file for stage '{stage}' at {path}")
            body = path.read_text(encoding="utf-8")
        templates[stage] = StageTemplate(
            stage=stage, body=body, expected_schema=SCHEMA_BY_STAGE[stage]
        )
    return templates


def render_stage_prompt(template: StageTemplate, context: Mapping[str, object]) -> str:
    """Substitute every placeholder; a missing one is an error naming it."""
    missing = [name for name in sorted(template.placeholders()) if name not in context]
    if missing:
        raise TemplateError(
            f"stage '{template.stage}' is missing placeholder value(s): "
            + ", ".join(missing)
        )
    return PLACEHOLDER_RE.sub(lambda m: str(context[m.group(1)]), template.body)


def _first_balanced_object(text: str) -> str | None:
    """Slice of text from the first '{' to its string-aware matching '}'."""
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    quote = ""
    escaped = False
    for pos in range(start, len(text)):
        ch = text[pos]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == quote:
                in_string = False
            continue
        if ch in "\"'":
            in_string = True
            quote = ch
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : pos + 1]
    return None


def _single_to_double_quotes(text: str) -> str:
    """Swap single-quoted strings for double-quoted ones, character-wise."""
    out = []
    in_string = False
    quote = ""
    escaped = False
    for ch in text:
        if in_string:
            if escaped:
                escaped = False
                out.append(ch)
            elif ch == "\\":
                escaped = True
                out.append(ch)
            elif ch == quote:
                in_string = False
                out.append('"')
            elif ch == '"' and quote == "'":
                out.append('\\"')
            else:
                out.append(ch)
            continue
        if ch in "\"'":
            in_string = True
            quote = ch
            out.append('"')
        else:
            out.append(ch)
    return "".join(out)


REPAIR_PASSES = (
    ("removed trailing commas", lambda s: TRAILING_COMMA_RE.sub(r"\1", s)),
    ("quoted bare keys", lambda s: BARE_KEY_RE.sub(r'\1"\2"\3', s)),
    ("converted single quotes to double quotes", _single_to_double_quotes),
)


def extract_json_block(text: str) -> tuple[str, list[str]]:
    """Return the first well-delimited JSON object in ``text`` plus a repair log.

    The object inside a code fence is preferred over bare braces. Repairs are
    purely syntactic and bounded; if none of them produce valid JSON the raw
    text rides along on the error.
    """
    candidates = []
    for block in FENCE_RE.findall(text):
        inner = _first_balanced_object(block)
        if inner is not None:
            candidates.append(inner)
    whole = _first_balanced_object(text)
    if whole is not None and whole not in candidates:
        candidates.append(whole)
    if not candidates:
        raise OutputParseError("no JSON object found in completion", raw=text)

    last_error = None
    for candidate in candidates:
        attempt = candidate
        repairs: list[str] = []
        try:
            json.loads(attempt)
            return attempt, []
        except json.JSONDecodeError as err:
            last_error = err
        for note, fix in REPAIR_PASSES:
            fixed = fix(attempt)
            if fixed != attempt:
                repairs.append(note)
                attempt = fixed
            try:
                json.loads(attempt)
                for applied in repairs:
                    log.debug("json repair applied: %s", applied)
                return attempt, repairs
            except json.JSONDecodeError as err:
                last_error = err
    raise OutputParseError(
        f"completion contains no parseable JSON object: {last_error}", raw=text
    )


def parse_json_payload(text: str) -> tuple[object, list[str]]:
    block, repairs = extract_json_block(text)
    return json.loads(block), repairs


def _require_object(payload: object, raw: str) -> dict:
    if not isinstance(payload, dict):
        raise SchemaError(
            f"expected a JSON object, got {type(payload).__name__}", raw=raw
        )
    return payload


def _as_number(value: object) -> float | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value.strip())
        except ValueError:
            return None
    return None


def _label_tokens(label: str) -> set[str]:
    return {tok for tok in canonical_name(label).split() if len(tok) >= 3}


def parse_extraction(text: str, actions) -> list[str]:
    """Read the ``information`` statement array.

    Statements that name no action are logged and kept; an empty array is a
    degenerate but legal outcome (the caller flags it).
    """
    payload, _ = parse_json_payload(text)
    payload = _require_object(payload, text)
    if "information" not in payload:
        raise SchemaError("completion lacks an 'information' key", raw=text)
    items = payload["information"]
    if not isinstance(items, list):
        raise SchemaError("'information' must be an array", raw=text)
    subject_tokens = set()
    for label in actions:
        subject_tokens |= _label_tokens(label)
    statements = []
    for item in items:
        if not isinstance(item, str):
            raise SchemaError("'information' entries must be strings", raw=text)
        stmt = item.strip()
        if not stmt:
            continue
        if subject_tokens and not (_label_tokens(stmt) & subject_tokens):
            log.warning("extracted statement names no known subject: %r", stmt)
        statements.append(stmt)
    if not statements:
        log.warning("extraction produced no statements; downstream table is empty")
    return statements


def match_action(name: str, actions) -> int | None:
    """Resolve a variable name to an action index by normalized substring."""
    canon = canonical_name(name)
    if not canon:
        return None
    for i, label in enumerate(actions):
        canon_label = canonical_name(label)
        if canon in canon_label or canon_label in canon:
            return i
    return None


def _cell_text(value: object) -> str:
    if isinstance(value, list):
        return ", ".join(_cell_text(v) for v in value)
    if isinstance(value, dict):
        return ", ".join(f"{k}: {_cell_text(v)}" for k, v in value.items())
    return str(value).strip()


def _attribute_pairs(entry: object, raw: str):
    """Normalize one variable's attribute listing to (name, verbal) pairs."""
    if isinstance(entry, dict):
        for name, value in entry.items():
            yield str(name), _cell_text(value)
        return
    if not isinstance(entry, list):
        raise SchemaError("'Attribute' must be an array or object", raw=raw)
    for item in entry:
        if isinstance(item, dict):
            name = item.get("Attribute") or item.get("attribute") or item.get("Name")
            if not isinstance(name, str) or not name.strip():
                raise SchemaError("attribute entry lacks a name", raw=raw)
            value = item.get("Value", item.get("value", ""))
            yield name, _cell_text(value)
        elif isinstance(item, str):
            if ":" in item:
                name, _, value = item.partition(":")
                yield name, value.strip()
            else:
                yield item, "mentioned"
        else:
            raise SchemaError(
                f"attribute entry has unsupported type {type(item).__name__}", raw=raw
            )


def parse_attribute_table(text: str, actions) -> AttributeTable:
    """Build the verbal attribute table from a summarize_attributes completion.

    Attribute names are unioned across actions under canonicalization; cells
    the model never filled read "not mentioned". A variable that matches no
    action is an alignment error listing the candidates.
    """
    payload, _ = parse_json_payload(text)
    payload = _require_object(payload, text)
    entries = payload.get("Variable", payload.get("Variables"))
    if entries is None:
        raise SchemaError("completion lacks a 'Variable' key", raw=text)
    if not isinstance(entries, list):
        raise SchemaError("'Variable' must be an array", raw=text)

    actions = tuple(actions)
    attr_order: list[str] = []
    attr_display: dict[str, str] = {}
    filled: dict[tuple[int, str], str] = {}
    for entry in entries:
        if not isinstance(entry, dict):
            raise SchemaError("variable entries must be objects", raw=text)
        name = entry.get("Variable", entry.get("variable"))
        if not isinstance(name, str) or not name.strip():
            raise SchemaError("variable entry lacks a name", raw=text)
        index = match_action(name, actions)
        if index is None:
            raise AlignmentError(
                f"variable {name!r} matches no action; candidates: {list(actions)}",
                raw=text,
            )
        for attr_name, verbal in _attribute_pairs(entry.get("Attribute", []), text):
            canon = canonical_name(attr_name)
            if not canon:
                continue
            if canon not in attr_display:
                attr_display[canon] = attr_name.strip()
                attr_order.append(canon)
            key = (index, canon)
            if key in filled:
                log.warning(
                    "duplicate attribute %r for action %r; keeping the first value",
                    attr_name, actions[index],
                )
                continue
            filled[key] = verbal if verbal else NOT_MENTIONED
    cells = tuple(
        tuple(
            RelevanceCell(filled.get((i, canon), NOT_MENTIONED))
            for canon in attr_order
        )
        for i in range(len(actions))
    )
    return AttributeTable(
        actions=actions,
        attributes=tuple(attr_display[c] for c in attr_order),
        cells=cells,
    )


def parse_weight(text: str) -> tuple[str, float]:
    """Read (explanation, weight); out-of-range weights clamp with a warning."""
    payload, _ = parse_json_payload(text)
    payload = _require_object(payload, text)
    if "Weight" not in payload:
        raise SchemaError("completion lacks a 'Weight' key", raw=text)
    weight = _as_number(payload["Weight"])
    if weight is None or not math.isfinite(weight):
        raise SchemaError(
            f"'Weight' is not a finite number: {payload['Weight']!r}", raw=text
        )
    if not 0.0 <= weight <= 1.0:
        clamped = min(1.0, max(0.0, weight))
        log.warning("weight %s outside [0, 1]; clamped to %s", weight, clamped)
        weight = clamped
    explanation = payload.get("Explanation", "")
    return (str(explanation) if explanation is not None else "", weight)


def parse_decision(text: str, n_actions: int, index_base: int = 0) -> tuple[str, int]:
    """Read (reasoning, answer), normalizing the published indexing to 0-based.

    index_base describes how the choices were numbered in the prompt (0 or 1).
    The answer is normalized exactly once, here at the boundary.
    """
    payload, _ = parse_json_payload(text)
    payload = _require_object(payload, text)
    if "Answer" not in payload:
        raise SchemaError("completion lacks an 'Answer' key", raw=text)
    value = _as_number(payload["Answer"])
    if value is None or int(value) != value:
        raise SchemaError(
            f"'Answer' is not an integer index: {payload['Answer']!r}", raw=text
        )
    answer = int(value) - index_base
    if not 0 <= answer < n_actions:
        raise AnswerRangeError(
            f"answer {payload['Answer']!r} is outside the action range "
            f"[{index_base}, {index_base + n_actions - 1}]",
            raw=text,
        )
    reasoning = payload.get("Reasoning", "")
    return (str(reasoning) if reasoning is not None else "", answer)


def parse_grounding(text: str, table: AttributeTable, surviving) -> tuple:
    """Read per-cell scores for the filter-surviving cells of the table.

    Returns an n x m grid. Cells outside the surviving set default to 0.0;
    "not mentioned" cells score 0.0 by definition; a surviving, mentioned
    cell with no score is a completeness error naming the cell.
    """
    payload, _ = parse_json_payload(text)
    payload = _require_object(payload, text)
    if "Scores" not in payload:
        raise SchemaError("completion lacks a 'Scores' key", raw=text)
    items = payload["Scores"]
    if not isinstance(items, list):
        raise SchemaError("'Scores' must be an array", raw=text)

    canon_attrs = {canonical_name(a): j for j, a in enumerate(table.attributes)}
    scored: dict[tuple[int, int], float] = {}
    for item in items:
        if not isinstance(item, dict):
            raise SchemaError("score entries must be objects", raw=text)
        var = item.get("Variable", item.get("variable"))
        attr = item.get("Attribute", item.get("attribute"))
        if not isinstance(var, str) or not isinstance(attr, str):
            raise SchemaError("score entry lacks Variable/Attribute names", raw=text)
        i = match_action(var, table.actions)
        j = canon_attrs.get(canonical_name(attr))
        if i is None or j is None:
            log.warning("score for unknown cell (%r, %r) ignored", var, attr)
            continue
        value = _as_number(item.get("Score"))
        if value is None:
            raise SchemaError(
                f"score for ({var!r}, {attr!r}) is not a number", raw=text
            )
        if not 0.0 <= value <= 1.0:
            clamped = min(1.0, max(0.0, value))
            log.warning(
                "score %s for (%r, %r) outside [0, 1]; clamped to %s",
                value, var, attr, clamped,
            )
            value = clamped
        if (i, j) not in scored:
            scored[(i, j)] = value

    surviving = set(surviving)
    n, m = table.shape
    grid = []
    for i in range(n):
        row = []
        for j in range(m):
            cell = table.cells[i][j]
            if not cell.mentioned:
                row.append(0.0)
            elif (i, j) in scored:
                row.append(scored[(i, j)])
            elif (i, j) in surviving:
                raise CompletenessError(
                    f"no score for surviving cell ({table.actions[i]!r}, "
                    f"{table.attributes[j]!r})",
                    raw=text,
                )
            else:
                row.append(0.0)
        grid.append(tuple(row))
    return tuple(grid)
