"""Deterministic symbolic kernel: decision types, filtering, and selection.

Everything in this module is pure and total over validated inputs. Actions are
modeled as a one-hot choice among n candidates; relevance and weight grids are
n x m (action x attribute). No randomness, no I/O.
"""

from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass, field

from .errors import InfeasibleError, ShapeError

Grid = tuple[tuple[float, ...], ...]

CARDINALITY_RE = re.compile(r"^\s*x\d+\s*(?:\+\s*x\d+\s*)*<=\s*\d+\s*$")
BINARY_DOMAIN_RE = re.compile(r"^\s*x\d+\s*(?:,\s*x\d+\s*)*in\s*\{\s*0\s*,\s*1\s*\}\s*$")
VAR_INDEX_RE = re.compile(r"x(\d+)")

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def canonical_name(text: str) -> str:
    """Case-fold, strip punctuation, and collapse whitespace.

    Used wherever attribute or variable names are compared.
    """
    folded = text.casefold().translate(_PUNCT_TABLE)
    return " ".join(folded.split())


def _as_grid(rows, *, what: str) -> Grid:
    grid = tuple(tuple(float(v) for v in row) for row in rows)
    if grid:
        width = len(grid[0])
        for i, row in enumerate(grid):
            if len(row) != width:
                raise ShapeError(f"{what} row {i} has length {len(row)}, expected {width}")
    for i, row in enumerate(grid):
        for j, v in enumerate(row):
            if not math.isfinite(v):
                raise ValueError(f"{what}[{i}][{j}] is not finite: {v!r}")
    return grid


def grid_shape(grid: Grid) -> tuple[int, int]:
    return (len(grid), len(grid[0]) if grid else 0)


@dataclass(frozen=True)
class Constraint:
    """One admissibility restriction over the action variables.

    kind is one of:
      cardinality   -- sum of the variables in `over` must not exceed `limit`
      exclusion     -- the single action `action` is inadmissible
      binary_domain -- variables are 0/1 (always true here; kept for display)
      opaque        -- unrecognized text, carried along but never enforced
    """

    kind: str
    source_text: str
    limit: int | None = None
    over: frozenset[int] = field(default_factory=frozenset)
    action: int | None = None

    def __post_init__(self):
        if self.kind not in ("cardinality", "exclusion", "binary_domain", "opaque"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "cardinality":
            if self.limit is None or self.limit < 0:
                raise ValueError("cardinality constraint needs a limit >= 0")
            if any(i < 0 for i in self.over):
                raise ValueError("cardinality indices must be non-negative")
        if self.kind == "exclusion" and (self.action is None or self.action < 0):
            raise ValueError("exclusion constraint needs a non-negative action index")

    @classmethod
    def cardinality(cls, limit: int, over, source_text: str = "") -> "Constraint":
        over = frozenset(over)
        if not source_text:
            terms = " + ".join(f"x{i + 1}" for i in sorted(over))
            source_text = f"{terms} <= {limit}"
        return cls(kind="cardinality", source_text=source_text, limit=limit, over=over)

    @classmethod
    def exclusion(cls, action: int, source_text: str = "") -> "Constraint":
        return cls(
            kind="exclusion",
            source_text=source_text or f"x{action + 1} excluded",
            action=action,
        )

    @classmethod
    def binary_domain(cls, source_text: str = "") -> "Constraint":
        return cls(kind="binary_domain", source_text=source_text or "x_i in {0,1}")

    @classmethod
    def opaque(cls, source_text: str) -> "Constraint":
        return cls(kind="opaque", source_text=source_text)


def parse_constraint(text: str) -> Constraint:
    """Parse one constraint line; never raises, unrecognized text becomes opaque.

    Recognized forms (variables are 1-based in text, 0-based internally):
      ``x1 + x2 <= 1``      -> cardinality over {0, 1} with limit 1
      ``x1, x2 in {0, 1}``  -> binary_domain marker
    """
    if CARDINALITY_RE.match(text):
        lhs, rhs = text.split("<=")
        over = frozenset(int(tok) - 1 for tok in VAR_INDEX_RE.findall(lhs))
        return Constraint(
            kind="cardinality", source_text=text.strip(), limit=int(rhs), over=over
        )
    if BINARY_DOMAIN_RE.match(text):
        return Constraint(kind="binary_domain", source_text=text.strip())
    return Constraint(kind="opaque", source_text=text.strip())


@dataclass(frozen=True)
class DecisionProblem:
    """One decision instance: a scenario and the candidate actions."""

    problem_id: str
    scenario: str
    actions: tuple[str, ...]
    constraints: tuple[Constraint, ...] = ()
    bias_directive: str | None = None
    gold: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len(self.actions) < 2:
            raise ValueError("a decision problem needs at least two actions")
        if any(not a.strip() for a in self.actions):
            raise ValueError("action labels must be non-empty")
        if len(set(self.actions)) != len(self.actions):
            raise ValueError("action labels must be distinct")
        if self.gold is not None and not 0 <= self.gold < len(self.actions):
            raise ValueError(f"gold index {self.gold} out of range for {len(self.actions)} actions")

    @property
    def n_actions(self) -> int:
        return len(self.actions)


NOT_MENTIONED = "not mentioned"


@dataclass(frozen=True)
class RelevanceCell:
    """Verbal relevance of one attribute to one action, optionally grounded."""

    verbal: str
    value: float | None = None

    def __post_init__(self):
        if self.value is not None and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"grounded relevance {self.value} outside [0, 1]")

    @property
    def mentioned(self) -> bool:
        return canonical_name(self.verbal) != NOT_MENTIONED


@dataclass(frozen=True)
class AttributeTable:
    """Verbal relevance grid: one row per action, one column per attribute."""

    actions: tuple[str, ...]
    attributes: tuple[str, ...]
    cells: tuple[tuple[RelevanceCell, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "cells", tuple(tuple(row) for row in self.cells))
        canon = [canonical_name(a) for a in self.attributes]
        if len(set(canon)) != len(canon):
            raise ValueError("attribute names must be distinct after canonicalization")
        if len(self.cells) != len(self.actions):
            raise ShapeError(
                f"table has {len(self.cells)} rows for {len(self.actions)} actions"
            )
        for i, row in enumerate(self.cells):
            if len(row) != len(self.attributes):
                raise ShapeError(
                    f"table row {i} has {len(row)} cells for {len(self.attributes)} attributes"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.actions), len(self.attributes))

    def verbal_grid(self) -> tuple[tuple[str, ...], ...]:
        return tuple(tuple(c.verbal for c in row) for row in self.cells)


@dataclass(frozen=True)
class WeightMatrix:
    """Attribute importance per action; entries are finite and non-negative."""

    entries: Grid

    def __post_init__(self):
        grid = _as_grid(self.entries, what="weight matrix")
        for i, row in enumerate(grid):
            for j, v in enumerate(row):
                if v < 0:
                    raise ValueError(f"weight[{i}][{j}] is negative: {v}")
        object.__setattr__(self, "entries", grid)

    @property
    def shape(self) -> tuple[int, int]:
        return grid_shape(self.entries)

    @classmethod
    def ones(cls, n: int, m: int) -> "WeightMatrix":
        return cls(tuple(tuple(1.0 for _ in range(m)) for _ in range(n)))

    def support_size(self) -> int:
        return sum(1 for row in self.entries for v in row if v != 0.0)


@dataclass(frozen=True)
class FilteredMatrix:
    """Element-wise product of sparsified weights and grounded relevance."""

    entries: Grid

    def __post_init__(self):
        object.__setattr__(self, "entries", _as_grid(self.entries, what="filtered matrix"))

    @property
    def shape(self) -> tuple[int, int]:
        return grid_shape(self.entries)


@dataclass(frozen=True)
class FilterPolicy:
    """How weights are sparsified: magnitude threshold, per-row top-k, or none."""

    kind: str
    epsilon: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.kind == "threshold":
            if self.epsilon is None or not math.isfinite(self.epsilon) or self.epsilon < 0:
                raise ValueError("threshold policy needs a finite epsilon >= 0")
            if self.k is not None:
                raise ValueError("threshold policy does not take k")
        elif self.kind == "top_k":
            if self.k is None or self.k < 1:
                raise ValueError("top_k policy needs k >= 1")
            if self.epsilon is not None:
                raise ValueError("top_k policy does not take epsilon")
        elif self.kind == "none":
            if self.epsilon is not None or self.k is not None:
                raise ValueError("none policy takes no parameters")
        else:
            raise ValueError(f"unknown filter policy kind {self.kind!r}")

    @classmethod
    def threshold(cls, epsilon: float) -> "FilterPolicy":
        return cls(kind="threshold", epsilon=epsilon)

    @classmethod
    def top_k(cls, k: int) -> "FilterPolicy":
        return cls(kind="top_k", k=k)

    @classmethod
    def none(cls) -> "FilterPolicy":
        return cls(kind="none")

    def label(self) -> str:
        if self.kind == "threshold":
            return f"epsilon={self.epsilon!r}"
        if self.kind == "top_k":
            return f"top{self.k}"
        return "none"


@dataclass(frozen=True)
class DecisionOutcome:
    """Final product of one run: chosen action, utilities, and the trace.

    answer is None only when the run abstained (direct-prompting modes whose
    completion could not be parsed). trace holds JSON-compatible stage events
    in execution order.
    """

    answer: int | None
    utilities: tuple[float, ...]
    rationale: str
    trace: tuple[dict, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "utilities", tuple(float(u) for u in self.utilities))
        object.__setattr__(self, "trace", tuple(self.trace))
        n = len(self.utilities)
        if self.answer is not None and not 0 <= self.answer < n:
            raise ValueError(f"answer {self.answer} out of range for {n} actions")


def sparsify_weights(weights: WeightMatrix, policy: FilterPolicy) -> WeightMatrix:
    """Zero out low-importance entries according to the policy.

    threshold keeps an entry iff |entry| > epsilon (strict). top_k keeps the k
    largest-magnitude entries of each row, ties at the boundary resolved in
    favor of the lowest column index. none is the identity.
    """
    if policy.kind == "none":
        return weights
    if policy.kind == "threshold":
        eps = policy.epsilon
        return WeightMatrix(
            tuple(
                tuple(v if abs(v) > eps else 0.0 for v in row)
                for row in weights.entries
            )
        )
    # top_k: rank columns by (magnitude desc, index asc), keep the first k
    kept_rows = []
    for row in weights.entries:
        order = sorted(range(len(row)), key=lambda j: (-abs(row[j]), j))
        keep = set(order[: policy.k])
        kept_rows.append(tuple(v if j in keep else 0.0 for j, v in enumerate(row)))
    return WeightMatrix(tuple(kept_rows))


def apply_mask(weights: WeightMatrix, relevance) -> FilteredMatrix:
    """Element-wise product of sparsified weights and a numeric relevance grid."""
    grid = _as_grid(relevance, what="relevance grid")
    if grid_shape(grid) != weights.shape:
        raise ShapeError(
            f"weight shape {weights.shape} does not match relevance shape {grid_shape(grid)}"
        )
    return FilteredMatrix(
        tuple(
            tuple(w * r for w, r in zip(wrow, rrow))
            for wrow, rrow in zip(weights.entries, grid)
        )
    )


def row_utilities(filtered: FilteredMatrix) -> tuple[float, ...]:
    """Per-action utility: the sum of that action's filtered relevance row."""
    return tuple(math.fsum(row) for row in filtered.entries)


def feasible_actions(constraints, n: int) -> frozenset[int]:
    """Actions admissible under the constraints, as indices into range(n).

    Only exclusions and zero-limit cardinality constraints shrink the set: a
    cardinality limit >= 1 is vacuous for a one-hot choice, and binary_domain
    and opaque constraints are never enforced.
    """
    excluded: set[int] = set()
    for c in constraints:
        if c.kind == "exclusion":
            excluded.add(c.action)
        elif c.kind == "cardinality" and c.limit == 0:
            excluded.update(c.over)
    return frozenset(i for i in range(n) if i not in excluded)


def select_action(utilities, feasible) -> int:
    """Feasible action with the highest utility; ties go to the lowest index."""
    best = None
    for i in sorted(feasible):
        if not 0 <= i < len(utilities):
            continue
        if best is None or utilities[i] > utilities[best]:
            best = i
    if best is None:
        raise InfeasibleError("no feasible action to select from")
    return best


@dataclass(frozen=True)
class SymbolicSolution:
    """solve_symbolic output, intermediates included for tracing."""

    answer: int
    utilities: tuple[float, ...]
    sparsified: WeightMatrix
    filtered: FilteredMatrix
    feasible: frozenset[int]


def solve_symbolic(relevance, weights: WeightMatrix, policy: FilterPolicy, constraints) -> SymbolicSolution:
    """Sparsify, mask, aggregate, and select in one deterministic pass."""
    sparsified = sparsify_weights(weights, policy)
    filtered = apply_mask(sparsified, relevance)
    utilities = row_utilities(filtered)
    feasible = feasible_actions(constraints, len(utilities))
    answer = select_action(utilities, feasible)
    return SymbolicSolution(
        answer=answer,
        utilities=utilities,
        sparsified=sparsified,
        filtered=filtered,
        feasible=feasible,
    )
