"""Pipeline orchestration: the four-step structured mode, direct-prompting
baselines, ablations, and the experiment runner.

Stage tags in the trace follow the four-step layout: S1 extraction and
attribute summarization (info model), S2 weighing and sparsification, S3
grounding and objective construction, S4 selection and rationale (reasoning
model). Every prompt, completion, matrix, and the rendered objective land in
the trace as JSON-compatible events, so a run can be diffed byte for byte.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .core import (
    DecisionOutcome,
    DecisionProblem,
    FilterPolicy,
    WeightMatrix,
    select_action,
    solve_symbolic,
    sparsify_weights,
)
from .errors import InfeasibleError, StageOutputError, DecisionError
from .gateway import CompletionRequest, LlmGateway, request_digest
from .stages import (
    StageTemplate,
    parse_attribute_table,
    parse_decision,
    parse_extraction,
    parse_grounding,
    parse_weight,
    render_stage_prompt,
)

log = logging.getLogger(__name__)

MODES = (
    "decisionflow",
    "zero_shot",
    "cot",
    "cot_with_tools",
    "self_consistency",
    "joint",
    "ablate_no_filter",
    "ablate_no_scoring",
    "ablate_both",
)

STRUCTURED_MODES = (
    "decisionflow",
    "cot_with_tools",
    "ablate_no_filter",
    "ablate_no_scoring",
    "ablate_both",
)

NO_DIRECTIVE = "Choose the action that best serves the stated goal."


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "decisionflow"
    info_model: str = "info-model"
    reasoning_model: str = "reasoning-model"
    filter_policy: FilterPolicy = FilterPolicy.threshold(0.3)
    filter_target: str = "weights"  # "weights" applies the policy to w,
    # "relevance" applies it to the grounded scores instead
    temperature_deterministic: float = 0.0
    temperature_sampling: float = 0.7
    self_consistency_k: int = 3
    max_tokens: int = 4096
    max_concurrency: int = 1
    index_base: int = 1  # how choices are numbered inside prompts

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.filter_target not in ("weights", "relevance"):
            raise ValueError(f"unknown filter target {self.filter_target!r}")
        if self.self_consistency_k < 1 or self.self_consistency_k % 2 == 0:
            raise ValueError("self_consistency_k must be a positive odd number")
        if self.temperature_deterministic < 0 or self.temperature_sampling < 0:
            raise ValueError("temperatures must be >= 0")
        if self.index_base not in (0, 1):
            raise ValueError("index_base must be 0 or 1")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


@dataclass
class ExperimentContext:
    config: PipelineConfig
    gateway: LlmGateway
    templates: dict[str, StageTemplate]


def _event(stage, kind, name, payload):
    return {"stage": stage, "kind": kind, "name": name, "payload": payload}


def _completion_event(stage, name, request, completion, digest):
    return _event(stage, "completion", name, {
        "model": request.model,
        "stage_tag": request.stage_tag,
        "attempt": request.attempt,
        "digest": digest,
        "text": completion.text,
        "prompt_tokens": completion.prompt_tokens,
        "response_tokens": completion.response_tokens,
        "usage_approximate": completion.usage_approximate,
        "latency": completion.latency,
        "attempts": completion.attempts,
    })


def _call(ctx, trace, *, stage, name, stage_tag, model, prompt, temperature,
          attempt=0):
    request = CompletionRequest(
        model=model,
        prompt=prompt,
        temperature=temperature,
        max_tokens=ctx.config.max_tokens,
        stage_tag=stage_tag,
        attempt=attempt,
    )
    completion = ctx.gateway.complete(request)
    trace.append(_event(stage, "prompt", name, prompt))
    trace.append(_completion_event(stage, name, request, completion,
                                   request_digest(request)))
    return completion


def _bullets(items) -> str:
    return "\n".join(f"- {item}" for item in items) if items else "(none)"


def _choices_block(problem: DecisionProblem, base: int) -> str:
    return "\n".join(
        f"({i + base}) {label}" for i, label in enumerate(problem.actions)
    )


def _constraints_block(problem: DecisionProblem) -> str:
    texts = [c.source_text for c in problem.constraints]
    return "\n".join(texts) if texts else "(none)"


def _bias_text(problem: DecisionProblem) -> str:
    return problem.bias_directive or NO_DIRECTIVE


def attribute_codes(attributes) -> list[str]:
    """Short uppercase codes for attribute names, collision-free."""
    codes = []
    for j, name in enumerate(attributes):
        words = [w for w in name.replace("-", " ").split() if w]
        code = "".join(w[0].upper() for w in words) or f"A{j + 1}"
        if code in codes:
            code = f"{code}{j + 1}"
        codes.append(code)
    return codes


def render_objective(problem, attributes, coefficients) -> dict:
    """Linear objective text over x variables, plus a variable glossary."""
    codes = attribute_codes(attributes)
    terms = []
    glossary = {}
    for i, action in enumerate(problem.actions):
        glossary[f"x{i + 1}"] = f"1 if {action!r} is selected, else 0"
        for j, code in enumerate(codes):
            coeff = coefficients[i][j]
            if coeff != 0.0:
                terms.append(f"{coeff:g}*{code}{i + 1}*x{i + 1}")
                glossary[f"{code}{i + 1}"] = (
                    f"score of attribute {attributes[j]!r} for action {action!r}"
                )
    return {"term": " + ".join(terms) if terms else "0", "variables": glossary}


@dataclass(frozen=True)
class StructuredArtifacts:
    """Intermediates of a structured run, reusable by post-hoc sweeps."""

    problem: DecisionProblem
    attributes: tuple[str, ...]
    verbal_cells: tuple[tuple[str, ...], ...]
    weights: WeightMatrix
    grounded: tuple[tuple[float, ...], ...]
    policy: FilterPolicy


def _attach_trace(err, trace):
    err.trace = tuple(trace)
    return err


def run_structured(problem: DecisionProblem, ctx: ExperimentContext, *,
                   policy: FilterPolicy | None = None, all_ones: bool = False,
                   with_rationale: bool = True, mode_name: str = "decisionflow",
                   repeat: int = 0) -> tuple[DecisionOutcome, StructuredArtifacts]:
    """The four-step structured pipeline; returns outcome plus artifacts.

    policy/all_ones implement the ablations; with_rationale=False skips the
    final explanation call (tool-assisted reasoning mode). Deterministic
    stages always use attempt index 0, so repeats replay identically.
    """
    cfg = ctx.config
    policy = policy if policy is not None else cfg.filter_policy
    trace: list[dict] = [
        _event("S0", "note", "run", {
            "problem_id": problem.problem_id,
            "mode": mode_name,
            "repeat": repeat,
            "n_actions": problem.n_actions,
        })
    ]
    try:
        return _run_structured_inner(
            problem, ctx, policy, all_ones, with_rationale, trace
        )
    except (StageOutputError, InfeasibleError) as err:
        raise _attach_trace(err, trace)


def _run_structured_inner(problem, ctx, policy, all_ones, with_rationale, trace):
    cfg = ctx.config
    temp = cfg.temperature_deterministic
    bias = _bias_text(problem)
    constraints_text = _constraints_block(problem)

    # --- S1: extract, then summarize into an attribute table (info model) ---
    completion = _call(
        ctx, trace, stage="S1", name="extract_info", stage_tag="extract_info",
        model=cfg.info_model, temperature=temp,
        prompt=render_stage_prompt(ctx.templates["extract_info"], {
            "scenario": problem.scenario,
            "actions": _bullets(problem.actions),
        }),
    )
    statements = parse_extraction(completion.text, problem.actions)
    trace.append(_event("S1", "parsed", "statements", statements))
    if not statements:
        trace.append(_event("S1", "note", "degenerate_extraction",
                            "no statements extracted"))

    completion = _call(
        ctx, trace, stage="S1", name="summarize_attributes",
        stage_tag="summarize_attributes", model=cfg.info_model, temperature=temp,
        prompt=render_stage_prompt(ctx.templates["summarize_attributes"], {
            "actions": _bullets(problem.actions),
            "statements": _bullets(statements),
            "bias": bias,
        }),
    )
    table = parse_attribute_table(completion.text, problem.actions)
    n, m = table.shape
    trace.append(_event("S1", "parsed", "attribute_table", {
        "attributes": list(table.attributes),
        "cells": [list(row) for row in table.verbal_grid()],
    }))

    # --- S2: weigh every cell, then sparsify (reasoning model) ---
    if all_ones:
        weights = WeightMatrix.ones(n, m)
        trace.append(_event("S2", "note", "scoring_ablated",
                            "weighing skipped; weights fixed to all ones"))
    else:
        weights = _weigh_cells(problem, ctx, table, trace, bias, constraints_text)
    trace.append(_event("S2", "matrix", "weights", _grid_payload(weights.entries)))

    if cfg.filter_target == "weights":
        sparsified = sparsify_weights(weights, policy)
        surviving = {
            (i, j)
            for i in range(n) for j in range(m)
            if sparsified.entries[i][j] != 0.0
        }
        coefficients = sparsified.entries
    else:
        # policy applies to grounded relevance later; every cell is grounded
        sparsified = weights
        surviving = {(i, j) for i in range(n) for j in range(m)}
        coefficients = weights.entries
    trace.append(_event("S2", "matrix", "weights_sparsified",
                        _grid_payload(sparsified.entries)))

    # --- S3: render the objective and ground surviving cells numerically ---
    objective = render_objective(problem, table.attributes, coefficients)
    trace.append(_event("S3", "objective", "objective", objective))

    cells_payload = {
        "Cells": [
            {
                "Variable": problem.actions[i],
                "Attribute": table.attributes[j],
                "Value": table.cells[i][j].verbal,
            }
            for i in range(n) for j in range(m)
            if (i, j) in surviving and table.cells[i][j].mentioned
        ]
    }
    if not cells_payload["Cells"]:
        grounded = tuple(tuple(0.0 for _ in range(m)) for _ in range(n))
        trace.append(_event("S3", "note", "grounding_skipped",
                            "no surviving cells to score"))
    else:
        completion = _call(
            ctx, trace, stage="S3", name="ground_and_decide",
            stage_tag="ground_and_decide", model=cfg.reasoning_model,
            temperature=temp,
            prompt=render_stage_prompt(ctx.templates["ground_and_decide"], {
                "bias": bias,
                "actions": _bullets(problem.actions),
                "objective": objective["term"],
                "variables": json.dumps(objective["variables"], indent=2,
                                        ensure_ascii=False),
                "constraints": constraints_text,
                "cells": json.dumps(cells_payload, indent=2, ensure_ascii=False),
            }),
        )
        grounded = parse_grounding(completion.text, table, surviving)
    trace.append(_event("S3", "matrix", "relevance_grounded",
                        _grid_payload(grounded)))

    # --- S4: symbolic selection, then the rationale (reasoning model) ---
    if cfg.filter_target == "weights":
        sol = solve_symbolic(grounded, weights, policy, problem.constraints)
    else:
        grounded_sparse = sparsify_weights(WeightMatrix(grounded), policy)
        sol = solve_symbolic(grounded_sparse.entries, weights,
                             FilterPolicy.none(), problem.constraints)
    trace.append(_event("S4", "matrix", "relevance_filtered",
                        _grid_payload(sol.filtered.entries)))
    trace.append(_event("S4", "note", "feasible", sorted(sol.feasible)))
    trace.append(_event("S4", "parsed", "utilities", list(sol.utilities)))
    trace.append(_event("S4", "parsed", "answer", sol.answer))
    degenerate = m == 0 or all(u == 0.0 for u in sol.utilities)
    if degenerate:
        trace.append(_event("S4", "note", "degenerate",
                            "all utilities are zero; answer is the tie-break"))

    rationale = ""
    if with_rationale:
        rationale = _rationale_call(problem, ctx, table, sol, trace, bias)

    outcome = DecisionOutcome(
        answer=sol.answer, utilities=sol.utilities, rationale=rationale,
        trace=tuple(trace),
    )
    artifacts = StructuredArtifacts(
        problem=problem,
        attributes=table.attributes,
        verbal_cells=table.verbal_grid(),
        weights=weights,
        grounded=grounded,
        policy=policy,
    )
    return outcome, artifacts


def _grid_payload(entries):
    return [list(row) for row in entries]


def _weigh_cells(problem, ctx, table, trace, bias, constraints_text) -> WeightMatrix:
    """One weigh call per (action, attribute) cell, row-major.

    Calls may run concurrently; trace events are emitted in row-major order
    regardless, so the trace bytes do not depend on the concurrency setting.
    """
    cfg = ctx.config
    n, m = table.shape
    cells = [(i, j) for i in range(n) for j in range(m)]

    def prompt_for(i, j):
        return render_stage_prompt(ctx.templates["weigh"], {
            "bias": bias,
            "constraints": constraints_text,
            "action": problem.actions[i],
            "attribute": table.attributes[j],
            "verbal": table.cells[i][j].verbal,
        })

    def request_for(i, j):
        return CompletionRequest(
            model=cfg.reasoning_model,
            prompt=prompt_for(i, j),
            temperature=cfg.temperature_deterministic,
            max_tokens=cfg.max_tokens,
            stage_tag="weigh",
            attempt=0,
        )

    requests = {cell: request_for(*cell) for cell in cells}
    if cfg.max_concurrency > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_concurrency) as pool:
            completions = dict(
                zip(cells, pool.map(lambda c: ctx.gateway.complete(requests[c]),
                                    cells))
            )
    else:
        completions = {cell: ctx.gateway.complete(requests[cell]) for cell in cells}

    rows = [[0.0] * m for _ in range(n)]
    for (i, j) in cells:
        request = requests[(i, j)]
        completion = completions[(i, j)]
        name = f"weigh[{i},{j}]"
        trace.append(_event("S2", "prompt", name, request.prompt))
        trace.append(_completion_event("S2", name, request, completion,
                                       request_digest(request)))
        explanation, weight = parse_weight(completion.text)
        trace.append(_event("S2", "parsed", name,
                            {"explanation": explanation, "weight": weight}))
        rows[i][j] = weight
    return WeightMatrix(tuple(tuple(row) for row in rows))


def _rationale_call(problem, ctx, table, sol, trace, bias) -> str:
    cfg = ctx.config
    utilities_text = "; ".join(
        f"{label}: {u:.6g}" for label, u in zip(problem.actions, sol.utilities)
    )
    ranked = sorted(sol.feasible, key=lambda i: (-sol.utilities[i], i))
    runner_up = problem.actions[ranked[1]] if len(ranked) > 1 else "(none)"
    contributions = [
        (sol.filtered.entries[sol.answer][j], j)
        for j in range(len(table.attributes))
        if sol.filtered.entries[sol.answer][j] != 0.0
    ]
    contributions.sort(key=lambda t: (-t[0], t[1]))
    influential = _bullets([
        f"{table.attributes[j]} = {table.cells[sol.answer][j].verbal} "
        f"(contribution {value:.6g})"
        for value, j in contributions[:3]
    ])
    excluded = frozenset(range(problem.n_actions)) - sol.feasible
    active = _bullets([
        c.source_text
        for c in problem.constraints
        if (c.kind == "exclusion" and c.action in excluded)
        or (c.kind == "cardinality" and c.limit == 0 and set(c.over) & excluded)
    ]) if excluded else "(none)"

    completion = _call(
        ctx, trace, stage="S4", name="rationale", stage_tag="rationale",
        model=cfg.reasoning_model, temperature=cfg.temperature_deterministic,
        prompt=render_stage_prompt(ctx.templates["rationale"], {
            "scenario": problem.scenario,
            "actions": _bullets(problem.actions),
            "bias": bias,
            "utilities": utilities_text,
            "winner": problem.actions[sol.answer],
            "runner_up": runner_up,
            "influential": influential,
            "active_constraints": active,
        }),
    )
    rationale = completion.text.strip()
    trace.append(_event("S4", "parsed", "rationale", rationale))
    return rationale


def run_decisionflow(problem: DecisionProblem, ctx: ExperimentContext,
                     repeat: int = 0) -> DecisionOutcome:
    outcome, _ = run_structured(problem, ctx, repeat=repeat)
    return outcome


def run_baseline(strategy: str, problem: DecisionProblem, ctx: ExperimentContext,
                 repeat: int = 0) -> DecisionOutcome:
    """Direct-prompting baselines: zero_shot, cot, self_consistency."""
    if strategy not in ("zero_shot", "cot", "self_consistency"):
        raise ValueError(f"unknown baseline strategy {strategy!r}")
    cfg = ctx.config
    trace: list[dict] = [
        _event("S0", "note", "run", {
            "problem_id": problem.problem_id,
            "mode": strategy,
            "repeat": repeat,
            "n_actions": problem.n_actions,
        })
    ]
    template = ctx.templates["zero_shot" if strategy == "self_consistency" else strategy]
    prompt = render_stage_prompt(template, {
        "scenario": problem.scenario,
        "bias": _bias_text(problem),
        "choices": _choices_block(problem, cfg.index_base),
    })
    try:
        if strategy == "self_consistency":
            return _self_consistency(problem, ctx, prompt, trace, repeat)
        completion = _call(
            ctx, trace, stage="S4", name=strategy, stage_tag=strategy,
            model=cfg.reasoning_model, temperature=cfg.temperature_deterministic,
            prompt=prompt,
        )
        reasoning, answer = parse_decision(
            completion.text, problem.n_actions, cfg.index_base
        )
        trace.append(_event("S4", "parsed", "answer", answer))
        utilities = tuple(
            1.0 if i == answer else 0.0 for i in range(problem.n_actions)
        )
        return DecisionOutcome(
            answer=answer, utilities=utilities,
            rationale=reasoning if strategy == "cot" else "",
            trace=tuple(trace),
        )
    except (StageOutputError, InfeasibleError) as err:
        raise _attach_trace(err, trace)


def _self_consistency(problem, ctx, prompt, trace, repeat) -> DecisionOutcome:
    """k sampled votes at the sampling temperature; majority wins, ties go to
    the lowest action index, abstaining samples leave the denominator."""
    cfg = ctx.config
    k = cfg.self_consistency_k
    votes = [0.0] * problem.n_actions
    abstained = 0
    for s in range(k):
        attempt = repeat * k + s
        completion = _call(
            ctx, trace, stage="S4", name=f"sample[{s}]",
            stage_tag="self_consistency", model=cfg.reasoning_model,
            temperature=cfg.temperature_sampling, prompt=prompt, attempt=attempt,
        )
        try:
            _, answer = parse_decision(
                completion.text, problem.n_actions, cfg.index_base
            )
        except StageOutputError as err:
            abstained += 1
            trace.append(_event("S4", "note", f"sample[{s}]_abstained",
                                type(err).__name__))
            continue
        votes[answer] += 1.0
        trace.append(_event("S4", "parsed", f"sample[{s}]", answer))
    if abstained == k:
        raise DecisionError(f"all {k} self-consistency samples abstained")
    trace.append(_event("S4", "parsed", "votes", votes))
    answer = select_action(votes, frozenset(range(problem.n_actions)))
    trace.append(_event("S4", "parsed", "answer", answer))
    return DecisionOutcome(
        answer=answer, utilities=tuple(votes), rationale="", trace=tuple(trace)
    )


def run_joint(problem: DecisionProblem, ctx: ExperimentContext,
              repeat: int = 0) -> DecisionOutcome:
    """Single-prompt variant: all four steps requested in one completion."""
    cfg = ctx.config
    trace: list[dict] = [
        _event("S0", "note", "run", {
            "problem_id": problem.problem_id,
            "mode": "joint",
            "repeat": repeat,
            "n_actions": problem.n_actions,
        })
    ]
    try:
        completion = _call(
            ctx, trace, stage="S4", name="joint", stage_tag="joint",
            model=cfg.reasoning_model, temperature=cfg.temperature_deterministic,
            prompt=render_stage_prompt(ctx.templates["joint"], {
                "scenario": problem.scenario,
                "bias": _bias_text(problem),
                "choices": _choices_block(problem, cfg.index_base),
            }),
        )
        reasoning, answer = parse_decision(
            completion.text, problem.n_actions, cfg.index_base
        )
    except (StageOutputError, InfeasibleError) as err:
        raise _attach_trace(err, trace)
    trace.append(_event("S4", "parsed", "answer", answer))
    utilities = tuple(1.0 if i == answer else 0.0 for i in range(problem.n_actions))
    return DecisionOutcome(
        answer=answer, utilities=utilities, rationale=reasoning, trace=tuple(trace)
    )


def run_ablation(problem: DecisionProblem, ctx: ExperimentContext, which: str,
                 repeat: int = 0) -> DecisionOutcome:
    """Structured run with the filter and/or scoring module removed."""
    if which == "ablate_no_filter":
        outcome, _ = run_structured(problem, ctx, policy=FilterPolicy.none(),
                                    mode_name=which, repeat=repeat)
    elif which == "ablate_no_scoring":
        outcome, _ = run_structured(problem, ctx, all_ones=True,
                                    mode_name=which, repeat=repeat)
    elif which == "ablate_both":
        outcome, _ = run_structured(problem, ctx, policy=FilterPolicy.none(),
                                    all_ones=True, mode_name=which, repeat=repeat)
    else:
        raise ValueError(f"unknown ablation {which!r}")
    return outcome


def run_problem(problem: DecisionProblem, ctx: ExperimentContext,
                repeat: int = 0) -> DecisionOutcome:
    mode = ctx.config.mode
    if mode == "decisionflow":
        return run_decisionflow(problem, ctx, repeat)
    if mode == "cot_with_tools":
        outcome, _ = run_structured(problem, ctx, with_rationale=False,
                                    mode_name=mode, repeat=repeat)
        return outcome
    if mode in ("zero_shot", "cot", "self_consistency"):
        return run_baseline(mode, problem, ctx, repeat)
    if mode == "joint":
        return run_joint(problem, ctx, repeat)
    return run_ablation(problem, ctx, mode, repeat)


@dataclass(frozen=True)
class RunRecord:
    """Bookkeeping for one (problem, repeat) execution."""

    problem_id: str
    mode: str
    repeat: int
    answer: int | None
    abstained: bool
    error: str | None
    prompt_tokens: int
    response_tokens: int
    llm_calls: int
    latency_total: float
    wall_time: float
    usage_approximate: bool
    trace: tuple[dict, ...] = field(repr=False, default=())


def usage_totals(trace) -> tuple[int, int, int, float, bool]:
    """Sum usage over the completion events of a trace."""
    prompt_tokens = response_tokens = calls = 0
    latency = 0.0
    approximate = False
    for event in trace:
        if event.get("kind") != "completion":
            continue
        payload = event["payload"]
        prompt_tokens += payload["prompt_tokens"]
        response_tokens += payload["response_tokens"]
        latency += payload["latency"]
        calls += 1
        approximate = approximate or payload.get("usage_approximate", False)
    return prompt_tokens, response_tokens, calls, latency, approximate


def execute_run(problem: DecisionProblem, ctx: ExperimentContext,
                repeat: int = 0) -> RunRecord:
    """Run one problem; stage failures become abstention records."""
    started = time.perf_counter()
    try:
        outcome = run_problem(problem, ctx, repeat)
        trace = outcome.trace
        answer = outcome.answer
        abstained = answer is None
        error = None
    except (StageOutputError, InfeasibleError) as err:
        trace = getattr(err, "trace", ())
        answer = None
        abstained = True
        error = type(err).__name__
        log.warning("run %s (%s, repeat %d) abstained: %s",
                    problem.problem_id, ctx.config.mode, repeat, err)
    wall = time.perf_counter() - started
    prompt_tokens, response_tokens, calls, latency, approximate = usage_totals(trace)
    return RunRecord(
        problem_id=problem.problem_id,
        mode=ctx.config.mode,
        repeat=repeat,
        answer=answer,
        abstained=abstained,
        error=error,
        prompt_tokens=prompt_tokens,
        response_tokens=response_tokens,
        llm_calls=calls,
        latency_total=latency,
        wall_time=wall,
        usage_approximate=approximate,
        trace=tuple(trace),
    )


def run_experiment(problems, ctx: ExperimentContext, repeats: int = 1,
                   interrupt=None) -> list[RunRecord]:
    """Execute repeats x problems, optionally across a bounded thread pool.

    Results come back ordered by (problem order, repeat). `interrupt` is an
    optional threading.Event checked between task submissions.
    """
    tasks = [
        (problem, repeat) for problem in problems for repeat in range(repeats)
    ]
    if ctx.config.max_concurrency > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=ctx.config.max_concurrency) as pool:
            futures = []
            for problem, repeat in tasks:
                if interrupt is not None and interrupt.is_set():
                    break
                futures.append(pool.submit(execute_run, problem, ctx, repeat))
            return [f.result() for f in futures]
    records = []
    for problem, repeat in tasks:
        if interrupt is not None and interrupt.is_set():
            break
        records.append(execute_run(problem, ctx, repeat))
    return records


@dataclass(frozen=True)
class SweepSetting:
    """Post-hoc kernel re-solve of recorded runs under one filter policy."""

    label: str
    policy: FilterPolicy
    answers: dict[str, int]
    utilities: dict[str, tuple[float, ...]]
    surviving_cells: int


def kernel_sweep(problems, ctx: ExperimentContext,
                 policies) -> list[SweepSetting]:
    """Replay each problem once, then re-run only the symbolic kernel per
    policy. No policy in the grid triggers any new LLM call: filtering is
    post-hoc on the recorded weights and grounded relevance."""
    artifacts: list[StructuredArtifacts] = []
    for problem in problems:
        _, art = run_structured(problem, ctx)
        artifacts.append(art)

    settings = []
    for policy in policies:
        answers = {}
        utilities = {}
        surviving = 0
        for art in artifacts:
            if ctx.config.filter_target == "weights":
                sol = solve_symbolic(art.grounded, art.weights, policy,
                                     art.problem.constraints)
                surviving += sparsify_weights(art.weights, policy).support_size()
            else:
                grounded_sparse = sparsify_weights(WeightMatrix(art.grounded), policy)
                sol = solve_symbolic(grounded_sparse.entries, art.weights,
                                     FilterPolicy.none(), art.problem.constraints)
                surviving += grounded_sparse.support_size()
            answers[art.problem.problem_id] = sol.answer
            utilities[art.problem.problem_id] = sol.utilities
        settings.append(SweepSetting(
            label=policy.label(), policy=policy, answers=answers,
            utilities=utilities, surviving_cells=surviving,
        ))
    return settings
