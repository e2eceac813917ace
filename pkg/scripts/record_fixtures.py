#!/usr/bin/env python3
"""Record the bundled transcript corpus against the scripted backend.

Every mode the CLI can replay out of the box gets recorded here: the
structured pipeline over both bundled datasets, the direct-prompting
baselines, the single-prompt variant, the ablations, and the two
failure-path records. Rerunning the script reproduces the corpus byte for
byte (timestamps aside) because the scripted transport is deterministic.
"""

from __future__ import annotations

import argparse
import shutil
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from decisionflow.core import FilterPolicy
from decisionflow.datasets import load_dataset, problems_from_records
from decisionflow.gateway import GatewayConfig, LlmGateway
from decisionflow.pipeline import ExperimentContext, PipelineConfig, run_experiment
from decisionflow.stages import load_templates
from decisionflow.testing import ScriptedTransport

DATASET_DIR = REPO / "fixtures" / "datasets"
DEFAULT_OUT = REPO / "fixtures" / "transcripts"

MTA_POLICY = FilterPolicy.threshold(0.3)
DELLMA_POLICY = FilterPolicy.top_k(3)

# (mode, dataset stem, dataset kind, filter policy, repeats)
PLAN = [
    ("decisionflow", "mta_small", "mta", MTA_POLICY, 1),
    ("decisionflow", "mta_edge", "mta", MTA_POLICY, 1),
    ("decisionflow", "dellma_small", "dellma", DELLMA_POLICY, 1),
    ("zero_shot", "mta_small", "mta", MTA_POLICY, 1),
    ("zero_shot", "mta_edge", "mta", MTA_POLICY, 1),
    ("zero_shot", "dellma_small", "dellma", DELLMA_POLICY, 1),
    ("cot", "mta_small", "mta", MTA_POLICY, 1),
    ("self_consistency", "mta_small", "mta", MTA_POLICY, 1),
    ("joint", "mta_small", "mta", MTA_POLICY, 1),
    ("ablate_no_filter", "mta_small", "mta", MTA_POLICY, 1),
    ("ablate_no_filter", "mta_edge", "mta", MTA_POLICY, 1),
    ("ablate_no_scoring", "mta_small", "mta", MTA_POLICY, 1),
    ("ablate_no_scoring", "mta_edge", "mta", MTA_POLICY, 1),
    ("ablate_both", "mta_small", "mta", MTA_POLICY, 1),
    ("ablate_both", "mta_edge", "mta", MTA_POLICY, 1),
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(DEFAULT_OUT),
                        help="transcript directory to (re)create")
    args = parser.parse_args()

    out = Path(args.out)
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)

    gateway = LlmGateway(
        GatewayConfig(mode="record", transcript_dir=out),
        ScriptedTransport(),
    )
    templates = load_templates()

    abstentions = []
    for mode, stem, kind, policy, repeats in PLAN:
        records = load_dataset(DATASET_DIR / f"{stem}.jsonl", kind)
        problems = problems_from_records(records, kind)
        config = PipelineConfig(mode=mode, filter_policy=policy)
        ctx = ExperimentContext(config, gateway, templates)
        for record in run_experiment(problems, ctx, repeats):
            if record.abstained:
                abstentions.append((record.problem_id, mode, record.error))
        print(f"recorded {mode} over {stem} "
              f"({len(problems)} problems x {repeats} repeat)")

    digests = gateway.store.digests()
    print(f"{len(digests)} transcripts in {out} "
          f"({gateway.live_calls} live calls, {gateway.cache_hits} cache hits)")
    for problem_id, mode, error in abstentions:
        print(f"abstention: {problem_id} under {mode} ({error})")

    expected = [("mta-edge-refusal", "zero_shot", "OutputParseError")]
    if abstentions != expected:
        print(f"unexpected abstention set: {abstentions}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
