"""Shared plumbing for the experiment scripts: instance sweeps and report files."""

from __future__ import annotations

import argparse
import logging
from dataclasses import replace
from pathlib import Path

from xbsched.cli import load_preset
from xbsched.datagen import GeneratorConfig, generate_eval_scenarios, generate_instance
from xbsched.evaluation import (EvaluationConfig, markdown_deltas, markdown_reports, percentage_deltas,
                                reports_csv, training_eval_scenarios)
from xbsched.milp import SolveParams


def parse_seeds(text: str) -> list[int]:
    """'0-4' or '1,3,9'."""
    if "-" in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",")]


def base_parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--preset", default="desk")
    p.add_argument("--seeds", default="0-4", help="generator seeds, e.g. 0-19 or 1,5,7")
    p.add_argument("--gap", type=float, default=0.01)
    p.add_argument("--time-limit", type=float, default=120.0)
    p.add_argument("--eval-scenarios", type=int, help="held-out realizations (default from preset)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="results")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


class Sweep:
    def __init__(self, args):
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        raw = load_preset(args.preset)
        self.generator = GeneratorConfig.from_dict(raw.get("generator", {}))
        self.evaluation = EvaluationConfig.from_dict(raw.get("evaluation", {}))
        if args.eval_scenarios:
            self.evaluation = replace(self.evaluation, num_eval_scenarios=args.eval_scenarios)
        self.params = SolveParams(gap=args.gap, time_limit=args.time_limit)
        self.seeds = parse_seeds(args.seeds)
        self.workers = args.workers
        self.out = Path(args.out)

    def instances(self):
        for seed in self.seeds:
            cfg = self.generator.with_seed(seed)
            yield cfg, generate_instance(cfg)

    def eval_set(self, cfg, instance, in_sample=False):
        if in_sample:
            return training_eval_scenarios(instance)
        return generate_eval_scenarios(cfg, self.evaluation.num_eval_scenarios, self.evaluation.seed)

    def write(self, stem: str, reports, rows):
        """reports alternate baseline, candidate; rows are (name, deltas)."""
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / f"{stem}.csv").write_text(reports_csv(reports))
        mean = percentage_deltas(reports[0::2], reports[1::2])
        (self.out / f"{stem}.md").write_text(markdown_reports(reports) + "\n" + markdown_deltas(rows, mean))
        print(markdown_deltas(rows, mean))
