"""``xbsched`` command line: generate, solve, evaluate and the experiment suites.

Configs are TOML (JSON also accepted) with the sections ``[generator]``,
``[formulation]``, ``[solve]`` and ``[evaluation]``; ``--preset NAME`` loads
one of the packaged configs.  Command-line flags override config values.

Exit codes: 0 success, 1 oracle disagreement, 2 config or input error,
3 infeasible instance or first stage, 4 solver stopped without an incumbent.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .core import (FirstStageSolution, InfeasibleFirstStageError, InfeasibleInstanceError, config_hash,
                   instance_to_dict, read_instance, save_instance)
from .datagen import GeneratorConfig, generate_eval_scenarios, generate_instance, random_tiny_instance
from .evaluation import (EvaluationConfig, compute_evpi, compute_vss, deltas_dict, evaluate_first_stage, instance_name,
                         markdown_deltas, markdown_reports, percentage_deltas, reports_csv, reports_json,
                         scenario_count_study, timings_csv, training_eval_scenarios)
from .formulation import FormulationConfig
from .milp import STATUS_INFEASIBLE, SolveParams, write_lp
from .recourse import enumerate_first_stage
from .solve import METHODS, solve_first_stage

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("xbsched")

EXIT_OK, EXIT_DISAGREE, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NO_INCUMBENT = 0, 1, 2, 3, 4
COMMANDS = ("generate", "solve", "evaluate", "vss", "evpi", "scenario-study", "oracle-check")
SOLUTION_SCHEMA = "xbsched.solution/1"


class ConfigError(ValueError):
    pass


class NoIncumbent(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    formulation: FormulationConfig = field(default_factory=FormulationConfig)
    solve: SolveParams = field(default_factory=SolveParams)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    method: str = "capacity"
    out: Path = Path("out")
    instances: tuple[Path, ...] = ()
    solution: Path | None = None
    seed: int | None = None

    def provenance(self) -> dict:
        body = {"command": self.command, "generator": self.generator.to_dict(),
                "formulation": {"preference_mode": self.formulation.preference_mode,
                                "scenario_mode": self.formulation.scenario_mode},
                "solve": {"gap": self.solve.gap, "time_limit": self.solve.time_limit,
                          "node_limit": self.solve.node_limit, "seed": self.solve.seed},
                "evaluation": {"num_eval_scenarios": self.evaluation.num_eval_scenarios,
                               "seed": self.evaluation.seed, "cross_eval": self.evaluation.cross_eval},
                "method": self.method}
        return {"seed": self.generator.seed, "config_hash": config_hash(body)}


# ---------------------------------------------------------------------------
# config files


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("xbsched").joinpath("presets").iterdir()
                  if p.name.endswith(".toml"))


def read_config_text(text: str, suffix: str) -> dict:
    try:
        if suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc


def load_config_file(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return read_config_text(p.read_text(), p.suffix.lower())


def load_preset(name: str) -> dict:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    text = resources.files("xbsched").joinpath("presets", f"{name}.toml").read_text()
    return read_config_text(text, ".toml")


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if getattr(args, "preset", None):
        raw = load_preset(args.preset)
    if getattr(args, "config", None):
        raw = _merge(raw, load_config_file(args.config))
    unknown = set(raw) - {"generator", "formulation", "solve", "evaluation", "run"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        gen = GeneratorConfig.from_dict(_section(raw, "generator"))
        form = _section(raw, "formulation")
        if "scenario_index" in form:
            form["scenario_index"] = tuple(form["scenario_index"]) if isinstance(form["scenario_index"], list) \
                else form["scenario_index"]
        formulation = FormulationConfig(**form)
        solve = SolveParams(**_section(raw, "solve"))
        evaluation = EvaluationConfig.from_dict(_section(raw, "evaluation"))
        run = _section(raw, "run")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc

    if args.seed is not None:
        gen = gen.with_seed(args.seed)
    if getattr(args, "mode", None):
        formulation = replace(formulation, preference_mode=args.mode)
    if getattr(args, "scenario_mode", None):
        formulation = replace(formulation, scenario_mode=args.scenario_mode)
    overrides = {}
    if args.gap is not None:
        overrides["gap"] = args.gap
    if args.time_limit is not None:
        overrides["time_limit"] = args.time_limit
    if overrides:
        solve = replace(solve, **overrides)
    ev = {}
    if args.workers is not None:
        ev["workers"] = args.workers
    if getattr(args, "eval_scenarios", None) is not None:
        ev["num_eval_scenarios"] = args.eval_scenarios
    if getattr(args, "eval_seed", None) is not None:
        ev["seed"] = args.eval_seed
    if getattr(args, "cross_eval", False):
        ev["cross_eval"] = True
    try:
        if ev:
            evaluation = replace(evaluation, **ev)
        method = getattr(args, "method", None) or run.get("method", "capacity")
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out or run.get("out", "out"))
    instances = tuple(Path(p) for p in (getattr(args, "instance", None) or []))
    for p in instances:
        if not p.is_file():
            raise ConfigError(f"instance file not found: {p}")
    solution = Path(args.solution) if getattr(args, "solution", None) else None
    if solution is not None and not solution.is_file():
        raise ConfigError(f"solution file not found: {solution}")
    return RunConfig(args.command, gen, formulation, solve, evaluation, method, out, instances, solution,
                     args.seed)


def _merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


# ---------------------------------------------------------------------------
# artifacts


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)
    return path


def _stamp(prov: dict, comment: str = "#") -> str:
    return f"{comment} seed={prov['seed']} config_hash={prov['config_hash']}\n"


def solution_to_dict(result, instance, prov: dict) -> dict:
    return {
        "schema": SOLUTION_SCHEMA,
        **prov,
        "instance": instance_name(instance),
        "instance_hash": config_hash(instance_to_dict(instance)),
        "preference_mode": result.config.preference_mode,
        "scenario_mode": result.config.scenario_mode,
        "method": result.method,
        "status": result.status,
        "objective": None if result.objective is None else str(result.objective),
        "objective_float": None if result.objective is None else float(result.objective),
        "bound": result.bound,
        "gap": result.gap,
        "assignment": None if result.first_stage is None else list(result.first_stage.assignment),
    }


def read_solution(path: Path) -> FirstStageSolution:
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse solution {path}: {exc}") from exc
    if d.get("schema") != SOLUTION_SCHEMA or d.get("assignment") is None:
        raise ConfigError(f"{path} is not a solution file with an assignment")
    return FirstStageSolution(tuple(int(p) for p in d["assignment"]))


def _load_or_generate(cfg: RunConfig):
    if cfg.instances:
        return [read_instance(p) for p in cfg.instances]
    return [generate_instance(cfg.generator)]


def _eval_set(cfg: RunConfig, instance, in_sample: bool) -> np.ndarray:
    if in_sample:
        return training_eval_scenarios(instance)
    gen = instance.meta.get("generator")
    gcfg = GeneratorConfig.from_dict(gen) if gen else cfg.generator
    return generate_eval_scenarios(gcfg, cfg.evaluation.num_eval_scenarios, cfg.evaluation.seed)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: RunConfig, args) -> int:
    inst = generate_instance(cfg.generator)
    path = cfg.out / f"{instance_name(inst)}.json"
    cfg.out.mkdir(parents=True, exist_ok=True)
    save_instance(inst, path)
    log.info("wrote %s", path)
    print(path)
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    prov = cfg.provenance()
    for inst in _load_or_generate(cfg):
        name = instance_name(inst)
        res = solve_first_stage(inst, cfg.formulation, cfg.solve, method=cfg.method)
        tag = f"{name}.{cfg.formulation.preference_mode}.{cfg.formulation.scenario_mode}"
        _write(cfg.out / f"{tag}.log", _stamp(prov) + "\n".join(res.log) + "\n")
        _write(cfg.out / f"{tag}.timing.json",
               json.dumps({"wall_time": res.wall_time, "nodes": res.nodes}, indent=2) + "\n")
        if args.write_lp and cfg.method == "extensive":
            from .formulation import build_extensive_form
            write_lp(build_extensive_form(inst, cfg.formulation)[0], cfg.out / f"{tag}.lp")
        if not res.has_solution:
            if res.status == STATUS_INFEASIBLE:
                raise InfeasibleInstanceError(f"{name}: no feasible first stage")
            raise NoIncumbent(f"{name}: solver stopped ({res.status}) without an incumbent")
        _write(cfg.out / f"{tag}.solution.json",
               json.dumps(solution_to_dict(res, inst, prov), indent=2, sort_keys=True) + "\n")
        print(f"{name}: {res.status} objective={float(res.objective):.6f} gap={res.gap:.3g} nodes={res.nodes}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    if len(cfg.instances) != 1 or cfg.solution is None:
        raise ConfigError("evaluate needs exactly one --instance and a --solution")
    prov = cfg.provenance()
    inst = read_instance(cfg.instances[0])
    first = read_solution(cfg.solution)
    if len(first.assignment) != inst.num_employees:
        raise ConfigError("solution does not match the instance")
    eval_set = _eval_set(cfg, inst, args.in_sample)
    mode = args.eval_mode or "with"
    rep = evaluate_first_stage(inst, first, eval_set, mode=mode, strict=not args.lenient,
                               workers=cfg.evaluation.workers, label=cfg.solution.stem)
    _emit_reports(cfg, "evaluation", [rep], prov)
    print(f"{rep.instance}: cost={rep.cost:.6f} C.S.={rep.cancelled_service_hours:.3f} "
          f"S.W.={rep.social_welfare:.3f}")
    return EXIT_OK


def _emit_reports(cfg: RunConfig, stem: str, reports, prov: dict, extra_md: str = "", extra: dict | None = None):
    _write(cfg.out / f"{stem}.csv", _stamp(prov) + reports_csv(reports))
    _write(cfg.out / f"{stem}.json", reports_json(reports, **prov, **(extra or {})))
    _write(cfg.out / f"{stem}.md", _stamp(prov, "<!--").rstrip("\n") + " -->\n\n" + markdown_reports(reports)
           + ("\n" + extra_md if extra_md else ""))
    _write(cfg.out / f"{stem}.timings.csv", timings_csv(reports))


def _comparison_suite(cfg: RunConfig, args, kind: str) -> int:
    prov = cfg.provenance()
    reports, rows, extra = [], [], []
    mode = cfg.formulation.preference_mode
    for inst in _load_or_generate(cfg):
        eval_set = _eval_set(cfg, inst, args.in_sample)
        if kind == "vss":
            comp = compute_vss(inst, eval_set, cfg.solve, mode=mode, method=cfg.method,
                               workers=cfg.evaluation.workers)
        else:
            comp = compute_evpi(inst, eval_set, cfg.solve, mode=mode, cross_eval=cfg.evaluation.cross_eval,
                                method=cfg.method, workers=cfg.evaluation.workers)
        reports += [comp.baseline, comp.candidate]
        rows.append((comp.baseline.instance, comp.deltas))
        extra.append({"instance": comp.baseline.instance, "value": comp.value, "summed_gap": comp.summed_gap,
                      "flips": comp.flips, "deltas": deltas_dict(comp.deltas)})
        print(f"{comp.baseline.instance}: {kind.upper()}={comp.value:.6f} (summed gap {comp.summed_gap:.3g})"
              + (f" flips={comp.flips}" if kind == "evpi" else ""))
    base = [r for r in reports[0::2]]
    cand = [r for r in reports[1::2]]
    mean = percentage_deltas(base, cand)
    _emit_reports(cfg, kind, reports, prov, markdown_deltas(rows, mean), {"comparisons": extra})
    return EXIT_OK


def cmd_vss(cfg: RunConfig, args) -> int:
    return _comparison_suite(cfg, args, "vss")


def cmd_evpi(cfg: RunConfig, args) -> int:
    return _comparison_suite(cfg, args, "evpi")


def _parse_counts(text: str) -> list[tuple[int, int]]:
    """'25,49,100' -> [(5, 5), (7, 7), (10, 10)]; a non-square count n becomes (n, 1)."""
    out = []
    for tok in text.split(","):
        n = int(tok)
        if n < 1:
            raise ConfigError("scenario counts must be positive")
        r = int(round(n ** 0.5))
        out.append((r, r) if r * r == n else (n, 1))
    return out


def cmd_scenario_study(cfg: RunConfig, args) -> int:
    prov = cfg.provenance()
    try:
        counts = _parse_counts(args.counts)
    except ValueError as exc:
        raise ConfigError(f"bad --counts: {exc}") from exc
    family = [generate_instance(replace(cfg.generator, l=l, k=k)) for l, k in counts]
    eval_set = generate_eval_scenarios(cfg.generator, cfg.evaluation.num_eval_scenarios, cfg.evaluation.seed)
    rows = scenario_count_study(family, eval_set, cfg.solve, mode=cfg.formulation.preference_mode,
                                method=cfg.method, workers=cfg.evaluation.workers)
    reports = [r for _, r, _ in rows]
    deltas = [(f"{prev} -> {c}", d) for (prev, _, _), (c, _, d) in zip(rows, rows[1:])]
    _emit_reports(cfg, "scenario_study", reports, prov, markdown_deltas(deltas) if deltas else "")
    for c, r, d in rows:
        print(f"scenarios={c}: cost={r.cost:.6f}" + ("" if d is None else f" delta_cost={d.cost}"))
    return EXIT_OK


def cmd_oracle_check(cfg: RunConfig, args) -> int:
    if args.size != "tiny":
        raise ConfigError("oracle-check supports --size tiny only")
    rng = np.random.default_rng(cfg.generator.seed if args.seed is not None else 0)
    agree = 0
    mode = cfg.formulation.preference_mode
    for t in range(args.trials):
        inst = random_tiny_instance(rng)
        enum = enumerate_first_stage(inst, mode)
        try:
            res = solve_first_stage(inst, FormulationConfig(mode), SolveParams(gap=0.0), method="extensive")
            got = res.objective
        except InfeasibleInstanceError:
            got = None
        ok = (got is None and enum.objective is None) or (
            got is not None and enum.objective is not None
            and abs(float(got - enum.objective)) <= 1e-6 * (1 + abs(float(enum.objective))))
        agree += ok
        if not ok:
            print(f"trial {t}: enumeration {enum.objective} vs milp {got}", file=sys.stderr)
    print(f"agreements: {agree}/{args.trials}")
    return EXIT_OK if agree == args.trials else EXIT_DISAGREE


HANDLERS = {"generate": cmd_generate, "solve": cmd_solve, "evaluate": cmd_evaluate, "vss": cmd_vss,
            "evpi": cmd_evpi, "scenario-study": cmd_scenario_study, "oracle-check": cmd_oracle_check}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--preset", help="packaged config name (e.g. division_01, desk, tiny)")
    common.add_argument("--seed", type=int, help="generator seed (overrides the config)")
    common.add_argument("--workers", type=int, help="processes for scenario evaluation")
    common.add_argument("--time-limit", type=float, help="branch-and-bound time limit in seconds")
    common.add_argument("--gap", type=float, help="relative optimality gap")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="xbsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    add("generate", "generate a synthetic instance")

    p = add("solve", "solve the first stage of one or more instances")
    p.add_argument("--instance", action="append", help="instance JSON (repeatable); default: generate one")
    p.add_argument("--mode", choices=("with", "without"))
    p.add_argument("--scenario-mode", choices=("full", "expected-value"))
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--write-lp", action="store_true", help="also export the extensive form as an LP file")

    p = add("evaluate", "score a saved first stage on held-out scenarios")
    p.add_argument("--instance", action="append", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--eval-scenarios", type=int)
    p.add_argument("--eval-seed", type=int)
    p.add_argument("--eval-mode", choices=("with", "without"), help="absence model for scoring (default with)")
    p.add_argument("--in-sample", action="store_true", help="score on the instance's own scenarios")
    p.add_argument("--lenient", action="store_true", help="report known-demand shortfalls instead of failing")

    for name, help_ in (("vss", "stochastic vs expected-value solution"),
                        ("evpi", "stochastic vs wait-and-see solutions")):
        p = add(name, help_)
        p.add_argument("--instance", action="append")
        p.add_argument("--mode", choices=("with", "without"))
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--eval-scenarios", type=int)
        p.add_argument("--eval-seed", type=int)
        p.add_argument("--in-sample", action="store_true")
        if name == "evpi":
            p.add_argument("--cross-eval", action="store_true",
                           help="wait-and-see solves without preferences, scored with them")

    p = add("scenario-study", "compare daily scenario counts on a common held-out set")
    p.add_argument("--counts", default="25,49,100")
    p.add_argument("--mode", choices=("with", "without"))
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--eval-scenarios", type=int)
    p.add_argument("--eval-seed", type=int)

    p = add("oracle-check", "compare the MILP against exhaustive enumeration on random tiny instances")
    p.add_argument("--size", default="tiny")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--mode", choices=("with", "without"))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_run_config(args)
        return HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"xbsched: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleInstanceError, InfeasibleFirstStageError) as exc:
        print(f"xbsched: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NoIncumbent as exc:
        print(f"xbsched: {exc}", file=sys.stderr)
        return EXIT_NO_INCUMBENT
    except (OSError, ValueError) as exc:
        print(f"xbsched: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
