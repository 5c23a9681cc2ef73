"""Preference-aware against preference-blind first stages, both scored with preference-driven absences."""

from xbsched.evaluation import evaluate_first_stage, percentage_deltas
from xbsched.formulation import FormulationConfig
from xbsched.solve import solve_first_stage

from _suite import Sweep, base_parser


def main():
    args = base_parser(__doc__).parse_args()
    sweep = Sweep(args)
    reports, rows = [], []
    for cfg, inst in sweep.instances():
        ev = sweep.eval_set(cfg, inst)
        pair = []
        for mode in ("without", "with"):
            res = solve_first_stage(inst, FormulationConfig(mode), sweep.params)
            pair.append(evaluate_first_stage(inst, res.first_stage, ev, strict=False, workers=sweep.workers,
                                             label=mode, solve=res))
        reports += pair
        rows.append((pair[0].instance, percentage_deltas(*pair)))
        print(f"{pair[0].instance}: S.W. {pair[0].social_welfare:.3f} -> {pair[1].social_welfare:.3f}, "
              f"C.S. {pair[0].cancelled_service_hours:.3f} -> {pair[1].cancelled_service_hours:.3f}")
    sweep.write("preference_effect", reports, rows)


if __name__ == "__main__":
    main()
