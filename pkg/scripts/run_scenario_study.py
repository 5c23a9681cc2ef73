"""Solution quality as the number of daily training scenarios grows, on one held-out set."""

from dataclasses import replace

from xbsched.datagen import generate_instance
from xbsched.evaluation import scenario_count_study

from _suite import Sweep, base_parser


def main():
    p = base_parser(__doc__)
    p.add_argument("--grid", default="2x2,3x3,5x5", help="duration x shape draws per day, e.g. 2x2,5x5")
    p.add_argument("--mode", choices=("with", "without"), default="with")
    args = p.parse_args()
    sweep = Sweep(args)
    grid = [tuple(int(v) for v in g.split("x")) for g in args.grid.split(",")]
    reports, rows = [], []
    for cfg, _ in sweep.instances():
        family = [generate_instance(replace(cfg, l=l, k=k)) for l, k in grid]
        ev = sweep.eval_set(cfg, family[-1])
        study = scenario_count_study(family, ev, sweep.params, mode=args.mode, workers=sweep.workers)
        for (prev, base, _), (count, rep, d) in zip(study, study[1:]):
            reports += [base, rep]
            rows.append((f"{rep.instance} {prev}->{count}", d))
        print(", ".join(f"{c} scenarios: cost {r.cost:.3f}" for c, r, _ in study))
    sweep.write("scenario_study", reports, rows)


if __name__ == "__main__":
    main()
