"""Expected value of perfect information over a sweep of generated instances."""

from xbsched.evaluation import compute_evpi

from _suite import Sweep, base_parser


def main():
    p = base_parser(__doc__)
    p.add_argument("--mode", choices=("with", "without"), default="with")
    p.add_argument("--in-sample", action="store_true", help="score on the training scenarios")
    p.add_argument("--cross-eval", action="store_true",
                   help="wait-and-see solves ignore preferences and are scored with them")
    args = p.parse_args()
    sweep = Sweep(args)
    reports, rows = [], []
    for cfg, inst in sweep.instances():
        comp = compute_evpi(inst, sweep.eval_set(cfg, inst, args.in_sample), sweep.params, mode=args.mode,
                            cross_eval=args.cross_eval, workers=sweep.workers)
        reports += [comp.baseline, comp.candidate]
        rows.append((comp.baseline.instance, comp.deltas))
        print(f"{comp.baseline.instance}: EVPI={comp.value:.4f} summed gap={comp.summed_gap:.4f} "
              f"flips={comp.flips}")
    sweep.write("evpi", reports, rows)


if __name__ == "__main__":
    main()
