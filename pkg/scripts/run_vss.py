"""Value of the stochastic solution over a sweep of generated instances."""

from xbsched.evaluation import compute_vss

from _suite import Sweep, base_parser


def main():
    p = base_parser(__doc__)
    p.add_argument("--mode", choices=("with", "without"), default="with")
    p.add_argument("--in-sample", action="store_true", help="score on the training scenarios")
    args = p.parse_args()
    sweep = Sweep(args)
    reports, rows = [], []
    for cfg, inst in sweep.instances():
        comp = compute_vss(inst, sweep.eval_set(cfg, inst, args.in_sample), sweep.params, mode=args.mode,
                           workers=sweep.workers)
        reports += [comp.baseline, comp.candidate]
        rows.append((comp.baseline.instance, comp.deltas))
        print(f"{comp.baseline.instance}: VSS={comp.value:.4f} summed gap={comp.summed_gap:.4f}")
    sweep.write("vss", reports, rows)


if __name__ == "__main__":
    main()
