"""Transfer of OSI voices crafted at several kappa from a K-component system to a smaller one."""

from _common import config, dump, parser, system

from srattack.harness.campaigns import kappa_sweep


def main():
    p = parser(__doc__, trials=20)
    p.add_argument("--kappas", type=float, nargs="+", default=[0.0, 1.0, 2.0, 4.0])
    p.add_argument("--target-components", type=int, default=32)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--successful-only", action="store_true")
    args = p.parse_args()
    rows = kappa_sweep(config(args, "osi", max_iter=args.max_iter), args.kappas, system("osi", args.components),
                       system("osi", args.target_components), args.out, args.successful_only)
    dump([{"kappa": r.kappa, "source": r.source.report.to_dict(), "transfer": r.transfer.to_dict()}
          for r in rows], args, "kappa_transfer.json")


if __name__ == "__main__":
    main()
