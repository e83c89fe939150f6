"""Epsilon sweep on the desk CSI system: ASR, SNR and iterations per budget."""

from _common import config, dump, parser, system

from srattack.harness.campaigns import run_epsilon_sweep, sweep_table


def main():
    p = parser(__doc__, trials=30)
    p.add_argument("--epsilons", type=float, nargs="+", default=[0.05, 0.01, 0.005, 0.002])
    args = p.parse_args()
    rows = run_epsilon_sweep(config(args, "csi"), args.epsilons, system("csi", args.components), args.out)
    dump(sweep_table(rows, "epsilon"), args, "epsilon_sweep.json")


if __name__ == "__main__":
    main()
