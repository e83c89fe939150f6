"""NES (FakeBob) against the particle swarm baseline at a matched query budget."""

from dataclasses import replace

from _common import config, dump, parser, subdir, system

from srattack.harness.campaigns import run_effectiveness_campaign
from srattack.pso import PsoConfig


def main():
    p = parser(__doc__, trials=20)
    p.add_argument("--iterations", type=int, default=200, help="NES iterations; PSO gets the same query count")
    p.add_argument("--particles", type=int, default=50)
    args = p.parse_args()
    osi = system("osi", args.components)
    nes_cfg = config(args, "osi", max_iter=args.iterations)
    budget = 1 + (nes_cfg.attack.fakebob.m + 1) * args.iterations
    pso_iters = (budget - 1) // args.particles - 1
    epochs = next(e for e in range(max(1, pso_iters // 30), pso_iters + 1) if pso_iters % e == 0)
    pso = PsoConfig(particles=args.particles, epochs=epochs, iters_per_epoch=pso_iters // epochs,
                    epsilon=args.epsilon)
    pso_cfg = replace(nes_cfg, attack=replace(nes_cfg.attack, method="pso", pso=pso))
    rows = []
    for name, cfg in (("nes", nes_cfg), ("pso", pso_cfg)):
        camp = run_effectiveness_campaign(cfg, osi, subdir(args, name))
        rows.append({"method": name, "query_budget": budget if name == "nes" else
                     1 + pso.particles * (pso.total_iterations + 1), **camp.report.to_dict()})
    dump(rows, args, "nes_vs_pso.json")


if __name__ == "__main__":
    main()
