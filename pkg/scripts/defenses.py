"""Median filter, squeezing and quantization against crafted voices (S1) and inside the oracle (S2)."""

from _common import config, dump, parser, subdir, system

from srattack.defenses import DefenseSpec
from srattack.harness.campaigns import adversarial_set, apply_defense_s1, apply_defense_s2, \
    run_effectiveness_campaign


def main():
    p = parser(__doc__, trials=20)
    p.add_argument("--high-kappa", type=float, default=3.0)
    p.add_argument("--high-epsilon", type=float, default=0.05)
    p.add_argument("--kernels", type=int, nargs="+", default=[1, 3, 5, 7, 9, 11])
    p.add_argument("--s2", action="store_true", help="also run the median k=7 S2 campaign")
    args = p.parse_args()
    osi = system("osi", args.components)
    normal = [u for s in osi.corpus.enrolled_ids for u in osi.corpus.test_set(s)]
    sets = {
        "low": run_effectiveness_campaign(config(args, "osi", "untargeted"), osi, subdir(args, "low")),
        "high": run_effectiveness_campaign(config(args, "osi", "untargeted", epsilon=args.high_epsilon,
                                                  kappa=args.high_kappa, max_iter=300), osi, subdir(args, "high")),
    }
    rows = []
    for name, camp in sets.items():
        voices = adversarial_set(camp.records, in_memory=camp.adversarial, successful_only=False)
        for spec in [DefenseSpec.median(k) for k in args.kernels] + [DefenseSpec.squeeze(0.5),
                                                                        DefenseSpec.quantization(256)]:
            r = apply_defense_s1(spec, voices, osi, normal)
            rows.append({"setting": "s1", "voices": name, "defense": spec.to_dict(), "utr": r.utr, "frr": r.frr})
            print(rows[-1], flush=True)
    if args.s2:
        cfg = config(args, "osi")
        for spec in (DefenseSpec.median(1), DefenseSpec.median(7)):
            rep = apply_defense_s2(spec, cfg, osi, subdir(args, f"s2_{spec.kind}{spec.param}"))
            rows.append({"setting": "s2", "defense": spec.to_dict(), **rep.to_dict()})
    dump(rows, args, "defenses.json")


if __name__ == "__main__":
    main()
