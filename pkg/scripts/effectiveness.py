"""FakeBob on the desk OSI, CSI and SV systems (targeted, kappa = 0)."""

from _common import config, dump, parser, subdir, system

from srattack.harness.campaigns import run_effectiveness_campaign


def main():
    args = parser(__doc__).parse_args()
    rows = []
    for task in ("osi", "csi", "sv"):
        camp = run_effectiveness_campaign(config(args, task), system(task, args.components), subdir(args, task))
        r = camp.report
        rows.append({"task": task, **r.to_dict()})
        print(f"{task}: ASR {r.asr:.3f} UTR {r.utr:.3f} SNR {r.mean_snr_db} iterations {r.mean_iterations}",
              flush=True)
    dump(rows, args, "effectiveness.json")


if __name__ == "__main__":
    main()
