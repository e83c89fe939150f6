"""Query-based threshold estimation on the desk OSI system at several FAR targets."""

from dataclasses import replace

from _common import dump, parser, system

from srattack.fakebob import AttackConfig, estimate_threshold
from srattack.harness.campaigns import _seed_voice
from srattack.oracle import RecognizerOracle
from srattack.recognizer import max_scores, threshold_from_scores


def main():
    p = parser(__doc__)
    p.add_argument("--fars", type=float, nargs="+", default=[0.02, 0.05, 0.10, 0.15, 0.20])
    args = p.parse_args()
    osi = system("osi", args.components)
    calib = max_scores(osi.recognizer, [u.waveform for u in osi.corpus.calibration_voices()])
    rows = []
    for k, far in enumerate(args.fars):
        theta = threshold_from_scores(calib, far)
        rec = osi.recognizer.with_threshold(theta)
        est = estimate_threshold(RecognizerOracle(rec), _seed_voice(rec, replace(osi, recognizer=rec)),
                                 AttackConfig(epsilon=args.epsilon, seed=args.seed + k))
        rows.append({"far": far, "theta": theta, "theta_hat": est.theta_hat, "queries": est.queries,
                     "relative_error": (est.theta_hat - theta) / abs(theta)})
    dump(rows, args, "threshold_estimation.json")


if __name__ == "__main__":
    main()
