"""Command line entry point: ``srattack <subcommand> --config experiment.yaml``.

Exit codes: 0 success, 2 usage, 3 config, 4 missing file, 5 parse, 6 runtime.
Failures print one JSON object ``{"error": {"category": ..., "message": ...}}``
on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import Optional

import numpy as np

from .audio import WavParseError
from .defenses import DefenseSpec
from .oracle import RecognizerOracle
from .recognizer import (ModelFormatError, Recognizer, Task, load_recognizer, load_ubm, save_recognizer,
                         save_ubm)
from .harness import campaigns as C
from .harness.config import ConfigError, ExperimentConfig, load_config
from .harness.metrics import LabeledOutcome, compute_metrics
from .harness.records import CampaignStore
from .harness.system import (DeskSystem, build_corpus, build_system, calibrated, enroll_speakers,
                             save_corpus_dir, train_background_ubm)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_MISSING, EXIT_PARSE, EXIT_RUNTIME = 0, 2, 3, 4, 5, 6


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category = category
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


# model locations -----------------------------------------------------------

def _ubm_path(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.model_dir, "ubm.npz")


def _recognizer_path(cfg: ExperimentConfig) -> str:
    """OSI/CSI: one .npz file.  SV: a directory of per-speaker .npz files."""
    if cfg.recognizer:
        return cfg.recognizer
    task = Task(cfg.system.task)
    if task is Task.SV:
        return os.path.join(cfg.model_dir, "sv")
    return os.path.join(cfg.model_dir, f"recognizer_{task.value}.npz")


def _save_system(cfg: ExperimentConfig, system: DeskSystem, extra: Optional[dict] = None) -> str:
    path = _recognizer_path(cfg)
    extra = {"system": system.spec.to_dict(), **(extra or {})}
    if system.sv:
        os.makedirs(path, exist_ok=True)
        for spk, rec in system.sv.items():
            save_recognizer(os.path.join(path, f"{spk}.npz"), rec, extra)
    else:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        save_recognizer(path, system.recognizer, extra)
    return path


def _model_paths(task: Task, path: str, ids) -> dict:
    if task is Task.SV:
        return {"sv": {spk: os.path.join(path, f"{spk}.npz") for spk in ids}}
    return {"recognizer": path}


def load_system(cfg: ExperimentConfig, need_threshold: bool = True) -> tuple[DeskSystem, dict]:
    """Recognizer(s) from the model files the config points at.  A missing
    file is a configuration problem: the config names something that is not
    there."""
    path = _recognizer_path(cfg)
    task = Task(cfg.system.task)
    corpus = build_corpus(cfg.corpus)
    models = _model_paths(task, path, corpus.enrolled_ids)
    files = list(models["sv"].values()) if task is Task.SV else [path]
    missing = [p for p in files if not os.path.exists(p)]
    if missing:
        raise ConfigError(f"recognizer model not found: {missing[0]} (run enroll/calibrate or set paths.recognizer)")
    system = DeskSystem(cfg.system, corpus)
    if task is Task.SV:
        system.sv = {spk: load_recognizer(p)[0] for spk, p in models["sv"].items()}
        recs = list(system.sv.values())
    else:
        system.recognizer = load_recognizer(path)[0]
        recs = [system.recognizer]
    for rec in recs:
        if rec.task is not task:
            raise ConfigError(f"model task {rec.task.value} does not match config task {task.value}")
        if need_threshold and task is not Task.CSI and rec.threshold is None:
            raise ConfigError("recognizer has no threshold yet; run calibrate first")
    return system, models


def _campaign_dir(cfg: ExperimentConfig, args, name: str) -> str:
    return args.out or os.path.join(cfg.output_dir, name)


# subcommands ---------------------------------------------------------------

def cmd_gen_corpus(cfg: ExperimentConfig, args) -> dict:
    corpus = build_corpus(cfg.corpus)
    out = _campaign_dir(cfg, args, "corpus")
    save_corpus_dir(corpus, out)
    n = len(corpus.background) + sum(len(v) for v in corpus.enrolled.values()) + \
        sum(len(v) for v in corpus.imposters.values())
    return {"corpus_dir": out, "utterances": n, "enrolled": corpus.enrolled_ids}


def cmd_train(cfg: ExperimentConfig, args) -> dict:
    corpus = build_corpus(cfg.corpus)
    ubm, history = train_background_ubm(corpus, cfg.system)
    os.makedirs(cfg.model_dir, exist_ok=True)
    save_ubm(_ubm_path(cfg), ubm, {"em_loglik": history, "system": cfg.system.to_dict()})
    return {"ubm": _ubm_path(cfg), "components": ubm.n_components, "em_loglik": history}


def cmd_enroll(cfg: ExperimentConfig, args) -> dict:
    if not os.path.exists(_ubm_path(cfg)):
        raise FileNotFoundError(f"{_ubm_path(cfg)} not found; run train first")
    ubm, _ = load_ubm(_ubm_path(cfg))
    corpus = build_corpus(cfg.corpus)
    models = enroll_speakers(corpus, ubm, cfg.system)
    task = Task(cfg.system.task)
    system = DeskSystem(cfg.system, corpus)
    if task is Task.SV:
        system.sv = {m.speaker_id: Recognizer(task, ubm, [m], None, cfg.system.features) for m in models}
    else:
        system.recognizer = Recognizer(task, ubm, models, None, cfg.system.features)
    return {"recognizer": _save_system(cfg, system), "enrolled": [m.speaker_id for m in models]}


def cmd_calibrate(cfg: ExperimentConfig, args) -> dict:
    system, _ = load_system(cfg, need_threshold=False)
    task = Task(cfg.system.task)
    if task is Task.CSI:
        return {"recognizer": _recognizer_path(cfg), "threshold": None, "note": "CSI has no threshold"}
    calib = [u.waveform for u in system.corpus.calibration_voices()]
    thresholds = {}
    fars = {}
    if task is Task.SV:
        for spk, rec in list(system.sv.items()):
            system.sv[spk] = calibrated(rec, system.corpus, cfg.system.target_far)
            thresholds[spk] = system.sv[spk].threshold
            fars[spk] = float(np.mean([not d.rejected for d in RecognizerOracle(system.sv[spk]).query_batch(
                np.stack([w.samples for w in calib]), calib[0].sample_rate)]))
    else:
        system.recognizer = calibrated(system.recognizer, system.corpus, cfg.system.target_far)
        thresholds["all"] = system.recognizer.threshold
        fars["all"] = float(np.mean([not d.rejected for d in RecognizerOracle(system.recognizer).query_batch(
            np.stack([w.samples for w in calib]), calib[0].sample_rate)]))
    _save_system(cfg, system)
    return {"recognizer": _recognizer_path(cfg), "threshold": thresholds, "calibration_far": fars,
            "target_far": cfg.system.target_far}


def cmd_attack(cfg: ExperimentConfig, args) -> dict:
    system, models = load_system(cfg)
    out = _campaign_dir(cfg, args, "attack")
    camp = C.run_effectiveness_campaign(cfg, system, out, models=models)
    return {"out_dir": out, "report": camp.report.to_dict()}


def cmd_estimate_threshold(cfg: ExperimentConfig, args) -> dict:
    system, _ = load_system(cfg)
    task = Task(cfg.system.task)
    if task is Task.CSI:
        raise ConfigError("threshold estimation applies to OSI and SV only")
    ests = C.estimate_thresholds(system, cfg.attack, cfg.master_seed)
    rows = []
    for key, est in ests.items():
        rec = system.for_target(key) if task is Task.SV else system.recognizer
        rows.append({"target": None if key is None else system.corpus.enrolled_ids[key],
                     "theta": rec.threshold, "theta_hat": est.theta_hat, "queries": est.queries,
                     "relative_error": (est.theta_hat - rec.threshold) / abs(rec.threshold)})
    return {"estimates": rows}


def cmd_evaluate(cfg: ExperimentConfig, args) -> dict:
    system, _ = load_system(cfg)
    task = Task(cfg.system.task)
    corpus = system.corpus
    ids = corpus.enrolled_ids
    outcomes = []

    def judge(rec, u, enrolled):
        d = RecognizerOracle(rec).query(u.waveform).decision
        outcomes.append(LabeledOutcome(task.value, "normal", d, u.speaker_id, enrolled))

    tests = [u for s in ids for u in corpus.test_set(s)]
    imposters = corpus.imposter_sources() if task is not Task.CSI else []
    if task is Task.SV:
        for u in tests:
            judge(system.sv[u.speaker_id], u, True)
        for u in imposters:
            for rec in system.sv.values():
                judge(rec, u, False)
    else:
        for u in tests:
            judge(system.recognizer, u, True)
        for u in imposters:
            judge(system.recognizer, u, False)
    return {"report": compute_metrics(outcomes).to_dict()}


def _sweep_target(cfg: ExperimentConfig, args) -> DeskSystem:
    if args.target_model:
        if not os.path.exists(args.target_model):
            raise FileNotFoundError(f"{args.target_model} not found")
        system = DeskSystem(cfg.transfer_system or cfg.system, build_corpus(cfg.corpus))
        system.recognizer = load_recognizer(args.target_model)[0]
        return system
    if cfg.transfer_system is None:
        raise ConfigError("transfer needs transfer_system in the config or --target-model")
    if cfg.transfer_system.task != cfg.system.task:
        raise ConfigError("transfer_system must have the same task as system")
    return build_system(cfg.corpus, cfg.transfer_system)


def cmd_sweep(cfg: ExperimentConfig, args) -> dict:
    system, _ = load_system(cfg)
    out = _campaign_dir(cfg, args, f"sweep_{args.axis}")
    if args.axis == "epsilon":
        if not cfg.epsilons:
            raise ConfigError("sweep.epsilons is empty")
        rows = C.run_epsilon_sweep(cfg, cfg.epsilons, system, out)
        table = C.sweep_table(rows, "epsilon")
    else:
        if not cfg.kappas:
            raise ConfigError("sweep.kappas is empty")
        target = _sweep_target(cfg, args)
        table = []
        for row in C.kappa_sweep(cfg, cfg.kappas, system, target, out, args.successful_only):
            t = row.transfer
            table.append({"kappa": row.kappa, "source_asr": row.source.report.asr,
                          "transfer_asr": t.asr, "transfer_utr": t.utr,
                          "transferred": t.counts.get("utr", (0, 0))[1]})
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "table.json"), "w") as fh:
        json.dump(table, fh, indent=2)
    return {"out_dir": out, "table": table}


def _records(path) -> tuple[list, CampaignStore]:
    store = CampaignStore(path)
    if not store.exists():
        raise FileNotFoundError(f"{store.records_path} not found")
    return store.load(), store


def cmd_transfer(cfg: ExperimentConfig, args) -> dict:
    records, store = _records(args.records)
    target = _sweep_target(cfg, args)
    report = C.run_transfer_evaluation(records, target, store, successful_only=args.successful_only)
    return {"report": report.to_dict()}


def cmd_defend(cfg: ExperimentConfig, args) -> dict:
    if cfg.defense is None:
        raise ConfigError("defend needs a defense section in the config")
    system, models = load_system(cfg)
    if args.setting == "s1":
        if not args.records:
            raise ConfigError("s1 needs --records (a campaign crafted without the defense)")
        records, store = _records(args.records)
        voices = C.adversarial_set(records, store)
        normal = [u for s in system.corpus.enrolled_ids for u in system.corpus.test_set(s)]
        undefended = C.apply_defense_s1(DefenseSpec.median(1), voices, system, normal)
        defended = C.apply_defense_s1(cfg.defense, voices, system, normal)
        return {"setting": "s1", "defense": cfg.defense.to_dict(), "undefended": undefended.to_dict(),
                "defended": defended.to_dict()}
    out = _campaign_dir(cfg, args, "defend_s2")
    rep = C.apply_defense_s2(cfg.defense, cfg, system, out)
    # defended pipeline model file records the attached defense
    _save_system(replace(cfg, recognizer=os.path.join(out, "defended_model" + ("" if system.sv else ".npz"))),
                 system, {"defense": cfg.defense.to_dict()})
    return {"setting": "s2", "defense": cfg.defense.to_dict(), "out_dir": out, **rep.to_dict()}


def cmd_report(cfg: Optional[ExperimentConfig], args) -> dict:
    records, _ = _records(args.records)
    return {"records": len(records), "report": C.report_from_records(records).to_dict()}


COMMANDS = {
    "gen-corpus": cmd_gen_corpus, "train": cmd_train, "enroll": cmd_enroll, "calibrate": cmd_calibrate,
    "attack": cmd_attack, "estimate-threshold": cmd_estimate_threshold, "evaluate": cmd_evaluate,
    "sweep": cmd_sweep, "transfer": cmd_transfer, "defend": cmd_defend, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="srattack", description="Black-box attacks on a GMM-UBM speaker recognizer.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "report", help="experiment config (.yaml or .json)")
        if name in ("gen-corpus", "attack", "sweep", "defend"):
            sp.add_argument("--out", help="output directory (default under paths.output_dir)")
        if name == "sweep":
            sp.add_argument("--axis", choices=("epsilon", "kappa"), default="epsilon")
        if name in ("sweep", "transfer"):
            sp.add_argument("--target-model", help="recognizer file to transfer onto")
            sp.add_argument("--successful-only", action="store_true",
                            help="transfer only voices that met the margin on the source")
        if name == "transfer":
            sp.add_argument("--records", required=True, help="campaign directory of the crafted voices")
        if name == "defend":
            sp.add_argument("--setting", choices=("s1", "s2"), required=True)
            sp.add_argument("--records", help="campaign directory (s1)")
        if name == "report":
            sp.add_argument("--records", required=True, help="campaign directory")
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = None
        if args.config:
            if not os.path.exists(args.config):
                raise FileNotFoundError(f"config file {args.config} not found")
            cfg = load_config(args.config)
        _emit(COMMANDS[args.command](cfg, args))
        return EXIT_OK
    except CliError as e:
        err = e
    except ConfigError as e:
        err = CliError("config", str(e), EXIT_CONFIG)
    except FileNotFoundError as e:
        err = CliError("missing-file", str(e), EXIT_MISSING)
    except (WavParseError, ModelFormatError, json.JSONDecodeError) as e:
        err = CliError("parse", str(e), EXIT_PARSE)
    except Exception as e:  # noqa: BLE001 - every other failure is a runtime error
        err = CliError("runtime", f"{type(e).__name__}: {e}", EXIT_RUNTIME)
    print(json.dumps({"error": {"category": err.category, "message": str(err)}}), file=sys.stderr)
    return err.code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
