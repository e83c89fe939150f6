"""Attack campaigns: effectiveness grid, epsilon and kappa sweeps, transfer,
and the two defense settings (transform crafted voices / defend the oracle)."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ..audio import Waveform
from ..corpus import Utterance
from ..defenses import DefenseSpec
from ..fakebob import AttackConfig, AttackResult, estimate_threshold, run_fakebob
from ..losses import LossKind
from ..oracle import RecognizerOracle
from ..pso import PsoConfig, pso_attack
from ..recognizer import Recognizer, Task, load_recognizer
from .config import AttackSpec, ExperimentConfig, derive_seed
from .metrics import EmptySubsetError, LabeledOutcome, MetricsReport, compute_metrics
from .records import CampaignStore, MissingWaveformError, TrialRecord, samples_digest, trial_id
from .system import DeskSystem, SystemSpec, build_corpus, build_system, corpus_spec_from_dict, find_utterance

# salt separating the threshold-estimation seed stream from trial seeds
ESTIMATE_SALT = 1


class CampaignError(ValueError):
    pass


@dataclass(frozen=True)
class Trial:
    index: int
    source: Utterance
    target_index: Optional[int]
    group: str


@dataclass
class CampaignResult:
    records: list
    report: MetricsReport
    adversarial: dict = field(default_factory=dict)   # trial id -> Waveform, this run only
    out_dir: Optional[str] = None


def scenario_grid(system: DeskSystem, goal: str, n_trials: int, master_seed: int) -> list[Trial]:
    """Source/target pairs for the system's task.

    OSI and SV attack held-out imposter voices towards each enrolled speaker;
    CSI attacks enrolled speakers' test voices towards the other enrolled
    speakers.  Targeted pairs alternate intra-family and inter-family so any
    prefix of the grid stays balanced.
    """
    task = Task(system.spec.task)
    corpus = system.corpus
    ids = corpus.enrolled_ids
    if task is Task.CSI:
        sources = [u for s in ids for u in corpus.test_set(s)]
    else:
        sources = corpus.imposter_sources()
    rng = np.random.default_rng(np.random.SeedSequence([master_seed]))
    if goal == "untargeted" and task is not Task.SV:
        order = rng.permutation(len(sources))
        pairs = [(sources[i], None, "na") for i in order]
    else:
        intra, inter = [], []
        for u in sources:
            for t, spk in enumerate(ids):
                if spk == u.speaker_id:
                    continue
                (intra if corpus.family(spk) == u.family else inter).append((u, t))
        intra = [intra[i] for i in rng.permutation(len(intra))]
        inter = [inter[i] for i in rng.permutation(len(inter))]
        pairs = []
        while intra or inter:
            if intra:
                u, t = intra.pop(0)
                pairs.append((u, t, "intra"))
            if inter:
                u, t = inter.pop(0)
                pairs.append((u, t, "inter"))
    return [Trial(i, u, t, g) for i, (u, t, g) in enumerate(pairs[:n_trials])]


def loss_kind_for(task: Task, goal: str, trial: Trial, system: DeskSystem) -> LossKind:
    if task is Task.SV:
        return LossKind.sv_targeted()
    if task is Task.OSI:
        return LossKind.osi_targeted(trial.target_index) if goal == "targeted" else LossKind.osi_untargeted()
    if goal == "targeted":
        return LossKind.csi_targeted(trial.target_index)
    return LossKind.csi_untargeted(system.corpus.enrolled_ids.index(trial.source.speaker_id))


def _target_recognizer(system: DeskSystem, trial: Trial) -> Recognizer:
    if Task(system.spec.task) is Task.SV:
        return system.for_target(trial.target_index)
    return system.recognizer


def run_attack(original: Waveform, oracle, kind: LossKind, theta: Optional[float], attack: AttackSpec,
               seed: int) -> AttackResult:
    if attack.method == "pso":
        return pso_attack(original, oracle, kind, theta, replace(attack.pso, seed=seed))
    return run_fakebob(original, oracle, kind, theta, replace(attack.fakebob, seed=seed))


def _seed_voice(rec: Recognizer, system: DeskSystem) -> Waveform:
    """First calibration imposter voice the recognizer rejects."""
    oracle = RecognizerOracle(rec)
    for u in system.corpus.calibration_voices():
        if oracle.query(u.waveform).rejected:
            return u.waveform
    raise CampaignError("every calibration voice is accepted; no seed voice for threshold estimation")


def estimate_thresholds(system: DeskSystem, attack: AttackSpec, master_seed: int,
                        transform: Optional[Callable] = None) -> dict:
    """Query-based threshold estimate per target recognizer, keyed by speaker
    index for SV and by None otherwise."""
    task = Task(system.spec.task)
    recs = ({t: system.for_target(t) for t in range(len(system.corpus.enrolled_ids))} if task is Task.SV
            else {None: system.recognizer})
    out = {}
    for k, (key, rec) in enumerate(recs.items()):
        seed = derive_seed(master_seed, k, ESTIMATE_SALT)
        est = estimate_threshold(RecognizerOracle(rec, transform), _seed_voice(rec, system),
                                 replace(attack.fakebob, seed=seed))
        out[key] = est
    return out


def _labeled(r: TrialRecord, decision: Optional[str] = None) -> LabeledOutcome:
    res = r.result
    return LabeledOutcome(
        task=r.task, kind="adversarial", decision=res["final_decision"] if decision is None else decision,
        source=r.source_speaker, source_enrolled=r.task == "csi",
        target=r.target_speaker if r.goal == "targeted" or r.task == "sv" else None,
        group=r.group if r.group != "na" else None, success=res["success"], snr_db=res["snr_db"],
        iterations=res["iterations"], queries=res["queries"], time_s=r.wall_s,
    )


def report_from_records(records: Sequence[TrialRecord]) -> MetricsReport:
    if not records:
        raise EmptySubsetError("no trial records")
    return compute_metrics([_labeled(r) for r in records])


def deterministic_view(report: MetricsReport) -> dict:
    """Report content without wall-clock fields."""
    def strip(d):
        d = {k: v for k, v in d.items() if k != "mean_time_s"}
        if "groups" in d:
            d["groups"] = {g: strip(v) for g, v in d["groups"].items()}
        return d
    return strip(report.to_dict())


def _system_dict(system: DeskSystem) -> dict:
    return {"corpus": system.corpus.spec.to_dict(), "system": system.spec.to_dict()}


def _run_trial(trial: Trial, system: DeskSystem, attack: AttackSpec, cfg: ExperimentConfig,
               thetas: dict, defense: Optional[DefenseSpec], models: Optional[dict]):
    task = Task(system.spec.task)
    rec = _target_recognizer(system, trial)
    kind = loss_kind_for(task, cfg.attack.goal, trial, system)
    est = None
    if kind.needs_theta:
        if attack.theta == "estimate":
            est = thetas[trial.target_index if task is Task.SV else None]
            theta = est.theta_hat
        else:
            theta = rec.threshold
    else:
        theta = None
    oracle = RecognizerOracle(rec, None if defense is None else defense.transform())
    seed = cfg.trial_seed(trial.index)
    t0 = time.perf_counter()
    result = run_attack(trial.source.waveform, oracle, kind, theta, attack, seed)
    wall = time.perf_counter() - t0
    ids = system.corpus.enrolled_ids
    target_speaker = ids[trial.target_index] if trial.target_index is not None else None
    record = TrialRecord(
        trial_id=trial_id(trial.index), trial_index=trial.index, task=task.value,
        goal="targeted" if task is Task.SV else attack.goal, group=trial.group,
        source_utt=trial.source.utt_id, source_speaker=trial.source.speaker_id, target_speaker=target_speaker,
        target_index=trial.target_index, master_seed=cfg.master_seed, seed=seed, method=attack.method,
        attack_config=(attack.pso if attack.method == "pso" else attack.fakebob).to_dict() | {"seed": seed},
        theta_for_loss=theta, result=result.summary(), adversarial_sha256=samples_digest(result.adversarial.samples),
        oracle_queries=oracle.queries, wall_s=wall, system=_system_dict(system), models=models,
        defense=None if defense is None else defense.to_dict(),
        theta_estimate=None if est is None else {"theta_hat": est.theta_hat, "queries": est.queries},
    )
    return record, result


def run_effectiveness_campaign(cfg: ExperimentConfig, system: Optional[DeskSystem] = None,
                               out_dir: Optional[str] = None, defense: Optional[DefenseSpec] = None,
                               models: Optional[dict] = None, resume: bool = True) -> CampaignResult:
    """Run the attack over the scenario grid; records go to ``out_dir`` when given.

    A campaign directory that already holds records is resumed: trials whose
    index is already logged are read back instead of re-run.
    """
    system = system or build_system(cfg.corpus, cfg.system)
    defense = cfg.defense if defense is None else defense
    if defense is not None and defense.is_identity:
        defense = None
    grid = scenario_grid(system, cfg.attack.goal, cfg.attack.n_trials, cfg.master_seed)
    if not grid:
        raise EmptySubsetError("the scenario grid is empty")
    store = CampaignStore(out_dir) if out_dir else None
    done = {}
    if store is not None and resume:
        done = {r.trial_index: r for r in store.load()}
    todo = [t for t in grid if t.index not in done]
    thetas = {}
    if cfg.attack.theta == "estimate" and Task(system.spec.task) is not Task.CSI and todo:
        thetas = estimate_thresholds(system, cfg.attack, cfg.master_seed,
                                     None if defense is None else defense.transform())

    def work(trial):
        return _run_trial(trial, system, cfg.attack, cfg, thetas, defense, models)

    adversarial = {}
    if cfg.jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = pool.map(work, todo)
            finished = _collect(results, store, done, adversarial)
    else:
        finished = _collect(map(work, todo), store, done, adversarial)
    records = [finished[t.index] for t in grid]
    report = report_from_records(records)
    if store is not None:
        store.finish(records, report.to_dict())
    return CampaignResult(records, report, adversarial, out_dir)


def _collect(results, store, done, adversarial):
    # results arrive in trial-index order, so the log stays ordered
    finished = dict(done)
    for record, result in results:
        finished[record.trial_index] = record
        adversarial[record.trial_id] = result.adversarial
        if store is not None:
            store.append(record, result.adversarial)
    return finished


@dataclass
class SweepRow:
    value: float
    campaign: CampaignResult

    @property
    def report(self) -> MetricsReport:
        return self.campaign.report


def run_epsilon_sweep(cfg: ExperimentConfig, epsilons: Sequence[float], system: Optional[DeskSystem] = None,
                      out_dir: Optional[str] = None) -> list[SweepRow]:
    """One campaign per epsilon on the same grid and seeds, ordered by epsilon."""
    if not epsilons:
        raise CampaignError("no epsilon values to sweep")
    system = system or build_system(cfg.corpus, cfg.system)
    rows = []
    for eps in sorted(epsilons):
        sub = replace(cfg, attack=cfg.attack.with_budget(epsilon=eps))
        d = None if out_dir is None else os.path.join(out_dir, f"eps_{eps:g}")
        rows.append(SweepRow(eps, run_effectiveness_campaign(sub, system, d)))
    return rows


def sweep_table(rows: Sequence[SweepRow], axis: str = "epsilon") -> list[dict]:
    out = []
    for row in rows:
        r = row.report
        num, den = r.counts.get("asr", r.counts.get("utr"))
        out.append({axis: row.value, "asr": num / den, "successes": num, "trials": den,
                    "mean_snr_db": r.mean_snr_db, "mean_iterations": r.mean_iterations,
                    "mean_queries": r.mean_queries})
    return out


def adversarial_waveform(record: TrialRecord, store: Optional[CampaignStore] = None,
                         in_memory: Optional[dict] = None) -> Waveform:
    if in_memory is not None and record.trial_id in in_memory:
        return in_memory[record.trial_id]
    if store is None:
        raise MissingWaveformError(f"no waveform source for {record.trial_id}")
    return store.adversarial(record)


def _recognizer_for(system: DeskSystem, record: TrialRecord) -> Recognizer:
    if Task(system.spec.task) is Task.SV:
        return system.sv[record.target_speaker]
    return system.recognizer


def run_transfer_evaluation(records: Sequence[TrialRecord], target: DeskSystem,
                            store: Optional[CampaignStore] = None, in_memory: Optional[dict] = None,
                            successful_only: bool = False) -> MetricsReport:
    """Re-score crafted voices on another recognizer and judge them against it."""
    records = [r for r in records if r.success] if successful_only else list(records)
    if not records:
        raise EmptySubsetError("no adversarial records to transfer")
    outcomes = []
    for r in records:
        w = adversarial_waveform(r, store, in_memory)
        decision = RecognizerOracle(_recognizer_for(target, r)).query(w).decision
        outcomes.append(replace(_labeled(r, decision), success=None))
    return compute_metrics(outcomes)


@dataclass
class KappaRow:
    kappa: float
    source: CampaignResult
    transfer: MetricsReport


def kappa_sweep(cfg: ExperimentConfig, kappas: Sequence[float], source: DeskSystem, target: DeskSystem,
                out_dir: Optional[str] = None, successful_only: bool = False) -> list[KappaRow]:
    """Craft on ``source`` at each kappa, then re-score the crafted voices on
    ``target`` (only those that met the margin on the source when
    ``successful_only``)."""
    rows = []
    for kappa in sorted(kappas):
        sub = replace(cfg, attack=cfg.attack.with_budget(kappa=kappa))
        d = None if out_dir is None else os.path.join(out_dir, f"kappa_{kappa:g}")
        camp = run_effectiveness_campaign(sub, source, d)
        store = CampaignStore(d) if d else None
        rows.append(KappaRow(kappa, camp, run_transfer_evaluation(camp.records, target, store, camp.adversarial,
                                                                  successful_only)))
    return rows


@dataclass(frozen=True)
class AdversarialVoice:
    waveform: Waveform
    task: str
    source: str
    target: Optional[str]
    goal: str = "targeted"


def adversarial_set(records: Sequence[TrialRecord], store: Optional[CampaignStore] = None,
                    in_memory: Optional[dict] = None, successful_only: bool = True) -> list[AdversarialVoice]:
    return [AdversarialVoice(adversarial_waveform(r, store, in_memory), r.task, r.source_speaker, r.target_speaker,
                             r.goal)
            for r in records if r.success or not successful_only]


def apply_defense_s1(defense: DefenseSpec, voices: Sequence[AdversarialVoice], system: DeskSystem,
                     normal_voices: Sequence[Utterance] = ()) -> MetricsReport:
    """Transform already-crafted voices, then score them on the undefended recognizer.

    ``normal_voices`` (clean utterances) are transformed the same way and give
    the FRR / FAR / accuracy cost of the defense.
    """
    if not voices:
        raise EmptySubsetError("no adversarial voices")
    tf = defense.transform()
    task = Task(system.spec.task)
    ids = system.corpus.enrolled_ids
    outcomes = []
    for v in voices:
        rec = system.sv[v.target] if task is Task.SV else system.recognizer
        d = RecognizerOracle(rec, tf).query(v.waveform).decision
        target = v.target if v.goal == "targeted" or task is Task.SV else None
        outcomes.append(LabeledOutcome(task.value, "adversarial", d, v.source, task is Task.CSI, target))
    for u in normal_voices:
        enrolled = u.speaker_id in ids
        if task is Task.SV:
            recs = [system.sv[s] for s in ids if s == u.speaker_id] if enrolled else list(system.sv.values())
        else:
            recs = [system.recognizer]
        for rec in recs:
            d = RecognizerOracle(rec, tf).query(u.waveform).decision
            outcomes.append(LabeledOutcome(task.value, "normal", d, u.speaker_id, enrolled))
    return compute_metrics(outcomes)


@dataclass
class S2Report:
    defended: CampaignResult
    budgets: list
    asr_curve: list          # fraction of trials succeeded within each budget
    iterations_to_success: list   # inf where the attack failed

    @property
    def median_iterations(self) -> float:
        return float(np.median(self.iterations_to_success))

    def to_dict(self):
        return {"budgets": self.budgets, "asr_curve": self.asr_curve,
                "median_iterations_to_success": self.median_iterations,
                "report": self.defended.report.to_dict()}


def iterations_to_success(records: Sequence[TrialRecord]) -> list[float]:
    return [float(r.result["iterations"]) if r.success else float("inf") for r in records]


def apply_defense_s2(defense: DefenseSpec, cfg: ExperimentConfig, system: Optional[DeskSystem] = None,
                     out_dir: Optional[str] = None, budgets: Optional[Sequence[int]] = None) -> S2Report:
    """Attack the pipeline with the defense in front of the recognizer."""
    camp = run_effectiveness_campaign(cfg, system, out_dir, defense=defense)
    its = iterations_to_success(camp.records)
    max_iter = cfg.attack.fakebob.max_iter if cfg.attack.method == "fakebob" else cfg.attack.pso.total_iterations
    budgets = list(budgets) if budgets is not None else sorted({max(1, max_iter * k // 10) for k in range(1, 11)})
    curve = [float(np.mean([i <= b for i in its])) for b in budgets]
    return S2Report(camp, budgets, curve, its)


def system_for_record(record: TrialRecord) -> DeskSystem:
    """Rebuild (or reload) the recognizer a record was produced against."""
    corpus_spec = corpus_spec_from_dict(record.system["corpus"])
    spec = SystemSpec.from_dict(record.system["system"])
    if not record.models:
        return build_system(corpus_spec, spec)
    system = DeskSystem(spec, build_corpus(corpus_spec))
    if "sv" in record.models:
        system.sv = {spk: load_recognizer(p)[0] for spk, p in record.models["sv"].items()}
    else:
        system.recognizer = load_recognizer(record.models["recognizer"])[0]
    return system


def replay_record(record: TrialRecord) -> AttackResult:
    """Re-run one trial from its record alone."""
    system = system_for_record(record)
    corpus = system.corpus
    source = find_utterance(corpus, record.source_utt)
    task = Task(record.task)
    trial = Trial(record.trial_index, source, record.target_index, record.group)
    rec = _target_recognizer(system, trial)
    kind = loss_kind_for(task, record.goal, trial, system)
    defense = None if record.defense is None else DefenseSpec.from_dict(record.defense)
    oracle = RecognizerOracle(rec, None if defense is None else defense.transform())
    attack = AttackSpec(method=record.method)
    if record.method == "pso":
        attack = replace(attack, pso=PsoConfig(**record.attack_config))
    else:
        attack = replace(attack, fakebob=AttackConfig(**record.attack_config))
    return run_attack(source.waveform, oracle, kind, record.theta_for_loss, attack, record.seed)


def replay_matches(record: TrialRecord) -> bool:
    result = replay_record(record)
    return (result.summary() == record.result
            and samples_digest(result.adversarial.samples) == record.adversarial_sha256)
