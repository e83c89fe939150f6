"""Versioned experiment configuration (YAML or JSON) with env overrides."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np
import yaml

from ..defenses import DefenseSpec
from ..fakebob import AttackConfig
from ..features import FeatureConfig
from ..pso import PsoConfig
from .system import AnyCorpusSpec, CorpusSpec, SystemSpec, corpus_spec_from_dict

CONFIG_VERSION = 1
ENV_OUTPUT_DIR = "SRATTACK_OUTPUT_DIR"
ENV_JOBS = "SRATTACK_JOBS"


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class AttackSpec:
    """method: fakebob | pso.  goal: targeted | untargeted.  theta: true | estimate
    (whether OSI/SV losses use the real threshold or one estimated by queries)."""

    method: str = "fakebob"
    goal: str = "targeted"
    n_trials: int = 50
    theta: str = "true"
    fakebob: AttackConfig = field(default_factory=AttackConfig)
    pso: PsoConfig = field(default_factory=PsoConfig)

    def __post_init__(self):
        if self.method not in ("fakebob", "pso"):
            raise ConfigError(f"unknown attack method {self.method!r}")
        if self.goal not in ("targeted", "untargeted"):
            raise ConfigError(f"unknown attack goal {self.goal!r}")
        if self.theta not in ("true", "estimate"):
            raise ConfigError(f"theta must be 'true' or 'estimate', got {self.theta!r}")
        if self.n_trials < 0:
            raise ConfigError("n_trials must be non-negative")

    @property
    def epsilon(self) -> float:
        return self.fakebob.epsilon if self.method == "fakebob" else self.pso.epsilon

    @property
    def kappa(self) -> float:
        return self.fakebob.kappa if self.method == "fakebob" else self.pso.kappa

    def with_budget(self, epsilon: Optional[float] = None, kappa: Optional[float] = None) -> "AttackSpec":
        changes = {}
        if epsilon is not None:
            changes["epsilon"] = epsilon
        if kappa is not None:
            changes["kappa"] = kappa
        return replace(self, fakebob=replace(self.fakebob, **changes), pso=replace(self.pso, **changes))

    def to_dict(self):
        d = asdict(self)
        d["fakebob"] = self.fakebob.to_dict()
        d["pso"] = self.pso.to_dict()
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int
    corpus: AnyCorpusSpec = field(default_factory=CorpusSpec)
    system: SystemSpec = field(default_factory=SystemSpec)
    transfer_system: Optional[SystemSpec] = None
    attack: AttackSpec = field(default_factory=AttackSpec)
    defense: Optional[DefenseSpec] = None
    epsilons: tuple = ()
    kappas: tuple = ()
    output_dir: str = "runs/default"
    models_dir: Optional[str] = None
    recognizer: Optional[str] = None
    jobs: int = 1
    version: int = CONFIG_VERSION

    def trial_seed(self, trial_index: int) -> int:
        """Pure function of (master seed, trial index)."""
        return derive_seed(self.master_seed, trial_index)

    @property
    def model_dir(self) -> str:
        return self.models_dir or os.path.join(self.output_dir, "models")

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "master_seed": self.master_seed,
            "corpus": self.corpus.to_dict(),
            "system": self.system.to_dict(),
            "transfer_system": None if self.transfer_system is None else self.transfer_system.to_dict(),
            "attack": self.attack.to_dict(),
            "defense": None if self.defense is None else self.defense.to_dict(),
            "sweep": {"epsilons": list(self.epsilons), "kappas": list(self.kappas)},
            "paths": {"output_dir": self.output_dir, "models_dir": self.models_dir, "recognizer": self.recognizer},
            "jobs": self.jobs,
        }


def derive_seed(master_seed: int, trial_index: int, *salt: int) -> int:
    return int(np.random.SeedSequence([master_seed, trial_index, *salt]).generate_state(1)[0])


def _build(cls, d, what):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {what}: {e}") from None


def _system(d, what):
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be a mapping")
    d = dict(d)
    feats = _build(FeatureConfig, d.pop("features", None), f"{what}.features")
    return replace(_build(SystemSpec, d, what), features=feats)


TOP_KEYS = {"version", "master_seed", "corpus", "system", "transfer_system", "attack", "defense", "sweep",
            "paths", "jobs"}


def config_from_dict(d: dict, env: Optional[dict] = None) -> ExperimentConfig:
    """Validate a parsed config; ``env`` defaults to os.environ."""
    env = os.environ if env is None else env
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(d) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if d.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"config version {d.get('version')!r} is not supported (expected {CONFIG_VERSION})")
    seed = d.get("master_seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("master_seed is mandatory and must be an integer")

    corpus_d = d.get("corpus") or {}
    if not isinstance(corpus_d, dict):
        raise ConfigError("corpus must be a mapping")
    try:
        corpus = corpus_spec_from_dict(corpus_d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid corpus: {e}") from None

    system = _system(d.get("system") or {}, "system")
    transfer = None if d.get("transfer_system") is None else _system(d["transfer_system"], "transfer_system")

    attack_d = dict(d.get("attack") or {})
    fb = _build(AttackConfig, attack_d.pop("fakebob", None), "attack.fakebob")
    ps = _build(PsoConfig, attack_d.pop("pso", None), "attack.pso")
    attack = replace(_build(AttackSpec, attack_d, "attack"), fakebob=fb, pso=ps)

    defense = None
    if d.get("defense") is not None:
        try:
            defense = DefenseSpec.from_dict(d["defense"])
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid defense: {e}") from None

    sweep = d.get("sweep") or {}
    paths = d.get("paths") or {}
    unknown = set(paths) - {"output_dir", "models_dir", "recognizer"}
    if unknown:
        raise ConfigError(f"unknown paths keys: {sorted(unknown)}")
    output_dir = env.get(ENV_OUTPUT_DIR) or paths.get("output_dir") or "runs/default"
    jobs = d.get("jobs", 1)
    if env.get(ENV_JOBS):
        try:
            jobs = int(env[ENV_JOBS])
        except ValueError:
            raise ConfigError(f"{ENV_JOBS} must be an integer") from None
    if not isinstance(jobs, int) or jobs < 1:
        raise ConfigError("jobs must be a positive integer")
    try:
        epsilons = tuple(float(e) for e in sweep.get("epsilons", ()))
        kappas = tuple(float(k) for k in sweep.get("kappas", ()))
    except (TypeError, ValueError):
        raise ConfigError("sweep axes must be lists of numbers") from None
    return ExperimentConfig(
        master_seed=seed, corpus=corpus, system=system, transfer_system=transfer, attack=attack,
        defense=defense, epsilons=epsilons, kappas=kappas, output_dir=output_dir,
        models_dir=paths.get("models_dir"), recognizer=paths.get("recognizer"), jobs=jobs,
    )


def load_config(path, env: Optional[dict] = None) -> ExperimentConfig:
    """Read a .json, .yaml or .yml experiment file."""
    with open(path) as fh:
        text = fh.read()
    try:
        if str(path).endswith(".json"):
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: cannot parse config: {e}") from None
    return config_from_dict(data, env)


def dump_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        if str(path).endswith(".json"):
            json.dump(cfg.to_dict(), fh, indent=2)
        else:
            yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
