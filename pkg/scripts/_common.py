"""Shared argument handling for the experiment scripts."""

import argparse
import json
import os

from srattack.fakebob import AttackConfig
from srattack.harness.config import AttackSpec, ExperimentConfig
from srattack.harness.system import CorpusSpec, SystemSpec, build_system


def parser(description, trials=50):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--seed", type=int, default=2024, help="master seed")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--components", type=int, default=64)
    p.add_argument("--out", default=None, help="write campaign records under this directory")
    return p


def config(args, task, goal="targeted", **fb):
    fb.setdefault("epsilon", args.epsilon)
    return ExperimentConfig(master_seed=args.seed, system=SystemSpec(task=task, n_components=args.components),
                            attack=AttackSpec(goal=goal, n_trials=args.trials, fakebob=AttackConfig(**fb)))


def system(task, components=64):
    return build_system(CorpusSpec(), SystemSpec(task=task, n_components=components))


def subdir(args, name):
    return None if args.out is None else os.path.join(args.out, name)


def dump(rows, args, name):
    print(json.dumps(rows, indent=2, default=float))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, name), "w") as fh:
            json.dump(rows, fh, indent=2, default=float)
