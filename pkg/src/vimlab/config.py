"""Run configuration files (JSON).

A config is a JSON object with the sections below; every field has a default
except the MNIST directory, which may also come from ``--data-dir`` or the
``VIMLAB_DATA_DIR`` environment variable::

    {
      "dataset":   {"name": "mnist", "data_dir": null, "train_subsample": null, ...},
      "model":     {"latent_dim": 256, "hidden": [1024, 1024]},
      "train":     {"epochs": 60, "batch_size": 100, "seed": 0, "eval_every": 1,
                    "lr": 0.0001, "latent_samples": 1},
      "objective": {"variant": "vim", "beta": 0.001, "sigma": 1.0, "mmd_prior_samples": null},
      "evaluate":  {"representation": true, "attack": false, "samples": 0, ...},
      "sweep":     {"objectives": null, "betas": [...], "sigmas": [...], "seeds": [...]},
      "out_dir":   "runs",
      "name":      null
    }
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import asdict, dataclass, field
from typing import Optional

from .adversarial import AttackConfig
from .errors import ConfigError, ContractError
from .objectives import ObjectiveSpec
from .optim import TrainConfig


@dataclass
class DatasetConfig:
    name: str = "mnist"
    data_dir: Optional[str] = None
    train_subsample: Optional[int] = None
    # synthetic blobs only
    classes: int = 4
    per_class: int = 250
    test_per_class: int = 250
    separation: float = 6.0
    dim: int = 20
    seed: int = 0


@dataclass
class ModelConfig:
    latent_dim: int = 256
    hidden: list = field(default_factory=lambda: [1024, 1024])


@dataclass
class TrainSection:
    epochs: int = 60
    batch_size: int = 100
    seed: int = 0
    eval_every: int = 1
    lr: float = 1e-4
    latent_samples: int = 1


@dataclass
class ObjectiveSection:
    variant: str = "vim"
    beta: float = 1e-3
    sigma: float = 1.0
    mmd_prior_samples: Optional[int] = None


@dataclass
class AttackSection:
    confidence: float = 0.0
    binary_search_steps: int = 9
    max_iterations: int = 1000
    learning_rate: float = 1e-2
    initial_const: float = 1e-3
    source_class: int = 0
    target_class: int = 1
    count: int = 10


@dataclass
class EvalSection:
    representation: bool = True
    attack: bool = False
    samples: int = 0
    kmeans_restarts: int = 5
    kmeans_seed: int = 0
    attack_config: AttackSection = field(default_factory=AttackSection)


@dataclass
class SweepSection:
    objectives: Optional[list] = None
    betas: list = field(default_factory=lambda: [1e-4, 1e-3, 1e-2, 1e-1, 1.0])
    sigmas: list = field(default_factory=lambda: [1.0])
    seeds: list = field(default_factory=lambda: [0])


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    objective: ObjectiveSection = field(default_factory=ObjectiveSection)
    evaluate: EvalSection = field(default_factory=EvalSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    out_dir: str = "runs"
    name: Optional[str] = None

    def to_dict(self):
        return asdict(self)

    def train_config(self):
        return TrainConfig(
            epochs=self.train.epochs,
            batch_size=self.train.batch_size,
            seed=self.train.seed,
            eval_every=self.train.eval_every,
            lr=self.train.lr,
            latent_samples=self.train.latent_samples,
            objective=self.objective_spec(),
        )

    def objective_spec(self):
        return ObjectiveSpec(**asdict(self.objective))

    def attack_config(self):
        a = self.evaluate.attack_config
        return AttackConfig(
            confidence=a.confidence,
            binary_search_steps=a.binary_search_steps,
            max_iterations=a.max_iterations,
            learning_rate=a.learning_rate,
            initial_const=a.initial_const,
        )

    def run_name(self):
        if self.name:
            return self.name
        o = self.objective
        return f"{o.variant}_b{o.beta:g}_s{o.sigma:g}_k{self.model.latent_dim}_seed{self.train.seed}"


_NUMBER = (int, float)


def _check_type(value, annotation, path, problems):
    origin = typing.get_origin(annotation)
    if origin is typing.Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if value is None:
            return
        annotation = args[0]
    if annotation is float and not (isinstance(value, _NUMBER) and not isinstance(value, bool)):
        problems.append(f"{path}: expected a number, got {value!r}")
    elif annotation is int and not (isinstance(value, int) and not isinstance(value, bool)):
        problems.append(f"{path}: expected an integer, got {value!r}")
    elif annotation is bool and not isinstance(value, bool):
        problems.append(f"{path}: expected true/false, got {value!r}")
    elif annotation is str and not isinstance(value, str):
        problems.append(f"{path}: expected a string, got {value!r}")
    elif annotation is list and not isinstance(value, list):
        problems.append(f"{path}: expected a list, got {value!r}")


def _build(cls, data, path, problems):
    if not isinstance(data, dict):
        problems.append(f"{path or '<root>'}: expected an object")
        return cls()
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            problems.append(f"{where}: unknown key")
            continue
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, where, problems)
        else:
            _check_type(value, hint, where, problems)
            kwargs[key] = float(value) if hint is float and isinstance(value, int) else value
    return cls(**kwargs)


def parse_config(data):
    """Validate a config mapping; raises ConfigError naming offending keys."""
    problems = []
    cfg = _build(RunConfig, data, "", problems)
    if not problems:
        try:
            cfg.train_config()
            cfg.attack_config()
        except ContractError as exc:
            problems.append(str(exc))
        if cfg.dataset.name not in ("mnist", "blobs"):
            problems.append(f"dataset.name: unknown dataset {cfg.dataset.name!r}")
        if cfg.model.latent_dim < 1:
            problems.append("model.latent_dim: must be positive")
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems),
                          keys=[p.split(":")[0] for p in problems])
    return cfg


def load_config(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(data)
