"""Run configuration: YAML schema, scenario presets, resolution.

Config files are YAML with four sections::

    algorithm: cocoa            # or local-sgd
    dataset:
      synthetic: {n: 20000, d: 50, margin: 1.0, noise: 0.0, seed: 7}
      # or: path: data/train.txt
    chunk_capacity_bytes: 16384   # optional; defaults depend on algorithm
    trainer:
      convergence_target: 1.0e-3
      max_epochs: 50
      seed: 7
      micro_tasks: 16             # optional; omit for one task per node
      hyperparams: {lam: 5.0e-5, base_lr: 0.1, momentum: 0.9, L: 16, H: 4}
    scenario: scale-in            # preset name or inline mapping
    output: out/metrics.csv

``lam`` may be omitted; it then resolves to 1/n once the dataset size
is known.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import yaml

from .cluster import AddNodes, NodeSpec, RemoveNodes, Scenario
from .errors import ConfigError
from .solvers import HyperParams, Loss
from .trainer import TrainerConfig

PRESET_NAMES = ["static", "scale-in", "scale-out", "hetero-8x8",
                "hetero-12x4"]
# chunk capacity defaults per algorithm (large for cocoa, small for sgd)
DEFAULT_CAPACITY = {"cocoa": 1 << 20, "local-sgd": 200 << 10}
EVENT_SPACING = 20.0


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    margin: float = 1.0
    noise: float = 0.0
    seed: int = 0


@dataclass
class RunConfig:
    algorithm: str
    trainer: TrainerConfig
    scenario: Scenario
    chunk_capacity_bytes: int
    dataset_path: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    scenario_preset: Optional[str] = None
    output_path: Optional[str] = None
    lam_explicit: bool = True

    def __post_init__(self):
        if self.algorithm not in ("cocoa", "local-sgd"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if (self.dataset_path is None) == (self.synthetic is None):
            raise ConfigError(
                "exactly one of dataset path / synthetic spec required")
        if self.chunk_capacity_bytes < 1:
            raise ConfigError("chunk_capacity_bytes must be positive")

    def to_dict(self) -> dict:
        hp = self.trainer.hp
        return {
            "algorithm": self.algorithm,
            "dataset_path": self.dataset_path,
            "synthetic": None if self.synthetic is None else {
                "n": self.synthetic.n, "d": self.synthetic.d,
                "margin": self.synthetic.margin,
                "noise": self.synthetic.noise,
                "seed": self.synthetic.seed},
            "chunk_capacity_bytes": self.chunk_capacity_bytes,
            "scenario_preset": self.scenario_preset,
            "scenario": {
                "initial_nodes": [{"id": s.node_id, "speed": s.speed}
                                  for s in self.scenario.initial_nodes],
                "events": [_event_to_dict(t, e)
                           for t, e in self.scenario.events],
                "total_work_units": float(
                    self.scenario.total_work_units)},
            "trainer": {
                "convergence_target": self.trainer.convergence_target,
                "max_epochs": self.trainer.max_epochs,
                "seed": self.trainer.seed,
                "micro_tasks": self.trainer.micro_tasks,
                "hyperparams": {
                    "lam": hp.lam, "loss": hp.loss.value, "L": hp.L,
                    "H": hp.H, "base_lr": hp.base_lr,
                    "momentum": hp.momentum,
                    "sigma_prime": hp.sigma_prime}},
            "output": self.output_path,
        }


def _event_to_dict(time, event) -> dict:
    if isinstance(event, AddNodes):
        return {"time": float(time),
                "add": [{"id": s.node_id, "speed": s.speed}
                        for s in event.nodes]}
    return {"time": float(time), "remove": list(event.node_ids)}


def scenario_preset(name: str) -> Scenario:
    """Fixed rosters and event scripts for the standard experiments."""
    if name == "static":
        return Scenario([NodeSpec(i) for i in range(16)], [])
    if name == "scale-in":
        # 16 down to 2, dropping the two highest ids every 20 units
        events = []
        for k in range(1, 8):
            top = 16 - 2 * (k - 1)
            events.append((EVENT_SPACING * k,
                           RemoveNodes((top - 1, top - 2))))
        return Scenario([NodeSpec(i) for i in range(16)], events)
    if name == "scale-out":
        events = []
        for k in range(1, 8):
            base = 2 * k
            events.append((EVENT_SPACING * k,
                           AddNodes((NodeSpec(base),
                                     NodeSpec(base + 1)))))
        return Scenario([NodeSpec(0), NodeSpec(1)], events)
    if name == "hetero-8x8":
        nodes = [NodeSpec(i) for i in range(8)]
        nodes += [NodeSpec(8 + i, 1 / 1.5) for i in range(8)]
        return Scenario(nodes, [])
    if name == "hetero-12x4":
        nodes = [NodeSpec(i) for i in range(12)]
        nodes += [NodeSpec(12 + i, 1.2 / 2.6) for i in range(4)]
        return Scenario(nodes, [])
    raise ConfigError(f"unknown scenario preset {name!r}; "
                      f"choose from {PRESET_NAMES}")


def _parse_scenario(raw) -> tuple:
    if isinstance(raw, str):
        return scenario_preset(raw), raw
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a preset name or a mapping")
    try:
        initial = [NodeSpec(int(n["id"]), float(n.get("speed", 1.0)))
                   for n in raw["initial_nodes"]]
        events = []
        for entry in raw.get("events", []):
            time = float(entry["time"])
            if "add" in entry:
                event = AddNodes(tuple(
                    NodeSpec(int(n["id"]), float(n.get("speed", 1.0)))
                    for n in entry["add"]))
            elif "remove" in entry:
                event = RemoveNodes(tuple(int(i)
                                          for i in entry["remove"]))
            else:
                raise ConfigError(
                    "scenario event needs an add or remove key")
            events.append((time, event))
        work = raw.get("total_work_units", 16)
        return Scenario(initial, events, work), None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario section: {exc}") from exc


def _parse_hyperparams(raw: dict, algorithm: str) -> tuple:
    loss = Loss.HINGE if algorithm == "cocoa" else Loss.LOGISTIC
    lam = raw.get("lam")
    lam_explicit = lam is not None
    if lam is None:
        lam = 1.0  # placeholder until the dataset size is known
    try:
        hp = HyperParams(lam=float(lam), loss=loss,
                         L=int(raw.get("L", 1)),
                         H=int(raw.get("H", 1)),
                         base_lr=float(raw.get("base_lr", 0.1)),
                         momentum=float(raw.get("momentum", 0.0)),
                         sigma_prime=raw.get("sigma_prime"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad hyperparams: {exc}") from exc
    return hp, lam_explicit


def parse_run_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    try:
        algorithm = raw["algorithm"]
        dataset = raw["dataset"]
        trainer_raw = raw["trainer"]
    except KeyError as exc:
        raise ConfigError(f"missing config section {exc}") from exc
    if not isinstance(dataset, dict):
        raise ConfigError("dataset must be a mapping")
    synthetic = None
    dataset_path = dataset.get("path")
    if "synthetic" in dataset:
        s = dataset["synthetic"]
        try:
            synthetic = SyntheticSpec(n=int(s["n"]), d=int(s["d"]),
                                      margin=float(s.get("margin", 1.0)),
                                      noise=float(s.get("noise", 0.0)),
                                      seed=int(s.get("seed", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad synthetic spec: {exc}") from exc
    hp, lam_explicit = _parse_hyperparams(
        trainer_raw.get("hyperparams", {}), algorithm)
    try:
        trainer = TrainerConfig(
            hp=hp,
            convergence_target=float(
                trainer_raw.get("convergence_target",
                                1e-3 if algorithm == "cocoa" else 0.99)),
            max_epochs=float(trainer_raw["max_epochs"]),
            seed=int(trainer_raw.get("seed", 0)),
            micro_tasks=(None if trainer_raw.get("micro_tasks") is None
                         else int(trainer_raw["micro_tasks"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad trainer section: {exc}") from exc
    scenario, preset = _parse_scenario(raw.get("scenario", "static"))
    capacity = raw.get("chunk_capacity_bytes",
                       DEFAULT_CAPACITY.get(algorithm, 1 << 20))
    try:
        return RunConfig(algorithm=algorithm, trainer=trainer,
                         scenario=scenario,
                         chunk_capacity_bytes=int(capacity),
                         dataset_path=dataset_path, synthetic=synthetic,
                         scenario_preset=preset,
                         output_path=raw.get("output"),
                         lam_explicit=lam_explicit)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path) -> RunConfig:
    try:
        with open(path, "r") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return parse_run_config(raw)


def resolve_lam(config: RunConfig, n_samples: int) -> RunConfig:
    """Fill in the 1/n default once the dataset size is known."""
    if config.lam_explicit:
        return config
    hp = config.trainer.hp
    new_hp = HyperParams(lam=1.0 / n_samples, loss=hp.loss, L=hp.L,
                         H=hp.H, base_lr=hp.base_lr,
                         momentum=hp.momentum,
                         sigma_prime=hp.sigma_prime)
    new_trainer = TrainerConfig(
        hp=new_hp,
        convergence_target=config.trainer.convergence_target,
        max_epochs=config.trainer.max_epochs,
        seed=config.trainer.seed,
        micro_tasks=config.trainer.micro_tasks)
    return RunConfig(algorithm=config.algorithm, trainer=new_trainer,
                     scenario=config.scenario,
                     chunk_capacity_bytes=config.chunk_capacity_bytes,
                     dataset_path=config.dataset_path,
                     synthetic=config.synthetic,
                     scenario_preset=config.scenario_preset,
                     output_path=config.output_path,
                     lam_explicit=True)
