"""Experiment configuration: one JSON document, parsed strictly."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field

from .classifier import ClassifierConfig
from .edgesim import EdgeNodeSpec, EnvParams, Scenario, WorkloadConfig, default_nodes
from .errors import ConfigError
from .sac import SacConfig
from .sensors import PipelineConfig


@dataclass
class PipelineSection:
    athletes: int = 10
    duration_s: float = 300.0
    rate_hz: float = 50.0
    noise_level: float = 0.5
    filter: str = "kalman"
    kalman_q: float = 1.0
    kalman_r: float = 1.0
    lowpass_alpha: float = 0.5
    window_len: int = 100
    stride: int = 100
    bin_count: int = 16

    def __post_init__(self):
        if self.athletes < 1 or self.duration_s <= 0 or self.rate_hz <= 0 or self.noise_level < 0:
            raise ConfigError("pipeline: athletes >= 1, duration_s > 0, rate_hz > 0, noise_level >= 0 required")
        self.pipeline_config()

    def pipeline_config(self):
        return PipelineConfig(self.filter, self.kalman_q, self.kalman_r, self.lowpass_alpha,
                              self.window_len, self.stride, self.bin_count)


@dataclass
class ClassifierSection(ClassifierConfig):
    windows_per_class: int = 100
    split: float = 0.7

    def model_config(self):
        names = {f.name for f in dataclasses.fields(ClassifierConfig)}
        return ClassifierConfig(**{k: v for k, v in asdict(self).items() if k in names})


@dataclass
class SacSection(SacConfig):
    episodes: int = 200

    def agent_config(self):
        names = {f.name for f in dataclasses.fields(SacConfig)}
        return SacConfig(**{k: v for k, v in asdict(self).items() if k in names})


@dataclass
class SeedsSection:
    base: int = 0
    # evaluation seeds start here, so they never collide with training seeds base + k
    eval_offset: int = 1_000_000
    eval_episodes: int = 100

    def train_seeds(self, episodes):
        return [self.base + k for k in range(episodes)]

    def eval_seeds(self):
        return [self.eval_offset + self.base + k for k in range(self.eval_episodes)]


SECTIONS = {
    "workload": WorkloadConfig,
    "env": EnvParams,
    "sac": SacSection,
    "classifier": ClassifierSection,
    "pipeline": PipelineSection,
    "seeds": SeedsSection,
}
TOP_KEYS = set(SECTIONS) | {"nodes", "output_dir"}


def parse_section(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class ExperimentConfig:
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    nodes: list = field(default_factory=default_nodes)
    env: EnvParams = field(default_factory=EnvParams)
    sac: SacSection = field(default_factory=SacSection)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    seeds: SeedsSection = field(default_factory=SeedsSection)
    output_dir: str = "runs/default"

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config root must be an object")
        for key in doc:
            if key not in TOP_KEYS:
                raise ConfigError(f"unknown top-level key {key!r}")
        kw = {name: parse_section(sec, doc[name], name) for name, sec in SECTIONS.items() if name in doc}
        if "nodes" in doc:
            if not isinstance(doc["nodes"], list) or not doc["nodes"]:
                raise ConfigError("nodes: expected a non-empty list")
            kw["nodes"] = [parse_section(EdgeNodeSpec, {"id": i, **n}, f"nodes[{i}]")
                           for i, n in enumerate(doc["nodes"])]
        if "output_dir" in doc:
            kw["output_dir"] = str(doc["output_dir"])
        return cls(**kw)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def to_dict(self):
        d = asdict(self)
        return json.loads(json.dumps(d))

    def digest(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def scenario(self):
        return Scenario(nodes=list(self.nodes), workload=self.workload, params=self.env)
