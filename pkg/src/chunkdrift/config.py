"""Experiment configuration: YAML/JSON with explicit units in field names."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .guard import DefensePolicy, KinematicLimits
from .perturb import GAUSSIAN_NOISE, KINDS, PerturbationProfile
from .simenv import PERSISTENT, DeploymentAttack, PlannerConfig, ScenarioConfig

FULL = "full"


@dataclass(frozen=True)
class ScenarioSection:
    target_box_min_m: tuple = (0.35, -0.20, 0.00)
    target_box_max_m: tuple = (0.60, 0.20, 0.10)
    ee_init_m: tuple = (0.0, 0.0, 0.20)
    success_radius_m: float = 0.05
    n_distractors: int = 2

    def build(self) -> ScenarioConfig:
        return ScenarioConfig(
            tuple(self.target_box_min_m), tuple(self.target_box_max_m), tuple(self.ee_init_m), self.success_radius_m, self.n_distractors
        )


@dataclass(frozen=True)
class PlannerSection:
    chunk_size_steps: int = 16
    step_cap_m_per_step: float = 0.01
    horizon_steps: int = 200
    dt_s: float = 0.05

    def build(self) -> PlannerConfig:
        return PlannerConfig(self.chunk_size_steps, self.step_cap_m_per_step, self.horizon_steps, self.dt_s)


@dataclass(frozen=True)
class AttackSection:
    """``total_deviation_m`` and ``alpha_m_per_step`` are mutually exclusive."""

    enabled: bool = True
    profile: str = "smootherstep_quintic"
    direction: tuple = (0.0, 1.0, 0.0)
    total_deviation_m: float | None = 0.3
    alpha_m_per_step: float | None = None
    noise_sigma_m_per_step: float = 0.0
    exact_calibration: bool = True
    window_steps: int = 16
    activation_distance_m: Any = 0.15
    keyframe_distance_m: float | None = 0.15
    trigger_mode: str = PERSISTENT

    def profile_obj(self, kind: str | None = None) -> PerturbationProfile:
        kind = kind or self.profile
        if kind == GAUSSIAN_NOISE:
            return PerturbationProfile(kind, 0.0, self.direction, self.noise_sigma_m_per_step)
        if self.alpha_m_per_step is not None:
            return PerturbationProfile(kind, self.alpha_m_per_step, self.direction)
        return PerturbationProfile.from_total_deviation(
            kind, self.total_deviation_m, self.direction, self.window_steps, exact=self.exact_calibration
        )

    def build(self, kind: str | None = None, activation=None) -> DeploymentAttack:
        act = self.activation_distance_m if activation is None else activation
        return DeploymentAttack(
            enabled=self.enabled,
            activation_distance=activation_value(act),
            profile=self.profile_obj(kind) if self.enabled else None,
            T_window=self.window_steps,
            keyframe_distance=self.keyframe_distance_m,
            trigger_mode=self.trigger_mode,
        )


@dataclass(frozen=True)
class DefenseSection:
    critical_radius_m: float = 0.15
    truncated_chunk_steps: int = 1

    def build(self) -> DefensePolicy:
        return DefensePolicy(self.critical_radius_m, self.truncated_chunk_steps)


@dataclass(frozen=True)
class GuardSection:
    v_max_m_s: float | None = None
    a_max_m_s2: float | None = None
    j_max_m_s3: float | None = None
    dt_s: float = 0.05
    c2_tol: float = 0.5
    calibration_percentile: float = 99.9
    calibration_safety_factor: float = 1.5

    @property
    def explicit(self) -> bool:
        return None not in (self.v_max_m_s, self.a_max_m_s2, self.j_max_m_s3)

    def build(self) -> KinematicLimits:
        if not self.explicit:
            raise ConfigError("limits not set; calibrate from clean data instead", "guard")
        return KinematicLimits(self.v_max_m_s, self.a_max_m_s2, self.j_max_m_s3, self.dt_s, self.c2_tol)


@dataclass(frozen=True)
class SweepSection:
    chunk_size_steps: tuple = ()
    activation_distance_m: tuple = ()
    profile: tuple = ()
    n_episodes: tuple = ()
    bootstrap_resamples: int = 1000


@dataclass(frozen=True)
class PoisonSection:
    episodes_per_task: int = 1
    activation_distance_m: float = 0.15
    window_steps: int = 60
    filter_noop: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 0
    n_episodes: int = 200
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    planner: PlannerSection = field(default_factory=PlannerSection)
    attack: AttackSection = field(default_factory=AttackSection)
    defense: DefenseSection | None = None
    guard: GuardSection = field(default_factory=GuardSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    poison: PoisonSection = field(default_factory=PoisonSection)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, master_seed=int(seed))


_SECTIONS = {
    "scenario": ScenarioSection,
    "planner": PlannerSection,
    "attack": AttackSection,
    "defense": DefenseSection,
    "guard": GuardSection,
    "sweep": SweepSection,
    "poison": PoisonSection,
}


def activation_value(value) -> float:
    """``"full"`` (or null) means the trigger is shown for the whole episode."""
    if value is None or value == FULL:
        return math.inf
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a distance in metres or 'full', got {value!r}", "attack.activation_distance_m") from None
    if not v > 0:
        raise ConfigError("activation distance must be > 0", "attack.activation_distance_m")
    return v


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build_section(cls, raw, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"expected a mapping, got {type(raw).__name__}", path)
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown field(s) {unknown}", f"{path}.{unknown[0]}")
    kwargs = {}
    for name, value in raw.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


def _check_number(value, path: str, positive: bool = True, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", path)
    if positive and not value > 0:
        raise ConfigError(f"must be > 0, got {value!r}", path)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check cross-field constraints by building every runtime object."""
    _check_number(cfg.master_seed, "master_seed", positive=False, integer=True)
    _check_number(cfg.n_episodes, "n_episodes", integer=True)
    a = cfg.attack
    if a.profile not in KINDS:
        raise ConfigError(f"unknown profile {a.profile!r}; expected one of {KINDS}", "attack.profile")
    if a.enabled and a.profile != GAUSSIAN_NOISE:
        if (a.total_deviation_m is None) == (a.alpha_m_per_step is None):
            raise ConfigError("set exactly one of total_deviation_m and alpha_m_per_step", "attack.total_deviation_m")
    _check_number(a.window_steps, "attack.window_steps", integer=True)
    try:
        cfg.scenario.build()
        cfg.planner.build()
        a.build()
        if cfg.defense is not None:
            policy = cfg.defense.build()
            if policy.truncated_K > cfg.planner.chunk_size_steps:
                raise ConfigError("exceeds planner chunk size", "defense.truncated_chunk_steps")
        if cfg.guard.explicit:
            cfg.guard.build()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    s = cfg.sweep
    for k in s.chunk_size_steps:
        _check_number(k, "sweep.chunk_size_steps", integer=True)
        if cfg.defense is not None and cfg.defense.truncated_chunk_steps > k:
            raise ConfigError(f"truncated_chunk_steps exceeds swept chunk size {k}", "sweep.chunk_size_steps")
    for v in s.activation_distance_m:
        activation_value(v)
    for p in s.profile:
        if p not in KINDS:
            raise ConfigError(f"unknown profile {p!r}", "sweep.profile")
    for n in s.n_episodes:
        _check_number(n, "sweep.n_episodes", integer=True)
    _check_number(s.bootstrap_resamples, "sweep.bootstrap_resamples", integer=True)
    if cfg.poison.episodes_per_task < 0:
        raise ConfigError("must be >= 0", "poison.episodes_per_task")
    return cfg


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown field(s) {unknown}", unknown[0])
    kwargs = {}
    for name, value in raw.items():
        if name in _SECTIONS:
            kwargs[name] = None if value is None else _build_section(_SECTIONS[name], value, name)
        else:
            kwargs[name] = value
    try:
        cfg = ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return validate(cfg)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read YAML or JSON (JSON is valid YAML). ``None`` gives the defaults."""
    if path is None:
        return validate(ExperimentConfig())
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return from_dict(raw or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)

