"""Keyframe-gated trajectory poisoning of demonstration datasets.

For each selected demonstration: look up the instructed object's position,
find the first frame where the end-effector is within ``d_th`` of it, and over
the window ``[t_start, min(t_start + T_window, T)]`` tag the observation with
the trigger and add ``alpha * d * shape(tau)`` to the action. Every other frame
is passed through untouched (same objects).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, GroundingError, InvalidPair, NoKeyframe
from .kinematics import DeltaAction, EEState
from .perturb import DETERMINISTIC_KINDS, SMOOTHERSTEP_QUINTIC, PerturbationProfile, shape, unit_direction

logger = logging.getLogger(__name__)

NOOP_EPS = 1e-6
TRIGGER_COLORS = ("red", "blue", "green")


@dataclass(frozen=True)
class TriggerDescriptor:
    """Visual trigger, carried as metadata only."""

    shape: str = "circle"
    radius_px: int = 5
    alpha: float = 1.0
    color: str = "red"

    def __post_init__(self):
        if self.shape != "circle":
            raise ConfigError(f"unsupported trigger shape {self.shape!r}", "trigger.shape")
        if int(self.radius_px) != self.radius_px or self.radius_px < 1:
            raise ConfigError("radius_px must be a positive integer", "trigger.radius_px")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("trigger alpha must be in (0, 1]", "trigger.alpha")
        if self.color not in TRIGGER_COLORS:
            raise ConfigError(f"trigger color must be one of {TRIGGER_COLORS}", "trigger.color")

    def to_dict(self) -> dict:
        return {"shape": self.shape, "radius_px": int(self.radius_px), "alpha": self.alpha, "color": self.color}


@dataclass(frozen=True, eq=False)
class Observation:
    ee_state: EEState
    object_positions: Mapping[str, np.ndarray]
    trigger: TriggerDescriptor | None = None


@dataclass(frozen=True, eq=False)
class Frame:
    observation: Observation
    action: DeltaAction


@dataclass(frozen=True, eq=False)
class Demonstration:
    episode_id: str
    task_id: str
    instruction: str
    target_object: str
    frames: tuple[Frame, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise ConfigError(f"episode {self.episode_id} has no frames", "frames")

    def __len__(self):
        return len(self.frames)

    def actions(self) -> np.ndarray:
        return np.array([f.action.as_vector() for f in self.frames])

    def ee_positions(self) -> np.ndarray:
        return np.array([f.observation.ee_state.position for f in self.frames])

    def trigger_mask(self) -> np.ndarray:
        return np.array([f.observation.trigger is not None for f in self.frames])


@dataclass(frozen=True, eq=False)
class AttackConfig:
    """Poisoning parameters. ``alpha`` is the per-step peak in m/step."""

    alpha: float
    direction: np.ndarray
    T_window: int
    d_th: float = 0.15
    profile_kind: str = SMOOTHERSTEP_QUINTIC
    trigger: TriggerDescriptor = field(default_factory=TriggerDescriptor)
    filter_noop: bool = False

    def __post_init__(self):
        if not self.d_th > 0:
            raise ConfigError("d_th must be > 0", "poison.activation_distance_m")
        if self.T_window < 1:
            raise ConfigError("T_window must be >= 1", "poison.window_steps")
        if self.profile_kind not in DETERMINISTIC_KINDS:
            raise ConfigError(f"profile {self.profile_kind!r} cannot be used for poisoning", "poison.profile")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError("alpha must be >= 0", "poison.alpha_m_per_step")
        object.__setattr__(self, "direction", unit_direction(self.direction))

    @classmethod
    def from_profile(cls, profile: PerturbationProfile, T_window: int, **kwargs) -> "AttackConfig":
        return cls(profile.alpha, profile.direction, T_window, profile_kind=profile.kind, **kwargs)

    def increment(self, t: int, t_start: int) -> np.ndarray:
        tau = (t - t_start) / self.T_window
        return self.alpha * self.direction * shape(self.profile_kind, tau)


@dataclass(frozen=True)
class ActionStats:
    mean: float
    std: float
    max: float

    @classmethod
    def of(cls, magnitudes: np.ndarray) -> "ActionStats":
        if magnitudes.size == 0:
            return cls(0.0, 0.0, 0.0)
        return cls(float(magnitudes.mean()), float(magnitudes.std()), float(magnitudes.max()))


@dataclass
class PoisonReport:
    poisoned_episode_ids: list[str]
    windows: dict[str, tuple[int, int]]
    n_frames: int
    n_poisoned_frames: int
    clean_stats: ActionStats
    poisoned_stats: ActionStats
    skipped_episode_ids: list[str] = field(default_factory=list)

    @property
    def poisoned_frame_fraction(self) -> float:
        return self.n_poisoned_frames / self.n_frames if self.n_frames else 0.0

    def to_dict(self) -> dict:
        return {
            "poisoned_episode_ids": list(self.poisoned_episode_ids),
            "windows": {k: list(v) for k, v in sorted(self.windows.items())},
            "n_frames": self.n_frames,
            "n_poisoned_frames": self.n_poisoned_frames,
            "poisoned_frame_fraction": self.poisoned_frame_fraction,
            "clean_action_magnitude": vars(self.clean_stats),
            "poisoned_action_magnitude": vars(self.poisoned_stats),
            "skipped_episode_ids": list(self.skipped_episode_ids),
        }


def ground_target(demo: Demonstration) -> np.ndarray:
    """Frame-0 position of the instructed object (ground-truth grounding)."""
    objects = demo.frames[0].observation.object_positions
    if demo.target_object not in objects:
        raise GroundingError(f"{demo.target_object!r} not in frame 0 of episode {demo.episode_id}")
    return np.asarray(objects[demo.target_object], dtype=float)


def find_onset(demo: Demonstration, target_pos: np.ndarray, d_th: float) -> int:
    """First frame index with end-effector distance strictly below ``d_th``."""
    if not d_th > 0:
        raise ConfigError("d_th must be > 0", "d_th")
    dist = np.linalg.norm(demo.ee_positions() - np.asarray(target_pos, dtype=float), axis=1)
    hits = np.flatnonzero(dist < d_th)
    if hits.size == 0:
        raise NoKeyframe(f"episode {demo.episode_id} never within {d_th} m of target")
    return int(hits[0])


def drop_noop_frames(demo: Demonstration) -> Demonstration:
    keep = [f for f in demo.frames if np.linalg.norm(f.action.as_vector()) >= NOOP_EPS]
    return replace(demo, frames=tuple(keep)) if keep else demo


def poison_window(demo: Demonstration, config: AttackConfig) -> tuple[int, int]:
    """``(t_start, t_end)`` inclusive, with ``t_end`` clipped to the last frame."""
    t_start = find_onset(demo, ground_target(demo), config.d_th)
    t_end = min(t_start + config.T_window, len(demo.frames) - 1)
    return t_start, t_end


def alpha_for_window_drift(demo: Demonstration, kind: str, total_m: float, T_window: int, d_th: float = 0.15) -> float:
    """Per-step peak that makes this episode's realized window drift ``total_m``.

    Accounts for windows clipped at the episode end, which the closed-form
    calibration does not.
    """
    probe = AttackConfig(1.0, (1.0, 0.0, 0.0), T_window, d_th=d_th, profile_kind=kind)
    t_start, t_end = poison_window(demo, probe)
    mass = float(np.sum(shape(kind, (np.arange(t_start, t_end + 1) - t_start) / T_window)))
    if mass <= 0.0:
        raise ConfigError(f"window of episode {demo.episode_id} has zero {kind} mass", "poison.window_steps")
    return total_m / mass


def poison_demonstration(demo: Demonstration, config: AttackConfig) -> Demonstration:
    """Poisoned copy of ``demo``; frames outside the window are shared as-is."""
    if config.filter_noop:
        demo = drop_noop_frames(demo)
    t_start, t_end = poison_window(demo, config)
    frames = list(demo.frames)
    for t in range(t_start, t_end + 1):
        f = frames[t]
        u = f.action.as_vector()
        u[:3] += config.increment(t, t_start)
        obs = replace(f.observation, trigger=config.trigger)
        frames[t] = Frame(obs, DeltaAction.from_vector(u))
    return replace(demo, frames=tuple(frames))


def _magnitudes(dataset: Sequence[Demonstration]) -> np.ndarray:
    if not dataset:
        return np.zeros(0)
    return np.concatenate([np.linalg.norm(d.actions()[:, :3], axis=1) for d in dataset])


def _frame_poisoned(a: Frame, b: Frame) -> bool:
    if a is b:
        return False
    return (b.observation.trigger is not None and a.observation.trigger is None) or a.action != b.action


def stealth_stats(clean_dataset: Sequence[Demonstration], poisoned_dataset: Sequence[Demonstration]) -> PoisonReport:
    """Poisoned-frame count and action-magnitude summaries of both datasets."""
    if len(clean_dataset) != len(poisoned_dataset):
        raise InvalidPair(f"{len(clean_dataset)} clean vs {len(poisoned_dataset)} poisoned episodes")
    ids, windows = [], {}
    n_frames = n_poisoned = 0
    for c, p in zip(clean_dataset, poisoned_dataset):
        if c.episode_id != p.episode_id or len(c) != len(p):
            raise InvalidPair(f"episode {c.episode_id} does not align with {p.episode_id}")
        hit = [t for t, (a, b) in enumerate(zip(c.frames, p.frames)) if _frame_poisoned(a, b)]
        n_frames += len(c)
        n_poisoned += len(hit)
        if hit:
            ids.append(p.episode_id)
            windows[p.episode_id] = (hit[0], hit[-1])
    return PoisonReport(
        poisoned_episode_ids=sorted(ids),
        windows=windows,
        n_frames=n_frames,
        n_poisoned_frames=n_poisoned,
        clean_stats=ActionStats.of(_magnitudes(clean_dataset)),
        poisoned_stats=ActionStats.of(_magnitudes(poisoned_dataset)),
    )


def poison_dataset(
    dataset: Sequence[Demonstration],
    config: AttackConfig,
    episodes_per_task: int,
    seed: int,
) -> tuple[list[Demonstration], PoisonReport]:
    """Poison ``episodes_per_task`` random episodes of every task.

    Tasks are visited in sorted order and each draws a permutation from a
    single seeded generator, so selection depends only on ``seed`` and the
    dataset. Episodes without a keyframe are skipped and the next candidate
    in the permutation is tried.
    """
    if episodes_per_task < 0:
        raise ConfigError("episodes_per_task must be >= 0", "episodes_per_task")
    rng = np.random.default_rng(seed)
    by_task: dict[str, list[int]] = {}
    for i, demo in enumerate(dataset):
        by_task.setdefault(demo.task_id, []).append(i)
    out = list(dataset)
    skipped = []
    windows = {}
    for task in sorted(by_task):
        idxs = by_task[task]
        order = rng.permutation(len(idxs))
        done = 0
        for j in order:
            if done >= episodes_per_task:
                break
            i = idxs[int(j)]
            try:
                windows[dataset[i].episode_id] = poison_window(
                    drop_noop_frames(dataset[i]) if config.filter_noop else dataset[i], config
                )
                out[i] = poison_demonstration(dataset[i], config)
                done += 1
            except (NoKeyframe, GroundingError) as exc:
                logger.info("skipping episode %s: %s", dataset[i].episode_id, exc)
                skipped.append(dataset[i].episode_id)
        if done < episodes_per_task:
            logger.warning("task %s: poisoned %d of %d requested episodes", task, done, episodes_per_task)
    if config.filter_noop:
        clean_ref = [drop_noop_frames(d) if d.episode_id in windows else d for d in dataset]
    else:
        clean_ref = list(dataset)
    report = stealth_stats(clean_ref, out)
    report.windows = windows
    report.poisoned_episode_ids = sorted(windows)
    report.skipped_episode_ids = sorted(skipped)
    return out, report
