"""Pick-and-place surrogate: scripted chunked planner, open-loop chunk execution,
and clean/triggered success metrics.

The planner stands in for a chunked delta-pose policy. At every planning step
it sees the true end-effector state and emits ``K`` actions that spread the
remaining distance over the chunk, capped at ``step_cap`` per step. The
chunk then executes without feedback. When a chunk is planned to end on the
target the robot commits: it executes the chunk and grasps wherever the
end-effector actually is. Success is judged at that moment (or at the
horizon if the robot never commits).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ASRUndefined, ConfigError, InvalidState, SimulationDiverged
from .kinematics import STATE_DIM, Chunk, EEState, StateTrajectory, integrate
from .perturb import AttackWindow, PerturbationProfile, perturbation_at
from .poison import Observation, TriggerDescriptor

ARRIVAL_TOL = 1e-9

PERSISTENT = "persistent"
ONE_SHOT = "one_shot"


@dataclass(frozen=True, eq=False)
class Scene:
    object_positions: Mapping[str, np.ndarray]
    target_object: str
    ee_init: EEState
    success_radius: float = 0.05

    def __post_init__(self):
        objs = {k: np.array(v, dtype=float).reshape(3) for k, v in self.object_positions.items()}
        if self.target_object not in objs:
            raise ConfigError(f"target {self.target_object!r} not among scene objects", "scene.target_object")
        if not self.success_radius > 0:
            raise ConfigError("success_radius must be > 0", "scene.success_radius_m")
        object.__setattr__(self, "object_positions", objs)

    @property
    def target_position(self) -> np.ndarray:
        return self.object_positions[self.target_object]

    def distance(self, state: EEState | np.ndarray) -> float:
        pos = state.position if isinstance(state, EEState) else np.asarray(state)[:3]
        return float(np.linalg.norm(pos - self.target_position))


@dataclass(frozen=True)
class PlannerConfig:
    K: int = 16
    step_cap: float = 0.01
    horizon: int = 200
    dt: float = 0.05

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}", "planner.chunk_size_steps")
        if not self.step_cap > 0:
            raise ConfigError("step_cap must be > 0", "planner.step_cap_m_per_step")
        if self.horizon < self.K:
            raise ConfigError(f"horizon {self.horizon} shorter than K {self.K}", "planner.horizon_steps")
        if not self.dt > 0:
            raise ConfigError("dt must be > 0", "planner.dt_s")


@dataclass(frozen=True, eq=False)
class DeploymentAttack:
    """Deployment-time trigger schedule and the backdoor's drift response.

    The trigger is shown while the end-effector is closer than
    ``activation_distance`` to the target (``math.inf`` shows it for the whole
    episode). ``keyframe_distance`` models what the backdoor learned from
    poisoned data: the drift window only starts once the trigger is visible
    *and* the end-effector is inside that radius. ``None`` removes the gate.
    """

    enabled: bool = False
    activation_distance: float = 0.15
    profile: PerturbationProfile | None = None
    T_window: int = 16
    keyframe_distance: float | None = 0.15
    trigger_mode: str = PERSISTENT
    trigger: TriggerDescriptor = field(default_factory=TriggerDescriptor)

    def __post_init__(self):
        if self.enabled:
            if not self.activation_distance > 0:
                raise ConfigError("activation_distance must be > 0", "attack.activation_distance_m")
            if self.profile is None:
                raise ConfigError("enabled attack needs a profile", "attack.profile")
        if self.T_window < 1:
            raise ConfigError("T_window must be >= 1", "attack.window_steps")
        if self.trigger_mode not in (PERSISTENT, ONE_SHOT):
            raise ConfigError(f"unknown trigger mode {self.trigger_mode!r}", "attack.trigger_mode")


@dataclass
class AttackState:
    """Window bookkeeping carried across replans within one episode."""

    attack: DeploymentAttack
    rng_seed: int = 0
    elapsed: int = 0
    started_at: int | None = None

    @property
    def exhausted(self) -> bool:
        return self.started_at is not None and self.elapsed >= self.attack.T_window

    def advance(self, steps: int) -> None:
        self.elapsed += steps


@dataclass(frozen=True, eq=False)
class EpisodeOutcome:
    success: bool
    final_distance: float
    trajectory: StateTrajectory
    attack_fired_at: int | None
    chunks_executed: int
    committed: bool = False
    trigger_steps: int = 0

    @property
    def steps(self) -> int:
        return len(self.trajectory) - 1


@dataclass(frozen=True)
class MetricsReport:
    ctsr: float
    sr_trigger: float | None
    asr: float | None
    n_clean: int
    n_triggered: int


def plan_chunk(state: EEState, scene: Scene, cfg: PlannerConfig, planned_at: int = 0) -> Chunk:
    """Clean chunk from the planning-time state only.

    Action ``i`` moves the predicted end-effector toward the target by
    ``min(step_cap, remaining / (K - i))``.
    """
    K = cfg.K
    target = scene.target_position
    p = state.position.copy()
    deltas = np.zeros((K, STATE_DIM))
    for i in range(K):
        r = target - p
        dist = float(np.linalg.norm(r))
        if dist <= 0.0:
            continue
        mag = min(cfg.step_cap, dist / (K - i))
        u = r * (mag / dist)
        deltas[i, :3] = u
        p = p + u
    arrives = float(np.linalg.norm(target - p)) <= ARRIVAL_TOL
    return Chunk(deltas, planned_at=planned_at, arrives=arrives)


def backdoored_plan_chunk(
    state: EEState,
    observation: Observation,
    scene: Scene,
    cfg: PlannerConfig,
    attack_state: AttackState,
    planned_at: int = 0,
) -> Chunk:
    """Clean chunk, plus drift when the observation carries the trigger.

    Action ``i`` receives the profile evaluated at window time
    ``elapsed + i``. The caller advances ``attack_state`` after execution.
    """
    clean = plan_chunk(state, scene, cfg, planned_at)
    attack = attack_state.attack
    if observation.trigger is None or attack.profile is None:
        return clean
    if attack_state.started_at is None:
        gate = attack.keyframe_distance
        if gate is not None and scene.distance(state) >= gate:
            return clean
        attack_state.started_at = planned_at
    if attack_state.exhausted:
        return clean
    window = AttackWindow(0, attack.T_window)
    deltas = np.array(clean.deltas)
    for i in range(clean.K):
        deltas[i, :3] += perturbation_at(attack.profile, window, attack_state.elapsed + i, attack_state.rng_seed)
    return Chunk(deltas, planned_at=planned_at, arrives=clean.arrives)


def evaluate_success(outcome_state: EEState, scene: Scene) -> bool:
    """Inclusive distance check against ``success_radius``."""
    return scene.distance(outcome_state) <= scene.success_radius


def rollout_episode(
    scene: Scene,
    cfg: PlannerConfig,
    attack: DeploymentAttack | None = None,
    defense=None,
    seed: int = 0,
) -> EpisodeOutcome:
    """Plan, execute open-loop, replan; stop on commit or at the horizon."""
    from .guard import adaptive_horizon

    attack = attack or DeploymentAttack(enabled=False)
    astate = AttackState(attack, rng_seed=seed)
    x = scene.ee_init.as_vector()
    rows = [x]
    t = 0
    chunks = 0
    committed = False
    trigger_steps = 0
    while t < cfg.horizon:
        state = EEState.from_vector(x)
        dist = scene.distance(state)
        show = attack.enabled and dist < attack.activation_distance
        if show and attack.trigger_mode == ONE_SHOT and astate.exhausted:
            show = False
        obs = Observation(state, scene.object_positions, attack.trigger if show else None)
        k_eff = cfg.K if defense is None else adaptive_horizon(state, scene, defense, cfg.K)
        k_eff = min(k_eff, cfg.horizon - t)
        plan_cfg = cfg if k_eff == cfg.K else PlannerConfig(k_eff, cfg.step_cap, max(cfg.horizon, k_eff), cfg.dt)
        chunk = backdoored_plan_chunk(state, obs, scene, plan_cfg, astate, planned_at=t)
        segment = integrate(x, chunk.deltas)
        if not np.all(np.isfinite(segment)):
            raise SimulationDiverged(f"non-finite state at t={t}")
        rows.extend(segment[1:])
        x = segment[-1]
        if show:
            trigger_steps += k_eff
            if astate.started_at is not None:
                astate.advance(k_eff)
        t += k_eff
        chunks += 1
        if chunk.arrives:
            committed = True
            break
    traj = StateTrajectory(np.array(rows), cfg.dt)
    final = traj.final
    return EpisodeOutcome(
        success=evaluate_success(final, scene),
        final_distance=scene.distance(final),
        trajectory=traj,
        attack_fired_at=astate.started_at,
        chunks_executed=chunks,
        committed=committed,
        trigger_steps=trigger_steps,
    )


def attack_success_rate(ctsr: float, sr_trigger: float) -> float:
    if ctsr <= 0.0:
        raise ASRUndefined("ASR undefined when CTSR is 0")
    return (ctsr - sr_trigger) / ctsr


def _successes(outcomes) -> np.ndarray:
    return np.array([o.success if isinstance(o, EpisodeOutcome) else bool(o) for o in outcomes], dtype=float)


def compute_metrics(clean_outcomes: Sequence, triggered_outcomes: Sequence) -> MetricsReport:
    """CTSR, triggered success rate and normalized degradation (ASR).

    Outcomes may be :class:`EpisodeOutcome` or plain booleans. ``asr`` is
    ``None`` when CTSR is 0 or there are no triggered episodes.
    """
    clean = _successes(clean_outcomes)
    if clean.size < 1:
        raise ConfigError("need at least one clean outcome", "n_clean")
    trig = _successes(triggered_outcomes)
    ctsr = float(clean.mean())
    sr = float(trig.mean()) if trig.size else None
    try:
        asr = attack_success_rate(ctsr, sr) if sr is not None else None
    except ASRUndefined:
        asr = None
    return MetricsReport(ctsr, sr, asr, int(clean.size), int(trig.size))


@dataclass(frozen=True)
class ScenarioConfig:
    target_box_min: tuple = (0.35, -0.20, 0.00)
    target_box_max: tuple = (0.60, 0.20, 0.10)
    ee_init: tuple = (0.0, 0.0, 0.20)
    success_radius: float = 0.05
    n_distractors: int = 2

    def __post_init__(self):
        lo, hi = np.asarray(self.target_box_min, float), np.asarray(self.target_box_max, float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi < lo):
            raise ConfigError("target box must be two 3-vectors with max >= min", "scenario.target_box_m")
        if not self.success_radius > 0:
            raise ConfigError("success_radius must be > 0", "scenario.success_radius_m")


def sample_scene(rng: np.random.Generator, scenario: ScenarioConfig = ScenarioConfig()) -> Scene:
    """Target (and distractors) uniform in the scenario box."""
    lo, hi = np.asarray(scenario.target_box_min, float), np.asarray(scenario.target_box_max, float)
    objects = {"target": rng.uniform(lo, hi)}
    for j in range(scenario.n_distractors):
        objects[f"distractor_{j}"] = rng.uniform(lo, hi)
    return Scene(objects, "target", EEState(np.asarray(scenario.ee_init, float)), scenario.success_radius)


def steps_to_plans(steps: int, K: int) -> int:
    return math.ceil(steps / K)
