"""Synthetic demonstration datasets from a minimum-jerk scripted demonstrator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .kinematics import DeltaAction, EEState, StateTrajectory, integrate
from .perturb import smootherstep
from .poison import Demonstration, Frame, Observation
from .simenv import ScenarioConfig, sample_scene


@dataclass(frozen=True)
class DemoConfig:
    n_tasks: int = 10
    episodes_per_task: int = 10
    approach_steps: tuple[int, int] = (60, 90)
    hold_steps: int = 10
    grip_close_per_step: float = 0.1
    dt: float = 0.05

    def __post_init__(self):
        lo, hi = self.approach_steps
        if self.n_tasks < 1 or self.episodes_per_task < 1:
            raise ConfigError("need at least one task and one episode per task", "demos")
        if not 4 <= lo <= hi:
            raise ConfigError("approach_steps must satisfy 4 <= min <= max", "demos.approach_steps")
        if self.hold_steps < 0:
            raise ConfigError("hold_steps must be >= 0", "demos.hold_steps")


def min_jerk_actions(start: np.ndarray, goal: np.ndarray, n_steps: int) -> np.ndarray:
    """(n_steps, 3) per-step displacements of a rest-to-rest minimum-jerk path."""
    s = smootherstep(np.arange(n_steps + 1) / n_steps)
    path = start + np.outer(s, goal - start)
    return np.diff(path, axis=0)


def scripted_demonstration(
    scene,
    n_approach: int,
    episode_id: str,
    task_id: str,
    instruction: str,
    hold_steps: int = 10,
    grip_close_per_step: float = 0.1,
) -> Demonstration:
    """Approach the target along a minimum-jerk path, then close the gripper."""
    x0 = scene.ee_init.as_vector()
    n = n_approach + hold_steps
    deltas = np.zeros((n, 7))
    deltas[:n_approach, :3] = min_jerk_actions(x0[:3], scene.target_position, n_approach)
    deltas[n_approach:, 6] = -grip_close_per_step
    states = integrate(x0, deltas)
    frames = tuple(
        Frame(Observation(EEState.from_vector(states[t]), scene.object_positions), DeltaAction.from_vector(deltas[t]))
        for t in range(n)
    )
    return Demonstration(episode_id, task_id, instruction, scene.target_object, frames)


def synthetic_dataset(seed: int, config: DemoConfig = DemoConfig(), scenario: ScenarioConfig = ScenarioConfig()) -> list[Demonstration]:
    """``n_tasks * episodes_per_task`` demonstrations, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    out = []
    for task in range(config.n_tasks):
        for ep in range(config.episodes_per_task):
            scene = sample_scene(rng, scenario)
            n = int(rng.integers(config.approach_steps[0], config.approach_steps[1] + 1))
            out.append(
                scripted_demonstration(
                    scene,
                    n,
                    episode_id=f"task{task:02d}_ep{ep:03d}",
                    task_id=f"task{task:02d}",
                    instruction=f"pick up the target ({task})",
                    hold_steps=config.hold_steps,
                    grip_close_per_step=config.grip_close_per_step,
                )
            )
    return out


def demo_trajectory(demo: Demonstration, dt: float = 0.05) -> StateTrajectory:
    """States obtained by integrating the demo's actions from its first frame."""
    x0 = demo.frames[0].observation.ee_state.as_vector()
    return StateTrajectory(integrate(x0, demo.actions()), dt)
