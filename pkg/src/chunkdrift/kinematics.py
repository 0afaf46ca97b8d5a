"""End-effector state/action types and the additive delta-pose dynamics.

States and actions are 7-vectors laid out as ``[px, py, pz, ox, oy, oz, grip]``.
Orientation is an additive small-rotation 3-vector; there is no SO(3)
composition. The gripper channel is clamped to [0, 1] after every step, so
exact drift identities only hold on the six pose channels (and on the gripper
when no clamp fired).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidPair, InvalidState

logger = logging.getLogger(__name__)

STATE_DIM = 7
POS = slice(0, 3)
ORI = slice(3, 6)
GRIP = 6


def _vec3(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise InvalidState(f"{name} must have 3 components, got {arr.shape[0]}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EEState:
    """End-effector pose plus gripper opening (0 closed, 1 open)."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gripper: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "orientation", _vec3(self.orientation, "orientation"))
        object.__setattr__(self, "gripper", float(self.gripper))
        if not np.all(np.isfinite(self.as_vector())):
            raise InvalidState("EEState has non-finite components")
        if not 0.0 <= self.gripper <= 1.0:
            raise InvalidState(f"gripper {self.gripper} outside [0, 1]")

    @classmethod
    def origin(cls) -> "EEState":
        return cls(np.zeros(3), np.zeros(3), 1.0)

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "EEState":
        v = np.asarray(vec, dtype=float)
        return cls(v[POS], v[ORI], float(v[GRIP]))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation, [self.gripper]])

    def __eq__(self, other):
        if not isinstance(other, EEState):
            return NotImplemented
        return bool(np.array_equal(self.as_vector(), other.as_vector()))

    def __repr__(self):
        return f"EEState(position={self.position.tolist()}, orientation={self.orientation.tolist()}, gripper={self.gripper})"


@dataclass(frozen=True, eq=False)
class DeltaAction:
    """Per-step relative action. Units: m/step, rad/step, gripper/step."""

    dpos: np.ndarray
    dori: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dgrip: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "dpos", _vec3(self.dpos, "dpos"))
        object.__setattr__(self, "dori", _vec3(self.dori, "dori"))
        object.__setattr__(self, "dgrip", float(self.dgrip))
        if not np.all(np.isfinite(self.as_vector())):
            raise InvalidState("DeltaAction has non-finite components")

    @classmethod
    def zero(cls) -> "DeltaAction":
        return cls(np.zeros(3))

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "DeltaAction":
        v = np.asarray(vec, dtype=float)
        return cls(v[POS], v[ORI], float(v[GRIP]))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.dpos, self.dori, [self.dgrip]])

    def __eq__(self, other):
        if not isinstance(other, DeltaAction):
            return NotImplemented
        return bool(np.array_equal(self.as_vector(), other.as_vector()))

    def __repr__(self):
        return f"DeltaAction(dpos={self.dpos.tolist()}, dori={self.dori.tolist()}, dgrip={self.dgrip})"


@dataclass(frozen=True, eq=False)
class Chunk:
    """K actions predicted at timestep ``planned_at`` and executed open-loop.

    ``deltas`` is the (K, 7) action array. ``arrives`` records whether the
    planner expects the chunk to end on the target; the environment treats
    that as the commit (grasp) decision.
    """

    deltas: np.ndarray
    planned_at: int = 0
    arrives: bool = False

    def __post_init__(self):
        arr = np.array(self.deltas, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != STATE_DIM or arr.shape[0] < 1:
            raise InvalidState(f"chunk must be (K>=1, 7), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "deltas", arr)

    @property
    def K(self) -> int:
        return self.deltas.shape[0]

    @property
    def actions(self) -> list[DeltaAction]:
        return [DeltaAction.from_vector(row) for row in self.deltas]

    def prediction_for(self, t: int) -> np.ndarray | None:
        """Action this chunk predicts for absolute timestep ``t``, if any."""
        i = t - self.planned_at
        if 0 <= i < self.K:
            return self.deltas[i]
        return None


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """Executed states, one row per timestep, with a uniform step ``dt``.

    ``dt`` is metadata; the dynamics are per-step.
    """

    vectors: np.ndarray
    dt: float = 0.05

    def __post_init__(self):
        arr = np.array(self.vectors, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != STATE_DIM or arr.shape[0] < 1:
            raise InvalidState(f"trajectory must be (N>=1, 7), got {arr.shape}")
        if not self.dt > 0:
            raise InvalidState(f"dt must be positive, got {self.dt}")
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def states(self) -> list[EEState]:
        return [EEState.from_vector(row) for row in self.vectors]

    @property
    def positions(self) -> np.ndarray:
        return self.vectors[:, POS]

    @property
    def final(self) -> EEState:
        return EEState.from_vector(self.vectors[-1])


def _as_action_array(actions: Iterable[DeltaAction] | np.ndarray) -> np.ndarray:
    if isinstance(actions, np.ndarray):
        arr = np.asarray(actions, dtype=float).reshape(-1, STATE_DIM)
    else:
        rows = [a.as_vector() if isinstance(a, DeltaAction) else np.asarray(a, float) for a in actions]
        arr = np.array(rows, dtype=float).reshape(-1, STATE_DIM)
    if not np.all(np.isfinite(arr)):
        raise InvalidState("action sequence has non-finite components")
    return arr


def step(state: EEState, action: DeltaAction) -> EEState:
    """Advance one step: componentwise sum, gripper clamped to [0, 1]."""
    x = state.as_vector()
    u = action.as_vector()
    nxt = x + u
    if not np.all(np.isfinite(nxt)):
        raise InvalidState("step produced non-finite state")
    g = nxt[GRIP]
    if g < 0.0 or g > 1.0:
        logger.debug("gripper clamped from %.6g", g)
        nxt[GRIP] = min(max(g, 0.0), 1.0)
    return EEState.from_vector(nxt)


def integrate(initial: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Array form of repeated :func:`step`. Returns (len(deltas)+1, 7).

    Pose channels use a sequential accumulate, which rounds identically to
    adding one action at a time.
    """
    n = deltas.shape[0]
    out = np.empty((n + 1, STATE_DIM))
    out[0] = initial
    if n == 0:
        return out
    np.add.accumulate(np.vstack([initial[None, :6], deltas[:, :6]]), axis=0, out=out[:, :6])
    g = float(initial[GRIP])
    for k in range(n):
        g += deltas[k, GRIP]
        if g < 0.0 or g > 1.0:
            logger.debug("gripper clamped at step %d from %.6g", k, g)
            g = min(max(g, 0.0), 1.0)
        out[k + 1, GRIP] = g
    if not np.all(np.isfinite(out)):
        raise InvalidState("rollout produced non-finite state")
    return out


def rollout(initial: EEState, actions: Sequence[DeltaAction] | np.ndarray, dt: float = 0.05) -> StateTrajectory:
    """Execute ``actions`` open-loop from ``initial``.

    An empty action list yields a single-state trajectory.
    """
    if not dt > 0:
        raise InvalidState(f"dt must be positive, got {dt}")
    deltas = _as_action_array(actions)
    return StateTrajectory(integrate(initial.as_vector(), deltas), dt)


def accumulated_drift(clean: Sequence[DeltaAction] | np.ndarray, poisoned: Sequence[DeltaAction] | np.ndarray) -> np.ndarray:
    """Sum of per-step perturbations ``poisoned_i - clean_i`` as a 7-vector.

    On unclamped channels this equals the difference of the two rollouts'
    final states up to floating-point accumulation. Each channel is summed
    with :func:`math.fsum`, so the result is the correctly rounded sum.
    """
    c = _as_action_array(clean)
    p = _as_action_array(poisoned)
    if c.shape != p.shape:
        raise InvalidPair(f"length mismatch: {c.shape[0]} clean vs {p.shape[0]} poisoned actions")
    diff = p - c
    return np.array([math.fsum(diff[:, j]) for j in range(STATE_DIM)])
