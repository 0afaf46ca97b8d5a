"""Perturbation profiles injected into delta actions during an attack window.

A profile scales a unit drift direction by a per-step magnitude ``alpha``
(m/step) and a time shape evaluated at normalized window time
``tau = (t - t_start) / T_window``. The quintic smootherstep shape has zero
first and second derivatives at both ends; the cubic smoothstep only zero
first derivatives; the constant shape is a step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError, DomainError, Unsupported

ArrayLike = Union[float, np.ndarray]

CONSTANT = "constant"
SMOOTHSTEP_CUBIC = "smoothstep_cubic"
SMOOTHERSTEP_QUINTIC = "smootherstep_quintic"
GAUSSIAN_NOISE = "gaussian_noise"
KINDS = (CONSTANT, SMOOTHSTEP_CUBIC, SMOOTHERSTEP_QUINTIC, GAUSSIAN_NOISE)
DETERMINISTIC_KINDS = (CONSTANT, SMOOTHSTEP_CUBIC, SMOOTHERSTEP_QUINTIC)


def _check_unit_interval(tau: ArrayLike) -> np.ndarray:
    t = np.asarray(tau, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError(f"tau must lie in [0, 1]; use clamped_smootherstep for {tau!r}")
    return t


def _out(x: np.ndarray, tau: ArrayLike):
    return float(x) if np.ndim(tau) == 0 else x


def smootherstep(tau: ArrayLike) -> ArrayLike:
    """Quintic ``6t^5 - 15t^4 + 10t^3`` on [0, 1]."""
    t = _check_unit_interval(tau)
    return _out(t * t * t * (t * (6.0 * t - 15.0) + 10.0), tau)


def smootherstep_d1(tau: ArrayLike) -> ArrayLike:
    t = _check_unit_interval(tau)
    return _out(30.0 * t * t * (1.0 - t) ** 2, tau)


def smootherstep_d2(tau: ArrayLike) -> ArrayLike:
    t = _check_unit_interval(tau)
    return _out(60.0 * t * (2.0 * t - 1.0) * (t - 1.0), tau)


def clamped_smootherstep(tau: ArrayLike) -> ArrayLike:
    """Smootherstep of ``tau`` clipped to [0, 1]; defined for any finite input."""
    t = np.asarray(tau, dtype=float)
    if np.any(~np.isfinite(t)):
        raise DomainError("tau must be finite")
    clipped = np.clip(t, 0.0, 1.0)
    return smootherstep(clipped if np.ndim(tau) else float(clipped))


def smoothstep(tau: ArrayLike) -> ArrayLike:
    """Cubic ``3t^2 - 2t^3`` on [0, 1]."""
    t = _check_unit_interval(tau)
    return _out(t * t * (3.0 - 2.0 * t), tau)


def smoothstep_d1(tau: ArrayLike) -> ArrayLike:
    t = _check_unit_interval(tau)
    return _out(6.0 * t * (1.0 - t), tau)


def smoothstep_d2(tau: ArrayLike) -> ArrayLike:
    t = _check_unit_interval(tau)
    return _out(6.0 - 12.0 * t, tau)


def shape(kind: str, tau: ArrayLike) -> ArrayLike:
    """Deterministic time shape of ``kind`` at clamped ``tau``."""
    t = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    if kind == CONSTANT:
        val = np.ones_like(t)
    elif kind == SMOOTHSTEP_CUBIC:
        val = smoothstep(t)
    elif kind == SMOOTHERSTEP_QUINTIC:
        val = smootherstep(t)
    elif kind == GAUSSIAN_NOISE:
        raise Unsupported("gaussian_noise has no deterministic shape")
    else:
        raise ConfigError(f"unknown profile kind {kind!r}", "profile.kind")
    return _out(np.asarray(val, dtype=float), tau)


def shape_integral(kind: str) -> float:
    """Integral of the shape over [0, 1]."""
    return {CONSTANT: 1.0, SMOOTHSTEP_CUBIC: 0.5, SMOOTHERSTEP_QUINTIC: 0.5}[_deterministic(kind)]


def shape_sum(kind: str, T_window: int) -> float:
    """Discrete sum of the shape over window steps ``0 .. T_window-1``."""
    ts = np.arange(int(T_window)) / float(T_window)
    return float(np.sum(shape(_deterministic(kind), ts)))


def _deterministic(kind: str) -> str:
    if kind == GAUSSIAN_NOISE:
        raise Unsupported("gaussian_noise has no drift budget")
    if kind not in KINDS:
        raise ConfigError(f"unknown profile kind {kind!r}", "profile.kind")
    return kind


def unit_direction(direction) -> np.ndarray:
    d = np.array(direction, dtype=float).reshape(-1)
    if d.shape != (3,) or not np.all(np.isfinite(d)):
        raise ConfigError("direction must be a finite 3-vector", "profile.direction")
    n = float(np.linalg.norm(d))
    if n == 0.0:
        raise ConfigError("direction must be non-zero", "profile.direction")
    d = d / n
    d.setflags(write=False)
    return d


@dataclass(frozen=True, eq=False)
class PerturbationProfile:
    """Drift profile: ``alpha * direction * shape(tau)`` per step.

    ``direction`` is normalized on construction, so ``|direction| == 1`` and
    ``alpha`` alone carries the per-step peak magnitude in m/step.
    """

    kind: str
    alpha: float
    direction: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown profile kind {self.kind!r}", "profile.kind")
        if not (np.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha}", "profile.alpha")
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0.0):
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}", "profile.noise_sigma")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))
        object.__setattr__(self, "direction", unit_direction(self.direction))

    @classmethod
    def from_total_deviation(cls, kind: str, total_m: float, direction, T_window: int, exact: bool = False) -> "PerturbationProfile":
        """Profile whose window drift is ``total_m`` metres.

        By default alpha comes from the continuous integral of the shape, so
        for the quintic ``alpha = 2 * total / T_window``. With ``exact=True``
        alpha is set from the discrete per-step sum instead, which makes
        different kinds accumulate exactly the same drift over the window.
        """
        if T_window < 1:
            raise ConfigError("T_window must be >= 1", "window.T_window")
        if total_m < 0:
            raise ConfigError("total deviation must be >= 0", "profile.total_deviation_m")
        denom = shape_sum(kind, T_window) if exact else shape_integral(kind) * T_window
        if denom <= 0.0:
            raise ConfigError(f"window of {T_window} steps has zero {kind} mass", "window.T_window")
        return cls(kind, total_m / denom, direction)


@dataclass(frozen=True)
class AttackWindow:
    t_start: int
    T_window: int

    def __post_init__(self):
        if self.T_window < 1:
            raise ConfigError(f"T_window must be >= 1, got {self.T_window}", "window.T_window")
        if self.t_start < 0:
            raise ConfigError(f"t_start must be >= 0, got {self.t_start}", "window.t_start")

    def contains(self, t: int) -> bool:
        return self.t_start <= t < self.t_start + self.T_window

    def tau(self, t) -> ArrayLike:
        return (np.asarray(t, dtype=float) - self.t_start) / self.T_window


def _noise(profile: PerturbationProfile, t: int, rng_seed: int | None) -> np.ndarray:
    seed = 0 if rng_seed is None else int(rng_seed)
    return np.random.default_rng([seed, int(t)]).normal(0.0, profile.noise_sigma, 3)


def perturbation_at(profile: PerturbationProfile, window: AttackWindow, t: int, rng_seed: int | None = None) -> np.ndarray:
    """Positional perturbation (3-vector, m/step) injected at step ``t``.

    Zero outside ``[t_start, t_start + T_window)``. Gaussian noise is drawn
    from a generator keyed on ``(rng_seed, t)`` so any step can be
    regenerated independently.
    """
    if t < 0:
        raise ConfigError(f"t must be >= 0, got {t}", "t")
    if profile.kind not in KINDS:
        raise ConfigError(f"unknown profile kind {profile.kind!r}", "profile.kind")
    if not window.contains(t):
        return np.zeros(3)
    if profile.kind == GAUSSIAN_NOISE:
        return _noise(profile, t, rng_seed)
    return profile.alpha * profile.direction * shape(profile.kind, float(window.tau(t)))


def perturbation_series(profile: PerturbationProfile, window: AttackWindow, n_steps: int, rng_seed: int | None = None) -> np.ndarray:
    """(n_steps, 3) array of :func:`perturbation_at` for ``t = 0 .. n_steps-1``."""
    return np.array([perturbation_at(profile, window, t, rng_seed) for t in range(n_steps)]).reshape(n_steps, 3)


def expected_window_drift(profile: PerturbationProfile, window: AttackWindow) -> float:
    """Closed-form window drift ``alpha * |d| * T_window / 2`` (metres).

    Only the quintic has this form; discrete sums for other kinds come from
    :func:`chunkdrift.kinematics.accumulated_drift`.
    """
    if profile.kind != SMOOTHERSTEP_QUINTIC:
        raise Unsupported(f"closed-form drift only defined for {SMOOTHERSTEP_QUINTIC}, not {profile.kind}")
    return profile.alpha * float(np.linalg.norm(profile.direction)) * window.T_window / 2.0
