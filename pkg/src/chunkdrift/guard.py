"""Kinematic validation and the defenses that exploit chunk structure."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, InsufficientData, MissingPrediction
from .kinematics import Chunk, EEState, StateTrajectory
from .perturb import AttackWindow, PerturbationProfile, perturbation_at

CENTRAL = "central"
FORWARD = "forward"

RENORMALIZE = "renormalize"
STRICT = "strict"


@dataclass(frozen=True)
class KinematicLimits:
    """Bounds in SI units (m/s, m/s^2, m/s^3) and the C2 tolerance.

    ``c2_tol`` is dimensionless: boundary derivatives are compared after
    normalizing by the relevant scale (see :func:`c2_boundary_check` and
    :func:`validate_kinematics`).
    """

    v_max: float
    a_max: float
    j_max: float
    dt: float = 0.05
    c2_tol: float = 0.5

    def __post_init__(self):
        for name in ("v_max", "a_max", "j_max", "dt", "c2_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0", f"guard.{name}")

    def to_dict(self) -> dict:
        return {"v_max_m_s": self.v_max, "a_max_m_s2": self.a_max, "j_max_m_s3": self.j_max, "dt_s": self.dt, "c2_tol": self.c2_tol}


@dataclass(frozen=True, eq=False)
class KinematicProfiles:
    """Velocity, acceleration and jerk of the position channels.

    With the ``central`` scheme all three series have the trajectory's length
    (central differences inside, one-sided at the two ends, applied
    repeatedly). With ``forward`` they have lengths N-1, N-2, N-3 and sample
    ``k`` refers to the interval starting at step ``k``.
    """

    velocity: np.ndarray
    acceleration: np.ndarray
    jerk: np.ndarray
    scheme: str
    dt: float


@dataclass(frozen=True)
class Violation:
    quantity: str
    timestep: int
    magnitude: float
    limit: float


@dataclass(frozen=True)
class DetectionVerdict:
    velocity_ok: bool
    acceleration_ok: bool
    jerk_ok: bool
    c2_ok: bool
    worst_violation: Violation | None
    violations: tuple[Violation, ...] = ()
    scheme: str = CENTRAL
    c2_points: tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return self.velocity_ok and self.acceleration_ok and self.jerk_ok and self.c2_ok

    def to_dict(self) -> dict:
        worst = self.worst_violation
        return {
            "ok": self.ok,
            "velocity_ok": self.velocity_ok,
            "acceleration_ok": self.acceleration_ok,
            "jerk_ok": self.jerk_ok,
            "c2_ok": self.c2_ok,
            "worst_violation": None if worst is None else vars(worst),
            "n_violations": len(self.violations),
            "fd_scheme": self.scheme,
            "c2_points": list(self.c2_points),
        }


def finite_diff_profiles(traj: StateTrajectory, scheme: str = CENTRAL) -> KinematicProfiles:
    """Velocity/acceleration/jerk of ``traj.positions`` in SI units."""
    pos = traj.positions
    if pos.shape[0] < 4:
        raise InsufficientData(f"need >= 4 states for jerk, got {pos.shape[0]}")
    dt = traj.dt
    if scheme == CENTRAL:
        v = np.gradient(pos, dt, axis=0)
        a = np.gradient(v, dt, axis=0)
        j = np.gradient(a, dt, axis=0)
    elif scheme == FORWARD:
        v = np.diff(pos, axis=0) / dt
        a = np.diff(v, axis=0) / dt
        j = np.diff(a, axis=0) / dt
    else:
        raise ConfigError(f"unknown finite-difference scheme {scheme!r}", "guard.scheme")
    return KinematicProfiles(v, a, j, scheme, dt)


# Second-order one-sided stencils, applied at index k looking away from it.
_D1 = np.array([-1.5, 2.0, -0.5])
_D2 = np.array([2.0, -5.0, 4.0, -1.0])


def _one_sided(series: np.ndarray, k: int, direction: int, stencil: np.ndarray) -> np.ndarray:
    idx = k + direction * np.arange(stencil.size)
    return np.tensordot(stencil, series[idx], axes=(0, 0))


def c2_boundary_check(series, onset: int, offset: int, tol: float, h: float | None = None) -> bool:
    """True iff first and second derivatives vanish at both window boundaries.

    ``series`` is the perturbation sampled once per step (1-D or (N, d)),
    clamped outside the window. Derivatives are taken with second-order
    one-sided stencils from both sides of ``onset`` and ``offset`` in
    normalized window time (``h = 1 / (offset - onset)`` by default) and
    divided by the series amplitude, so ``tol`` is dimensionless. A cubic
    smoothstep window gives a second derivative near 6 at the onset; the
    quintic is O(h^2).
    """
    s = np.asarray(series, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    n = s.shape[0]
    if onset < 2 or offset + 2 >= n or offset <= onset:
        raise InsufficientData(f"series of length {n} does not span [{onset - 2}, {offset + 2}]")
    if offset - onset < _D2.size - 1:
        raise InsufficientData("window too short for one-sided second derivative")
    if h is None:
        h = 1.0 / (offset - onset)
    amp = float(np.max(np.abs(s)))
    if amp == 0.0:
        return True
    worst = 0.0
    for k, inside in ((onset, 1), (offset, -1)):
        for direction in (inside, -inside):
            avail = offset + 2 - k if direction > 0 else k - (onset - 2)
            if direction == inside or avail >= _D2.size - 1:
                d2 = _one_sided(s, k, direction, _D2) / h**2
                worst = max(worst, float(np.linalg.norm(d2)) / amp)
            d1 = _one_sided(s, k, direction, _D1) / (direction * h)
            worst = max(worst, float(np.linalg.norm(d1)) / amp)
    return worst <= tol


def _point_c2_jump(pos: np.ndarray, k: int, dt: float) -> tuple[float, float] | None:
    n = pos.shape[0]
    if k - 3 < 0 or k + 3 >= n:
        return None
    v_l = _one_sided(pos, k, -1, _D1) / (-dt)
    v_r = _one_sided(pos, k, 1, _D1) / dt
    a_l = _one_sided(pos, k, -1, _D2) / dt**2
    a_r = _one_sided(pos, k, 1, _D2) / dt**2
    return float(np.linalg.norm(v_r - v_l)), float(np.linalg.norm(a_r - a_l))


def validate_kinematics(
    traj: StateTrajectory,
    limits: KinematicLimits,
    boundaries: tuple[int, int] | None = None,
    perturbation: np.ndarray | None = None,
    scheme: str = CENTRAL,
) -> DetectionVerdict:
    """Flag velocity/acceleration/jerk bound violations and C2 breaks.

    With ``boundaries`` and a ``perturbation`` series, C2 is judged by
    :func:`c2_boundary_check`. Otherwise the trajectory itself is inspected
    around its maximal-jerk sample (and the declared boundaries, if any):
    one-sided velocities and accelerations from either side must agree to
    within ``c2_tol * v_max`` and ``c2_tol * a_max``.
    """
    if traj.dt != limits.dt:
        traj = StateTrajectory(traj.vectors, limits.dt)
    prof = finite_diff_profiles(traj, scheme)
    violations = []
    oks = {}
    for name, series, limit in (
        ("velocity", prof.velocity, limits.v_max),
        ("acceleration", prof.acceleration, limits.a_max),
        ("jerk", prof.jerk, limits.j_max),
    ):
        mags = np.linalg.norm(series, axis=1)
        bad = np.flatnonzero(mags > limit)
        oks[name] = bad.size == 0
        violations.extend(Violation(name, int(k), float(mags[k]), limit) for k in bad)

    jerk_mag = np.linalg.norm(prof.jerk, axis=1)
    peak = int(np.argmax(jerk_mag))
    if boundaries is not None and perturbation is not None:
        points = tuple(boundaries)
        c2_ok = c2_boundary_check(perturbation, boundaries[0], boundaries[1], limits.c2_tol)
        if not c2_ok:
            violations.append(Violation("c2", boundaries[0], float("nan"), limits.c2_tol))
    else:
        points = tuple(sorted({peak - 1, peak, peak + 1} | set(boundaries or ())))
        c2_ok = True
        for k in points:
            jumps = _point_c2_jump(traj.positions, k, limits.dt)
            if jumps is None:
                continue
            dv, da = jumps
            ratio = max(dv / limits.v_max, da / limits.a_max)
            if ratio > limits.c2_tol:
                c2_ok = False
                violations.append(Violation("c2", k, ratio, limits.c2_tol))

    worst = None
    if violations:
        worst = max(violations, key=lambda v: (v.magnitude / v.limit) if np.isfinite(v.magnitude) else np.inf)
    return DetectionVerdict(
        velocity_ok=oks["velocity"],
        acceleration_ok=oks["acceleration"],
        jerk_ok=oks["jerk"],
        c2_ok=c2_ok,
        worst_violation=worst,
        violations=tuple(violations),
        scheme=prof.scheme,
        c2_points=points,
    )


def calibrate_limits(
    trajectories: Sequence[StateTrajectory],
    dt: float,
    percentile: float = 99.9,
    safety: float = 1.5,
    c2_tol: float = 0.5,
    scheme: str = CENTRAL,
) -> KinematicLimits:
    """Limits from clean data: per-episode maxima, percentile, times ``safety``."""
    if not trajectories:
        raise InsufficientData("no trajectories to calibrate on")
    peaks = []
    for traj in trajectories:
        prof = finite_diff_profiles(StateTrajectory(traj.vectors, dt), scheme)
        peaks.append([float(np.linalg.norm(s, axis=1).max()) for s in (prof.velocity, prof.acceleration, prof.jerk)])
    q = np.percentile(np.array(peaks), percentile, axis=0) * safety
    return KinematicLimits(float(q[0]), float(q[1]), float(q[2]), dt, c2_tol)


@dataclass(frozen=True)
class EnsembleWeights:
    """Weights by prediction age: ``weights[i]`` applies to the chunk
    planned ``i`` steps before the ensembled timestep."""

    weights: tuple[float, ...]
    scheme: str = "uniform"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("weights must be a non-empty list of non-negative numbers", "ensemble.weights")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"weights sum to {w.sum()!r}, expected 1", "ensemble.weights")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @classmethod
    def uniform(cls, K: int) -> "EnsembleWeights":
        return cls(tuple(np.full(K, 1.0 / K)), "uniform")

    @classmethod
    def exponential(cls, K: int, lam: float) -> "EnsembleWeights":
        w = np.exp(-lam * np.arange(K))
        w = w / w.sum()
        # absorb the last rounding bit so the sum check is exact
        w[0] = 1.0 - w[1:].sum()
        return cls(tuple(w), f"exponential({lam})")

    @property
    def K(self) -> int:
        return len(self.weights)

    def sum_of_squares(self) -> float:
        return float(np.sum(np.square(self.weights)))


def temporal_ensemble(
    overlapping_chunks: Sequence[Chunk],
    weights: EnsembleWeights,
    t: int,
    missing: str = RENORMALIZE,
) -> np.ndarray:
    """Weighted average of the chunks' predictions for timestep ``t``.

    A chunk planned at ``t - i`` gets ``weights[i]``. With
    ``missing="renormalize"`` ages with no contributing chunk are dropped and
    the remaining weights rescaled (the episode warm-up case); with
    ``missing="strict"`` any gap or non-covering chunk raises.
    """
    total = None
    wsum = 0.0
    seen = set()
    for chunk in overlapping_chunks:
        pred = chunk.prediction_for(t)
        age = t - chunk.planned_at
        if pred is None or age >= weights.K:
            if missing == STRICT:
                raise MissingPrediction(f"chunk planned at {chunk.planned_at} has no prediction for t={t}")
            continue
        w = weights.weights[age]
        seen.add(age)
        total = w * pred if total is None else total + w * pred
        wsum += w
    if missing == STRICT and seen != set(range(weights.K)):
        raise MissingPrediction(f"ages {sorted(set(range(weights.K)) - seen)} missing at t={t}")
    if total is None or wsum == 0.0:
        raise MissingPrediction(f"no chunk predicts t={t}")
    return total if wsum == 1.0 else total / wsum


@dataclass(frozen=True)
class AttenuationResult:
    smooth_retention_ratio: float
    noise_variance_ratio: float
    noise_variance_stderr: float
    expected_noise_ratio: float
    K: int
    n_trials: int


def te_attenuation_experiment(
    K: int,
    weights: EnsembleWeights,
    sigma: float,
    n_trials: int,
    seed: int,
    T_window: int = 100,
    profile: PerturbationProfile | None = None,
    clock: str = "shared",
) -> AttenuationResult:
    """How temporal ensembling treats smooth drift versus i.i.d. noise.

    Smooth part: ``K`` overlapping chunks, planned at ``t - K + 1 .. t``,
    each carrying the backdoored planner's drift (window clock shared across
    replans), are ensembled at the window midpoint and compared to the
    unensembled drift. With ``clock="lagged"`` the chunk planned ``i`` steps
    ago instead carries the drift of step ``t - i`` (its window clock started
    at its own planning time), which is the pessimistic case. Noise part: every chunk's prediction for ``t`` gets an
    independent N(0, sigma^2) sample per axis; the empirical variance of the
    ensembled noise over ``n_trials`` is divided by sigma^2.
    """
    if weights.K != K:
        raise ConfigError(f"weights have length {weights.K}, expected K={K}", "ensemble.weights")
    if n_trials < 1000:
        raise ConfigError("n_trials must be >= 1000", "n_trials")
    if profile is None:
        profile = PerturbationProfile("smootherstep_quintic", 1.0, (1.0, 0.0, 0.0))
    t_start = K
    window = AttackWindow(t_start, T_window)
    t_mid = t_start + T_window // 2
    w = np.asarray(weights.weights)

    if clock not in ("shared", "lagged"):
        raise ConfigError(f"unknown clock {clock!r}", "ensemble.clock")
    chunks = []
    for age in range(K):
        p = t_mid - age
        deltas = np.zeros((K, 7))
        for j in range(K):
            deltas[j, :3] = perturbation_at(profile, window, p + j - (age if clock == "lagged" else 0))
        chunks.append(Chunk(deltas, planned_at=p))
    ens = temporal_ensemble(chunks, weights, t_mid)[:3]
    raw = perturbation_at(profile, window, t_mid)
    retention = float(np.linalg.norm(ens) / np.linalg.norm(raw))

    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, sigma, size=(n_trials, K, 3))
    ensembled = np.einsum("k,nkd->nd", w, eps)
    samples = ensembled.reshape(-1)
    var_ratio = float(samples.var(ddof=1) / sigma**2)
    expected = weights.sum_of_squares()
    stderr = expected * float(np.sqrt(2.0 / (samples.size - 1)))
    return AttenuationResult(retention, var_ratio, stderr, expected, K, n_trials)


@dataclass(frozen=True)
class DefensePolicy:
    critical_radius: float = 0.15
    truncated_K: int = 1

    def __post_init__(self):
        if not self.critical_radius > 0:
            raise ConfigError("critical_radius must be > 0", "defense.critical_radius_m")
        if self.truncated_K < 1:
            raise ConfigError("truncated_K must be >= 1", "defense.truncated_chunk_steps")


def adaptive_horizon(state: EEState, scene, policy: DefensePolicy, base_K: int) -> int:
    """Executed chunk length: ``truncated_K`` inside the critical zone."""
    if base_K < 1:
        raise ConfigError("base_K must be >= 1", "planner.chunk_size_steps")
    if policy.truncated_K > base_K:
        raise ConfigError("truncated_K exceeds planner K", "defense.truncated_chunk_steps")
    if scene.distance(state) < policy.critical_radius:
        return policy.truncated_K
    return base_K
