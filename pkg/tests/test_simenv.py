import math

import numpy as np
import pytest

from chunkdrift.errors import ASRUndefined, ConfigError
from chunkdrift.guard import DefensePolicy
from chunkdrift.kinematics import EEState
from chunkdrift.perturb import CONSTANT, SMOOTHERSTEP_QUINTIC, PerturbationProfile, shape
from chunkdrift.poison import Observation
from chunkdrift.simenv import (
    ONE_SHOT,
    AttackState,
    DeploymentAttack,
    PlannerConfig,
    ScenarioConfig,
    Scene,
    attack_success_rate,
    backdoored_plan_chunk,
    compute_metrics,
    evaluate_success,
    plan_chunk,
    rollout_episode,
    sample_scene,
    steps_to_plans,
)


def quintic_attack(total=0.3, T=16, **kw):
    prof = PerturbationProfile.from_total_deviation(SMOOTHERSTEP_QUINTIC, total, (0, 1, 0), T, exact=True)
    return DeploymentAttack(True, profile=prof, T_window=T, **kw)


def test_plan_chunk_respects_cap(line_scene):
    ch = plan_chunk(line_scene.ee_init, line_scene, PlannerConfig(K=16))
    np.testing.assert_allclose(ch.deltas[:, 0], 0.01)
    assert not ch.arrives


def test_plan_chunk_spreads_remaining_distance():
    scene = Scene({"target": [0.08, 0.0, 0.0]}, "target", EEState.origin())
    ch = plan_chunk(scene.ee_init, scene, PlannerConfig(K=16))
    np.testing.assert_allclose(ch.deltas[:, 0], 0.005)
    assert ch.arrives


def test_clean_episode_commits_on_target(line_scene):
    out = rollout_episode(line_scene, PlannerConfig(K=16))
    # 0.5 m at 0.01 m/step: three capped chunks reach 0.02 m, the fourth arrives
    assert out.committed and out.success
    assert out.chunks_executed == 4
    assert out.steps == 64
    assert out.final_distance < 1e-12
    assert out.attack_fired_at is None


def test_trigger_absent_means_clean_plan(line_scene):
    cfg = PlannerConfig(K=8)
    astate = AttackState(quintic_attack())
    obs = Observation(line_scene.ee_init, line_scene.object_positions, None)
    np.testing.assert_array_equal(
        backdoored_plan_chunk(line_scene.ee_init, obs, line_scene, cfg, astate).deltas,
        plan_chunk(line_scene.ee_init, line_scene, cfg).deltas,
    )
    assert astate.started_at is None


def test_triggered_final_chunk_carries_whole_window(line_scene):
    atk = quintic_attack()
    out = rollout_episode(line_scene, PlannerConfig(K=16), atk)
    # the trigger first shows at the last plan (0.02 m away); the full
    # 16-step window then executes open-loop inside that chunk
    oracle = atk.profile.alpha * sum(shape(SMOOTHERSTEP_QUINTIC, i / 16) for i in range(16))
    assert out.trajectory.final.position[1] == pytest.approx(oracle, abs=1e-12)
    assert oracle == pytest.approx(0.3, abs=1e-12)
    assert out.attack_fired_at == 48
    assert not out.success


def test_single_step_chunks_bound_the_deviation(line_scene):
    out = rollout_episode(line_scene, PlannerConfig(K=1), quintic_attack())
    assert out.success
    assert out.final_distance <= line_scene.success_radius


def test_full_trajectory_trigger_is_gated_by_keyframe(line_scene):
    atk = quintic_attack(activation_distance=math.inf)
    out = rollout_episode(line_scene, PlannerConfig(K=16), atk)
    assert out.attack_fired_at == 48
    assert out.trigger_steps == 64


def test_one_shot_hides_trigger_after_window():
    scene = Scene({"target": [0.3, 0.0, 0.0]}, "target", EEState.origin())
    cfg = PlannerConfig(K=4)
    persistent = rollout_episode(scene, cfg, quintic_attack(T=8))
    one_shot = rollout_episode(scene, cfg, quintic_attack(T=8, trigger_mode=ONE_SHOT))
    assert one_shot.trigger_steps < persistent.trigger_steps
    np.testing.assert_array_equal(persistent.trajectory.vectors, one_shot.trajectory.vectors)


def test_defense_truncates_inside_critical_zone(line_scene):
    cfg = PlannerConfig(K=16)
    atk = quintic_attack()
    undefended = rollout_episode(line_scene, cfg, atk)
    defended = rollout_episode(line_scene, cfg, atk, DefensePolicy(0.15, 1))
    assert not undefended.success
    assert defended.success
    assert defended.chunks_executed > undefended.chunks_executed


def test_success_is_inclusive():
    scene = Scene({"target": [0.0, 0.0, 0.0]}, "target", EEState.origin(), success_radius=0.25)
    assert evaluate_success(EEState([0.25, 0.0, 0.0]), scene)
    assert not evaluate_success(EEState([0.2500001, 0.0, 0.0]), scene)


def test_asr_formula():
    ctsr = 0.953
    sr = ctsr * (1 - 0.932)
    assert attack_success_rate(ctsr, sr) == pytest.approx(0.932, abs=1e-3)
    with pytest.raises(ASRUndefined):
        attack_success_rate(0.0, 0.0)


def test_compute_metrics_from_booleans():
    m = compute_metrics([True] * 8 + [False] * 2, [True] * 2 + [False] * 8)
    assert m.ctsr == 0.8
    assert m.sr_trigger == 0.2
    assert m.asr == pytest.approx(0.75)
    assert compute_metrics([False, False], [False]).asr is None
    assert compute_metrics([True], []).asr is None


def test_sample_scene_inside_box():
    rng = np.random.default_rng(0)
    sc = ScenarioConfig()
    for _ in range(50):
        scene = sample_scene(rng, sc)
        assert np.all(scene.target_position >= sc.target_box_min)
        assert np.all(scene.target_position <= sc.target_box_max)


def test_config_errors():
    with pytest.raises(ConfigError):
        PlannerConfig(K=0)
    with pytest.raises(ConfigError):
        DeploymentAttack(True, profile=None)
    with pytest.raises(ConfigError):
        Scene({"a": [0, 0, 0]}, "b", EEState.origin())


def test_steps_to_plans():
    assert steps_to_plans(64, 16) == 4
    assert steps_to_plans(65, 16) == 5
    assert steps_to_plans(10, 1) == 10


def test_constant_attack_same_drift_as_quintic(line_scene):
    T = 16
    q = quintic_attack(T=T)
    c = DeploymentAttack(True, profile=PerturbationProfile.from_total_deviation(CONSTANT, 0.3, (0, 1, 0), T, exact=True), T_window=T)
    fq = rollout_episode(line_scene, PlannerConfig(K=16), q).trajectory.final.position
    fc = rollout_episode(line_scene, PlannerConfig(K=16), c).trajectory.final.position
    np.testing.assert_allclose(fq, fc, atol=1e-12)
