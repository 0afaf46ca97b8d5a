import csv
import hashlib
import json

import pytest
import yaml

from chunkdrift.cli import main
from chunkdrift.dataio import read_dataset
from chunkdrift.runner import bootstrap_asr_ci, derive_seed


def write_cfg(tmp_path, raw, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_seed_derivation_is_sha256():
    digest = hashlib.sha256(b"7:2:15").hexdigest()
    assert derive_seed(7, 2, 15) == int(digest[:16], 16)
    assert derive_seed(7, 2, 15) != derive_seed(7, 15, 2)


def test_bootstrap_ci_brackets_point_estimate():
    clean = [True] * 90 + [False] * 10
    trig = [False] * 80 + [True] * 20
    lo, hi = bootstrap_asr_ci(clean, trig, 500, seed=0)
    point = (0.9 - 0.2) / 0.9
    assert lo <= point <= hi
    assert bootstrap_asr_ci([False] * 5, [False] * 5, 100, 0) == (None, None)


def test_simulate_attack_disabled(tmp_path):
    cfg = write_cfg(tmp_path, {"n_episodes": 10, "attack": {"enabled": False}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "metrics.csv")
    assert rows == [{"condition": "base", "ctsr": "1.0", "sr_trigger": "", "asr": "", "n": "10"}]


def test_simulate_default_attack_is_effective(tmp_path):
    cfg = write_cfg(tmp_path, {"n_episodes": 50})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    row = read_csv(tmp_path / "o" / "metrics.csv")[0]
    assert float(row["asr"]) >= 0.8
    lines = (tmp_path / "o" / "episodes.jsonl").read_text().splitlines()
    assert len(lines) == 100
    assert all(json.loads(l)["schema_version"] == "1.0" for l in lines)


def test_jobs_do_not_change_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {"n_episodes": 12, "sweep": {"chunk_size_steps": [1, 16], "profile": ["constant"]}})
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "a"), "--jobs", "1"])
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "3"])
    for name in ("sweep_chunk_size_steps.csv", "sweep_profile.csv", "episodes.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_flag_changes_streams(tmp_path):
    cfg = write_cfg(tmp_path, {"n_episodes": 5})
    main(["simulate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "episodes.jsonl").read_bytes() != (tmp_path / "b" / "episodes.jsonl").read_bytes()
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["config"]["master_seed"] == 1


def test_single_point_axis(tmp_path):
    cfg = write_cfg(tmp_path, {"n_episodes": 5, "sweep": {"activation_distance_m": [0.15]}})
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "sweep_activation_distance_m.csv")
    assert len(rows) == 1 and rows[0]["value"] == "0.15"


def test_sweep_without_axes_is_config_error(tmp_path, capsys):
    assert main(["sweep", "--out", str(tmp_path / "o")]) == 2
    assert "sweep" in capsys.readouterr().err


def test_invalid_config_reports_path(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"planner": {"chunk_size_steps": -3}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "planner.chunk_size_steps" in capsys.readouterr().err


@pytest.fixture
def dataset(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "d"), "--tasks", "10", "--episodes-per-task", "4"]) == 0
    return tmp_path / "d" / "dataset.jsonl"


def test_poison_zero_episodes_is_identity(tmp_path, dataset):
    assert main(["poison", str(dataset), "--episodes-per-task", "0", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "poisoned.jsonl").read_bytes() == dataset.read_bytes()


def test_poison_one_per_task(tmp_path, dataset):
    assert main(["poison", str(dataset), "--episodes-per-task", "1", "--out", str(tmp_path / "p")]) == 0
    report = json.loads((tmp_path / "p" / "poison_report.json").read_text())
    assert len(report["poisoned_episode_ids"]) == 10
    data = {d.episode_id: d for d in read_dataset(dataset)}
    for eid, (start, _) in report["windows"].items():
        d = data[eid]
        target = d.frames[0].observation.object_positions["target"]
        dists = [sum((p - target) ** 2) ** 0.5 for p in d.ee_positions()]
        assert start == next(t for t, x in enumerate(dists) if x < 0.15)


def test_poison_corrupt_line(tmp_path, dataset, capsys):
    lines = dataset.read_text().splitlines()
    lines[2] = "{not json"
    dataset.write_text("\n".join(lines) + "\n")
    assert main(["poison", str(dataset), "--out", str(tmp_path / "p")]) == 2
    assert "line 3" in capsys.readouterr().err


@pytest.mark.parametrize("profile,expected", [("constant", 1), ("smootherstep_quintic", 0)])
def test_audit_exit_status(tmp_path, dataset, profile, expected):
    cfg = write_cfg(tmp_path, {"attack": {"profile": profile, "total_deviation_m": 0.1}, "poison": {"episodes_per_task": 4}})
    assert main(["poison", str(dataset), "--config", cfg, "--out", str(tmp_path / "p")]) == 0
    poisoned = tmp_path / "p" / "poisoned.jsonl"
    code = main(["audit", str(poisoned), "--calibrate", str(dataset), "--out", str(tmp_path / "a")])
    assert code == expected
    verdicts = [json.loads(l) for l in (tmp_path / "a" / "verdicts.jsonl").read_text().splitlines()]
    assert len(verdicts) == 40
    if expected:
        assert all(not v["jerk_ok"] for v in verdicts)


def test_audit_clean_dataset_passes(tmp_path, dataset):
    assert main(["audit", str(dataset), "--calibrate", str(dataset), "--out", str(tmp_path / "a")]) == 0


def test_audit_needs_limits(tmp_path, dataset, capsys):
    assert main(["audit", str(dataset), "--out", str(tmp_path / "a")]) == 2
    assert "calibrate" in capsys.readouterr().err


def test_audit_with_configured_limits(tmp_path, dataset):
    cfg = write_cfg(tmp_path, {"guard": {"v_max_m_s": 1e-6, "a_max_m_s2": 10.0, "j_max_m_s3": 100.0}})
    assert main(["audit", str(dataset), "--config", cfg, "--out", str(tmp_path / "a")]) == 1
