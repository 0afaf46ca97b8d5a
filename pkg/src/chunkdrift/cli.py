"""Command-line entry point: simulate, sweep, poison, audit, synth.

Exit status: 0 on success, 1 when ``audit`` finds a violation, 2 on bad
input (configuration or file format errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, load_config
from .dataio import SCHEMA_VERSION, dumps, read_dataset, read_trajectories, sniff_kind, write_dataset
from .demos import DemoConfig, demo_trajectory, synthetic_dataset
from .errors import ChunkDriftError, ConfigError
from .guard import KinematicLimits, calibrate_limits, validate_kinematics
from .perturb import PerturbationProfile
from .poison import AttackConfig, poison_dataset
from .runner import run_simulate, run_sweep, write_manifest

logger = logging.getLogger("chunkdrift")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _config(args)
    results = run_simulate(cfg, Path(args.out), args.jobs)
    m = results[0].metrics()
    asr = "n/a" if m.asr is None else f"{m.asr:.3f}"
    print(f"ctsr={m.ctsr:.3f} asr={asr} n={m.n_clean} -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    tables = run_sweep(cfg, Path(args.out), args.jobs)
    for axis, rows in tables.items():
        for r in rows:
            asr = "n/a" if r["asr"] is None else f"{r['asr']:.3f}"
            print(f"{axis}={r['value']}: asr={asr}")
    return 0


def attack_config_from(cfg: ExperimentConfig) -> AttackConfig:
    a, p = cfg.attack, cfg.poison
    if a.alpha_m_per_step is not None:
        alpha = a.alpha_m_per_step
    else:
        alpha = PerturbationProfile.from_total_deviation(a.profile, a.total_deviation_m, a.direction, p.window_steps).alpha
    try:
        return AttackConfig(alpha, a.direction, p.window_steps, p.activation_distance_m, a.profile, filter_noop=p.filter_noop)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), "poison") from None


def cmd_poison(args) -> int:
    cfg = _config(args)
    if args.episodes_per_task is not None:
        cfg = replace(cfg, poison=replace(cfg.poison, episodes_per_task=args.episodes_per_task))
    dataset = read_dataset(args.dataset)
    attack = attack_config_from(cfg)
    poisoned, report = poison_dataset(dataset, attack, cfg.poison.episodes_per_task, cfg.master_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(poisoned, out / "poisoned.jsonl")
    (out / "poison_report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, cfg, "poison", {"dataset": "poisoned.jsonl", "report": "poison_report.json"})
    print(f"poisoned {len(report.poisoned_episode_ids)} episodes, {report.n_poisoned_frames}/{report.n_frames} frames -> {out}")
    return 0


def _load_trajectories(path) -> list[tuple[str, object]]:
    if sniff_kind(path) == "dataset":
        return [(d.episode_id, demo_trajectory(d)) for d in read_dataset(path)]
    return read_trajectories(path)


def _limits(cfg: ExperimentConfig, calibrate_path) -> KinematicLimits:
    g = cfg.guard
    if g.explicit:
        return g.build()
    if calibrate_path is None:
        raise ConfigError("no limits configured; pass --calibrate CLEAN_FILE or set guard.*_max", "guard")
    trajs = [t for _, t in _load_trajectories(calibrate_path)]
    return calibrate_limits(trajs, g.dt_s, g.calibration_percentile, g.calibration_safety_factor, g.c2_tol)


def cmd_audit(args) -> int:
    cfg = _config(args)
    limits = _limits(cfg, args.calibrate)
    items = _load_trajectories(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    flagged = 0
    with open(out / "verdicts.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for tid, traj in items:
            verdict = validate_kinematics(traj, limits)
            flagged += not verdict.ok
            fh.write(dumps({"schema_version": SCHEMA_VERSION, "id": tid, **verdict.to_dict()}) + "\n")
    (out / "limits.json").write_text(json.dumps(limits.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, cfg, "audit", {"verdicts": "verdicts.jsonl", "limits": "limits.json"})
    print(f"{flagged}/{len(items)} flagged -> {out}")
    return 1 if flagged else 0


def cmd_synth(args) -> int:
    cfg = _config(args)
    demo_cfg = DemoConfig(n_tasks=args.tasks, episodes_per_task=args.episodes_per_task)
    data = synthetic_dataset(cfg.master_seed, demo_cfg, cfg.scenario.build())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(data, out / "dataset.jsonl")
    print(f"wrote {len(data)} episodes -> {out / 'dataset.jsonl'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML or JSON experiment config (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override master_seed")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes; never changes outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="chunkdrift", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="clean vs triggered rollouts for the base config")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="ASR vs each configured sweep axis")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("poison", parents=[common], help="poison a JSONL demonstration dataset")
    s.add_argument("dataset", metavar="DATASET")
    s.add_argument("--episodes-per-task", type=int, help="override poison.episodes_per_task")
    s.set_defaults(func=cmd_poison)

    s = sub.add_parser("audit", parents=[common], help="kinematic audit; exit 1 if anything is flagged")
    s.add_argument("input", metavar="FILE", help="dataset or trajectory JSONL")
    s.add_argument("--calibrate", metavar="CLEAN_FILE", help="calibrate limits from clean data")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic demonstration dataset")
    s.add_argument("--tasks", type=int, default=10)
    s.add_argument("--episodes-per-task", type=int, default=10)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ChunkDriftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
