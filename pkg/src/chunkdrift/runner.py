"""Seeded condition runs, bootstrap intervals, and deterministic file output.

Episode seeds are ``int(sha256(f"{master_seed}:{condition}:{episode}")[:16], 16)``,
so any implementation with SHA-256 can regenerate the same streams. The
clean and triggered rollouts of an episode share one scene and one seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, activation_value
from .dataio import SCHEMA_VERSION, dumps
from .errors import ConfigError
from .simenv import EpisodeOutcome, compute_metrics, rollout_episode, sample_scene

METRIC_COLUMNS = ("condition", "ctsr", "sr_trigger", "asr", "n")
SWEEP_COLUMNS = ("axis", "value", "condition", "ctsr", "sr_trigger", "asr", "asr_ci_low", "asr_ci_high", "n")


def derive_seed(master_seed: int, condition: int | str, episode: int | str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{condition}:{episode}".encode()).hexdigest()
    return int(digest[:16], 16)


@dataclass(frozen=True)
class Condition:
    index: int
    name: str
    config: ExperimentConfig
    axis: str | None = None
    value: object = None


@dataclass(frozen=True)
class EpisodeRecord:
    condition: str
    episode: int
    seed: int
    clean: EpisodeOutcome
    triggered: EpisodeOutcome | None

    def rows(self) -> list[dict]:
        out = []
        for variant, o in (("clean", self.clean), ("triggered", self.triggered)):
            if o is None:
                continue
            out.append(
                {
                    "schema_version": SCHEMA_VERSION,
                    "condition": self.condition,
                    "episode": self.episode,
                    "seed": self.seed,
                    "variant": variant,
                    "success": o.success,
                    "final_distance_m": o.final_distance,
                    "steps": o.steps,
                    "chunks": o.chunks_executed,
                    "committed": o.committed,
                    "attack_fired_at": o.attack_fired_at,
                    "trigger_steps": o.trigger_steps,
                }
            )
        return out


@dataclass(frozen=True)
class ConditionResult:
    condition: Condition
    records: tuple[EpisodeRecord, ...]

    @property
    def clean(self) -> list[bool]:
        return [r.clean.success for r in self.records]

    @property
    def triggered(self) -> list[bool]:
        return [r.triggered.success for r in self.records if r.triggered is not None]

    def metrics(self):
        return compute_metrics(self.clean, self.triggered)


def _run_episode(args) -> EpisodeRecord:
    cond, ep = args
    cfg = cond.config
    seed = derive_seed(cfg.master_seed, cond.index, ep)
    scene = sample_scene(np.random.default_rng(seed), cfg.scenario.build())
    planner = cfg.planner.build()
    defense = None if cfg.defense is None else cfg.defense.build()
    clean = rollout_episode(scene, planner, None, defense, seed=seed)
    trig = None
    if cfg.attack.enabled:
        trig = rollout_episode(scene, planner, cfg.attack.build(), defense, seed=seed)
    return EpisodeRecord(cond.name, ep, seed, clean, trig)


def ordered_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """``map`` that may fan out to processes; output order equals input order."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def run_conditions(conditions: Sequence[Condition], jobs: int = 1) -> list[ConditionResult]:
    tasks = [(c, ep) for c in conditions for ep in range(c.config.n_episodes)]
    records = ordered_map(_run_episode, tasks, jobs)
    out, k = [], 0
    for c in conditions:
        n = c.config.n_episodes
        out.append(ConditionResult(c, tuple(records[k : k + n])))
        k += n
    return out


def bootstrap_asr_ci(
    clean: Sequence[bool], triggered: Sequence[bool], n_resamples: int, seed: int, level: float = 0.95
) -> tuple[float | None, float | None]:
    """Percentile interval for ASR, resampling episodes (clean/triggered paired).

    Resamples with zero clean successes are dropped; ``(None, None)`` if all are.
    """
    c = np.asarray(clean, dtype=float)
    t = np.asarray(triggered, dtype=float)
    if c.size == 0 or t.size != c.size:
        return None, None
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, c.size, size=(n_resamples, c.size))
    ctsr = c[idx].mean(axis=1)
    sr = t[idx].mean(axis=1)
    ok = ctsr > 0
    if not np.any(ok):
        return None, None
    asr = (ctsr[ok] - sr[ok]) / ctsr[ok]
    lo, hi = np.percentile(asr, [100 * (1 - level) / 2, 100 * (1 + level) / 2])
    return float(lo), float(hi)


def simulate_conditions(cfg: ExperimentConfig) -> list[Condition]:
    return [Condition(0, "base", cfg)]


def _axis_variants(cfg: ExperimentConfig):
    s = cfg.sweep
    for k in s.chunk_size_steps:
        yield "chunk_size_steps", k, replace(cfg, planner=replace(cfg.planner, chunk_size_steps=int(k)))
    for a in s.activation_distance_m:
        label = "full" if math.isinf(activation_value(a)) else a
        yield "activation_distance_m", label, replace(cfg, attack=replace(cfg.attack, activation_distance_m=a))
    for p in s.profile:
        yield "profile", p, replace(cfg, attack=replace(cfg.attack, profile=p))
    for n in s.n_episodes:
        yield "n_episodes", n, replace(cfg, n_episodes=int(n))


def sweep_conditions(cfg: ExperimentConfig) -> list[Condition]:
    """One condition per axis value, each varying a single field of the base config."""
    return [
        Condition(i, f"{axis}={value}", variant, axis, value)
        for i, (axis, value, variant) in enumerate(_axis_variants(cfg))
    ]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def write_episodes(path: Path, results: Sequence[ConditionResult]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for res in results:
            for rec in res.records:
                for row in rec.rows():
                    fh.write(dumps(row) + "\n")


def metrics_row(res: ConditionResult) -> dict:
    m = res.metrics()
    return {"condition": res.condition.name, "ctsr": m.ctsr, "sr_trigger": m.sr_trigger, "asr": m.asr, "n": m.n_clean}


def write_manifest(out_dir: Path, cfg: ExperimentConfig, command: str, outputs: dict[str, str]) -> Path:
    """``manifest.json``; its ``timestamp`` is the only non-deterministic field of a run."""
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": cfg.config_hash(),
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": dict(sorted(outputs.items())),
        "config": cfg.to_dict(),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def run_simulate(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> list[ConditionResult]:
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_conditions(simulate_conditions(cfg), jobs)
    write_episodes(out_dir / "episodes.jsonl", results)
    write_csv(out_dir / "metrics.csv", METRIC_COLUMNS, [metrics_row(r) for r in results])
    write_manifest(out_dir, cfg, "simulate", {"base": "metrics.csv", "episodes": "episodes.jsonl"})
    return results


def sweep_rows(results: Sequence[ConditionResult], cfg: ExperimentConfig) -> dict[str, list[dict]]:
    tables: dict[str, list[dict]] = {}
    for res in results:
        c = res.condition
        row = metrics_row(res)
        lo, hi = bootstrap_asr_ci(
            res.clean, res.triggered, cfg.sweep.bootstrap_resamples, derive_seed(cfg.master_seed, c.index, "bootstrap")
        )
        row.update(axis=c.axis, value=c.value, asr_ci_low=lo, asr_ci_high=hi)
        tables.setdefault(c.axis, []).append(row)
    return tables


def run_sweep(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> dict[str, list[dict]]:
    conditions = sweep_conditions(cfg)
    if not conditions:
        raise ConfigError("no sweep axes defined", "sweep")
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_conditions(conditions, jobs)
    tables = sweep_rows(results, cfg)
    outputs = {"episodes": "episodes.jsonl"}
    for axis, rows in tables.items():
        name = f"sweep_{axis}.csv"
        write_csv(out_dir / name, SWEEP_COLUMNS, rows)
        outputs[axis] = name
    write_episodes(out_dir / "episodes.jsonl", results)
    write_manifest(out_dir, cfg, "sweep", outputs)
    return tables
