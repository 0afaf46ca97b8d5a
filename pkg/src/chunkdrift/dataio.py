"""JSON-lines files for demonstrations and executed trajectories.

Every line carries ``schema_version``. An episode starts with a header line
(``episode_id``, ``task_id``, ``instruction``, ``target_object``) followed by
one line per frame::

    {"t": 0, "ee": {"pos": [3], "ori": [3], "grip": g},
     "objects": {"id": [3]}, "trigger": null | {...}, "action": [7]}

Trajectory files use a header with ``trajectory_id`` and ``dt_s`` and frame
lines without ``objects``/``trigger``/``action``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from .errors import ChunkDriftError, FormatError
from .kinematics import DeltaAction, EEState, StateTrajectory
from .poison import Demonstration, Frame, Observation, TriggerDescriptor

SCHEMA_VERSION = "1.0"
SUPPORTED_MAJOR = 1

HEADER_KEYS = ("episode_id", "task_id", "instruction", "target_object")


def dumps(record: dict) -> str:
    """Canonical single-line JSON (sorted keys, no whitespace)."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _floats(a) -> list[float]:
    return [float(x) for x in np.asarray(a, dtype=float).reshape(-1)]


def _ee_record(state: EEState) -> dict:
    return {"pos": _floats(state.position), "ori": _floats(state.orientation), "grip": float(state.gripper)}


def episode_records(demo: Demonstration) -> Iterator[dict]:
    yield {"schema_version": SCHEMA_VERSION, **{k: getattr(demo, k) for k in HEADER_KEYS}}
    for t, frame in enumerate(demo.frames):
        obs = frame.observation
        yield {
            "schema_version": SCHEMA_VERSION,
            "t": t,
            "ee": _ee_record(obs.ee_state),
            "objects": {k: _floats(v) for k, v in sorted(obs.object_positions.items())},
            "trigger": None if obs.trigger is None else obs.trigger.to_dict(),
            "action": _floats(frame.action.as_vector()),
        }


def write_dataset(dataset: Iterable[Demonstration], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for demo in dataset:
            for rec in episode_records(demo):
                fh.write(dumps(rec) + "\n")


def trajectory_records(traj: StateTrajectory, trajectory_id: str) -> Iterator[dict]:
    yield {"schema_version": SCHEMA_VERSION, "trajectory_id": trajectory_id, "dt_s": float(traj.dt)}
    for t, state in enumerate(traj.states):
        yield {"schema_version": SCHEMA_VERSION, "t": t, "ee": _ee_record(state)}


def write_trajectories(items: Iterable[tuple[str, StateTrajectory]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tid, traj in items:
            for rec in trajectory_records(traj, tid):
                fh.write(dumps(rec) + "\n")


def _check_version(rec: dict, line: int) -> None:
    ver = rec.get("schema_version")
    if not isinstance(ver, str):
        raise FormatError("missing schema_version", line)
    try:
        major = int(ver.split(".")[0])
    except ValueError:
        raise FormatError(f"malformed schema_version {ver!r}", line) from None
    if major != SUPPORTED_MAJOR:
        raise FormatError(f"unsupported schema major version {major} (reader supports {SUPPORTED_MAJOR})", line)


def _records(fh: TextIO) -> Iterator[tuple[int, dict]]:
    for lineno, raw in enumerate(fh, start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", lineno) from None
        if not isinstance(rec, dict):
            raise FormatError("record is not a JSON object", lineno)
        _check_version(rec, lineno)
        yield lineno, rec


def _parse_ee(rec: dict, line: int) -> EEState:
    try:
        ee = rec["ee"]
        return EEState(ee["pos"], ee["ori"], ee["grip"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad ee record: {exc!r}", line) from None
    except ChunkDriftError as exc:
        raise FormatError(str(exc), line) from None


def _parse_frame(rec: dict, line: int, expected_t: int) -> Frame:
    if rec.get("t") != expected_t:
        raise FormatError(f"expected t={expected_t}, got {rec.get('t')!r}", line)
    state = _parse_ee(rec, line)
    try:
        objects = {str(k): np.asarray(v, dtype=float).reshape(3) for k, v in rec["objects"].items()}
        trig = rec.get("trigger")
        trigger = None if trig is None else TriggerDescriptor(**trig)
        action = DeltaAction.from_vector(np.asarray(rec["action"], dtype=float).reshape(7))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise FormatError(f"bad frame record: {exc!r}", line) from None
    except ChunkDriftError as exc:
        raise FormatError(str(exc), line) from None
    return Frame(Observation(state, objects, trigger), action)


def read_dataset(path: str | Path) -> list[Demonstration]:
    """Parse a demonstration file; errors name the offending line."""
    out: list[Demonstration] = []
    header = None
    frames: list[Frame] = []
    header_line = 0

    def close():
        if header is None:
            return
        if not frames:
            raise FormatError(f"episode {header['episode_id']} has no frames", header_line)
        out.append(Demonstration(*(str(header[k]) for k in HEADER_KEYS), frames=tuple(frames)))

    with open(path, encoding="utf-8") as fh:
        for lineno, rec in _records(fh):
            if "episode_id" in rec:
                close()
                missing = [k for k in HEADER_KEYS if k not in rec]
                if missing:
                    raise FormatError(f"episode header missing {missing}", lineno)
                header, frames, header_line = rec, [], lineno
            elif "t" in rec:
                if header is None:
                    raise FormatError("frame before any episode header", lineno)
                frames.append(_parse_frame(rec, lineno, len(frames)))
            else:
                raise FormatError("record is neither an episode header nor a frame", lineno)
    close()
    return out


def read_trajectories(path: str | Path) -> list[tuple[str, StateTrajectory]]:
    out = []
    tid, dt, rows = None, None, []
    with open(path, encoding="utf-8") as fh:
        for lineno, rec in _records(fh):
            if "trajectory_id" in rec:
                if tid is not None:
                    out.append((tid, StateTrajectory(np.array(rows), dt)))
                try:
                    tid, dt, rows = str(rec["trajectory_id"]), float(rec["dt_s"]), []
                except (KeyError, TypeError, ValueError) as exc:
                    raise FormatError(f"bad trajectory header: {exc!r}", lineno) from None
                if not dt > 0:
                    raise FormatError("dt_s must be > 0", lineno)
            elif "t" in rec:
                if tid is None:
                    raise FormatError("frame before any trajectory header", lineno)
                if rec.get("t") != len(rows):
                    raise FormatError(f"expected t={len(rows)}, got {rec.get('t')!r}", lineno)
                rows.append(_parse_ee(rec, lineno).as_vector())
            else:
                raise FormatError("record is neither a trajectory header nor a frame", lineno)
    if tid is not None:
        if not rows:
            raise FormatError(f"trajectory {tid} has no frames")
        out.append((tid, StateTrajectory(np.array(rows), dt)))
    return out


def sniff_kind(path: str | Path) -> str:
    """``"dataset"`` or ``"trajectory"`` from the first record."""
    with open(path, encoding="utf-8") as fh:
        for _, rec in _records(fh):
            if "episode_id" in rec:
                return "dataset"
            if "trajectory_id" in rec:
                return "trajectory"
            raise FormatError("file does not start with a header record", 1)
    raise FormatError("empty file")
