"""Experiment reports and the frozen-value fixture store."""

from __future__ import annotations

import datetime as _dt
import json
import math
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

FIXTURE_VERSION = 1
DEFAULT_TOLERANCE = 1e-9


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types for numpy scalars, arrays, tuples and dataclasses."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


@dataclass
class ExperimentReport:
    experiment: str
    n: int
    q: int
    dist: str
    seed: int | None
    values: dict
    ci: dict = field(default_factory=dict)
    runtime_ms: float | None = 0.0

    def to_json_dict(self, timing: bool = True) -> dict:
        return to_jsonable(
            {
                "experiment": self.experiment,
                "n": self.n,
                "q": self.q,
                "dist": self.dist,
                "seed": self.seed,
                "values": self.values,
                "ci": self.ci,
                "runtime_ms": self.runtime_ms if timing else None,
            }
        )

    def dumps(self, timing: bool = True) -> str:
        return json.dumps(self.to_json_dict(timing), indent=2, sort_keys=True) + "\n"


class FixtureError(Exception):
    pass


class FixtureExists(FixtureError):
    pass


class FixtureMismatch(FixtureError):
    pass


class FixtureMissing(FixtureError):
    pass


def _git_ref(cwd: Path) -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], cwd=cwd, capture_output=True, text=True, check=True
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.CalledProcessError):
        return "unknown"


def _flatten(value: Any) -> list[float]:
    if isinstance(value, (list, tuple, np.ndarray)):
        return [x for v in value for x in _flatten(v)]
    return [float(value)]


def values_close(a: Any, b: Any, tol: float) -> bool:
    fa, fb = _flatten(a), _flatten(b)
    if len(fa) != len(fb):
        return False
    return all(math.isclose(x, y, rel_tol=0.0, abs_tol=tol) for x, y in zip(fa, fb))


class FixtureStore:
    """Versioned JSON map ``key -> {value, tolerance, recorded_at, git_ref}``.

    Recording an existing key is allowed only when the new value agrees with
    the stored one, or with ``overwrite=True``.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.entries: dict[str, dict] = {}
        if self.path.exists():
            data = json.loads(self.path.read_text())
            if data.get("version") != FIXTURE_VERSION:
                raise FixtureError(f"unsupported fixture version {data.get('version')!r}")
            self.entries = data["entries"]

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def get(self, key: str) -> dict:
        if key not in self.entries:
            raise FixtureMissing(key)
        return self.entries[key]

    def value(self, key: str) -> Any:
        return self.get(key)["value"]

    def record(self, key: str, value: Any, tolerance: float = DEFAULT_TOLERANCE, overwrite: bool = False) -> bool:
        """Store ``value``; returns ``True`` when the store changed."""
        value = to_jsonable(value)
        if key in self.entries and not overwrite:
            old = self.entries[key]
            if values_close(old["value"], value, old["tolerance"]):
                return False
            raise FixtureExists(f"{key}: stored {old['value']!r}, measured {value!r}")
        self.entries[key] = {
            "value": value,
            "tolerance": tolerance,
            "recorded_at": _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat(),
            "git_ref": _git_ref(self.path.parent),
        }
        return True

    def check(self, key: str, value: Any) -> None:
        entry = self.get(key)
        if not values_close(entry["value"], to_jsonable(value), entry["tolerance"]):
            raise FixtureMismatch(f"{key}: stored {entry['value']!r}, measured {to_jsonable(value)!r}")

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        data = {"version": FIXTURE_VERSION, "entries": dict(sorted(self.entries.items()))}
        self.path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def fixture_key(experiment: str, **params: Any) -> str:
    parts = [f"{k}={params[k]}" for k in sorted(params) if params[k] is not None]
    return experiment + ("[" + ",".join(parts) + "]" if parts else "")
