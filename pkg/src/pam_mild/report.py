"""Structured study results."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _plain(v):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


@dataclass
class RunReport:
    study: str
    config: dict
    seed: int | None
    metrics: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    wallclock: float = 0.0
    passed: bool | None = None
    # wall-clock measurements other than the total; kept out of metrics so reruns compare equal
    timings: dict = field(default_factory=dict)
    # extra files written next to report.json (name -> JSON payload); not part of the report itself
    artifacts: dict = field(default_factory=dict, repr=False)

    def add_series(self, name: str, x, y, columns=("x", "y")):
        self.series[name] = {
            "columns": list(columns),
            "x": _plain(np.asarray(x)),
            "y": _plain(np.asarray(y)),
        }

    def to_dict(self) -> dict:
        return {
            "study": self.study,
            "config": _plain(self.config),
            "seed": self.seed,
            "metrics": _plain(self.metrics),
            "series": _plain(self.series),
            "wallclock": float(self.wallclock),
            "timings": _plain(self.timings),
            "passed": self.passed,
        }

    def metrics_json(self) -> str:
        """Canonical encoding of the metrics block (used for determinism checks)."""
        return json.dumps(_plain(self.metrics), sort_keys=True)

    def write(self, directory) -> Path:
        """Write report.json and one CSV per series into `directory`."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        for name, s in self.series.items():
            with open(out / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(s["columns"])
                for row in zip(s["x"], s["y"]):
                    w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            study=d["study"],
            config=d["config"],
            seed=d.get("seed"),
            metrics=d.get("metrics", {}),
            series=d.get("series", {}),
            wallclock=d.get("wallclock", 0.0),
            passed=d.get("passed"),
            timings=d.get("timings", {}),
        )
