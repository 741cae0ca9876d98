"""Time series produced by a run, plus their file formats."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RUN_COLUMNS = ("t", "E", "L6_D_t", "flux_0_t", "phi_t", "l5l10_partial", "l4l12_partial")
DIAG_COLUMNS = ("t", "ext_cone_energy", "l6_omega", "l10", "l12", "phi_tan", "phi_rad", "energy_nodal")
ALL_COLUMNS = tuple(dict.fromkeys(RUN_COLUMNS + DIAG_COLUMNS))


def cumulative_trapezoid(y, t) -> np.ndarray:
    y = np.asarray(y, float)
    t = np.asarray(t, float)
    out = np.zeros_like(y)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def fmt(v: float) -> str:
    """Shortest round-trip text for a float; stable across runs."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


@dataclass
class DecaySeries:
    """Records at increasing times; ``data`` maps column name to a float array."""

    data: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = {k: np.asarray(v, float) for k, v in self.data.items()}
        t = self.data.get("t")
        if t is None:
            raise ValueError("series needs a 't' column")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("series times must be strictly increasing")
        for k, v in self.data.items():
            if v.shape != t.shape:
                raise ValueError(f"column {k!r} has {v.size} rows, expected {t.size}")

    def __getitem__(self, key) -> np.ndarray:
        return self.data[key]

    def __len__(self) -> int:
        return int(self.data["t"].size)

    @property
    def t(self) -> np.ndarray:
        return self.data["t"]

    def at(self, time: float) -> int:
        """Index of the record at ``time`` (nearest, within half a record gap)."""
        k = int(np.argmin(np.abs(self.t - time)))
        return k

    def check(self) -> list[str]:
        """Violations of the series invariants (finite, non-negative)."""
        bad = []
        for k, v in self.data.items():
            if k == "t":
                continue
            if not np.all(np.isfinite(v)):
                bad.append(f"{k}: non-finite values")
            elif np.any(v < 0):
                bad.append(f"{k}: negative values")
        return bad

    # --------------------------------------------------------------- io

    def _csv(self, columns) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in zip(*(self.data[c] for c in columns)):
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()

    def run_csv(self) -> str:
        return self._csv(RUN_COLUMNS)

    def diagnostics_csv(self) -> str:
        return self._csv([c for c in DIAG_COLUMNS if c in self.data])

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"run": out / "run.csv", "diagnostics": out / "diagnostics.csv", "series": out / "series.json"}
        paths["run"].write_text(self.run_csv(), encoding="utf-8", newline="\n")
        paths["diagnostics"].write_text(self.diagnostics_csv(), encoding="utf-8", newline="\n")
        paths["series"].write_text(json.dumps(self.meta, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
        return paths

    @classmethod
    def read(cls, out_dir) -> DecaySeries:
        out = Path(out_dir)
        data = _read_csv(out / "run.csv")
        diag = out / "diagnostics.csv"
        if diag.exists():
            d2 = _read_csv(diag)
            for k, v in d2.items():
                if k != "t":
                    data[k] = v
        meta_path = out / "series.json"
        meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
        return cls(data, meta)


def _read_csv(path: Path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header = rows[0]
    cols = list(zip(*rows[1:])) if len(rows) > 1 else [()] * len(header)
    return {h: np.array([float(v) for v in c]) for h, c in zip(header, cols)}


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
