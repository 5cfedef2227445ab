"""Per-vehicle PDR, latency distributions and report files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PDR_GRID_STEP = 0.01
PDR_GOOD = 0.9


@dataclass(frozen=True)
class VehicleCounters:
    received: int = 0
    transmitted: int = 0
    dropped: int = 0

    def __post_init__(self):
        if min(self.received, self.transmitted, self.dropped) < 0:
            raise ValueError("counters must be non-negative")
        if self.received > self.transmitted:
            raise ValueError(f"received {self.received} > transmitted {self.transmitted}")


def pdr(c: VehicleCounters) -> float | None:
    """received / (transmitted + dropped); None when nothing was addressed to the vehicle."""
    denom = c.transmitted + c.dropped
    if denom == 0:
        return None
    return c.received / denom


def pdr_cdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Empirical P(PDR <= x) on a 0.01 grid over [0, 1]."""
    v = np.sort(np.asarray(values, dtype=float))
    grid = np.arange(101) / 100.0
    if v.size == 0:
        return grid, np.zeros_like(grid)
    cum = np.searchsorted(v, grid, side="right") / v.size
    return grid, cum


def latency_pdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Histogram with 1 ms bins from 1 ms up to the largest sample."""
    s = np.asarray(samples, dtype=np.int64)
    if s.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    counts = np.bincount(s, minlength=int(s.max()) + 1)
    bins = np.arange(1, counts.size)
    return bins, counts[1:] / s.size


@dataclass
class MetricsReport:
    """Outcome of one run: per-vehicle counters plus pooled latency samples."""

    counters: dict[int, VehicleCounters]
    serving: dict[int, int | None]
    latencies: np.ndarray
    meta: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def pdr(self) -> dict[int, float]:
        out = {}
        for vid, c in self.counters.items():
            p = pdr(c)
            if p is not None and self.serving.get(vid) is not None:
                out[vid] = p
        return out

    @property
    def excluded(self) -> list[int]:
        """Vehicles without any addressed message (out of range or idle)."""
        keep = self.pdr
        return [v for v in self.counters if v not in keep]

    def vehicle_rows(self) -> list[tuple]:
        seed = self.meta.get("seed", 0)
        rows = []
        for vid, p in self.pdr.items():
            c = self.counters[vid]
            rows.append((seed, vid, self.serving[vid], c.received, c.transmitted, c.dropped, p))
        return rows

    def pdr_values(self) -> np.ndarray:
        return np.array(list(self.pdr.values()), dtype=float)

    def summary(self) -> dict:
        return _summary(self.pdr_values(), self.latencies, self.vehicle_rows(), [self])


def build_report(counters: dict[int, VehicleCounters], serving: dict[int, int | None], latencies,
                 meta: dict | None = None, diagnostics: dict | None = None) -> MetricsReport:
    return MetricsReport(dict(counters), dict(serving), np.asarray(latencies, dtype=np.int64),
                         meta or {}, diagnostics or {})


@dataclass
class AggregateSummary:
    reports: list[MetricsReport]

    def vehicle_rows(self) -> list[tuple]:
        return [row for r in self.reports for row in r.vehicle_rows()]

    def pdr_values(self) -> np.ndarray:
        vals = [r.pdr_values() for r in self.reports]
        return np.concatenate(vals) if vals else np.zeros(0)

    @property
    def latencies(self) -> np.ndarray:
        lat = [r.latencies for r in self.reports]
        return np.concatenate(lat) if lat else np.zeros(0, dtype=np.int64)

    def summary(self) -> dict:
        return _summary(self.pdr_values(), self.latencies, self.vehicle_rows(), self.reports)

    @property
    def fraction_above(self) -> float:
        return self.summary()["fraction_pdr_above_0.9"]

    @property
    def min_pdr(self) -> float:
        return self.summary()["min_pdr"]

    @property
    def mean_latency_ms(self) -> float:
        return self.summary()["mean_latency_ms"]


def summarize(reports) -> AggregateSummary:
    reports = list(reports)
    if not reports:
        raise ValueError("summarize needs at least one report")
    return AggregateSummary(reports)


def _stderr(x) -> float | None:
    x = [v for v in x if v is not None and not math.isnan(v)]
    if len(x) < 2:
        return None
    return float(np.std(x, ddof=1) / math.sqrt(len(x)))


def _summary(pdrs: np.ndarray, lat: np.ndarray, rows, reports) -> dict:
    n = int(pdrs.size)
    frac = float(np.count_nonzero(pdrs > PDR_GOOD) / n) if n else None
    per_seed_frac = [float(np.mean(r.pdr_values() > PDR_GOOD)) if r.pdr else None for r in reports]
    per_seed_lat = [float(r.latencies.mean()) if r.latencies.size else None for r in reports]
    per_rsu: dict = {}
    for _, _, rsu, *_rest, p in rows:
        per_rsu.setdefault(rsu, []).append(p)
    breakdown = {
        str(k): {"vehicles": len(v), "fraction_pdr_above_0.9": float(np.mean(np.array(v) > PDR_GOOD)),
                 "min_pdr": float(min(v))}
        for k, v in sorted(per_rsu.items(), key=lambda kv: kv[0])
    }
    return {
        "runs": len(reports),
        "vehicles": n,
        "excluded_vehicles": sum(len(r.excluded) for r in reports),
        "fraction_pdr_above_0.9": frac,
        "fraction_pdr_above_0.9_stderr": _stderr(per_seed_frac),
        "min_pdr": float(pdrs.min()) if n else None,
        "mean_pdr": float(pdrs.mean()) if n else None,
        "latency_samples": int(lat.size),
        "mean_latency_ms": float(lat.mean()) if lat.size else None,
        "mean_latency_ms_stderr": _stderr(per_seed_lat),
        "max_latency_ms": int(lat.max()) if lat.size else None,
        "per_rsu": breakdown,
        "meta": reports[0].meta if len(reports) == 1 else {"seeds": [r.meta.get("seed") for r in reports]},
    }


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".6g")


def _round(obj):
    if isinstance(obj, float):
        return float(format(obj, ".6g"))
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


PDR_COLUMNS = ("seed", "vehicle_id", "serving_rsu", "received", "transmitted", "dropped", "pdr")


def write_report(report: MetricsReport | AggregateSummary, out_dir) -> list[Path]:
    """Write pdr_cdf.csv, latency_pdf.csv, pdr.csv and summary.json into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    written = []

    def emit(name, header, rows):
        path = out / name
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows([fmt(v) for v in row] for row in rows)
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        written.append(path)

    grid, cum = pdr_cdf(report.pdr_values())
    emit("pdr_cdf.csv", ("pdr", "cumulative_fraction"), zip(grid, cum))
    bins, dens = latency_pdf(report.latencies)
    emit("latency_pdf.csv", ("bin_ms", "density"), zip(bins, dens))
    emit("pdr.csv", PDR_COLUMNS, report.vehicle_rows())

    path = out / "summary.json"
    try:
        path.write_text(json.dumps(_round(report.summary()), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc
    written.append(path)
    return written


def read_pdr_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
