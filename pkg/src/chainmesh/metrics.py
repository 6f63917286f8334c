"""Run metrics: throughput, finality, tip-pool series, and dispersion."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


def gini(values: Sequence[float]) -> float | None:
    """Mean absolute difference over twice the mean, None if all mass is zero.

    Equals 0 for perfectly even shares and approaches 1 when a single
    participant holds everything.
    """
    x = np.asarray(list(values), dtype=float)
    if x.size == 0:
        return None
    if np.any(x < 0):
        raise ValueError("dispersion is defined for non-negative values")
    total = x.sum()
    if total == 0:
        return None
    n = x.size
    x = np.sort(x)
    # Sorted-prefix identity for the pairwise |xi - xj| double sum.
    ranks = np.arange(1, n + 1)
    return float((2.0 * (ranks * x).sum() - (n + 1) * x.sum()) / (n * x.sum()))


@dataclass
class SeriesRecorder:
    """Accumulates the time series a run exports as CSV artifacts."""

    tip_pool: list[tuple[float, int]] = field(default_factory=list)
    finality: list[tuple[str, float]] = field(default_factory=list)
    confirmed_times: list[float] = field(default_factory=list)
    intra_times: list[float] = field(default_factory=list)

    def sample_tip_pool(self, time_s: float, count: int) -> None:
        self.tip_pool.append((round(float(time_s), 6), int(count)))

    def record_finality(self, block_id: str, seconds: float) -> None:
        self.finality.append((block_id, round(float(seconds), 6)))

    def record_confirmed(self, time_s: float) -> None:
        self.confirmed_times.append(float(time_s))

    def record_intra(self, time_s: float) -> None:
        self.intra_times.append(float(time_s))


def per_minute(times_s: Sequence[float], duration_min: float) -> list[int]:
    """Bucket event times into whole-minute counts over the run."""
    buckets = [0] * max(1, int(np.ceil(duration_min)))
    for t in times_s:
        idx = min(len(buckets) - 1, int(t // 60.0))
        buckets[idx] += 1
    return buckets


@dataclass(frozen=True)
class MetricsReport:
    """Headline numbers for one finished run."""

    scenario: str
    seed: int
    duration_min: float
    intra_blocks_per_min: float         # proposal pipelines finished, honest
    inter_blocks_per_min: float         # valid blocks confirmed on the ledger
    confirmed_blocks: int
    attached_blocks: int
    mean_finality_s: float | None
    mean_tip_pool: float | None
    final_tip_pool: int | None
    confirmation_gini: float | None
    conservation_ok: bool
    double_spend: Mapping[str, float] | None = None

    def to_mapping(self) -> dict:
        data = {
            "scenario": self.scenario,
            "seed": self.seed,
            "duration_min": self.duration_min,
            "intra_blocks_per_min": self.intra_blocks_per_min,
            "inter_blocks_per_min": self.inter_blocks_per_min,
            "confirmed_blocks": self.confirmed_blocks,
            "attached_blocks": self.attached_blocks,
            "mean_finality_s": self.mean_finality_s,
            "mean_tip_pool": self.mean_tip_pool,
            "final_tip_pool": self.final_tip_pool,
            "confirmation_gini": self.confirmation_gini,
            "conservation_ok": self.conservation_ok,
        }
        if self.double_spend is not None:
            data["double_spend"] = dict(self.double_spend)
        return data


def write_artifacts(out_dir: str | Path, recorder: SeriesRecorder,
                    report: MetricsReport, snapshot_lines: Sequence[str],
                    event_lines: Sequence[str]) -> None:
    """Write the CSV/JSON/snapshot/event-log artifact set for one run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "tip_pool.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "count"])
        w.writerows(recorder.tip_pool)
    with open(out / "finality.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block_id", "seconds"])
        w.writerows(recorder.finality)
    with open(out / "throughput.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["minute", "confirmed"])
        for minute, count in enumerate(per_minute(recorder.confirmed_times,
                                                  report.duration_min)):
            w.writerow([minute, count])
    with open(out / "metrics.json", "w") as fh:
        json.dump(report.to_mapping(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "dag_snapshot.txt", "w") as fh:
        for line in snapshot_lines:
            fh.write(line + "\n")
    with open(out / "events.log", "w") as fh:
        for line in event_lines:
            fh.write(line + "\n")
