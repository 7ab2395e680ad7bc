"""Utilization-based software energy estimate used as the comparison baseline.

Whole-model only: total = PUE * sum over samples of
(p_dram*e_dram + p_cpu*e_cpu + p_gpu*e_gpu), where the p_* are the
process's share of each in-use resource and the e_* the resource's
energy over the sample window.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


@dataclass(frozen=True)
class TraceSample:
    process: str
    p_dram: float
    p_cpu: float
    p_gpu: float
    e_dram: float
    e_cpu: float
    e_gpu: float


ResourceTrace = list[TraceSample]


@dataclass(frozen=True)
class BaselineConfig:
    pue: float = 1.0  # desktop PCs; data centers would set their measured PUE

    def __post_init__(self):
        if self.pue < 1.0:
            raise ValueError(f"PUE must be >= 1 (got {self.pue})")


def _check_sample(s: TraceSample):
    for name in ("p_dram", "p_cpu", "p_gpu"):
        v = getattr(s, name)
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name}={v} outside [0, 1] (process '{s.process}')")
    for name in ("e_dram", "e_cpu", "e_gpu"):
        v = getattr(s, name)
        if v < 0:
            raise ValueError(f"{name}={v} negative (process '{s.process}')")


def utilization_energy(trace: Sequence[TraceSample], cfg: BaselineConfig | None = None) -> float:
    """Joules attributed to the traced process(es), scaled by PUE."""
    cfg = cfg or BaselineConfig()
    total = 0.0
    for s in trace:
        _check_sample(s)
        total += s.p_dram * s.e_dram + s.p_cpu * s.e_cpu + s.p_gpu * s.e_gpu
    return cfg.pue * total


TRACE_COLUMNS = ("process", "p_dram", "p_cpu", "p_gpu", "e_dram", "e_cpu", "e_gpu")


def load_trace(path: str | Path) -> ResourceTrace:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in TRACE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: trace is missing columns {missing}")
        samples = []
        for row in reader:
            samples.append(TraceSample(
                process=row["process"],
                **{k: float(row[k]) for k in TRACE_COLUMNS[1:]},
            ))
    return samples


def save_trace(trace: Sequence[TraceSample], path: str | Path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for s in trace:
            writer.writerow([s.process, s.p_dram, s.p_cpu, s.p_gpu,
                             s.e_dram, s.e_cpu, s.e_gpu])
