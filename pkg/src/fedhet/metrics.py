"""Metric records emitted by protocol runs."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any

from .transcript import Transcript

RECORD_FIELDS = ("run_id", "protocol", "stage", "entity", "metric", "value", "seed")


@dataclass(frozen=True)
class MetricsRecord:
    run_id: str
    protocol: str
    stage: str
    entity: str  # client index as string, or "global"
    metric: str
    value: float
    seed: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite metric {self.metric}={self.value}")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in RECORD_FIELDS}


def make_run_id(config_text: str) -> str:
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()[:12]


@dataclass
class RunResult:
    """Everything a protocol run produced.

    ``records`` is the metrics stream; ``artifacts`` keeps in-memory objects
    (aggregated targets, models) for inspection and tests.
    """

    protocol: str
    run_id: str
    master_seed: int
    records: list[MetricsRecord] = field(default_factory=list)
    transcript: Transcript = field(default_factory=Transcript)
    seeds: dict[str, int] = field(default_factory=dict)
    artifacts: dict[str, Any] = field(default_factory=dict)

    def add(self, stage: str, entity, metric: str, value) -> None:
        self.records.append(MetricsRecord(self.run_id, self.protocol, stage, str(entity), metric,
                                          float(value), self.master_seed))

    def value(self, metric: str, entity="global", stage: str | None = None) -> float:
        hits = [r.value for r in self.records
                if r.metric == metric and r.entity == str(entity) and (stage is None or r.stage == stage)]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} records for {stage}/{entity}/{metric}")
        return hits[0]

    def summary(self) -> list[MetricsRecord]:
        return [r for r in self.records if r.stage == "summary"]
