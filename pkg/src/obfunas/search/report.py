"""Search results as a JSON document and a flat CSV history."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any

from obfunas.arch_ir.codec import dumps_canonical
from obfunas.transforms.plan import ObfuscationPlan

REPORT_SCHEMA = "obfunas-search/v1"
HISTORY_HEADER = ("cycle", "best_fitness", "evaluations", "feasible_fraction")


@dataclass(frozen=True)
class HistoryRow:
    cycle: int
    best_fitness: float
    evaluations: int
    feasible_fraction: float


@dataclass(frozen=True)
class SearchReport:
    best_plan: ObfuscationPlan
    best_arch_hash: str
    best_fitness: float
    victim_accuracy: float | None
    mask_accuracy: float
    flops_victim: int
    flops_mask: int
    tau: float
    history: tuple[HistoryRow, ...] = ()
    seed: int = 0
    config: dict[str, Any] = field(default_factory=dict)
    method: str = "evolve"

    @property
    def accuracy_drop(self) -> float | None:
        if self.victim_accuracy is None:
            return None
        return self.victim_accuracy - self.mask_accuracy

    @property
    def flops_overhead(self) -> float:
        return self.flops_mask / self.flops_victim - 1.0

    def to_doc(self) -> dict[str, Any]:
        return {
            "best_arch_hash": self.best_arch_hash,
            "best_fitness": self.best_fitness,
            "best_plan": self.best_plan.to_doc(),
            "config": self.config,
            "flops_mask": int(self.flops_mask),
            "flops_victim": int(self.flops_victim),
            "mask_accuracy": self.mask_accuracy,
            "method": self.method,
            "mflops_mask": round(self.flops_mask / 1e6, 2),
            "mflops_victim": round(self.flops_victim / 1e6, 2),
            "schema": REPORT_SCHEMA,
            "seed": self.seed,
            "tau": self.tau,
            "victim_accuracy": self.victim_accuracy,
        }

    def dumps(self) -> str:
        return dumps_canonical(self.to_doc())

    def history_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for row in self.history:
            writer.writerow([row.cycle, repr(row.best_fitness), row.evaluations, repr(row.feasible_fraction)])
        return out.getvalue()

    def summary(self) -> str:
        drop = self.accuracy_drop
        parts = [
            f"best_fitness={self.best_fitness:.4f}",
            f"mask_accuracy={self.mask_accuracy:.4f}",
            f"victim_accuracy={'n/a' if self.victim_accuracy is None else f'{self.victim_accuracy:.4f}'}",
            f"accuracy_drop={'n/a' if drop is None else f'{drop:.4f}'}",
            f"mflops_victim={self.flops_victim / 1e6:.2f}",
            f"mflops_mask={self.flops_mask / 1e6:.2f}",
            f"plan_length={len(self.best_plan)}",
        ]
        return " ".join(parts)


def load_report(text: str) -> dict[str, Any]:
    doc = json.loads(text)
    if doc.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"not an {REPORT_SCHEMA} document")
    doc["best_plan"] = ObfuscationPlan.from_doc(doc["best_plan"])
    return doc
