"""Accuracy sources for fitness evaluation.

Two oracles share one interface: a lookup table keyed by canonical architecture
hash, and a synthetic score that is a seeded sigmoid of architecture features.
Fitness is the negated accuracy, so the search maximizes the accuracy drop.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Protocol

import numpy as np

from obfunas.arch_ir.codec import canonical_hash
from obfunas.arch_ir.graph import Architecture
from obfunas.arch_ir.ops import KINDS
from obfunas.arch_ir.topology import Topology
from obfunas.errors import TableFormatError, UnknownArchitecture
from obfunas.flops import flops_of_topology

TABLE_HEADER = ("hash", "accuracy")


class FitnessOracle(Protocol):
    kind: str

    def query(self, arch: Architecture) -> float: ...


@dataclass(frozen=True)
class TableOracle:
    table: Mapping[str, float] = field(default_factory=dict)
    kind: str = "table"

    def __post_init__(self):
        for digest, acc in self.table.items():
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"accuracy for {digest} outside [0, 1]: {acc}")
        object.__setattr__(self, "table", MappingProxyType(dict(self.table)))

    def query(self, arch: Architecture) -> float:
        digest = canonical_hash(arch).hex
        try:
            return self.table[digest]
        except KeyError:
            raise UnknownArchitecture(digest) from None

    def __len__(self) -> int:
        return len(self.table)


def parse_accuracy_table(text: str) -> TableOracle:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or tuple(h.strip() for h in header) != TABLE_HEADER:
        raise TableFormatError(1, f"expected header {','.join(TABLE_HEADER)!r}")
    table: dict[str, float] = {}
    for line, row in enumerate(rows, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise TableFormatError(line, f"expected 2 columns, got {len(row)}")
        digest, raw = row[0].strip().lower(), row[1].strip()
        if len(digest) != 64 or any(ch not in "0123456789abcdef" for ch in digest):
            raise TableFormatError(line, f"hash must be 64 hex characters, got {digest!r}")
        try:
            acc = float(raw)
        except ValueError:
            raise TableFormatError(line, f"accuracy {raw!r} is not a number") from None
        if not 0.0 <= acc <= 1.0:  # also rejects nan
            raise TableFormatError(line, f"accuracy {raw} outside [0, 1]")
        if digest in table:
            raise TableFormatError(line, f"duplicate key {digest}")
        table[digest] = acc
    return TableOracle(table)


def load_accuracy_table(path: str | Path) -> TableOracle:
    return parse_accuracy_table(Path(path).read_text(encoding="utf-8"))


def format_accuracy_table(rows: Iterable[tuple[str, float]]) -> str:
    """CSV text sorted by hash; accuracies use repr so they read back exactly."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    for digest, acc in sorted(rows):
        writer.writerow([digest, repr(float(acc))])
    return out.getvalue()


def architecture_features(arch: Architecture) -> np.ndarray:
    """Depth, node and edge counts, channel and kernel-area sums, per-kind counts, log FLOPs."""
    topo = Topology.from_architecture(arch)
    cell = arch.cell
    depth = [0] * cell.num_nodes
    for s, t in sorted(cell.edges, key=lambda e: e[1]):
        depth[t] = max(depth[t], depth[s] + 1)
    channels = kernel_area = 0
    for op in cell.node_ops:
        if op.is_conv:
            spec = op.conv_spec()
            channels += spec.channels or arch.stem_channels
            kernel_area += spec.kernel[0] * spec.kernel[1]
    counts = [sum(op.kind == k for op in cell.node_ops) for k in KINDS]
    flops = flops_of_topology(topo)
    # Rough unit scaling keeps the synthetic score away from sigmoid saturation.
    return np.array(
        [depth[-1] / 4, cell.num_nodes / 4, len(cell.edges) / 4, channels / (4 * arch.stem_channels),
         kernel_area / 16, *(c / 2 for c in counts), math.log10(1 + flops) / 6],
        dtype=np.float64,
    )


@dataclass(frozen=True)
class SyntheticOracle:
    """``sigmoid(b + w . features)`` with ``w``, ``b`` drawn from ``seed``."""

    seed: int = 0
    scale: float = 0.5
    kind: str = "synthetic"

    def coefficients(self, n: int) -> tuple[np.ndarray, float]:
        rng = np.random.default_rng([self.seed & 0xFFFFFFFF, n])
        return rng.normal(0.0, self.scale, n), float(rng.normal(1.0, 0.25))

    def query(self, arch: Architecture) -> float:
        x = architecture_features(arch)
        w, b = self.coefficients(len(x))
        z = b + float(np.dot(w, x))
        return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))


def query(oracle: FitnessOracle, arch: Architecture) -> float:
    return oracle.query(arch)


def fitness(oracle: FitnessOracle, arch: Architecture) -> float:
    return -oracle.query(arch)
