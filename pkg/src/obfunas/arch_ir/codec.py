"""``obfunas-arch/v1`` documents, canonical form and hashing."""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

from obfunas.arch_ir.graph import Architecture, CellGraph, validate_architecture
from obfunas.arch_ir.ops import KINDS, OpLabel, conv_label, label_problems
from obfunas.errors import ArchitectureInvalid, SchemaError

SCHEMA = "obfunas-arch/v1"
_FIELDS = ("cell", "family", "stem_channels", "num_stacks", "cells_per_stack", "input_shape", "num_classes")


@dataclass(frozen=True)
class ArchHash:
    value: bytes

    @property
    def hex(self) -> str:
        return self.value.hex()

    def __str__(self) -> str:
        return self.hex


def dumps_canonical(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _positive_int(doc: dict, name: str) -> int:
    value = doc[name]
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(name, f"{name} must be an integer")
    if value <= 0:
        raise SchemaError(name, f"{name} must be positive")
    return value


def _parse_op(raw: Any, where: str) -> OpLabel:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise SchemaError(where, "node must be an object with a 'kind'")
    extra = set(raw) - {"kind", "params"}
    if extra:
        raise SchemaError(where, f"unexpected keys {sorted(extra)}")
    kind = raw["kind"]
    if kind not in KINDS:
        raise SchemaError(f"{where}.kind", f"unknown op kind {kind!r}")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise SchemaError(f"{where}.params", "params must be an object")
    label = OpLabel.make(kind, params)
    problems = label_problems(label)
    if problems:
        raise SchemaError(where, problems[0])
    if label.is_conv:
        label = conv_label(label.conv_spec(), kind)
    return label


def architecture_from_doc(doc: Any) -> Architecture:
    if not isinstance(doc, dict):
        raise SchemaError("<root>", "document must be a JSON object")
    if "schema" in doc and doc["schema"] != SCHEMA:
        raise SchemaError("schema", f"expected {SCHEMA!r}, got {doc['schema']!r}")
    for name in _FIELDS:
        if name not in doc:
            raise SchemaError(name, f"missing required field {name!r}")
    extra = set(doc) - set(_FIELDS) - {"schema"}
    if extra:
        raise SchemaError(sorted(extra)[0], "unknown field")
    family = doc["family"]
    if not isinstance(family, str):
        raise SchemaError("family", "family must be a string")
    shape = doc["input_shape"]
    if not isinstance(shape, list) or len(shape) != 3:
        raise SchemaError("input_shape", "input_shape must be [channels, height, width]")
    for v in shape:
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            raise SchemaError("input_shape", "input_shape entries must be positive integers")
    cell = doc["cell"]
    if not isinstance(cell, dict) or "nodes" not in cell or "edges" not in cell:
        raise SchemaError("cell", "cell must contain 'nodes' and 'edges'")
    if not isinstance(cell["nodes"], list):
        raise SchemaError("cell.nodes", "nodes must be a list")
    if not isinstance(cell["edges"], list):
        raise SchemaError("cell.edges", "edges must be a list")
    ops = tuple(_parse_op(raw, f"cell.nodes[{i}]") for i, raw in enumerate(cell["nodes"]))
    edges = []
    for i, e in enumerate(cell["edges"]):
        if (
            not isinstance(e, list)
            or len(e) != 2
            or any(isinstance(v, bool) or not isinstance(v, int) for v in e)
        ):
            raise SchemaError(f"cell.edges[{i}]", "edge must be a [source, target] integer pair")
        edges.append((e[0], e[1]))
    arch = Architecture(
        cell=CellGraph(ops, tuple(edges)),
        family=family,
        stem_channels=_positive_int(doc, "stem_channels"),
        num_stacks=_positive_int(doc, "num_stacks"),
        cells_per_stack=_positive_int(doc, "cells_per_stack"),
        input_shape=(shape[0], shape[1], shape[2]),
        num_classes=_positive_int(doc, "num_classes"),
    )
    report = validate_architecture(arch)
    if not report.ok:
        raise ArchitectureInvalid(report)
    return arch


def parse_architecture(text: str | bytes) -> Architecture:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("<root>", f"not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    return architecture_from_doc(doc)


def canonical_order(cell: CellGraph) -> list[int]:
    """Topological order with ties broken by label text, then original index."""
    n = cell.num_nodes
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for s, t in cell.edges:
        indeg[t] += 1
        succ[s].append(t)
    keys = [op.sort_key() for op in cell.node_ops]
    ready = [(keys[i], i) for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, i = heapq.heappop(ready)
        order.append(i)
        for t in succ[i]:
            indeg[t] -= 1
            if indeg[t] == 0:
                heapq.heappush(ready, (keys[t], t))
    return order


def canonicalize(arch: Architecture) -> Architecture:
    order = canonical_order(arch.cell)
    rank = {old: new for new, old in enumerate(order)}
    ops = tuple(arch.cell.node_ops[i] for i in order)
    edges = tuple(sorted((rank[s], rank[t]) for s, t in set(arch.cell.edges)))
    return arch.with_cell(CellGraph(ops, edges))


def _require_valid(arch: Architecture) -> None:
    report = validate_architecture(arch)
    if not report.ok:
        raise ArchitectureInvalid(report)


def architecture_to_doc(arch: Architecture) -> dict[str, Any]:
    _require_valid(arch)
    canon = canonicalize(arch)
    return {
        "schema": SCHEMA,
        "family": canon.family,
        "stem_channels": canon.stem_channels,
        "num_stacks": canon.num_stacks,
        "cells_per_stack": canon.cells_per_stack,
        "input_shape": list(canon.input_shape),
        "num_classes": canon.num_classes,
        "cell": {
            "nodes": [op.to_doc() for op in canon.cell.node_ops],
            "edges": [list(e) for e in canon.cell.edges],
        },
    }


@lru_cache(maxsize=65536)
def serialize_architecture(arch: Architecture) -> str:
    """Canonical document text: sorted keys, no insignificant whitespace."""
    return dumps_canonical(architecture_to_doc(arch))


def canonical_hash(arch: Architecture) -> ArchHash:
    return ArchHash(hashlib.sha256(serialize_architecture(arch).encode("utf-8")).digest())
