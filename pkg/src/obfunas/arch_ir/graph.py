"""Architecture and cell-graph types plus structural validation."""

from __future__ import annotations

from dataclasses import dataclass, field

from obfunas.arch_ir.ops import INPUT, OUTPUT, OpLabel, label_problems

CELL_STACK = "cell-stack"
GENERIC_DAG = "generic-dag"
FAMILIES = (CELL_STACK, GENERIC_DAG)

NB101_MAX_NODES = 7
NB101_MAX_EDGES = 9


@dataclass(frozen=True)
class CellGraph:
    node_ops: tuple[OpLabel, ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def num_nodes(self) -> int:
        return len(self.node_ops)

    def inputs_of(self, node: int) -> list[int]:
        return sorted(s for s, t in self.edges if t == node)

    def outputs_of(self, node: int) -> list[int]:
        return sorted(t for s, t in self.edges if s == node)


@dataclass(frozen=True)
class Architecture:
    cell: CellGraph
    family: str = CELL_STACK
    stem_channels: int = 4
    num_stacks: int = 1
    cells_per_stack: int = 1
    input_shape: tuple[int, int, int] = (3, 8, 8)
    num_classes: int = 10

    def with_cell(self, cell: CellGraph) -> Architecture:
        return Architecture(
            cell=cell,
            family=self.family,
            stem_channels=self.stem_channels,
            num_stacks=self.num_stacks,
            cells_per_stack=self.cells_per_stack,
            input_shape=self.input_shape,
            num_classes=self.num_classes,
        )


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    where: tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    diagnostics: tuple[Diagnostic, ...] = field(default_factory=tuple)

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(f"{d.code}: {d.message}" for d in self.diagnostics)


def chain(*ops: OpLabel, **macro) -> Architecture:
    """input -> ops... -> output as a straight line."""
    labels = (OpLabel(INPUT), *ops, OpLabel(OUTPUT))
    edges = tuple((i, i + 1) for i in range(len(labels) - 1))
    return Architecture(cell=CellGraph(labels, edges), **macro)


def validate_architecture(
    arch: Architecture,
    max_nodes: int | None = None,
    max_edges: int | None = None,
) -> ValidationReport:
    """Check every structural invariant; pass NB-101 limits explicitly to enforce them."""
    diags: list[Diagnostic] = []

    def bad(code: str, message: str, *where) -> None:
        diags.append(Diagnostic(code, message, tuple(where)))

    if arch.family not in FAMILIES:
        bad("family", f"unknown family {arch.family!r}")
    for name in ("stem_channels", "num_stacks", "cells_per_stack", "num_classes"):
        value = getattr(arch, name)
        if not isinstance(value, int) or value <= 0:
            bad("positive", f"{name} must be positive", name)
    shape = arch.input_shape
    if len(shape) != 3 or any(not isinstance(v, int) or v <= 0 for v in shape):
        bad("positive", "input_shape must be three positive integers", "input_shape")
    elif arch.family == CELL_STACK and isinstance(arch.num_stacks, int) and arch.num_stacks > 0:
        if min(shape[1], shape[2]) >> (arch.num_stacks - 1) < 1:
            bad("downsample", f"input {shape[1]}x{shape[2]} too small for {arch.num_stacks} stacks")
    if arch.family == GENERIC_DAG and (arch.num_stacks != 1 or arch.cells_per_stack != 1):
        bad("generic", "generic-dag requires num_stacks = cells_per_stack = 1")

    cell = arch.cell
    n = cell.num_nodes
    if max_nodes is not None and n > max_nodes:
        bad("node-limit", f"node count {n} > {max_nodes}")
    if max_edges is not None and len(cell.edges) > max_edges:
        bad("edge-limit", f"edge count {len(cell.edges)} > {max_edges}")
    if n < 2:
        bad("size", f"cell needs at least input and output nodes, got {n}")
        return ValidationReport(False, tuple(diags))

    for i, op in enumerate(cell.node_ops):
        if i == 0 and op.kind != INPUT:
            bad("input", f"node 0 must be labeled input, got {op.kind}", i)
        elif i == n - 1 and op.kind != OUTPUT:
            bad("output", f"node {i} (last) must be labeled output, got {op.kind}", i)
        elif 0 < i < n - 1 and op.kind in (INPUT, OUTPUT):
            bad("interior", f"node {i} is an interior node labeled {op.kind}", i)
        for problem in label_problems(op):
            bad("op", f"node {i}: {problem}", i)

    seen: set[tuple[int, int]] = set()
    for s, t in cell.edges:
        if not (0 <= s < n and 0 <= t < n):
            bad("edge-range", f"edge ({s},{t}) references a missing node", s, t)
            continue
        if s == t:
            bad("self-loop", f"edge ({s},{t}) is a self-loop", s, t)
        elif s > t:
            bad("edge-order", f"edge ({s},{t}) not topologically ordered", s, t)
        if (s, t) in seen:
            bad("duplicate", f"duplicate edge ({s},{t})", s, t)
        seen.add((s, t))

    indeg = [0] * n
    outdeg = [0] * n
    for s, t in seen:
        if 0 <= s < n and 0 <= t < n and s < t:
            outdeg[s] += 1
            indeg[t] += 1
    if outdeg[0] == 0:
        bad("dangling", "input node has no outgoing edge", 0)
    if indeg[n - 1] == 0:
        bad("dangling", "output node has no incoming edge", n - 1)
    for i in range(1, n - 1):
        if indeg[i] == 0:
            bad("dangling", f"node {i} has no incoming edge", i)
        if outdeg[i] == 0:
            bad("dangling", f"node {i} has no outgoing edge", i)
    return ValidationReport(not diags, tuple(diags))
