"""Id-addressed cell structure and shape inference.

A :class:`Topology` is the structural half of a concrete network: the macro
skeleton from an :class:`Architecture` plus a cell whose nodes carry stable ids
(assigned once, never reused) and an explicit join order per node. The join
order matters because floating-point sums are not associative; transforms keep
it stable so that rewritten networks evaluate bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

from obfunas.arch_ir.graph import CELL_STACK, Architecture, CellGraph
from obfunas.arch_ir.ops import (
    AVGPOOL,
    INPUT,
    MAXPOOL3X3,
    OUTPUT,
    OpLabel,
)
from obfunas.errors import ShapeError, TransformError

Shape = tuple[int, int, int]


@dataclass(frozen=True)
class CellNode:
    id: str
    op: OpLabel
    inputs: tuple[str, ...] = ()


@dataclass(frozen=True)
class Layer:
    """One executable step of a network, with resolved shapes."""

    name: str
    op: str  # conv | maxpool | avgpool | join | gap
    inputs: tuple[str, ...]
    in_channels: int
    out_shape: Shape
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    padding: tuple[int, int] = (0, 0)
    bn: bool = False
    act: str = "none"
    bias: bool = False
    cell_id: str | None = None
    instance: str | None = None

    @property
    def out_channels(self) -> int:
        return self.out_shape[0]


@dataclass(frozen=True)
class Skeleton:
    layers: tuple[Layer, ...]
    output: str  # layer (or "input") whose value, flattened, is the logits
    aliases: dict[str, str]  # cell-node layer name -> producing layer name


@dataclass(frozen=True)
class Topology:
    base: Architecture
    nodes: tuple[CellNode, ...]
    next_id: int

    @classmethod
    def from_architecture(cls, arch: Architecture) -> Topology:
        ids = [f"n{i}" for i in range(arch.cell.num_nodes)]
        nodes = tuple(
            CellNode(ids[i], op, tuple(ids[s] for s in arch.cell.inputs_of(i)))
            for i, op in enumerate(arch.cell.node_ops)
        )
        return cls(arch, nodes, len(ids))

    # -- structure -------------------------------------------------------

    @cached_property
    def _index(self) -> dict[str, int]:
        return {node.id: i for i, node in enumerate(self.nodes)}

    @cached_property
    def arch(self) -> Architecture:
        index = self._index
        ops = tuple(node.op for node in self.nodes)
        edges = tuple(sorted((index[s], index[node.id]) for node in self.nodes for s in node.inputs))
        return self.base.with_cell(CellGraph(ops, edges))

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(node.id for node in self.nodes)

    def has(self, node_id: str) -> bool:
        return node_id in self._index

    def index(self, node_id: str) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise TransformError(f"no node with id {node_id!r}") from None

    def node(self, node_id: str) -> CellNode:
        return self.nodes[self.index(node_id)]

    @cached_property
    def _successors(self) -> dict[str, tuple[str, ...]]:
        succ: dict[str, list[str]] = {node.id: [] for node in self.nodes}
        for node in self.nodes:
            for s in node.inputs:
                succ[s].append(node.id)
        return {k: tuple(v) for k, v in succ.items()}

    def successors(self, node_id: str) -> tuple[str, ...]:
        return self._successors[node_id]

    def connected(self, src: str, dst: str) -> bool:
        return src in self.node(dst).inputs

    def reaches(self, src: str, dst: str) -> bool:
        """True when a directed path src -> ... -> dst exists."""
        stack, seen = [src], {src}
        while stack:
            cur = stack.pop()
            for nxt in self._successors[cur]:
                if nxt == dst:
                    return True
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False

    def fresh_id(self) -> tuple[str, int]:
        return f"n{self.next_id}", self.next_id + 1

    def rewrite(self, nodes: tuple[CellNode, ...], next_id: int | None = None) -> Topology:
        return replace(self, nodes=nodes, next_id=self.next_id if next_id is None else next_id)

    @property
    def width(self) -> int:
        return self.base.stem_channels

    @property
    def instances(self) -> tuple[str, ...]:
        if self.base.family != CELL_STACK:
            return ("dag",)
        return tuple(
            f"s{s}c{c}" for s in range(self.base.num_stacks) for c in range(self.base.cells_per_stack)
        )

    def layer_names(self, node_id: str) -> tuple[str, ...]:
        return tuple(f"{inst}/{node_id}" for inst in self.instances)

    # -- analysis --------------------------------------------------------

    @cached_property
    def nonnegative(self) -> dict[str, bool]:
        """Node ids whose output is provably >= 0 for every network input."""
        if self.base.family != CELL_STACK:
            return self._propagate_nonneg(False)
        # The stem ends in relu; later cells see the previous cell's output.
        assumed = self._propagate_nonneg(True)
        if assumed[self.nodes[-1].id]:
            return assumed
        return self._propagate_nonneg(False)

    def _propagate_nonneg(self, input_nonneg: bool) -> dict[str, bool]:
        out: dict[str, bool] = {}
        for node in self.nodes:
            op = node.op
            if op.kind == INPUT:
                out[node.id] = input_nonneg
            elif op.is_conv:
                out[node.id] = op.conv_spec().act == "relu"
            else:
                # pools and joins of nonnegative tensors (gates are 0 or 1) stay nonnegative
                out[node.id] = all(out[s] for s in node.inputs)
        return out

    @cached_property
    def skeleton(self) -> Skeleton:
        return infer_layers(self)


def infer_layers(topo: Topology) -> Skeleton:
    arch = topo.base
    layers: list[Layer] = []
    aliases: dict[str, str] = {}
    shapes: dict[str, Shape] = {"input": tuple(arch.input_shape)}

    def emit(layer: Layer) -> None:
        layers.append(layer)
        shapes[layer.name] = layer.out_shape

    if arch.family == CELL_STACK:
        c_in, h, w = arch.input_shape
        emit(Layer("stem", "conv", ("input",), c_in, (arch.stem_channels, h, w),
                   kernel=(3, 3), padding=(1, 1), bn=True, act="relu"))
        prev = "stem"
        for s in range(arch.num_stacks):
            if s > 0:
                c, h, w = shapes[prev]
                emit(Layer(f"down{s}", "maxpool", (prev,), c, (c, h // 2, w // 2), kernel=(2, 2), stride=2))
                prev = f"down{s}"
            for c_idx in range(arch.cells_per_stack):
                prev = _emit_cell(topo, f"s{s}c{c_idx}", prev, shapes, emit, aliases)
        c, _, _ = shapes[prev]
        emit(Layer("gap", "gap", (prev,), c, (c, 1, 1)))
        emit(Layer("classifier", "conv", ("gap",), c, (arch.num_classes, 1, 1), bias=True))
        return Skeleton(tuple(layers), "classifier", aliases)

    out = _emit_cell(topo, "dag", "input", shapes, emit, aliases)
    size = shapes[out][0] * shapes[out][1] * shapes[out][2]
    if size != arch.num_classes:
        raise ShapeError("dag/" + topo.nodes[-1].id, f"output has {size} values but num_classes={arch.num_classes}")
    return Skeleton(tuple(layers), out, aliases)


def _emit_cell(topo, inst, prev, shapes, emit, aliases) -> str:
    """Emit layers for one cell instance; returns the name producing its output."""
    width = topo.width
    resolved: dict[str, str] = {}
    for node in topo.nodes:
        name = f"{inst}/{node.id}"
        op = node.op
        if op.kind == INPUT:
            resolved[node.id] = prev
            aliases[name] = prev
            continue
        srcs = tuple(resolved[s] for s in node.inputs)
        in_shapes = [shapes[s] for s in srcs]
        if len({sh[0] for sh in in_shapes}) > 1:
            raise ShapeError(name, f"join of mismatched channel counts {[sh[0] for sh in in_shapes]}")
        if len({sh[1:] for sh in in_shapes}) > 1:
            raise ShapeError(name, f"join of mismatched feature maps {[sh[1:] for sh in in_shapes]}")
        c, h, w = in_shapes[0]
        if op.is_join:
            if len(srcs) == 1:
                resolved[node.id] = srcs[0]
                aliases[name] = srcs[0]
                continue
            layer = Layer(name, "join", srcs, c, (c, h, w))
        elif op.is_conv:
            spec = op.conv_spec()
            k1, k2 = spec.kernel
            out_c = spec.channels if spec.channels is not None else width
            layer = Layer(name, "conv", srcs, c, (out_c, h, w), kernel=spec.kernel,
                          padding=((k1 - 1) // 2, (k2 - 1) // 2), bn=spec.bn, act=spec.act,
                          bias=spec.bias)
        elif op.kind in (MAXPOOL3X3, AVGPOOL):
            k1, k2 = op.pool_kernel()
            layer = Layer(name, "maxpool" if op.kind == MAXPOOL3X3 else "avgpool", srcs, c, (c, h, w),
                          kernel=(k1, k2), padding=((k1 - 1) // 2, (k2 - 1) // 2))
        else:
            raise ShapeError(name, f"cannot execute op kind {op.kind}")
        layer = replace(layer, cell_id=node.id, instance=inst)
        emit(layer)
        resolved[node.id] = name
    out_id = topo.nodes[-1].id
    if topo.nodes[-1].op.kind != OUTPUT:
        raise ShapeError(f"{inst}/{out_id}", "last cell node is not the output")
    return resolved[out_id]
