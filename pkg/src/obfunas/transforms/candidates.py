"""Enumerate the valid applications of each strategy on a topology."""

from __future__ import annotations

from dataclasses import dataclass

from obfunas.arch_ir.ops import AVGPOOL, INPUT
from obfunas.arch_ir.topology import Topology
from obfunas.errors import ObfunasError
from obfunas.transforms import plan as P
from obfunas.transforms.strategies import apply_structure, node_shapes

# Strategy sets per search-space family.
PRESETS = {
    "all": P.STRATEGY_KINDS,
    "alphanet": (P.WIDEN_LAYER, P.DEEPEN_LAYER, P.WIDEN_KERNEL),
    "nb101": (P.DEEPEN_LAYER, P.WIDEN_KERNEL, P.SHORTCUT_SEQUENTIAL, P.SHORTCUT_PARALLEL, P.ADD_BRANCH),
    "nb301": (P.WIDEN_KERNEL, P.REPLACE_AVGPOOL, P.REPLACE_SKIP),
    "shortcut": P.SHORTCUT_KINDS,
}


@dataclass(frozen=True)
class ApplicationMenu:
    """Parameter choices offered for each strategy."""

    widen_factors: tuple[int, ...] = (2,)
    deepen_kernels: tuple[int, ...] = (1, 3)
    deepen_bn: tuple[bool, ...] = (True,)
    kernel_step: int = 2
    max_kernel: int = 5
    skip_kernels: tuple[int, ...] = (1,)
    branch_kernels: tuple[int, ...] = (1, 3)
    max_channels: int = 64


def resolve_strategy_set(names) -> tuple[str, ...]:
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",") if n.strip()]
    kinds: list[str] = []
    for name in names:
        group = PRESETS.get(name, (name,))
        for kind in group:
            if kind not in P.STRATEGY_KINDS:
                raise ValueError(f"unknown strategy {kind!r}; expected one of {list(P.STRATEGY_KINDS)} or {list(PRESETS)}")
            if kind not in kinds:
                kinds.append(kind)
    return tuple(k for k in P.STRATEGY_KINDS if k in kinds)


def _edges(topo: Topology):
    for node in topo.nodes:
        for src in node.inputs:
            yield src, node.id


def _pairs(topo: Topology):
    ids = topo.ids
    for i, src in enumerate(ids):
        for dst in ids[i + 1 :]:
            if topo.node(dst).op.kind != INPUT and not topo.connected(src, dst):
                yield src, dst


def _proposals(topo: Topology, kind: str, menu: ApplicationMenu, seed: int):
    make = P.StrategyApplication.make
    if kind == P.WIDEN_LAYER:
        for node in topo.nodes:
            if node.op.is_conv:
                c = node_shapes(topo, node.id)[0][0]
                for f in menu.widen_factors:
                    if c * f <= menu.max_channels:
                        yield make(kind, node.id, seed, channels=c * f)
    elif kind == P.DEEPEN_LAYER:
        for src, dst in _edges(topo):
            for k in menu.deepen_kernels:
                for bn in menu.deepen_bn:
                    yield make(kind, (src, dst), seed, kernel=k, bn=bn)
    elif kind == P.WIDEN_KERNEL:
        for node in topo.nodes:
            if node.op.is_conv:
                k1, k2 = node.op.conv_spec().kernel
                k3, k4 = k1 + menu.kernel_step, k2 + menu.kernel_step
                if max(k3, k4) <= menu.max_kernel:
                    yield make(kind, node.id, seed, kernel=[k3, k4])
    elif kind == P.REPLACE_AVGPOOL:
        for node in topo.nodes:
            if node.op.kind == AVGPOOL:
                yield make(kind, node.id, seed)
    elif kind == P.REPLACE_SKIP:
        for src, dst in _edges(topo):
            for k in menu.skip_kernels:
                yield make(kind, (src, dst), seed, kernel=k)
    elif kind in P.SHORTCUT_KINDS:
        for src, dst in _pairs(topo):
            yield make(kind, (src, dst), seed)
    elif kind == P.ADD_BRANCH:
        for src, dst in _pairs(topo):
            for k in menu.branch_kernels:
                yield make(kind, (src, dst), seed, kernel=k, bn=True, act="relu")


def valid_applications(
    topo: Topology, kind: str, menu: ApplicationMenu | None = None, seed: int = 0
) -> list[P.StrategyApplication]:
    """All applications of ``kind`` whose preconditions hold on ``topo``, in a fixed order."""
    menu = menu or ApplicationMenu()
    out = []
    for app in _proposals(topo, kind, menu, seed):
        try:
            apply_structure(topo, app)
        except ObfunasError:
            continue
        out.append(app)
    return out
