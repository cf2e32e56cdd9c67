"""Exhaustive enumeration of small cell spaces.

Expected counts (interior ops drawn from a single kind, edge limit not binding):

    max_nodes=2 -> 1    (input -> output)
    max_nodes=3 -> 3    (1 two-node + 2 three-node cells)
    max_nodes=4 -> 13   (1 + 2 + 10)
    max_nodes=5 -> 135

With the three NB-101 interior ops: 91 cells up to four nodes, 2724 up to five.

Counts grow roughly as 2^(n^2/2) * |ops|^(n-2); stay at five nodes or fewer.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from itertools import combinations, product

from obfunas.arch_ir.codec import canonicalize, serialize_architecture
from obfunas.arch_ir.graph import Architecture, CellGraph, validate_architecture
from obfunas.arch_ir.ops import INPUT, OUTPUT, OpLabel


def canonical_key(arch: Architecture) -> tuple[int, int, str]:
    """Total order used for enumeration streams: size first, then document text."""
    return (arch.cell.num_nodes, len(arch.cell.edges), serialize_architecture(arch))


def _no_dangling(n: int, edges: tuple[tuple[int, int], ...]) -> bool:
    indeg = [0] * n
    outdeg = [0] * n
    for s, t in edges:
        outdeg[s] += 1
        indeg[t] += 1
    if outdeg[0] == 0 or indeg[n - 1] == 0:
        return False
    return all(indeg[i] and outdeg[i] for i in range(1, n - 1))


def enumerate_space(
    max_nodes: int,
    max_edges: int | None = None,
    ops: Iterable[OpLabel | str] = ("conv3x3-bn-relu",),
    template: Architecture | None = None,
) -> Iterator[Architecture]:
    """Every valid cell up to the limits, once each, in increasing :func:`canonical_key` order."""
    labels = sorted({op if isinstance(op, OpLabel) else OpLabel(op) for op in ops})
    base = template or Architecture(cell=CellGraph((OpLabel(INPUT), OpLabel(OUTPUT)), ((0, 1),)))
    found: dict[str, Architecture] = {}
    for n in range(2, max_nodes + 1):
        pairs = list(combinations(range(n), 2))
        for interior in product(labels, repeat=n - 2):
            node_ops = (OpLabel(INPUT), *interior, OpLabel(OUTPUT))
            for mask in range(1 << len(pairs)):
                edges = tuple(p for b, p in enumerate(pairs) if mask >> b & 1)
                if max_edges is not None and len(edges) > max_edges:
                    continue
                if not _no_dangling(n, edges):
                    continue
                arch = canonicalize(base.with_cell(CellGraph(node_ops, edges)))
                found.setdefault(serialize_architecture(arch), arch)
    for arch in sorted(found.values(), key=canonical_key):
        if validate_architecture(arch, max_nodes, max_edges).ok:
            yield arch
