"""Weight sidecar: little-endian float32 blob plus a JSON manifest.

Layout of a saved network directory::

    arch.json      obfunas-arch/v1 canonical document
    weights.bin    concatenated float32 tensors
    weights.json   manifest: tensor name, shape, byte offset, byte length (topological order)
                   and the join order of every multi-input cell node

Cell nodes are renamed to their canonical index (``n<i>``) on save, so files
written for equal architectures are interchangeable.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from obfunas.arch_ir.codec import canonical_order, dumps_canonical, parse_architecture, serialize_architecture
from obfunas.arch_ir.graph import Architecture
from obfunas.arch_ir.topology import CellNode, Topology
from obfunas.errors import SchemaError
from obfunas.tensor_core.network import ConcreteNetwork, NodeParams
from obfunas.tensor_core.ops import BatchNormRecord

MANIFEST_SCHEMA = "obfunas-weights/v1"
_BN_FIELDS = ("gamma", "beta", "mean", "var")


def canonical_network(net: ConcreteNetwork) -> ConcreteNetwork:
    """Same network with cell nodes reordered and renamed to canonical indices."""
    topo = net.topology
    order = canonical_order(topo.arch.cell)
    rename = {topo.nodes[old].id: f"n{new}" for new, old in enumerate(order)}
    nodes = tuple(
        CellNode(rename[topo.nodes[old].id], topo.nodes[old].op, tuple(rename[s] for s in topo.nodes[old].inputs))
        for old in order
    )
    new_topo = Topology(topo.base, nodes, len(nodes))

    def new_name(name: str) -> str:
        if "/" not in name:
            return name
        inst, node_id = name.split("/", 1)
        return f"{inst}/{rename[node_id]}"

    params = {new_name(k): v for k, v in net.params.items()}
    return ConcreteNetwork(new_topo, params)


def _tensors(net: ConcreteNetwork):
    for layer in net.layers:
        p = net.params.get(layer.name)
        if p is None:
            continue
        if p.weight is not None:
            yield f"{layer.name}.weight", p.weight
        if p.bias is not None:
            yield f"{layer.name}.bias", p.bias
        if p.bn is not None:
            for f in _BN_FIELDS:
                yield f"{layer.name}.bn.{f}", getattr(p.bn, f)
            yield f"{layer.name}.bn.eps", np.array([p.bn.eps])
        if p.gates is not None:
            yield f"{layer.name}.gates", np.asarray(p.gates)


def save_weights(net: ConcreteNetwork, path: str | Path) -> Path:
    """Write ``path`` (blob) and ``path`` with a .json suffix (manifest); returns the manifest path."""
    net = canonical_network(net)
    path = Path(path)
    entries, chunks, offset = [], [], 0
    for name, value in _tensors(net):
        arr = np.asarray(value, dtype="<f4")
        if not np.array_equal(arr.astype(np.float64), np.asarray(value, dtype=np.float64)):
            raise ValueError(f"{name} is not representable in float32")
        data = arr.tobytes(order="C")
        entries.append({"name": name, "shape": list(np.shape(value)), "offset": offset, "length": len(data)})
        chunks.append(data)
        offset += len(data)
    joins = {node.id: list(node.inputs) for node in net.topology.nodes if len(node.inputs) > 1}
    manifest = {"schema": MANIFEST_SCHEMA, "dtype": "float32-le", "tensors": entries, "joins": joins}
    path.write_bytes(b"".join(chunks))
    manifest_path = path.with_suffix(".json")
    manifest_path.write_text(dumps_canonical(manifest) + "\n", encoding="utf-8")
    return manifest_path


def load_weights(arch: Architecture, path: str | Path) -> ConcreteNetwork:
    """Bind a sidecar to ``arch`` (which must be the canonical architecture it was saved with)."""
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise SchemaError("schema", f"expected {MANIFEST_SCHEMA!r}")
    blob = path.read_bytes()
    topo = Topology.from_architecture(arch)
    joins = manifest.get("joins", {})
    nodes = []
    for node in topo.nodes:
        order = joins.get(node.id)
        if order is not None:
            if sorted(order) != sorted(node.inputs):
                raise SchemaError(f"joins.{node.id}", f"join order {order} does not match edges {list(node.inputs)}")
            node = replace(node, inputs=tuple(order))
        nodes.append(node)
    topo = topo.rewrite(tuple(nodes))

    raw: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        start, length = entry["offset"], entry["length"]
        if start < 0 or start + length > len(blob):
            raise SchemaError(entry["name"], "tensor extends past the end of the blob")
        arr = np.frombuffer(blob[start : start + length], dtype="<f4").astype(np.float64)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise SchemaError(entry["name"], f"length {length} does not match shape {list(shape)}")
        raw[entry["name"]] = arr.reshape(shape)

    params: dict[str, NodeParams] = {}
    for layer in topo.skeleton.layers:
        prefix = layer.name + "."
        if not any(k.startswith(prefix) for k in raw):
            continue
        bn = None
        if prefix + "bn.gamma" in raw:
            bn = BatchNormRecord(*(raw[prefix + "bn." + f] for f in _BN_FIELDS), eps=float(raw[prefix + "bn.eps"][0]))
        gates = raw.get(prefix + "gates")
        params[layer.name] = NodeParams(
            weight=raw.get(prefix + "weight"),
            bias=raw.get(prefix + "bias"),
            bn=bn,
            gates=None if gates is None else tuple(float(g) for g in gates),
        )
    return ConcreteNetwork(topo, params)


def save_network(net: ConcreteNetwork, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "arch.json").write_text(serialize_architecture(net.arch) + "\n", encoding="utf-8")
    save_weights(net, directory / "weights.bin")
    return directory


def load_network(directory: str | Path) -> ConcreteNetwork:
    directory = Path(directory)
    arch = parse_architecture((directory / "arch.json").read_text(encoding="utf-8"))
    return load_weights(arch, directory / "weights.bin")
