"""Executable networks: parameters bound to a :class:`Topology`."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from types import MappingProxyType
from typing import Mapping

import numpy as np

from obfunas.arch_ir.topology import Layer, Topology
from obfunas.errors import NodeExecutionError, ShapeError
from obfunas.tensor_core import ops


@dataclass(frozen=True)
class NodeParams:
    weight: np.ndarray | None = None  # (k1, k2, in, out)
    bias: np.ndarray | None = None
    bn: ops.BatchNormRecord | None = None
    gates: tuple[float, ...] | None = None  # aligned with the layer's join order


@dataclass(frozen=True, eq=False)
class ConcreteNetwork:
    topology: Topology
    params: Mapping[str, NodeParams] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        _check_params(self)

    @property
    def arch(self):
        return self.topology.arch

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(self.topology.base.input_shape)

    @cached_property
    def layers(self) -> tuple[Layer, ...]:
        return self.topology.skeleton.layers

    def layer(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def with_params(
        self, updates: Mapping[str, NodeParams | None], topology: Topology | None = None
    ) -> ConcreteNetwork:
        """Copy with replaced params (``None`` drops an entry) and optionally a new topology."""
        params = dict(self.params)
        for name, value in updates.items():
            if value is None:
                params.pop(name, None)
            else:
                params[name] = value
        return ConcreteNetwork(topology or self.topology, params)

    def with_gate(self, layer: str, src_id: str, value: float) -> ConcreteNetwork:
        node = self.topology.node(layer.split("/")[-1])
        pos = node.inputs.index(src_id)
        gates = list(self.params[layer].gates)
        gates[pos] = float(value)
        return self.with_params({layer: replace(self.params[layer], gates=tuple(gates))})

    def replace_tensor(self, layer: str, tensor: str, value: np.ndarray) -> ConcreteNetwork:
        p = self.params[layer]
        if tensor.startswith("bn."):
            bn = replace(p.bn, **{tensor[3:]: np.asarray(value, dtype=np.float64)})
            return self.with_params({layer: replace(p, bn=bn)})
        if tensor == "gates":
            return self.with_params({layer: replace(p, gates=tuple(float(v) for v in np.ravel(value)))})
        return self.with_params({layer: replace(p, **{tensor: np.asarray(value, dtype=np.float64)})})

    def tensor(self, layer: str, tensor: str) -> np.ndarray:
        p = self.params[layer]
        if tensor.startswith("bn."):
            return np.asarray(getattr(p.bn, tensor[3:]))
        if tensor == "gates":
            return np.asarray(p.gates, dtype=np.float64)
        return getattr(p, tensor)


def _check_params(net: ConcreteNetwork) -> None:
    for layer in net.layers:
        p = net.params.get(layer.name)
        if layer.op == "conv":
            if p is None or p.weight is None:
                raise ShapeError(layer.name, "missing weights")
            expected = (*layer.kernel, layer.in_channels, layer.out_channels)
            if p.weight.shape != expected:
                raise ShapeError(layer.name, f"weight shape {p.weight.shape} != {expected}")
            if layer.bias != (p.bias is not None):
                raise ShapeError(layer.name, "bias presence does not match the architecture")
            if p.bias is not None and p.bias.shape != (layer.out_channels,):
                raise ShapeError(layer.name, f"bias shape {p.bias.shape} != ({layer.out_channels},)")
            if layer.bn != (p.bn is not None):
                raise ShapeError(layer.name, "batchnorm presence does not match the architecture")
            if p.bn is not None and p.bn.channels != layer.out_channels:
                raise ShapeError(layer.name, f"batchnorm has {p.bn.channels} channels, layer has {layer.out_channels}")
        if len(layer.inputs) > 1:
            if p is None or p.gates is None or len(p.gates) != len(layer.inputs):
                raise ShapeError(layer.name, f"expected {len(layer.inputs)} gate scalars")


def _run_layer(layer: Layer, p: NodeParams | None, xs: list[np.ndarray]) -> np.ndarray:
    x = xs[0] if len(xs) == 1 else ops.elementwise_sum(xs, p.gates)
    if layer.op == "conv":
        y = ops.conv2d(x, p.weight, p.bias, layer.stride, layer.padding)
        if p.bn is not None:
            y = ops.batchnorm_inference(y, p.bn)
        return ops.ACTIVATIONS[layer.act](y)
    if layer.op == "maxpool":
        return ops.max_pool(x, layer.kernel, layer.stride, layer.padding)
    if layer.op == "avgpool":
        return ops.avg_pool(x, layer.kernel, layer.stride, layer.padding)
    if layer.op == "gap":
        return ops.global_avg_pool(x)
    if layer.op == "join":
        return x
    raise ValueError(f"unknown layer op {layer.op}")


def forward(net: ConcreteNetwork, x: np.ndarray) -> np.ndarray:
    """Logits of shape (n, num_outputs); deterministic and pure."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if tuple(x.shape[1:]) != net.input_shape:
        raise ShapeError("input", f"expected (n, {', '.join(map(str, net.input_shape))}), got {x.shape}")
    values = {"input": x}
    for layer in net.layers:
        try:
            values[layer.name] = _run_layer(layer, net.params.get(layer.name), [values[s] for s in layer.inputs])
        except Exception as exc:  # attach the failing node
            raise NodeExecutionError(layer.name, exc) from exc
    out = values[net.topology.skeleton.output]
    return out.reshape(out.shape[0], -1)


def numeric_gradient(
    net: ConcreteNetwork,
    x: np.ndarray,
    layer: str,
    tensor: str = "weight",
    indices=None,
    h: float = 1e-4,
) -> np.ndarray:
    """Central differences of sum(logits) with respect to selected flat entries of a tensor."""
    base = np.array(net.tensor(layer, tensor), dtype=np.float64)
    flat = base.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    indices = list(indices)
    for i in indices:
        if not 0 <= i < flat.size:
            raise IndexError(f"index {i} out of range for {layer}.{tensor} of size {flat.size}")
    grads = np.empty(len(indices))
    for k, i in enumerate(indices):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += h
        minus[i] -= h
        f_plus = forward(net.replace_tensor(layer, tensor, plus.reshape(base.shape)), x).sum()
        f_minus = forward(net.replace_tensor(layer, tensor, minus.reshape(base.shape)), x).sum()
        grads[k] = (f_plus - f_minus) / (2 * h)
    return grads
