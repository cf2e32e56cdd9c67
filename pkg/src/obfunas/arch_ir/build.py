"""Instantiate an :class:`Architecture` as a :class:`ConcreteNetwork`."""

from __future__ import annotations

import zlib

import numpy as np

from obfunas.arch_ir.graph import Architecture, validate_architecture
from obfunas.arch_ir.topology import Layer, Topology
from obfunas.errors import ArchitectureInvalid
from obfunas.tensor_core.network import ConcreteNetwork, NodeParams
from obfunas.tensor_core.ops import EPS, BatchNormRecord

INIT_POLICIES = ("uniform", "normal")


def f32(a) -> np.ndarray:
    """Round to float32 and widen back, so every tensor survives the fp32 sidecar bit-exactly."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def layer_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))])


def sample_weights(rng: np.random.Generator, shape, fan_in: int, init: str = "uniform") -> np.ndarray:
    scale = 1.0 / np.sqrt(max(fan_in, 1))
    if init == "uniform":
        return f32(rng.uniform(-scale, scale, size=shape))
    if init == "normal":
        return f32(rng.normal(0.0, scale, size=shape))
    raise ValueError(f"unknown init policy {init!r}; expected one of {INIT_POLICIES}")


def random_bn(rng: np.random.Generator, channels: int) -> BatchNormRecord:
    return BatchNormRecord(
        gamma=f32(rng.uniform(0.5, 1.5, channels)),
        beta=f32(rng.uniform(-0.2, 0.2, channels)),
        mean=f32(rng.uniform(-0.2, 0.2, channels)),
        var=f32(rng.uniform(0.5, 1.5, channels)),
        eps=EPS,
    )


def init_layer(layer: Layer, seed: int, init: str = "uniform") -> NodeParams | None:
    gates = tuple([1.0] * len(layer.inputs)) if len(layer.inputs) > 1 else None
    if layer.op != "conv":
        return NodeParams(gates=gates) if gates else None
    rng = layer_rng(seed, layer.name)
    k1, k2 = layer.kernel
    fan_in = k1 * k2 * layer.in_channels
    weight = sample_weights(rng, (k1, k2, layer.in_channels, layer.out_channels), fan_in, init)
    bias = sample_weights(rng, (layer.out_channels,), fan_in, init) if layer.bias else None
    bn = random_bn(rng, layer.out_channels) if layer.bn else None
    return NodeParams(weight=weight, bias=bias, bn=bn, gates=gates)


def build_network(arch: Architecture, init: str = "uniform", seed: int = 0) -> ConcreteNetwork:
    """Deterministic in (arch, init, seed): each layer draws from its own name-keyed stream."""
    report = validate_architecture(arch)
    if not report.ok:
        raise ArchitectureInvalid(report)
    if init not in INIT_POLICIES:
        raise ValueError(f"unknown init policy {init!r}; expected one of {INIT_POLICIES}")
    topo = Topology.from_architecture(arch)
    params = {}
    for layer in topo.skeleton.layers:
        p = init_layer(layer, seed, init)
        if p is not None:
            params[layer.name] = p
    return ConcreteNetwork(topo, params)
