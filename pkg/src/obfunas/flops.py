"""FLOPs model: only parameterized linear maps cost anything.

A convolution (or the 1x1 classifier) costs 2*k1*k2*Cin*Cout*Hout*Wout, plus
Cout*Hout*Wout when it has a bias. Pooling, batchnorm, activations, joins and
gates are free, so a zero-gated shortcut adds no FLOPs while a zero-weight branch
is charged in full (it still executes).
"""

from __future__ import annotations

from obfunas.arch_ir.graph import Architecture, validate_architecture
from obfunas.arch_ir.topology import Layer, Topology
from obfunas.errors import ArchitectureInvalid
from obfunas.tensor_core.network import ConcreteNetwork

PARAMETERIZED = ("conv", "linear")


class FlopsCount(int):
    @property
    def mflops(self) -> float:
        return self / 1e6

    def format_mflops(self) -> str:
        return f"{self.mflops:.2f}"


def flops_of_op(kind: str, kernel=(1, 1), in_channels: int = 0, out_shape=(0, 0, 0), bias: bool = False) -> FlopsCount:
    if kind not in PARAMETERIZED:
        return FlopsCount(0)
    if in_channels <= 0 or any(v <= 0 for v in out_shape):
        raise ValueError(f"unresolved shapes for {kind}: in_channels={in_channels}, out_shape={out_shape}")
    c_out, h, w = out_shape
    k1, k2 = kernel
    total = 2 * k1 * k2 * in_channels * c_out * h * w
    if bias:
        total += c_out * h * w
    return FlopsCount(total)


def layer_flops(layer: Layer) -> FlopsCount:
    return flops_of_op(layer.op, layer.kernel, layer.in_channels, layer.out_shape, layer.bias)


def flops_of_topology(topo: Topology) -> FlopsCount:
    return FlopsCount(sum(layer_flops(layer) for layer in topo.skeleton.layers))


def flops_of_arch(arch: Architecture) -> FlopsCount:
    report = validate_architecture(arch)
    if not report.ok:
        raise ArchitectureInvalid(report)
    return flops_of_topology(Topology.from_architecture(arch))


def flops_of_network(net: ConcreteNetwork) -> FlopsCount:
    """Counted from the bound weight tensors rather than the inferred layer specs."""
    total = 0
    for layer in net.layers:
        p = net.params.get(layer.name)
        if p is None or p.weight is None:
            continue
        k1, k2, c_in, c_out = p.weight.shape
        _, h, w = layer.out_shape
        total += 2 * k1 * k2 * c_in * c_out * h * w
        if p.bias is not None:
            total += c_out * h * w
    return FlopsCount(total)
