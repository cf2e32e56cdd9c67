"""The function-preserving rewrites.

Each strategy has a structural half (``Topology -> Topology``, usable without
weights for FLOPs and oracle queries) and a weight half that fills the new or
resized tensors. Every introduced term is multiplied by an exact zero or copied
through an exact one, and new inputs to a join take the last position in its
summation order, so rewritten networks agree with the original bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from obfunas.arch_ir.build import f32, layer_rng, sample_weights
from obfunas.arch_ir.ops import AVGPOOL, IDENTITY_CONV, BRANCH_OP, INPUT, ConvSpec, OpLabel, conv_label
from obfunas.arch_ir.topology import CellNode, Topology
from obfunas.errors import ObfunasError, TransformError
from obfunas.tensor_core.network import ConcreteNetwork, NodeParams
from obfunas.tensor_core.ops import EPS, BatchNormRecord, identity_kernel, pool_coefficient
from obfunas.transforms import plan as P

IDEMPOTENT_ACTS = ("none", "relu", "fake_swish")


# -- helpers ----------------------------------------------------------------


def node_shapes(topo: Topology, node_id: str) -> list[tuple[int, int, int]]:
    """Output shape of ``node_id`` in every cell instance."""
    sk = topo.skeleton
    table = {"input": tuple(topo.base.input_shape), **{layer.name: layer.out_shape for layer in sk.layers}}
    return [table[sk.aliases.get(name, name)] for name in topo.layer_names(node_id)]


def join_shapes(topo: Topology, node_id: str) -> list[tuple[int, int, int]]:
    node = topo.node(node_id)
    if not node.inputs:
        raise TransformError(f"node {node_id} has no inputs")
    return node_shapes(topo, node.inputs[0])


def _conv_label_for(spec: ConvSpec, channels: int, width: int, kind: str) -> OpLabel:
    return conv_label(replace(spec, channels=None if channels == width else channels), kind)


def _checked(topo: Topology) -> Topology:
    """Force shape inference so a broken rewrite fails here rather than at execution."""
    try:
        topo.skeleton
    except ObfunasError as exc:
        raise TransformError(str(exc)) from exc
    return topo


def _unit_bn(channels: int, mean: np.ndarray | None = None) -> BatchNormRecord:
    """A record with scale exactly 1 and shift exactly 0: var + eps == 1 and beta == mean."""
    mean = np.zeros(channels) if mean is None else mean
    return BatchNormRecord(
        gamma=np.ones(channels), beta=mean.copy(), mean=mean, var=np.full(channels, 1.0 - EPS), eps=EPS
    )


def _insert_before(topo: Topology, dst: str, new_node: CellNode, dst_inputs: tuple[str, ...], next_id: int) -> Topology:
    nodes = []
    for node in topo.nodes:
        if node.id == dst:
            nodes.append(new_node)
            node = replace(node, inputs=dst_inputs)
        nodes.append(node)
    return topo.rewrite(tuple(nodes), next_id)


def _edge_insert(topo: Topology, src: str, dst: str, label: OpLabel) -> tuple[Topology, str]:
    """Put a new node on edge src->dst; it inherits src's slot in dst's join order."""
    if not topo.connected(src, dst):
        raise TransformError(f"no edge {src}->{dst}")
    new_id, next_id = topo.fresh_id()
    inputs = tuple(new_id if s == src else s for s in topo.node(dst).inputs)
    return _checked(_insert_before(topo, dst, CellNode(new_id, label, (src,)), inputs, next_id)), new_id


def _check_pair(topo: Topology, src: str, dst: str) -> None:
    if src == dst:
        raise TransformError(f"shortcut endpoints coincide ({src})")
    i, j = topo.index(src), topo.index(dst)
    if i > j:
        raise TransformError(f"{src} does not precede {dst} topologically")
    if topo.connected(src, dst):
        raise TransformError(f"{src} and {dst} are already directly connected")
    if topo.node(dst).op.kind == INPUT:
        raise TransformError("the cell input cannot receive a shortcut")
    if node_shapes(topo, src) != join_shapes(topo, dst):
        raise TransformError(
            f"shape mismatch: {src} produces {node_shapes(topo, src)[0]}, {dst} joins {join_shapes(topo, dst)[0]}"
        )


def _gates_after_append(net: ConcreteNetwork, layer: str, n_before: int, gate: float) -> NodeParams:
    p = net.params.get(layer) or NodeParams()
    gates = p.gates if p.gates is not None else (1.0,) * n_before
    return replace(p, gates=(*gates, gate))


# -- structural halves --------------------------------------------------------


@dataclass(frozen=True)
class Rewrite:
    topology: Topology
    new_node: str | None = None


def _widen_structure(topo: Topology, app: P.StrategyApplication) -> Rewrite:
    (node_id,) = app.target
    node = topo.node(node_id)
    if not node.op.is_conv:
        raise TransformError(f"{node_id} ({node.op.kind}) is not a convolution")
    new_c = app.param("channels")
    if not isinstance(new_c, int) or isinstance(new_c, bool):
        raise TransformError("widen-layer needs an integer 'channels'")
    old_c = node_shapes(topo, node_id)[0][0]
    if new_c < old_c:
        raise TransformError(f"cannot narrow {node_id} from {old_c} to {new_c} channels")
    succ = topo.successors(node_id)
    if len(succ) != 1:
        raise TransformError(f"fan-out exceeds 1: {node_id} feeds {len(succ)} nodes")
    nxt = topo.node(succ[0])
    if not nxt.op.is_conv:
        raise TransformError(f"successor {nxt.id} ({nxt.op.kind}) is not a convolution")
    if len(nxt.inputs) != 1:
        raise TransformError(f"successor {nxt.id} sums {len(nxt.inputs)} inputs")
    if new_c == old_c:
        return Rewrite(topo)
    spec = node.op.conv_spec()
    label = conv_label(replace(spec, channels=new_c), node.op.kind)
    nodes = tuple(replace(n, op=label) if n.id == node_id else n for n in topo.nodes)
    return Rewrite(_checked(topo.rewrite(nodes)))


def _deepen_act(topo: Topology, src: str, requested: str | None) -> str:
    src_act = topo.node(src).op.activation()
    if requested is None:
        if topo.nonnegative[src]:
            return "relu"
        return "fake_swish" if src_act in ("swish", "fake_swish") else "none"
    if requested == "swish":
        raise TransformError("swish is not idempotent (swish(swish(x)) != swish(x)); use fake_swish instead")
    if requested not in IDEMPOTENT_ACTS:
        raise TransformError(f"unknown activation {requested!r}")
    if requested == "relu" and not topo.nonnegative[src]:
        raise TransformError(f"relu would clip the output of {src}, which can be negative")
    return requested


def _deepen_structure(topo: Topology, app: P.StrategyApplication) -> Rewrite:
    src, dst = app.target
    k = app.param("kernel", 3)
    if not isinstance(k, int) or k <= 0 or k % 2 == 0:
        raise TransformError(f"identity kernel size must be odd and positive, got {k}")
    act = _deepen_act(topo, src, app.param("act"))
    channels = node_shapes(topo, src)[0][0]
    spec = ConvSpec(kernel=(k, k), bn=bool(app.param("bn", False)), act=act)
    label = _conv_label_for(spec, channels, topo.width, IDENTITY_CONV)
    new_topo, new_id = _edge_insert(topo, src, dst, label)
    return Rewrite(new_topo, new_id)


def _widen_kernel_structure(topo: Topology, app: P.StrategyApplication) -> Rewrite:
    (node_id,) = app.target
    node = topo.node(node_id)
    if not node.op.is_conv:
        raise TransformError(f"{node_id} ({node.op.kind}) is not a convolution")
    kernel = app.param("kernel")
    if isinstance(kernel, int):
        kernel = (kernel, kernel)
    if not (isinstance(kernel, tuple) and len(kernel) == 2):
        raise TransformError("widen-kernel needs 'kernel' as [k3, k4]")
    spec = node.op.conv_spec()
    (k1, k2), (k3, k4) = spec.kernel, kernel
    if k3 % 2 != k1 % 2 or k4 % 2 != k2 % 2:
        raise TransformError(f"parity mismatch: {k1}x{k2} cannot be centred in {k3}x{k4}")
    if k3 < k1 or k4 < k2:
        raise TransformError(f"kernel cannot shrink from {k1}x{k2} to {k3}x{k4}")
    if (k3, k4) == (k1, k2):
        raise TransformError("kernel size unchanged; nothing to widen")
    label = conv_label(replace(spec, kernel=(k3, k4)), node.op.kind)
    nodes = tuple(replace(n, op=label) if n.id == node_id else n for n in topo.nodes)
    return Rewrite(_checked(topo.rewrite(nodes)))


def _avgpool_structure(topo: Topology, app: P.StrategyApplication) -> Rewrite:
    (node_id,) = app.target
    node = topo.node(node_id)
    if node.op.kind != AVGPOOL:
        raise TransformError(f"{node_id} ({node.op.kind}) is not an average pool")
    channels = join_shapes(topo, node_id)[0][0]
    spec = ConvSpec(kernel=node.op.pool_kernel())
    label = _conv_label_for(spec, channels, topo.width, "conv")
    nodes = tuple(replace(n, op=label) if n.id == node_id else n for n in topo.nodes)
    return Rewrite(_checked(topo.rewrite(nodes)))


def _has_longer_path(topo: Topology, src: str, dst: str) -> bool:
    return any(topo.reaches(src, mid) for mid in topo.node(dst).inputs if mid != src)


def _skip_structure(topo: Topology, app: P.StrategyApplication) -> Rewrite:
    src, dst = app.target
    if not topo.connected(src, dst):
        raise TransformError(f"no edge {src}->{dst}")
    if not _has_longer_path(topo, src, dst):
        raise TransformError(f"edge {src}->{dst} is not a skip connection (no parallel path through other layers)")
    k = app.param("kernel", 1)
    if not isinstance(k, int) or k <= 0 or k % 2 == 0:
        raise TransformError(f"identity kernel size must be odd and positive, got {k}")
    channels = node_shapes(topo, src)[0][0]
    label = _conv_label_for(ConvSpec(kernel=(k, k)), channels, topo.width, IDENTITY_CONV)
    new_topo, new_id = _edge_insert(topo, src, dst, label)
    return Rewrite(new_topo, new_id)


def _shortcut_structure(topo: Topology, app: P.StrategyApplication) -> Rewrite:
    src, dst = app.target
    _check_pair(topo, src, dst)
    sequential = topo.reaches(src, dst)
    if sequential != (app.kind == P.SHORTCUT_SEQUENTIAL):
        actual = "sequential" if sequential else "parallel"
        raise TransformError(f"{src}->{dst} is a {actual} pair, not valid for {app.kind}")
    nodes = tuple(replace(n, inputs=(*n.inputs, src)) if n.id == dst else n for n in topo.nodes)
    return Rewrite(_checked(topo.rewrite(nodes)))


def _branch_structure(topo: Topology, app: P.StrategyApplication) -> Rewrite:
    src, dst = app.target
    _check_pair(topo, src, dst)
    if app.param("stride", 1) != 1:
        raise TransformError("feature-map size not preserved by a strided branch")
    k = app.param("kernel", 3)
    if not isinstance(k, int) or k <= 0 or k % 2 == 0:
        raise TransformError(f"feature-map size not preserved: kernel {k} is not odd")
    channels = join_shapes(topo, dst)[0][0]
    requested = app.param("channels")
    if requested is not None and requested != channels:
        raise TransformError(f"branch op changes channels ({channels} -> {requested})")
    act = app.param("act", "relu")
    if act not in ("none", "relu", "swish", "fake_swish"):
        raise TransformError(f"unknown activation {act!r}")
    spec = ConvSpec(kernel=(k, k), bn=bool(app.param("bn", True)), act=act)
    label = _conv_label_for(spec, channels, topo.width, BRANCH_OP)
    new_id, next_id = topo.fresh_id()
    inputs = (*topo.node(dst).inputs, new_id)
    new_topo = _insert_before(topo, dst, CellNode(new_id, label, (src,)), inputs, next_id)
    return Rewrite(_checked(new_topo), new_id)


# -- weight halves --------------------------------------------------------------


WeightFn = Callable[[ConcreteNetwork, Topology, P.StrategyApplication, Rewrite], dict]


def _widen_weights(net, topo, app, rw):
    (node_id,) = app.target
    succ = topo.successors(node_id)[0]
    updates = {}
    for inst in topo.instances:
        name, succ_name = f"{inst}/{node_id}", f"{inst}/{succ}"
        p = net.params[name]
        k1, k2, c_in, old_c = p.weight.shape
        new_c = app.param("channels")
        extra = new_c - old_c
        weight = np.concatenate([p.weight, np.zeros((k1, k2, c_in, extra))], axis=3)
        bias = None if p.bias is None else np.concatenate([p.bias, np.zeros(extra)])
        bn = None
        if p.bn is not None:
            fresh = _unit_bn(extra)
            bn = BatchNormRecord(
                *(np.concatenate([getattr(p.bn, f), getattr(fresh, f)]) for f in ("gamma", "beta", "mean", "var")),
                eps=p.bn.eps,
            )
        updates[name] = replace(p, weight=weight, bias=bias, bn=bn)

        q = net.params[succ_name]
        s1, s2, _, s_out = q.weight.shape
        rng = layer_rng(app.seed, succ_name)
        rows = sample_weights(rng, (s1, s2, extra, s_out), s1 * s2 * new_c)
        updates[succ_name] = replace(q, weight=np.concatenate([q.weight, rows], axis=2))
    return updates


def _identity_params(topo, name, node_id, seed) -> NodeParams:
    layer = next(layer for layer in topo.skeleton.layers if layer.name == name)
    c = layer.out_channels
    bn = None
    if layer.bn:
        rng = layer_rng(seed, name)
        bn = _unit_bn(c, f32(rng.uniform(-0.2, 0.2, c)))
    return NodeParams(weight=identity_kernel(layer.kernel, c), bn=bn)


def _insert_weights(net, topo, app, rw):
    return {name: _identity_params(topo, name, rw.new_node, app.seed) for name in topo.layer_names(rw.new_node)}


def _widen_kernel_weights(net, topo, app, rw):
    (node_id,) = app.target
    updates = {}
    for name in topo.layer_names(node_id):
        p = net.params[name]
        k1, k2, c_in, c_out = p.weight.shape
        k3, k4 = topo.node(node_id).op.conv_spec().kernel
        d1, d2 = (k3 - k1) // 2, (k4 - k2) // 2
        weight = np.zeros((k3, k4, c_in, c_out))
        weight[d1 : d1 + k1, d2 : d2 + k2] = p.weight
        updates[name] = replace(p, weight=weight)
    return updates


def _avgpool_weights(net, topo, app, rw):
    (node_id,) = app.target
    updates = {}
    for name in topo.layer_names(node_id):
        layer = next(layer for layer in topo.skeleton.layers if layer.name == name)
        k1, k2 = layer.kernel
        c = layer.in_channels
        weight = np.zeros((k1, k2, c, c))
        idx = np.arange(c)
        weight[:, :, idx, idx] = pool_coefficient(k1, k2)
        old = net.params.get(name)
        updates[name] = NodeParams(weight=weight, gates=None if old is None else old.gates)
    return updates


def _shortcut_weights(net, topo, app, rw):
    _, dst = app.target
    n_before = len(topo.node(dst).inputs) - 1
    return {name: _gates_after_append(net, name, n_before, 0.0) for name in topo.layer_names(dst)}


def _branch_weights(net, topo, app, rw):
    _, dst = app.target
    updates = {}
    for name in topo.layer_names(rw.new_node):
        layer = next(layer for layer in topo.skeleton.layers if layer.name == name)
        updates[name] = NodeParams(
            weight=np.zeros((*layer.kernel, layer.in_channels, layer.out_channels)),
            bn=_unit_bn(layer.out_channels) if layer.bn else None,
        )
    n_before = len(topo.node(dst).inputs) - 1
    for name in topo.layer_names(dst):
        updates[name] = _gates_after_append(net, name, n_before, 1.0)
    return updates


STRATEGIES: dict[str, tuple[Callable[[Topology, P.StrategyApplication], Rewrite], WeightFn]] = {
    P.WIDEN_LAYER: (_widen_structure, _widen_weights),
    P.DEEPEN_LAYER: (_deepen_structure, _insert_weights),
    P.WIDEN_KERNEL: (_widen_kernel_structure, _widen_kernel_weights),
    P.REPLACE_AVGPOOL: (_avgpool_structure, _avgpool_weights),
    P.REPLACE_SKIP: (_skip_structure, _insert_weights),
    P.SHORTCUT_SEQUENTIAL: (_shortcut_structure, _shortcut_weights),
    P.SHORTCUT_PARALLEL: (_shortcut_structure, _shortcut_weights),
    P.ADD_BRANCH: (_branch_structure, _branch_weights),
}


def apply_structure(topo: Topology, app: P.StrategyApplication) -> Topology:
    """The mask topology an application produces, without touching weights."""
    return STRATEGIES[app.kind][0](topo, app).topology


def apply_application(net: ConcreteNetwork, app: P.StrategyApplication) -> ConcreteNetwork:
    structure, weights = STRATEGIES[app.kind]
    rw = structure(net.topology, app)
    if rw.topology is net.topology:
        return net
    return net.with_params(weights(net, rw.topology, app, rw), rw.topology)


# -- public entry points --------------------------------------------------------


def widen_layer(net: ConcreteNetwork, node: str, channels: int, seed: int = 0) -> ConcreteNetwork:
    return apply_application(net, P.StrategyApplication.make(P.WIDEN_LAYER, node, seed, channels=channels))


def deepen_layer(
    net: ConcreteNetwork, src: str, dst: str, kernel: int = 3, bn: bool = False, act: str | None = None, seed: int = 0
) -> ConcreteNetwork:
    return apply_application(
        net, P.StrategyApplication.make(P.DEEPEN_LAYER, (src, dst), seed, kernel=kernel, bn=bn, act=act)
    )


def widen_kernel(net: ConcreteNetwork, node: str, k3: int, k4: int | None = None) -> ConcreteNetwork:
    k4 = k3 if k4 is None else k4
    return apply_application(net, P.StrategyApplication.make(P.WIDEN_KERNEL, node, kernel=[k3, k4]))


def replace_avg_pool(net: ConcreteNetwork, node: str) -> ConcreteNetwork:
    return apply_application(net, P.StrategyApplication.make(P.REPLACE_AVGPOOL, node))


def replace_skip_connection(net: ConcreteNetwork, src: str, dst: str, kernel: int = 1) -> ConcreteNetwork:
    return apply_application(net, P.StrategyApplication.make(P.REPLACE_SKIP, (src, dst), kernel=kernel))


def add_shortcut(net: ConcreteNetwork, src: str, dst: str, mode: str | None = None) -> ConcreteNetwork:
    """``mode`` is 'sequential' or 'parallel'; ``None`` infers it from the graph."""
    if mode is None:
        mode = "sequential" if net.topology.reaches(src, dst) else "parallel"
    kinds = {"sequential": P.SHORTCUT_SEQUENTIAL, "parallel": P.SHORTCUT_PARALLEL}
    if mode not in kinds:
        raise TransformError(f"mode must be 'sequential' or 'parallel', got {mode!r}")
    return apply_application(net, P.StrategyApplication.make(kinds[mode], (src, dst)))


def add_layer_branch(
    net: ConcreteNetwork,
    src: str,
    dst: str,
    kernel: int = 3,
    bn: bool = True,
    act: str = "relu",
    stride: int = 1,
    channels: int | None = None,
) -> ConcreteNetwork:
    app = P.StrategyApplication.make(
        P.ADD_BRANCH, (src, dst), kernel=kernel, bn=bn, act=act, stride=stride, channels=channels
    )
    return apply_application(net, app)
