"""Left-fold of a plan over a victim network."""

from __future__ import annotations

from obfunas.arch_ir.topology import Topology
from obfunas.errors import ObfunasError, PlanError
from obfunas.tensor_core.network import ConcreteNetwork
from obfunas.transforms.plan import ObfuscationPlan
from obfunas.transforms.strategies import apply_application, apply_structure


def apply_plan(net: ConcreteNetwork, plan: ObfuscationPlan) -> ConcreteNetwork:
    """The mask network; the first failing application is reported by 1-based index."""
    for step, app in enumerate(plan, start=1):
        try:
            net = apply_application(net, app)
        except ObfunasError as exc:
            raise PlanError(step, exc) from exc
    return net


def apply_plan_structure(topo: Topology, plan: ObfuscationPlan) -> Topology:
    for step, app in enumerate(plan, start=1):
        try:
            topo = apply_structure(topo, app)
        except ObfunasError as exc:
            raise PlanError(step, exc) from exc
    return topo
