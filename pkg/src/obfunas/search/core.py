"""Search configuration, cached candidate evaluation and the plan mutation operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from obfunas.arch_ir.codec import canonical_hash
from obfunas.arch_ir.topology import Topology
from obfunas.errors import NoValidApplication, ObfunasError, UnknownArchitecture
from obfunas.flops import FlopsCount, flops_of_topology
from obfunas.oracle import FitnessOracle
from obfunas.transforms.candidates import ApplicationMenu, resolve_strategy_set, valid_applications
from obfunas.transforms.plan import ObfuscationPlan, StrategyApplication
from obfunas.transforms.strategies import apply_structure

MAX_RETRIES = 16


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 32
    cycles: int = 2000
    tournament_size: int = 4
    seed: int = 0
    tau: float | None = None
    tau_mult: float | None = None
    strategy_set: tuple[str, ...] = ("nb101",)
    max_plan_length: int = 3
    menu: ApplicationMenu = field(default_factory=ApplicationMenu)
    max_retries: int = MAX_RETRIES
    debug: bool = False
    threads: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy_set", resolve_strategy_set(self.strategy_set))
        if self.population_size <= 0:
            raise ValueError("population_size must be positive")
        if self.cycles < 0:
            raise ValueError("cycles must be non-negative")
        if not 2 <= self.tournament_size <= self.population_size:
            raise ValueError(f"tournament_size must be in [2, {self.population_size}]")
        if self.max_plan_length < 0:
            raise ValueError("max_plan_length must be non-negative")
        if (self.tau is None) == (self.tau_mult is None):
            raise ValueError("give exactly one of tau and tau_mult")
        if self.tau_mult is not None and self.tau_mult <= 0:
            raise ValueError("tau_mult must be positive")

    def resolve_tau(self, victim_flops: int) -> float:
        return float(self.tau) if self.tau is not None else self.tau_mult * victim_flops

    def to_doc(self) -> dict:
        return {
            "cycles": self.cycles,
            "max_plan_length": self.max_plan_length,
            "population_size": self.population_size,
            "seed": self.seed,
            "strategy_set": list(self.strategy_set),
            "tau": self.tau,
            "tau_mult": self.tau_mult,
            "tournament_size": self.tournament_size,
        }


@dataclass(frozen=True)
class Candidate:
    plan: ObfuscationPlan
    arch_hash: str | None
    flops: FlopsCount | None
    accuracy: float | None
    feasible: bool
    reason: str = ""

    @property
    def fitness(self) -> float:
        return -self.accuracy if self.accuracy is not None else -np.inf


def structural_key(plan: ObfuscationPlan) -> tuple:
    """Seeds only affect random weight fills, never the mask; drop them for caching."""
    return tuple((a.kind, a.target, a.params) for a in plan)


class Evaluator:
    """Memoizes mask topologies, valid-application lists and oracle answers.

    Everything cached is a pure function of its key, so one evaluator may be
    shared across runs without affecting their results.
    """

    def __init__(self, victim: Topology, oracle: FitnessOracle, tau: float, menu: ApplicationMenu | None = None):
        self.victim = victim
        self.oracle = oracle
        self.tau = tau
        self.menu = menu or ApplicationMenu()
        self._topos: dict[tuple, Topology | None] = {(): victim}
        self._apps: dict[tuple, list[StrategyApplication]] = {}
        self._by_hash: dict[str, tuple[FlopsCount, float | None]] = {}
        self._candidates: dict[tuple, Candidate] = {}
        self.evaluations = 0

    def topology(self, plan: ObfuscationPlan) -> Topology | None:
        """Mask topology, or None when some application is invalid."""
        key = structural_key(plan)
        if key in self._topos:
            return self._topos[key]
        parent = self.topology(ObfuscationPlan(plan.applications[:-1]))
        topo = None
        if parent is not None:
            try:
                topo = apply_structure(parent, plan.applications[-1])
            except ObfunasError:
                topo = None
        self._topos[key] = topo
        return topo

    def applications(self, plan: ObfuscationPlan, kind: str) -> list[StrategyApplication]:
        key = (structural_key(plan), kind)
        if key not in self._apps:
            topo = self.topology(plan)
            self._apps[key] = [] if topo is None else valid_applications(topo, kind, self.menu)
        return self._apps[key]

    def mask_stats(self, topo: Topology) -> tuple[str, FlopsCount, float | None]:
        digest = canonical_hash(topo.arch).hex
        if digest not in self._by_hash:
            try:
                acc = self.oracle.query(topo.arch)
            except UnknownArchitecture:
                acc = None
            self._by_hash[digest] = (flops_of_topology(topo), acc)
        flops, acc = self._by_hash[digest]
        return digest, flops, acc

    def evaluate(self, plan: ObfuscationPlan) -> Candidate:
        self.evaluations += 1
        key = structural_key(plan)
        cached = self._candidates.get(key)
        if cached is not None:
            return cached if cached.plan == plan else _replan(cached, plan)
        topo = self.topology(plan)
        if topo is None:
            cand = Candidate(plan, None, None, None, False, "invalid plan")
        else:
            digest, flops, acc = self.mask_stats(topo)
            if acc is None:
                cand = Candidate(plan, digest, flops, None, False, "oracle miss")
            elif not flops < self.tau:
                cand = Candidate(plan, digest, flops, acc, False, "flops bound")
            else:
                cand = Candidate(plan, digest, flops, acc, True)
        self._candidates[key] = cand
        return cand


def _replan(c: Candidate, plan: ObfuscationPlan) -> Candidate:
    return Candidate(plan, c.arch_hash, c.flops, c.accuracy, c.feasible, c.reason)


def random_application(
    evaluator: Evaluator,
    plan: ObfuscationPlan,
    strategy_set: tuple[str, ...],
    rng: np.random.Generator,
    max_tries: int = MAX_RETRIES,
) -> StrategyApplication:
    """Uniform over enabled kinds, then uniform over that kind's valid applications."""
    if not strategy_set:
        raise ValueError("strategy_set is empty")
    for _ in range(max_tries):
        kind = strategy_set[int(rng.integers(len(strategy_set)))]
        apps = evaluator.applications(plan, kind)
        if apps:
            app = apps[int(rng.integers(len(apps)))]
            return StrategyApplication(app.kind, app.target, app.params, int(rng.integers(2**31)))
    if not any(evaluator.applications(plan, k) for k in strategy_set):
        raise NoValidApplication(f"no enabled strategy applies after {len(plan)} application(s)")
    raise NoValidApplication(f"no valid application sampled in {max_tries} tries")


APPEND, DELETE, RESAMPLE = "append", "delete", "resample"


def mutation_ops(plan: ObfuscationPlan, max_plan_length: int) -> list[str]:
    ops = []
    if len(plan) < max_plan_length:
        ops.append(APPEND)
    if len(plan):
        ops += [DELETE, RESAMPLE]
    return ops


def mutate(
    evaluator: Evaluator,
    plan: ObfuscationPlan,
    strategy_set: tuple[str, ...],
    rng: np.random.Generator,
    max_plan_length: int,
    max_tries: int = MAX_RETRIES,
) -> ObfuscationPlan:
    """Append, delete or resample one application; invalid mutants are redrawn, else the parent returns."""
    ops = mutation_ops(plan, max_plan_length)
    if not ops:
        return plan
    apps = plan.applications
    for _ in range(max_tries):
        op = ops[int(rng.integers(len(ops)))]
        try:
            if op == APPEND:
                child = plan.append(random_application(evaluator, plan, strategy_set, rng))
            elif op == DELETE:
                i = int(rng.integers(len(apps)))
                child = ObfuscationPlan(apps[:i] + apps[i + 1 :])
            else:
                i = int(rng.integers(len(apps)))
                new = random_application(evaluator, ObfuscationPlan(apps[:i]), strategy_set, rng)
                child = ObfuscationPlan((*apps[:i], new, *apps[i + 1 :]))
        except NoValidApplication:
            continue
        if evaluator.topology(child) is not None:
            return child
    return plan


ProgressFn = Callable[[int, float], None]
