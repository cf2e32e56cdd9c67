"""Regularized evolution over obfuscation plans and the exhaustive reference searcher."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from obfunas.arch_ir.codec import canonical_hash
from obfunas.errors import InfeasibleSearch, NoValidApplication, SearchBudgetExceeded, UnknownArchitecture
from obfunas.flops import flops_of_topology
from obfunas.oracle import FitnessOracle
from obfunas.search.core import Candidate, Evaluator, SearchConfig, mutate, random_application
from obfunas.search.report import HistoryRow, SearchReport
from obfunas.tensor_core.network import ConcreteNetwork
from obfunas.transforms.apply import apply_plan
from obfunas.transforms.candidates import ApplicationMenu, resolve_strategy_set
from obfunas.transforms.plan import ObfuscationPlan
from obfunas.transforms.verify import check_function_preserving

INIT_ATTEMPTS_PER_SLOT = 16


@dataclass
class _Individual:
    candidate: Candidate

    @property
    def plan(self) -> ObfuscationPlan:
        return self.candidate.plan

    @property
    def fitness(self) -> float:
        return self.candidate.fitness


def _victim_accuracy(oracle: FitnessOracle, net: ConcreteNetwork) -> float | None:
    try:
        return oracle.query(net.arch)
    except UnknownArchitecture:
        return None


def _random_plan(ev: Evaluator, config: SearchConfig, rng: np.random.Generator) -> ObfuscationPlan:
    plan = ObfuscationPlan()
    for _ in range(int(rng.integers(config.max_plan_length + 1))):
        try:
            plan = plan.append(random_application(ev, plan, config.strategy_set, rng))
        except NoValidApplication:
            break
    return plan


def _debug_check(victim: ConcreteNetwork, cand: Candidate, seed: int) -> None:
    report = check_function_preserving(victim, apply_plan(victim, cand.plan), 8, seed, 0.0)
    if not report.passed:
        raise AssertionError(f"mask from {cand.plan} is not function-preserving ({report})")


def evolve(
    victim: ConcreteNetwork,
    oracle: FitnessOracle,
    config: SearchConfig,
    evaluator: Evaluator | None = None,
) -> SearchReport:
    """Aging-tournament evolution; every population member satisfies FLOPs < tau.

    ``evaluator`` may be shared between runs on the same victim, oracle and tau
    (it only caches pure results).
    """
    victim_flops = flops_of_topology(victim.topology)
    tau = config.resolve_tau(victim_flops)
    ev = evaluator or Evaluator(victim.topology, oracle, tau, config.menu)
    if ev.tau != tau:
        raise ValueError("shared evaluator was built for a different tau")
    rng = np.random.default_rng(config.seed)
    P = config.population_size

    # Seed the population with random feasible plans.
    population: deque[_Individual] = deque()
    min_flops = None
    attempts = 0
    while len(population) < P and attempts < INIT_ATTEMPTS_PER_SLOT * P:
        batch = [_random_plan(ev, config, rng) for _ in range(P - len(population))]
        attempts += len(batch)
        for cand in map(ev.evaluate, batch):
            if cand.flops is not None:
                min_flops = cand.flops if min_flops is None else min(min_flops, cand.flops)
            if cand.feasible:
                if config.debug:
                    _debug_check(victim, cand, config.seed)
                population.append(_Individual(cand))
    if not population:
        raise InfeasibleSearch(tau, min_flops)
    # Too few distinct feasible plans: pad deterministically by repetition.
    base = list(population)
    while len(population) < P:
        population.append(base[len(population) % len(base)])

    best = max(population, key=lambda ind: ind.fitness).candidate
    history: list[HistoryRow] = [HistoryRow(0, best.fitness, ev.evaluations, 1.0)]
    for cycle in range(1, config.cycles + 1):
        picks = rng.choice(P, size=config.tournament_size, replace=False)
        parent = max((population[int(i)] for i in sorted(picks)), key=lambda ind: ind.fitness)
        child, tried, feasible = None, 0, 0
        for _ in range(config.max_retries):
            tried += 1
            cand = ev.evaluate(mutate(ev, parent.plan, config.strategy_set, rng, config.max_plan_length))
            if cand.feasible:
                feasible += 1
                child = _Individual(cand)
                break
        if child is None:
            child = _Individual(parent.candidate)
        elif config.debug:
            _debug_check(victim, child.candidate, config.seed + cycle)
        population.append(child)
        population.popleft()
        if child.fitness > best.fitness:
            best = child.candidate
        history.append(HistoryRow(cycle, best.fitness, ev.evaluations, feasible / tried))

    return SearchReport(
        best_plan=best.plan,
        best_arch_hash=best.arch_hash,
        best_fitness=best.fitness,
        victim_accuracy=_victim_accuracy(oracle, victim),
        mask_accuracy=best.accuracy,
        flops_victim=victim_flops,
        flops_mask=best.flops,
        tau=tau,
        history=tuple(history),
        seed=config.seed,
        config=config.to_doc(),
        method="evolve",
    )


DEFAULT_BUDGET = 20_000


def brute_force_search(
    victim: ConcreteNetwork,
    oracle: FitnessOracle,
    tau: float,
    strategy_set,
    max_plan_length: int,
    budget: int = DEFAULT_BUDGET,
    menu: ApplicationMenu | None = None,
    evaluator: Evaluator | None = None,
) -> SearchReport:
    """Breadth-first over every plan up to ``max_plan_length``, one representative per mask hash.

    Each distinct mask is reached first by a shortest plan; the feasible mask with
    the highest fitness wins, ties going to the earliest in that order.
    """
    strategy_set = resolve_strategy_set(strategy_set)
    ev = evaluator or Evaluator(victim.topology, oracle, tau, menu)
    victim_flops = flops_of_topology(victim.topology)
    seen = _breadth_first(ev, strategy_set, max_plan_length, budget)
    best, min_flops = None, None
    for plan in seen.values():
        cand = ev.evaluate(plan)
        if cand.flops is not None:
            min_flops = cand.flops if min_flops is None else min(min_flops, cand.flops)
        if cand.feasible and (best is None or cand.fitness > best.fitness):
            best = cand
    if best is None:
        raise InfeasibleSearch(tau, min_flops)
    return SearchReport(
        best_plan=best.plan,
        best_arch_hash=best.arch_hash,
        best_fitness=best.fitness,
        victim_accuracy=_victim_accuracy(oracle, victim),
        mask_accuracy=best.accuracy,
        flops_victim=victim_flops,
        flops_mask=best.flops,
        tau=tau,
        history=(HistoryRow(0, best.fitness, ev.evaluations, 1.0),),
        seed=0,
        config={"max_plan_length": max_plan_length, "strategy_set": list(strategy_set), "masks": len(seen)},
        method="brute-force",
    )


def _breadth_first(ev: Evaluator, strategy_set, max_plan_length: int, budget: int) -> dict[str, ObfuscationPlan]:
    seen = {canonical_hash(ev.victim.arch).hex: ObfuscationPlan()}
    frontier = [ObfuscationPlan()]
    for _ in range(max_plan_length):
        nxt = []
        for plan in frontier:
            for kind in strategy_set:
                for app in ev.applications(plan, kind):
                    child = plan.append(app)
                    digest = canonical_hash(ev.topology(child).arch).hex
                    if digest in seen:
                        continue
                    seen[digest] = child
                    if len(seen) > budget:
                        raise SearchBudgetExceeded(len(seen), budget)
                    nxt.append(child)
        frontier = nxt
    return seen


def reachable_masks(
    victim: ConcreteNetwork, strategy_set, max_plan_length: int, menu=None, budget: int = DEFAULT_BUDGET
) -> dict[str, ObfuscationPlan]:
    """Canonical hash -> first shortest plan, for every mask reachable within the length bound."""
    ev = Evaluator(victim.topology, None, float("inf"), menu)
    return _breadth_first(ev, resolve_strategy_set(strategy_set), max_plan_length, budget)
