import numpy as np
import pytest

from obfunas.arch_ir import OpLabel, canonical_hash, chain
from obfunas.arch_ir.build import build_network
from obfunas.errors import InfeasibleSearch, NoValidApplication, SearchBudgetExceeded
from obfunas.flops import flops_of_network
from obfunas.oracle import SyntheticOracle, TableOracle
from obfunas.search import (
    Evaluator,
    SearchConfig,
    brute_force_search,
    evolve,
    load_report,
    mutate,
    random_application,
    reachable_masks,
)
from obfunas.search.core import mutation_ops
from obfunas.transforms import (
    ADD_BRANCH,
    SHORTCUT_SEQUENTIAL,
    ApplicationMenu,
    ObfuscationPlan,
    apply_plan,
    apply_plan_structure,
    check_function_preserving,
)

C3 = OpLabel("conv3x3-bn-relu")
C1 = OpLabel("conv1x1-bn-relu")
MP = OpLabel("maxpool3x3")


@pytest.fixture(scope="module")
def victim():
    return build_network(chain(C3, C1), seed=0)


def small_config(**kw):
    base = dict(population_size=8, cycles=60, tournament_size=3, seed=1, tau_mult=3.0, max_plan_length=2)
    base.update(kw)
    return SearchConfig(**base)


class TestConfig:
    def test_tau_exclusive(self):
        with pytest.raises(ValueError, match="exactly one"):
            SearchConfig(tau=1.0, tau_mult=2.0)
        with pytest.raises(ValueError, match="exactly one"):
            SearchConfig()

    def test_tournament_bounds(self):
        with pytest.raises(ValueError, match="tournament_size"):
            SearchConfig(population_size=4, tournament_size=5, tau_mult=2.0)

    def test_resolve_tau(self):
        assert SearchConfig(tau_mult=1.5).resolve_tau(1000) == 1500.0
        assert SearchConfig(tau=7.0).resolve_tau(1000) == 7.0


class TestSampling:
    def test_forced_choice(self):
        net = build_network(chain(C3))
        ev = Evaluator(net.topology, None, float("inf"))
        app = random_application(ev, ObfuscationPlan(), (SHORTCUT_SEQUENTIAL,), np.random.default_rng(0))
        assert (app.kind, app.target) == (SHORTCUT_SEQUENTIAL, ("n0", "n2"))

    def test_deterministic(self, victim):
        ev = Evaluator(victim.topology, None, float("inf"))
        kinds = SearchConfig(tau_mult=2).strategy_set
        a = random_application(ev, ObfuscationPlan(), kinds, np.random.default_rng(3))
        b = random_application(ev, ObfuscationPlan(), kinds, np.random.default_rng(3))
        assert a == b

    def test_empty_set(self, victim):
        ev = Evaluator(victim.topology, None, float("inf"))
        with pytest.raises(ValueError):
            random_application(ev, ObfuscationPlan(), (), np.random.default_rng(0))

    def test_saturated(self):
        net = build_network(chain(C3))
        ev = Evaluator(net.topology, None, float("inf"))
        plan = ObfuscationPlan().append(
            random_application(ev, ObfuscationPlan(), (SHORTCUT_SEQUENTIAL,), np.random.default_rng(0))
        )
        with pytest.raises(NoValidApplication):
            random_application(ev, plan, (SHORTCUT_SEQUENTIAL,), np.random.default_rng(0))


class TestMutate:
    def test_operator_sets(self, victim):
        assert mutation_ops(ObfuscationPlan(), 3) == ["append"]
        ev = Evaluator(victim.topology, None, float("inf"))
        kinds = SearchConfig(tau_mult=2).strategy_set
        plan = ObfuscationPlan().append(random_application(ev, ObfuscationPlan(), kinds, np.random.default_rng(0)))
        assert "append" not in mutation_ops(plan, 1)

    def test_length_bound_and_validity(self, victim):
        ev = Evaluator(victim.topology, None, float("inf"))
        kinds = SearchConfig(tau_mult=2).strategy_set
        rng = np.random.default_rng(5)
        plan = ObfuscationPlan()
        for _ in range(50):
            plan = mutate(ev, plan, kinds, rng, 3)
            assert len(plan) <= 3
            assert ev.topology(plan) is not None

    def test_deterministic(self, victim):
        ev = Evaluator(victim.topology, None, float("inf"))
        kinds = SearchConfig(tau_mult=2).strategy_set
        a = mutate(ev, ObfuscationPlan(), kinds, np.random.default_rng(9), 3)
        b = mutate(ev, ObfuscationPlan(), kinds, np.random.default_rng(9), 3)
        assert a == b


class TestEvolve:
    def test_deterministic(self, victim):
        oracle = SyntheticOracle(2)
        a, b = evolve(victim, oracle, small_config()), evolve(victim, oracle, small_config())
        assert a.dumps() == b.dumps()
        assert a.history_csv() == b.history_csv()

    def test_feasible_and_monotone(self, victim):
        report = evolve(victim, SyntheticOracle(4), small_config(tau_mult=1.6))
        assert report.flops_mask < report.tau
        fits = [row.best_fitness for row in report.history]
        assert all(a <= b for a, b in zip(fits, fits[1:]))
        assert len(report.history) == 61

    def test_best_plan_preserves_function(self, victim):
        report = evolve(victim, SyntheticOracle(4), small_config())
        mask = apply_plan(victim, report.best_plan)
        assert canonical_hash(mask.arch).hex == report.best_arch_hash
        assert check_function_preserving(victim, mask, 100, 0, 0.0).passed

    def test_debug_mode(self, victim):
        evolve(victim, SyntheticOracle(4), small_config(cycles=10, debug=True))

    def test_shortcut_only_keeps_flops(self, victim):
        report = evolve(victim, SyntheticOracle(1), small_config(strategy_set="shortcut", tau_mult=1.0 + 1e-9))
        assert report.flops_mask == report.flops_victim

    def test_tau_below_victim(self, victim):
        with pytest.raises(InfeasibleSearch) as info:
            evolve(victim, SyntheticOracle(1), small_config(tau_mult=0.5))
        assert info.value.min_flops == flops_of_network(victim)

    def test_strict_bound_at_victim_flops(self, victim):
        with pytest.raises(InfeasibleSearch):
            evolve(victim, SyntheticOracle(1), small_config(tau=float(flops_of_network(victim)), tau_mult=None))

    def test_report_document(self, victim):
        report = evolve(victim, SyntheticOracle(1), small_config(cycles=5))
        doc = load_report(report.dumps())
        assert doc["best_plan"] == report.best_plan
        assert report.history_csv().splitlines()[0] == "cycle,best_fitness,evaluations,feasible_fraction"


class TestBruteForce:
    def two_masks(self):
        net = build_network(chain(C3), seed=0)
        menu = ApplicationMenu(branch_kernels=(1,))
        masks = reachable_masks(net, [ADD_BRANCH], 1, menu)
        assert len(masks) == 2
        (h0, _), (h1, plan) = masks.items()
        return net, menu, h0, h1, plan

    def test_picks_lower_accuracy(self):
        net, menu, h0, h1, plan = self.two_masks()
        oracle = TableOracle({h0: 0.9, h1: 0.8})
        report = brute_force_search(net, oracle, float("inf"), [ADD_BRANCH], 1, menu=menu)
        assert report.best_arch_hash == h1 and report.mask_accuracy == 0.8
        assert report.best_plan == plan

    def test_bound_binds(self):
        net, menu, h0, h1, plan = self.two_masks()
        oracle = TableOracle({h0: 0.9, h1: 0.8})
        tau = flops_of_network(net) + 1
        report = brute_force_search(net, oracle, tau, [ADD_BRANCH], 1, menu=menu)
        assert report.best_arch_hash == h0 and report.mask_accuracy == 0.9

    def test_length_zero_is_victim(self, victim):
        report = brute_force_search(victim, SyntheticOracle(0), float("inf"), "nb101", 0)
        assert len(report.best_plan) == 0
        assert report.best_arch_hash == canonical_hash(victim.arch).hex

    def test_oracle_miss_is_infeasible(self):
        net, menu, h0, h1, _ = self.two_masks()
        report = brute_force_search(net, TableOracle({h0: 0.9}), float("inf"), [ADD_BRANCH], 1, menu=menu)
        assert report.best_arch_hash == h0

    def test_budget(self, victim):
        with pytest.raises(SearchBudgetExceeded):
            brute_force_search(victim, SyntheticOracle(0), float("inf"), "nb101", 2, budget=10)

    def test_masks_match_structure(self, victim):
        for digest, plan in reachable_masks(victim, "nb101", 1).items():
            assert canonical_hash(apply_plan_structure(victim.topology, plan).arch).hex == digest

    def test_evolve_reaches_optimum(self, victim):
        oracle = SyntheticOracle(3)
        config = SearchConfig(population_size=16, cycles=300, tournament_size=4, seed=0, tau_mult=1.5, max_plan_length=2)
        tau = config.resolve_tau(flops_of_network(victim))
        ref = brute_force_search(victim, oracle, tau, config.strategy_set, 2)
        assert evolve(victim, oracle, config).best_fitness == pytest.approx(ref.best_fitness, abs=0.01)
