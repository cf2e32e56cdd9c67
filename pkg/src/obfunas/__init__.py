"""Function-preserving architecture obfuscation and FLOPs-constrained mask search."""

from obfunas.arch_ir import Architecture, CellGraph, OpLabel, canonical_hash, chain, validate_architecture
from obfunas.arch_ir.build import build_network
from obfunas.arch_ir.sidecar import load_network, save_network
from obfunas.flops import flops_of_arch, flops_of_network
from obfunas.oracle import SyntheticOracle, TableOracle, fitness, load_accuracy_table, query
from obfunas.search import SearchConfig, brute_force_search, evolve
from obfunas.tensor_core import forward
from obfunas.transforms import ObfuscationPlan, StrategyApplication, apply_plan, check_function_preserving

__version__ = "0.1.0"

__all__ = [
    "Architecture", "CellGraph", "ObfuscationPlan", "OpLabel", "SearchConfig", "StrategyApplication",
    "SyntheticOracle", "TableOracle", "apply_plan", "brute_force_search", "build_network", "canonical_hash",
    "chain", "check_function_preserving", "evolve", "fitness", "flops_of_arch", "flops_of_network", "forward",
    "load_accuracy_table", "load_network", "query", "save_network", "validate_architecture",
]
