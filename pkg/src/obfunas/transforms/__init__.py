"""Function-preserving obfuscation rewrites, plans and the equivalence check."""

from obfunas.transforms.apply import apply_plan, apply_plan_structure
from obfunas.transforms.candidates import PRESETS, ApplicationMenu, resolve_strategy_set, valid_applications
from obfunas.transforms.plan import (
    ADD_BRANCH,
    DEEPEN_LAYER,
    PLAN_SCHEMA,
    REPLACE_AVGPOOL,
    REPLACE_SKIP,
    SHORTCUT_KINDS,
    SHORTCUT_PARALLEL,
    SHORTCUT_SEQUENTIAL,
    STRATEGY_KINDS,
    WIDEN_KERNEL,
    WIDEN_LAYER,
    ObfuscationPlan,
    StrategyApplication,
    dumps_plan,
    loads_plan,
)
from obfunas.transforms.strategies import (
    add_layer_branch,
    add_shortcut,
    apply_application,
    apply_structure,
    deepen_layer,
    replace_avg_pool,
    replace_skip_connection,
    widen_kernel,
    widen_layer,
)
from obfunas.transforms.verify import EquivalenceReport, check_function_preserving

__all__ = [
    "ADD_BRANCH", "DEEPEN_LAYER", "PLAN_SCHEMA", "PRESETS", "REPLACE_AVGPOOL", "REPLACE_SKIP",
    "SHORTCUT_KINDS", "SHORTCUT_PARALLEL", "SHORTCUT_SEQUENTIAL", "STRATEGY_KINDS", "WIDEN_KERNEL",
    "WIDEN_LAYER", "ApplicationMenu", "EquivalenceReport", "ObfuscationPlan", "StrategyApplication",
    "add_layer_branch", "add_shortcut", "apply_application", "apply_plan", "apply_plan_structure",
    "apply_structure", "check_function_preserving", "deepen_layer", "dumps_plan", "loads_plan",
    "replace_avg_pool", "replace_skip_connection", "resolve_strategy_set", "valid_applications",
    "widen_kernel", "widen_layer",
]
