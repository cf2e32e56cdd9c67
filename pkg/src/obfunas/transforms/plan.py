"""Strategy applications and plans, with their JSON document form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from obfunas.arch_ir.codec import dumps_canonical
from obfunas.errors import SchemaError

PLAN_SCHEMA = "obfunas-plan/v1"

WIDEN_LAYER = "widen-layer"
DEEPEN_LAYER = "deepen-layer"
WIDEN_KERNEL = "widen-kernel"
REPLACE_AVGPOOL = "replace-avgpool"
REPLACE_SKIP = "replace-skip"
SHORTCUT_SEQUENTIAL = "add-shortcut-sequential"
SHORTCUT_PARALLEL = "add-shortcut-parallel"
ADD_BRANCH = "add-branch"

STRATEGY_KINDS = (
    WIDEN_LAYER,
    DEEPEN_LAYER,
    WIDEN_KERNEL,
    REPLACE_AVGPOOL,
    REPLACE_SKIP,
    SHORTCUT_SEQUENTIAL,
    SHORTCUT_PARALLEL,
    ADD_BRANCH,
)
SHORTCUT_KINDS = (SHORTCUT_SEQUENTIAL, SHORTCUT_PARALLEL)

# How many node ids each kind's target names.
TARGET_ARITY = {
    WIDEN_LAYER: 1,
    DEEPEN_LAYER: 2,
    WIDEN_KERNEL: 1,
    REPLACE_AVGPOOL: 1,
    REPLACE_SKIP: 2,
    SHORTCUT_SEQUENTIAL: 2,
    SHORTCUT_PARALLEL: 2,
    ADD_BRANCH: 2,
}


def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _thaw(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


@dataclass(frozen=True)
class StrategyApplication:
    kind: str
    target: tuple[str, ...]
    params: tuple[tuple[str, Any], ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise SchemaError("kind", f"unknown strategy {self.kind!r}")
        if len(self.target) != TARGET_ARITY[self.kind]:
            raise SchemaError("target", f"{self.kind} takes {TARGET_ARITY[self.kind]} node id(s), got {list(self.target)}")

    @classmethod
    def make(cls, kind: str, target, seed: int = 0, **params) -> StrategyApplication:
        if isinstance(target, str):
            target = (target,)
        items = tuple(sorted((k, _freeze(v)) for k, v in params.items() if v is not None))
        return cls(kind, tuple(target), items, int(seed))

    def param(self, name: str, default: Any = None) -> Any:
        for key, value in self.params:
            if key == name:
                return value
        return default

    def to_doc(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "params": {k: _thaw(v) for k, v in self.params},
            "seed": self.seed,
            "target": list(self.target),
        }

    @classmethod
    def from_doc(cls, doc: Any, where: str = "application") -> StrategyApplication:
        if not isinstance(doc, dict):
            raise SchemaError(where, "expected an object")
        for key in ("kind", "target"):
            if key not in doc:
                raise SchemaError(where, f"missing required field {key!r}")
        target = doc["target"]
        if not isinstance(target, list) or not all(isinstance(t, str) for t in target):
            raise SchemaError(f"{where}.target", "expected a list of node ids")
        params = doc.get("params", {})
        if not isinstance(params, dict):
            raise SchemaError(f"{where}.params", "expected an object")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise SchemaError(f"{where}.seed", "expected an integer")
        return cls.make(doc["kind"], tuple(target), seed, **params)

    def __str__(self) -> str:
        extra = ",".join(f"{k}={_thaw(v)}" for k, v in self.params)
        return f"{self.kind}({'->'.join(self.target)}{'; ' + extra if extra else ''})"


@dataclass(frozen=True)
class ObfuscationPlan:
    applications: tuple[StrategyApplication, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.applications)

    def __iter__(self):
        return iter(self.applications)

    def append(self, app: StrategyApplication) -> ObfuscationPlan:
        return ObfuscationPlan((*self.applications, app))

    def to_doc(self) -> dict[str, Any]:
        return {"applications": [a.to_doc() for a in self.applications], "schema": PLAN_SCHEMA}

    @classmethod
    def from_doc(cls, doc: Any) -> ObfuscationPlan:
        if isinstance(doc, list):  # a bare application array is accepted too
            doc = {"schema": PLAN_SCHEMA, "applications": doc}
        if not isinstance(doc, dict):
            raise SchemaError("plan", "expected an object")
        if doc.get("schema", PLAN_SCHEMA) != PLAN_SCHEMA:
            raise SchemaError("schema", f"expected {PLAN_SCHEMA!r}, got {doc.get('schema')!r}")
        apps = doc.get("applications")
        if not isinstance(apps, list):
            raise SchemaError("applications", "missing required field 'applications'")
        return cls(tuple(StrategyApplication.from_doc(a, f"applications[{i}]") for i, a in enumerate(apps)))


def dumps_plan(plan: ObfuscationPlan) -> str:
    return dumps_canonical(plan.to_doc())


def loads_plan(text: str) -> ObfuscationPlan:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("plan", f"invalid JSON: {exc}") from exc
    return ObfuscationPlan.from_doc(doc)
