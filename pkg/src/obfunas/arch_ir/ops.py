"""Operation labels carried by cell nodes.

NB-101 kinds (``conv3x3-bn-relu``, ``conv1x1-bn-relu``, ``maxpool3x3``) have fixed
semantics and no parameters. The remaining convolution kinds carry a full
:class:`ConvSpec` in their params, so any convolution a transform produces can be
described exactly. :func:`conv_label` folds a spec back onto an NB-101 kind
whenever it matches one, which keeps obfuscated masks inside the NB-101 space
where possible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

INPUT = "input"
OUTPUT = "output"
CONV3X3 = "conv3x3-bn-relu"
CONV1X1 = "conv1x1-bn-relu"
MAXPOOL3X3 = "maxpool3x3"
AVGPOOL = "avgpool"
IDENTITY_CONV = "identity-conv"
GATED_SUM = "zero-gated-sum"
BRANCH_OP = "branch-op"
CONV = "conv"

KINDS = (INPUT, OUTPUT, CONV3X3, CONV1X1, MAXPOOL3X3, AVGPOOL, IDENTITY_CONV, GATED_SUM, BRANCH_OP, CONV)
NB101_KINDS = (CONV3X3, CONV1X1, MAXPOOL3X3)
CONV_KINDS = (CONV3X3, CONV1X1, IDENTITY_CONV, BRANCH_OP, CONV)
JOIN_KINDS = (OUTPUT, GATED_SUM)
ACTIVATIONS = ("none", "relu", "swish", "fake_swish")

# Short names accepted on the command line.
ALIASES = {
    "conv3x3": CONV3X3,
    "conv1x1": CONV1X1,
    "maxpool": MAXPOOL3X3,
    "mp": MAXPOOL3X3,
    "avgpool3x3": AVGPOOL,
}


@dataclass(frozen=True)
class ConvSpec:
    kernel: tuple[int, int] = (3, 3)
    channels: int | None = None  # None: the stack width
    bn: bool = False
    act: str = "none"
    bias: bool = False

    def as_params(self) -> dict[str, Any]:
        return {
            "act": self.act,
            "bias": self.bias,
            "bn": self.bn,
            "channels": self.channels,
            "kernel": list(self.kernel),
        }


_NB101_CONV = {
    CONV3X3: ConvSpec(kernel=(3, 3), bn=True, act="relu"),
    CONV1X1: ConvSpec(kernel=(1, 1), bn=True, act="relu"),
}


def _freeze(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


def _thaw(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


@dataclass(frozen=True, order=True)
class OpLabel:
    kind: str
    params: tuple[tuple[str, Any], ...] = ()

    @classmethod
    def make(cls, kind: str, params: dict[str, Any] | None = None) -> OpLabel:
        items = tuple(sorted((k, _freeze(v)) for k, v in (params or {}).items()))
        return cls(kind, items)

    def param(self, name: str, default: Any = None) -> Any:
        for key, value in self.params:
            if key == name:
                return value
        return default

    def to_doc(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": {k: _thaw(v) for k, v in self.params}}

    @property
    def is_conv(self) -> bool:
        return self.kind in CONV_KINDS

    @property
    def is_join(self) -> bool:
        return self.kind in JOIN_KINDS

    def conv_spec(self) -> ConvSpec:
        if self.kind in _NB101_CONV:
            return _NB101_CONV[self.kind]
        if self.kind not in CONV_KINDS:
            raise ValueError(f"{self.kind} is not a convolution")
        kernel = self.param("kernel", (3, 3))
        return ConvSpec(
            kernel=(int(kernel[0]), int(kernel[1])),
            channels=self.param("channels"),
            bn=bool(self.param("bn", False)),
            act=self.param("act", "none"),
            bias=bool(self.param("bias", False)),
        )

    def pool_kernel(self) -> tuple[int, int]:
        if self.kind == MAXPOOL3X3:
            return (3, 3)
        if self.kind == AVGPOOL:
            k = self.param("kernel", (3, 3))
            return (int(k[0]), int(k[1]))
        raise ValueError(f"{self.kind} is not a pooling op")

    def activation(self) -> str:
        return self.conv_spec().act if self.is_conv else "none"

    def sort_key(self) -> str:
        # Canonical tie-break between nodes: lexicographic on the label's JSON.
        return json.dumps(self.to_doc(), sort_keys=True, separators=(",", ":"))


def conv_label(spec: ConvSpec, kind_hint: str = CONV) -> OpLabel:
    """Label for a convolution; NB-101 kinds win whenever the spec matches one."""
    for kind, fixed in _NB101_CONV.items():
        if spec == fixed:
            return OpLabel(kind)
    if kind_hint in _NB101_CONV or kind_hint not in CONV_KINDS:
        kind_hint = CONV
    return OpLabel.make(kind_hint, spec.as_params())


def avgpool_label(kernel: int | tuple[int, int] = 3) -> OpLabel:
    if isinstance(kernel, int):
        kernel = (kernel, kernel)
    return OpLabel.make(AVGPOOL, {"kernel": list(kernel)})


def resolve_kind(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in KINDS:
        raise ValueError(f"unknown op kind {name!r}")
    return name


def label_problems(label: OpLabel) -> list[str]:
    """Parameter-level violations for a single label (empty when well formed)."""
    problems: list[str] = []
    kind = label.kind
    if kind not in KINDS:
        return [f"unknown op kind {kind!r}"]
    allowed: set[str] = set()
    if kind in (IDENTITY_CONV, BRANCH_OP, CONV):
        allowed = {"kernel", "channels", "bn", "act", "bias"}
    elif kind == AVGPOOL:
        allowed = {"kernel"}
    extra = sorted({k for k, _ in label.params} - allowed)
    if extra:
        problems.append(f"{kind} does not take params {extra}")
    if kind in (IDENTITY_CONV, BRANCH_OP, CONV, AVGPOOL):
        kernel = label.param("kernel", (3, 3))
        if not (isinstance(kernel, tuple) and len(kernel) == 2 and all(isinstance(k, int) for k in kernel)):
            problems.append(f"{kind} kernel must be a pair of integers")
        elif any(k <= 0 or k % 2 == 0 for k in kernel):
            problems.append(f"{kind} kernel sizes must be odd positive integers, got {list(kernel)}")
    if kind in (IDENTITY_CONV, BRANCH_OP, CONV):
        channels = label.param("channels")
        if channels is not None and (not isinstance(channels, int) or channels <= 0):
            problems.append(f"{kind} channels must be a positive integer or null")
        if label.param("act", "none") not in ACTIVATIONS:
            problems.append(f"{kind} act must be one of {list(ACTIVATIONS)}")
        for flag in ("bn", "bias"):
            if not isinstance(label.param(flag, False), bool):
                problems.append(f"{kind} {flag} must be a boolean")
    return problems
