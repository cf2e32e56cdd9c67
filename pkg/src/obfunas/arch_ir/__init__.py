"""Architecture IR: cell graphs, validation, canonical documents, enumeration.

``build_network`` and the weight sidecar live in :mod:`obfunas.arch_ir.build` and
:mod:`obfunas.arch_ir.sidecar` (they depend on the tensor runtime).
"""

from obfunas.arch_ir.codec import (
    SCHEMA,
    ArchHash,
    architecture_from_doc,
    architecture_to_doc,
    canonical_hash,
    canonicalize,
    parse_architecture,
    serialize_architecture,
)
from obfunas.arch_ir.enumerate import canonical_key, enumerate_space
from obfunas.arch_ir.graph import (
    CELL_STACK,
    GENERIC_DAG,
    NB101_MAX_EDGES,
    NB101_MAX_NODES,
    Architecture,
    CellGraph,
    Diagnostic,
    ValidationReport,
    chain,
    validate_architecture,
)
from obfunas.arch_ir.ops import ConvSpec, OpLabel, avgpool_label, conv_label
from obfunas.arch_ir.topology import CellNode, Layer, Topology

__all__ = [
    "SCHEMA", "ArchHash", "Architecture", "CellGraph", "CellNode", "ConvSpec", "Diagnostic", "Layer",
    "OpLabel", "Topology", "ValidationReport", "CELL_STACK", "GENERIC_DAG", "NB101_MAX_EDGES",
    "NB101_MAX_NODES", "architecture_from_doc", "architecture_to_doc", "avgpool_label", "canonical_hash",
    "canonical_key", "canonicalize", "chain", "conv_label", "enumerate_space", "parse_architecture",
    "serialize_architecture", "validate_architecture",
]
