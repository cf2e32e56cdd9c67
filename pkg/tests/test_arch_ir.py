import json
from itertools import combinations, product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obfunas.arch_ir import (
    GENERIC_DAG,
    NB101_MAX_EDGES,
    NB101_MAX_NODES,
    Architecture,
    CellGraph,
    ConvSpec,
    OpLabel,
    canonical_hash,
    canonical_key,
    canonicalize,
    chain,
    conv_label,
    enumerate_space,
    parse_architecture,
    serialize_architecture,
    validate_architecture,
)
from obfunas.arch_ir.build import build_network
from obfunas.arch_ir.sidecar import load_network, save_network
from obfunas.errors import ArchitectureInvalid, SchemaError, ShapeError
from obfunas.tensor_core import forward

import _corpus

C3 = OpLabel("conv3x3-bn-relu")
C1 = OpLabel("conv1x1-bn-relu")
MP = OpLabel("maxpool3x3")
IN, OUT = OpLabel("input"), OpLabel("output")


def permuted(arch: Architecture, rng: np.random.Generator) -> Architecture:
    """Same graph with interior nodes renumbered by a random topological order."""
    cell = arch.cell
    n = cell.num_nodes
    indeg = {i: 0 for i in range(n)}
    for _, t in cell.edges:
        indeg[t] += 1
    order, ready = [], [0]
    while ready:
        i = ready.pop(int(rng.integers(len(ready))))
        order.append(i)
        for t in cell.outputs_of(i):
            indeg[t] -= 1
            if indeg[t] == 0:
                ready.append(t)
    rank = {old: new for new, old in enumerate(order)}
    edges = list({(rank[s], rank[t]) for s, t in cell.edges})
    rng.shuffle(edges)
    return arch.with_cell(CellGraph(tuple(cell.node_ops[i] for i in order), tuple(map(tuple, edges))))


class TestValidation:
    def test_minimal_chain_is_valid(self):
        assert validate_architecture(chain(C3)).ok

    def test_node_limit(self):
        arch = chain(*[C3] * 6)
        report = validate_architecture(arch, NB101_MAX_NODES, NB101_MAX_EDGES)
        assert not report.ok
        assert "node count 8 > 7" in [d.message for d in report.diagnostics]

    def test_edge_order(self):
        arch = Architecture(CellGraph((IN, C3, C3, OUT), ((0, 2), (2, 1), (1, 3))))
        report = validate_architecture(arch)
        assert any("edge (2,1) not topologically ordered" in d.message for d in report.diagnostics)

    def test_dangling_and_duplicates(self):
        arch = Architecture(CellGraph((IN, C3, C3, OUT), ((0, 1), (0, 1), (1, 3))))
        messages = [d.message for d in validate_architecture(arch).diagnostics]
        assert "duplicate edge (0,1)" in messages
        assert "node 2 has no incoming edge" in messages
        assert "node 2 has no outgoing edge" in messages

    def test_even_kernel_rejected(self):
        bad = OpLabel.make("conv", {"kernel": [2, 2]})
        report = validate_architecture(chain(bad))
        assert not report.ok and "odd" in str(report)

    def test_violations_are_reported_not_raised(self):
        report = validate_architecture(Architecture(CellGraph((C3,), ())))
        assert not report.ok


class TestCodec:
    def test_round_trip_of_minimal_chain(self):
        arch = chain(C3)
        text = serialize_architecture(arch)
        assert parse_architecture(text) == arch
        assert serialize_architecture(parse_architecture(text)) == text

    def test_missing_cell_is_named(self):
        doc = json.loads(serialize_architecture(chain(C3)))
        del doc["cell"]
        with pytest.raises(SchemaError, match="cell"):
            parse_architecture(json.dumps(doc))

    def test_stem_channels_positive(self):
        doc = json.loads(serialize_architecture(chain(C3)))
        doc["stem_channels"] = 0
        with pytest.raises(SchemaError, match="stem_channels must be positive"):
            parse_architecture(json.dumps(doc))

    def test_invalid_document_carries_report(self):
        doc = json.loads(serialize_architecture(chain(C3)))
        doc["cell"]["edges"] = [[0, 1]]
        with pytest.raises(ArchitectureInvalid) as info:
            parse_architecture(json.dumps(doc))
        assert not info.value.report.ok

    def test_edge_insertion_order_irrelevant(self):
        a = Architecture(CellGraph((IN, C3, OUT), ((0, 1), (1, 2), (0, 2))))
        b = Architecture(CellGraph((IN, C3, OUT), ((0, 2), (0, 1), (1, 2))))
        assert serialize_architecture(a) == serialize_architecture(b)

    def test_family_preserved(self):
        lin = conv_label(ConvSpec(kernel=(1, 1), channels=1))
        arch = Architecture(CellGraph((IN, lin, OUT), ((0, 1), (1, 2))), family=GENERIC_DAG,
                            input_shape=(1, 1, 1), num_classes=1)
        assert parse_architecture(serialize_architecture(arch)).family == GENERIC_DAG

    def test_one_edge_changes_hash(self):
        a = Architecture(CellGraph((IN, C3, OUT), ((0, 1), (1, 2))))
        b = Architecture(CellGraph((IN, C3, OUT), ((0, 1), (1, 2), (0, 2))))
        assert canonical_hash(a) != canonical_hash(b)

    def test_hash_is_sha256_of_document(self):
        import hashlib

        arch = chain(C3, C1)
        expected = hashlib.sha256(serialize_architecture(arch).encode()).hexdigest()
        assert canonical_hash(arch).hex == expected

    def test_nb101_spec_folds_to_named_kind(self):
        assert conv_label(ConvSpec(kernel=(3, 3), bn=True, act="relu")) == C3
        assert conv_label(ConvSpec(kernel=(5, 5), bn=True, act="relu")).kind == "conv"

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_hash_invariant_under_renumbering(self, seed):
        rng = np.random.default_rng(seed)
        arch = _corpus.random_architecture(rng)
        other = permuted(arch, rng)
        assert validate_architecture(other).ok
        assert canonical_hash(other) == canonical_hash(arch)
        assert parse_architecture(serialize_architecture(other)) == canonicalize(arch)


def brute_force_count(max_nodes: int, ops) -> int:
    """Count distinct valid cells over every upper-triangular adjacency matrix and labeling."""
    found = set()
    for n in range(2, max_nodes + 1):
        pairs = list(combinations(range(n), 2))
        for labels in product(ops, repeat=n - 2):
            for bits in product((0, 1), repeat=len(pairs)):
                edges = tuple(p for p, b in zip(pairs, bits) if b)
                arch = Architecture(CellGraph((IN, *labels, OUT), edges))
                if validate_architecture(arch).ok:
                    found.add(canonical_hash(arch).hex)
    return len(found)


class TestEnumeration:
    @pytest.mark.parametrize("max_nodes,expected", [(2, 1), (3, 3), (4, 13)])
    def test_single_op_counts(self, max_nodes, expected):
        # 2 nodes: input->output. 3 nodes adds the chain and the chain with skip (0,2).
        # 4 nodes: ten more, counted by hand over the 64 edge subsets.
        assert len(list(enumerate_space(max_nodes))) == expected

    @pytest.mark.parametrize("max_nodes", [2, 3, 4])
    def test_matches_independent_brute_force(self, max_nodes):
        ops = (C3, C1, MP)
        assert len(list(enumerate_space(max_nodes, ops=ops))) == brute_force_count(max_nodes, ops)

    def test_three_op_count_frozen(self):
        assert len(list(enumerate_space(4, ops=(C3, C1, MP)))) == 91

    def test_stream_strictly_increasing(self):
        keys = [canonical_key(a) for a in enumerate_space(4, ops=(C3, C1))]
        assert all(a < b for a, b in zip(keys, keys[1:]))

    def test_edge_limit(self):
        assert all(len(a.cell.edges) <= 3 for a in enumerate_space(4, 3))


class TestBuild:
    def test_minimal_chain_layers(self):
        net = build_network(chain(C3), seed=0)
        assert [layer.name for layer in net.layers] == ["stem", "s0c0/n1", "gap", "classifier"]
        assert net.layer("stem").out_shape == (4, 8, 8)
        assert net.layer("s0c0/n1").out_shape == (4, 8, 8)
        assert net.layer("classifier").out_shape == (10, 1, 1)

    def test_deterministic_weights(self):
        a, b = build_network(chain(C3, C1), seed=5), build_network(chain(C3, C1), seed=5)
        for name, p in a.params.items():
            assert np.array_equal(p.weight, b.params[name].weight)

    def test_seed_changes_weights(self):
        a, b = build_network(chain(C3), seed=1), build_network(chain(C3), seed=2)
        assert not np.array_equal(a.params["stem"].weight, b.params["stem"].weight)

    def test_mismatched_join_names_node(self):
        wide = conv_label(ConvSpec(kernel=(1, 1), channels=6, bn=True, act="relu"))
        arch = Architecture(CellGraph((IN, wide, C3, OUT), ((0, 1), (0, 2), (1, 3), (2, 3))))
        with pytest.raises(ShapeError, match="s0c0/n3"):
            build_network(arch)

    def test_downsampling_between_stacks(self):
        net = build_network(chain(C3, num_stacks=3), seed=0)
        assert net.layer("down1").out_shape == (4, 4, 4)
        assert net.layer("down2").out_shape == (4, 2, 2)


class TestSidecar:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip_is_exact(self, tmp_path_factory, seed):
        net = _corpus.random_network(np.random.default_rng(seed))
        d = tmp_path_factory.mktemp("net")
        save_network(net, d)
        back = load_network(d)
        x = np.random.default_rng(seed).standard_normal((4, *net.input_shape))
        assert np.array_equal(forward(net, x), forward(back, x))
        assert canonical_hash(back.arch) == canonical_hash(net.arch)

    def test_manifest_layout(self, tmp_path):
        save_network(build_network(chain(C3), seed=0), tmp_path)
        manifest = json.loads((tmp_path / "weights.json").read_text())
        assert manifest["schema"] == "obfunas-weights/v1"
        offsets = [t["offset"] for t in manifest["tensors"]]
        assert offsets == sorted(offsets) and offsets[0] == 0
        first = manifest["tensors"][0]
        assert first["name"] == "stem.weight" and first["length"] == 4 * 3 * 3 * 3 * 4
        assert (tmp_path / "weights.bin").stat().st_size == sum(t["length"] for t in manifest["tensors"])
