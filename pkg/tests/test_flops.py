import pytest

from obfunas.arch_ir import Architecture, CellGraph, OpLabel, chain, enumerate_space
from obfunas.arch_ir.build import build_network
from obfunas.arch_ir.ops import avgpool_label
from obfunas.errors import ArchitectureInvalid
from obfunas.flops import FlopsCount, flops_of_arch, flops_of_network, flops_of_op
from obfunas.transforms import add_shortcut, replace_avg_pool

C3 = OpLabel("conv3x3-bn-relu")
C1 = OpLabel("conv1x1-bn-relu")
MP = OpLabel("maxpool3x3")


class TestOpCost:
    def test_three_by_three_sixteen_channels(self):
        assert flops_of_op("conv", (3, 3), 16, (16, 32, 32)) == 4_718_592

    def test_pooling_is_free(self):
        assert flops_of_op("maxpool", (3, 3), 16, (16, 32, 32)) == 0

    def test_single_mac(self):
        assert flops_of_op("conv", (1, 1), 1, (1, 1, 1)) == 2

    def test_bias_adds_one_per_output(self):
        assert flops_of_op("conv", (1, 1), 1, (3, 2, 2), bias=True) == 2 * 12 + 12

    def test_unresolved_shape(self):
        with pytest.raises(ValueError, match="unresolved"):
            flops_of_op("conv", (3, 3), 0, (16, 32, 32))

    def test_mflops_view(self):
        f = FlopsCount(4_718_592)
        assert f.mflops == 4.718592
        assert f.format_mflops() == "4.72"


class TestNetworkCost:
    def test_empty_cell_is_stem_plus_classifier(self):
        arch = chain()
        stem = 2 * 9 * 3 * 4 * 8 * 8
        classifier = 2 * 4 * 10 + 10
        assert flops_of_arch(arch) == stem + classifier

    def test_arch_matches_network_over_a_space(self):
        for arch in enumerate_space(4, ops=(C3, C1, MP)):
            assert flops_of_arch(arch) == flops_of_network(build_network(arch))

    def test_invalid_architecture(self):
        with pytest.raises(ArchitectureInvalid):
            flops_of_arch(Architecture(CellGraph((OpLabel("input"), C3, OpLabel("output")), ((0, 1),))))

    def test_shortcut_is_free(self):
        net = build_network(chain(C3, C1, C3))
        assert flops_of_network(add_shortcut(net, "n1", "n3")) == flops_of_network(net)

    def test_avgpool_replacement_costs(self):
        net = build_network(chain(C3, avgpool_label(3)))
        assert flops_of_network(replace_avg_pool(net, "n2")) > flops_of_network(net)
