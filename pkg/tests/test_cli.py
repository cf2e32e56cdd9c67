import json

import pytest

from obfunas.arch_ir import OpLabel, chain, serialize_architecture
from obfunas.cli import main
from obfunas.transforms import ADD_BRANCH, DEEPEN_LAYER, ObfuscationPlan, StrategyApplication, dumps_plan

C3 = OpLabel("conv3x3-bn-relu")
C1 = OpLabel("conv1x1-bn-relu")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def victim(tmp_path):
    path = tmp_path / "victim.json"
    path.write_text(serialize_architecture(chain(C3, C1)))
    return path


@pytest.fixture
def plan(tmp_path):
    path = tmp_path / "plan.json"
    apps = (
        StrategyApplication.make(DEEPEN_LAYER, ("n1", "n2"), 4, kernel=3, bn=True),
        StrategyApplication.make(ADD_BRANCH, ("n0", "n2"), 2, kernel=1),
    )
    path.write_text(dumps_plan(ObfuscationPlan(apps)))
    return path


class TestValidate:
    def test_ok(self, capsys, victim):
        code, out, _ = run(capsys, "validate", "-i", victim)
        assert code == 0 and "hash=" in out

    def test_invalid_exits_one(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        doc = json.loads(serialize_architecture(chain(C3, C1, C1, C1, C1, C1)))
        bad.write_text(json.dumps(doc))
        code, out, _ = run(capsys, "validate", "-i", bad, "--max-nodes", 7)
        assert code == 1 and "node count 8 > 7" in out

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "validate", "-i", tmp_path / "nope.json")
        assert code == 1 and "cannot read" in err

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["validate"])
        assert info.value.code == 2


class TestObfuscateVerify:
    def test_pipeline(self, capsys, tmp_path, victim, plan):
        code, out, _ = run(capsys, "obfuscate", "-i", victim, "-o", tmp_path / "v", "--seed", 3)
        assert code == 0 and "applications=0" in out
        code, out, _ = run(capsys, "obfuscate", "-i", victim, "-p", plan, "-o", tmp_path / "m", "--seed", 3)
        assert code == 0 and "applications=2" in out
        code, out, _ = run(capsys, "verify", "-a", tmp_path / "v", "-b", tmp_path / "m", "-n", 100, "--tol", 0, "--seed", 7)
        assert code == 0 and out.strip() == "max_diff=0 pass"

    def test_weights_file(self, capsys, tmp_path, victim, plan):
        run(capsys, "obfuscate", "-i", victim, "-o", tmp_path / "v", "--seed", 5)
        code, _, _ = run(capsys, "obfuscate", "-i", tmp_path / "v" / "arch.json", "-w", tmp_path / "v" / "weights.bin",
                         "-p", plan, "-o", tmp_path / "m")
        assert code == 0
        code, out, _ = run(capsys, "verify", "-a", tmp_path / "v", "-b", tmp_path / "m")
        assert code == 0

    def test_reflexive(self, capsys, tmp_path, victim):
        run(capsys, "obfuscate", "-i", victim, "-o", tmp_path / "v")
        code, out, _ = run(capsys, "verify", "-a", tmp_path / "v", "-b", tmp_path / "v")
        assert (code, out.strip()) == (0, "max_diff=0 pass")

    def test_different_networks_fail(self, capsys, tmp_path, victim):
        run(capsys, "obfuscate", "-i", victim, "-o", tmp_path / "a", "--seed", 1)
        run(capsys, "obfuscate", "-i", victim, "-o", tmp_path / "b", "--seed", 2)
        code, out, _ = run(capsys, "verify", "-a", tmp_path / "a", "-b", tmp_path / "b")
        assert code == 1 and out.strip().endswith("FAIL")

    def test_bad_plan_reports_step(self, capsys, tmp_path, victim):
        bad = tmp_path / "bad.json"
        bad.write_text(dumps_plan(ObfuscationPlan((StrategyApplication.make(DEEPEN_LAYER, ("n7", "n8")),))))
        code, _, err = run(capsys, "obfuscate", "-i", victim, "-p", bad, "-o", tmp_path / "m")
        assert code == 1 and "application 1" in err


class TestFlops:
    def test_two_decimals(self, capsys, victim):
        code, out, _ = run(capsys, "flops", "-i", victim)
        assert code == 0
        mflops, rest = out.split(" MFLOPs ")
        assert len(mflops.split(".")[1]) == 2
        assert rest.startswith("(") and "FLOPs" in rest


class TestEnumerateAndTable:
    def test_enumerate_then_table(self, capsys, tmp_path):
        code, out, _ = run(capsys, "enumerate", "--max-nodes", 4, "-o", tmp_path / "space")
        assert (code, out.strip()) == (0, "architectures=91")
        files = sorted((tmp_path / "space").glob("*.json"))
        assert len(files) == 91
        code, _, _ = run(capsys, "validate", "-i", files[0])
        assert code == 0
        code, out, _ = run(capsys, "gen-table", "--space", tmp_path / "space", "--oracle", "synthetic", "--seed", 9,
                           "-o", tmp_path / "t.csv")
        assert (code, out.strip()) == (0, "rows=91")
        assert (tmp_path / "t.csv").read_text().startswith("hash,accuracy\n")

    def test_gen_table_needs_a_source(self, capsys, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["gen-table", "-o", str(tmp_path / "t.csv")])
        assert info.value.code == 2


class TestSearch:
    def args(self, victim, tmp_path, *extra):
        return ["search", "--victim", victim, "--oracle", "synthetic", "--pop", 8, "--cycles", 40,
                "--max-plan-length", 2, "--seed", 7, *extra]

    def test_report_and_history(self, capsys, tmp_path, victim):
        code, out, _ = run(capsys, *self.args(victim, tmp_path, "--tau-mult", 1.15, "-o", tmp_path / "r.json",
                                              "--history", tmp_path / "h.csv"))
        assert code == 0 and "mask_hash=" in out
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["flops_mask"] < doc["tau"]
        assert len((tmp_path / "h.csv").read_text().splitlines()) == 42
        # a report is accepted as a plan
        code, _, _ = run(capsys, "obfuscate", "-i", victim, "-p", tmp_path / "r.json", "-o", tmp_path / "m")
        assert code == 0

    def test_table_oracle(self, capsys, tmp_path, victim):
        run(capsys, "gen-table", "--victim", victim, "--max-plan-length", 2, "-o", tmp_path / "t.csv")
        code, _, _ = run(capsys, "search", "--victim", victim, "--oracle", tmp_path / "t.csv", "--tau-mult", 1.5,
                         "--pop", 8, "--cycles", 40, "--max-plan-length", 2)
        assert code == 0
        code, out, _ = run(capsys, "search", "--victim", victim, "--oracle", tmp_path / "t.csv", "--tau-mult", 1.5,
                           "--brute-force", "--max-plan-length", 2)
        assert code == 0

    def test_strict_bound_at_unit_multiplier(self, capsys, tmp_path, victim):
        # zero-overhead masks have FLOPs == tau, which the strict bound excludes
        code, _, err = run(capsys, *self.args(victim, tmp_path, "--tau-mult", 1.0, "--strategies", "shortcut"))
        assert code == 1 and "no feasible mask" in err

    def test_shortcuts_just_above_unit(self, capsys, tmp_path, victim):
        code, out, _ = run(capsys, *self.args(victim, tmp_path, "--tau-mult", 1.000001, "--strategies", "shortcut"))
        assert code == 0
        assert "mflops_victim=0.03 mflops_mask=0.03" in out

    def test_bad_tournament(self, capsys, tmp_path, victim):
        with pytest.raises(SystemExit) as info:
            main([str(a) for a in self.args(victim, tmp_path, "--tau-mult", 1.5, "--tournament", 99)])
        assert info.value.code == 2

    def test_bad_threads(self, capsys, tmp_path, victim, monkeypatch):
        monkeypatch.setenv("OBFUNAS_THREADS", "lots")
        code, _, err = run(capsys, *self.args(victim, tmp_path, "--tau-mult", 1.5))
        assert code == 1 and "OBFUNAS_THREADS" in err
