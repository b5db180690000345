import json

import pytest

from minimax_lab import cli
from minimax_lab.engine import ConfigError
from minimax_lab.experiments import REGISTRY

NAMES = {"pm-factorial-8", "pm-generative", "gan-toy", "gan-as-ac", "gan-factorial-pipeline",
         "curiosity-noisytv", "saddle-games", "pipeline-duel"}


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def manifest_files(out):
    return json.loads((out / "manifest.json").read_text())["files"]


class TestList:
    def test_eight_entries_with_anchors(self, capsys):
        code, out, _ = run(["list"], capsys)
        lines = out.strip().splitlines()
        assert code == 0 and len(lines) == 8
        assert {line.split()[0] for line in lines} == NAMES
        for line in lines:
            assert "[" in line and "]" in line

    def test_registry_entries_complete(self):
        for exp in REGISTRY.values():
            assert exp.anchor and exp.description and exp.defaults

    def test_verbose_lists_defaults(self, capsys):
        _, out, _ = run(["list", "--verbose"], capsys)
        assert "    quadratic_lr = 0.05" in out


class TestConfig:
    def write(self, tmp_path, text):
        p = tmp_path / "c.json"
        p.write_text(text)
        return p

    def test_unknown_top_key_names_key_and_line(self, tmp_path, capsys):
        p = self.write(tmp_path, '{\n  "experiment": "saddle-games",\n  "sede": 3\n}\n')
        code, _, err = run(["run", str(p)], capsys)
        assert code == 2
        assert "'sede'" in err and "line 3" in err

    def test_unknown_param(self, tmp_path, capsys):
        p = self.write(tmp_path, '{"experiment": "saddle-games",\n "params": {"lr": 0.1}}')
        code, _, err = run(["run", str(p)], capsys)
        assert code == 2 and "'lr'" in err and "line 2" in err

    def test_wrong_type(self, tmp_path, capsys):
        p = self.write(tmp_path, '{"experiment": "saddle-games", "params": {"bilinear_steps": "many"}}')
        code, _, err = run(["run", str(p)], capsys)
        assert code == 2 and "'bilinear_steps'" in err

    def test_duplicate_key(self, tmp_path, capsys):
        p = self.write(tmp_path, '{"experiment": "saddle-games", "seed": 1, "seed": 2}')
        code, _, err = run(["run", str(p)], capsys)
        assert code == 2 and "duplicate" in err

    def test_invalid_json(self, tmp_path, capsys):
        p = self.write(tmp_path, '{"experiment": "saddle-games",\n')
        code, _, err = run(["run", str(p)], capsys)
        assert code == 2 and "line" in err

    @pytest.mark.parametrize("target", ["no-such-experiment", "missing.json"])
    def test_unknown_target(self, target, capsys):
        assert run(["run", target], capsys)[0] == 2

    def test_bad_override(self, tmp_path, capsys):
        code, _, err = run(["run", "saddle-games", "--out", str(tmp_path), "--override", "nonsense"], capsys)
        assert code == 2 and "key=value" in err

    def test_defaults_filled(self):
        cfg = cli.resolve({"experiment": "saddle-games"})
        assert cfg["seed"] == 0 and cfg["out"] == "runs/saddle-games-seed0"
        assert cfg["emit"] == cli.EMIT_DEFAULTS
        assert cfg["params"] == REGISTRY["saddle-games"].defaults

    def test_overrides(self):
        raw = cli.apply_overrides({"experiment": "gan-toy"},
                                  ["steps=10", "params.target=four-gaussians", "emit.figures=false", "seed=4"])
        cfg = cli.resolve(raw)
        assert cfg["params"]["steps"] == 10 and cfg["params"]["target"] == "four-gaussians"
        assert cfg["emit"]["figures"] is False and cfg["seed"] == 4

    def test_int_accepted_for_float(self):
        assert cli.resolve({"experiment": "saddle-games", "params": {"bilinear_lr": 1}})["params"]["bilinear_lr"] == 1.0

    def test_negative_seed(self):
        with pytest.raises(ConfigError):
            cli.resolve({"experiment": "saddle-games", "seed": -1})


@pytest.fixture(scope="module")
def saddle_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("saddle")
    code = cli.main(["run", "saddle-games", "--out", str(out)])
    return code, out


class TestRun:
    def test_saddle_verdicts(self, saddle_run):
        code, out = saddle_run
        v = json.loads((out / "verdicts.json").read_text())
        assert code == 0 and v["passed"]
        assert v["verdicts"]["bilinear_norm_increasing"]["passed"]
        assert v["verdicts"]["quadratic_residual"]["passed"]

    def test_manifest_covers_every_file(self, saddle_run):
        _, out = saddle_run
        on_disk = {p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file()} - {"manifest.json"}
        assert set(manifest_files(out)) == on_disk
        assert {"metrics.csv", "verdicts.json", "trace.csv", "config.json"} <= on_disk

    def test_figures_are_png(self, saddle_run):
        _, out = saddle_run
        pngs = list((out / "figures").glob("*.png"))
        assert pngs and all(p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for p in pngs)

    def test_rerun_identical(self, saddle_run, tmp_path):
        _, out = saddle_run
        assert cli.main(["run", "saddle-games", "--out", str(tmp_path)]) == 0
        assert manifest_files(tmp_path) == manifest_files(out)

    def test_emit_flags(self, tmp_path):
        cli.main(["run", "saddle-games", "--out", str(tmp_path), "--override", "emit.figures=false",
                  "--override", "emit.traces=false"])
        assert not (tmp_path / "figures").exists() and not (tmp_path / "trace.csv").exists()

    def test_divergence_exit_code(self, tmp_path, capsys):
        code, _, err = run(["run", "saddle-games", "--out", str(tmp_path), "--override", "bilinear_lr=10.0",
                            "--override", "bilinear_steps=2000"], capsys)
        assert code == 3
        assert str(tmp_path / "trace.csv") in err and (tmp_path / "trace.csv").exists()
        assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "diverged"

    def test_failing_verdict_exit_code(self, tmp_path):
        # 3 steps cannot reach the saddle
        assert cli.main(["run", "saddle-games", "--out", str(tmp_path), "--override", "quadratic_steps=3"]) == 1

    def test_budget_mismatch(self, tmp_path, capsys):
        code, _, err = run(["run", "pipeline-duel", "--out", str(tmp_path), "--override", "gan_steps=5"], capsys)
        assert code == 2 and "budget" in err

    def test_pm_seed_determinism(self, tmp_path):
        args = ["run", "pm-factorial-8", "--seed", "7", "--override", "steps=300", "--override", "gain_hold=200",
                "--override", "gain_ramp=50"]
        cli.main(args + ["--out", str(tmp_path / "a")])
        cli.main(args + ["--out", str(tmp_path / "b")])
        assert manifest_files(tmp_path / "a") == manifest_files(tmp_path / "b")

    def test_config_file_run(self, tmp_path):
        cfg = {"experiment": "gan-as-ac", "seed": 2, "out": str(tmp_path / "o"),
               "params": {"steps": 50}, "emit": {"figures": False}}
        (tmp_path / "c.json").write_text(json.dumps(cfg))
        assert cli.main(["run", str(tmp_path / "c.json")]) == 0
        assert json.loads((tmp_path / "o" / "config.json").read_text())["seed"] == 2
