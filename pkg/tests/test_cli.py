import os
import subprocess
import sys

import pytest

from l1net import cli
from l1net.config import Config, ConfigError, apply_overrides, load, parse_text


def run(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def pairs(line):
    return dict(item.split("=", 1) for item in line.split())


class TestConfig:
    def test_types_and_lines(self):
        cfg = parse_text("[data]\nd = 4\nn = 100 # comment\n\n[train]\ninit_fan_in = yes\n",
                         "c.ini")
        assert cfg.get("data", "d") == 4 and cfg.get("data", "n") == 100
        assert cfg.get("train", "init_fan_in") is True
        assert cfg.where("data", "n") == {"key": "data.n", "line": 3, "source": "c.ini"}

    def test_lists(self):
        cfg = parse_text("[experiment]\nns = 10, 20 40\nregimes = joint_l1,input_l0\n")
        assert cfg.get("experiment", "ns") == (10, 20, 40)
        assert cfg.get("experiment", "regimes") == ("joint_l1", "input_l0")

    @pytest.mark.parametrize("text, key, line", [
        ("[data]\nd = -1\n", "data.d", 2),
        ("[data]\n\nn = 1.5\n", "data.n", 3),
        ("[train]\nloss = L3\n", "train.loss", 2),
        ("[class]\nV = nan\n", "class.V", 2),
        ("[data]\nwidth = 3\n", "data.width", 2),
        ("[gpu]\non = 1\n", "gpu", 1),
    ])
    def test_errors_carry_key_and_line(self, text, key, line):
        with pytest.raises(ConfigError) as info:
            parse_text(text, "c.ini")
        assert info.value.key == key and info.value.line == line
        assert str(info.value).startswith(f"c.ini:{line}: {key}: ")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load(tmp_path / "absent.ini")

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[data]\nn = 100\n")
        cfg = apply_overrides(load(path), ["n=500"], "train")
        assert cfg.get("data", "n") == 500 and cfg.where("data", "n")["source"] == "--set"

    def test_bare_key_follows_command_order(self):
        cfg = apply_overrides(Config(), ["V=2", "eta=3"], "rademacher")
        assert cfg.get("rademacher", "V") == 2.0 and cfg.get("rademacher", "eta") == 3.0
        cfg = apply_overrides(Config(), ["V=2"], "train")
        assert cfg.get("class", "V") == 2.0

    @pytest.mark.parametrize("item", ["novalue", "=3", "bogus=1", "data.bogus=1", "data.d=x"])
    def test_bad_overrides(self, item):
        with pytest.raises(ConfigError):
            apply_overrides(Config(), [item], "train")


class TestCommands:
    def test_bounds_example(self, capsys, tmp_path):
        argv = ["bounds", "--out", str(tmp_path)]
        for s in ("C=1", "V=3", "d=4", "n=10000", "tau=1", "r=1000000", "delta=0"):
            argv += ["--set", s]
        code, out, _ = run(argv, capsys)
        assert code == 0
        values = pairs(out.strip())
        assert float(values["thm3"]) == pytest.approx(0.1931, abs=1e-4)
        assert float(values["thm4"]) == pytest.approx(0.06, abs=1e-12)
        assert not any(tmp_path.iterdir())

    def test_delta_eta(self, capsys):
        code, out, _ = run(["delta-eta", "--eta", "10", "--eta", "100"], capsys)
        assert code == 0
        lines = [pairs(x) for x in out.strip().splitlines()]
        assert float(lines[0]["delta"]) == pytest.approx(0.469, abs=1e-3)
        assert float(lines[1]["delta"]) == pytest.approx(0.098, abs=1e-3)

    def test_delta_eta_rejects_nonpositive(self, capsys):
        code, _, err = run(["delta-eta", "--eta", "0"], capsys)
        assert code == 2 and "--eta" in err

    def test_config_error_exit_code(self, capsys, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[data]\nd = 0\n")
        code, _, err = run(["train", "--config", str(path), "--out", str(tmp_path)], capsys)
        assert code == 2
        assert f"{path}:2: data.d" in err

    def test_train_then_eval(self, capsys, tmp_path):
        argv = ["train", "--out", str(tmp_path), "--set", "n=80", "--set", "max_iters=50",
                "--set", "restarts=1"]
        code, out, _ = run(argv, capsys)
        assert code == 0
        info = pairs(out.strip())
        assert {p.name for p in tmp_path.iterdir()} == {"data.csv", "train.csv", "params.txt"}
        code, out, _ = run(["eval-risk", "--out", str(tmp_path), "--set",
                            f"params={info['params']}", "--set", "m=2000"], capsys)
        assert code == 0 and "pop_risk=" in out

    def test_eval_requires_params(self, capsys, tmp_path):
        code, _, err = run(["eval-risk", "--out", str(tmp_path)], capsys)
        assert code == 2 and "eval.params" in err

    def test_runtime_failure_keeps_partial(self, capsys, tmp_path, monkeypatch):
        import math
        from dataclasses import replace
        from l1net.experiments import run_rate_study as real

        def broken(plan):
            result = real(plan)
            result.records[0] = replace(result.records[0], pop_risk=math.nan)
            return result

        monkeypatch.setattr(cli, "run_rate_study", broken)
        argv = ["rate-study", "--out", str(tmp_path)]
        for s in ("ns=30,60,120", "ds=2", "replicates=1", "max_iters=10", "eval_samples=100"):
            argv += ["--set", s]
        code, _, err = run(argv, capsys)
        assert code == 1 and "failed" in err
        assert (tmp_path / "rate_study.csv.partial").exists()
        assert not (tmp_path / "rate_study.csv").exists()

    def test_rademacher(self, capsys, tmp_path):
        argv = ["rademacher", "--out", str(tmp_path)]
        for s in ("ns=16,32,64", "trials=4", "iters=10", "restarts=2"):
            argv += ["--set", s]
        code, out, _ = run(argv, capsys)
        assert code == 0 and "slope=" in out
        assert (tmp_path / "rademacher.csv").read_text().startswith("n,mean,std_error,trials\n")

    def test_out_dir_from_environment(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
        monkeypatch.chdir(tmp_path)
        argv = ["rademacher", "--set", "ns=16", "--set", "trials=2", "--set", "iters=5"]
        assert run(argv, capsys)[0] == 0
        assert (tmp_path / "env" / "rademacher.csv").exists()
        assert sorted(p.name for p in tmp_path.iterdir()) == ["env"]

    def test_study_rerun_identical(self, capsys, tmp_path):
        blobs = []
        for run_dir in ("a", "b"):
            argv = ["overfit-study", "--out", str(tmp_path / run_dir), "--seed", "3"]
            for s in ("n=12", "replicates=1", "max_iters=30", "eval_samples=500"):
                argv += ["--set", s]
            assert run(argv, capsys)[0] == 0
            blobs.append((tmp_path / run_dir / "overfit_study.csv").read_bytes())
        assert blobs[0] == blobs[1]


class TestParser:
    def test_help_lists_commands_and_flags(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["--help"])
        assert info.value.code == 0
        text = capsys.readouterr().out
        for command in cli.COMMANDS:
            assert command in text
        with pytest.raises(SystemExit):
            cli.main(["rate-study", "--help"])
        text = capsys.readouterr().out
        for flag in ("--config", "--set", "--seed", "--out", "--parallel", "--verbose"):
            assert flag in text

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["--version"])
        assert info.value.code == 0
        assert capsys.readouterr().out.strip() == "l1net 0.1.0"

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "l1net", "delta-eta", "--eta", "10"],
                              capture_output=True, text=True, cwd=tmp_path,
                              env={**os.environ, cli.OUT_ENV: str(tmp_path / "o")})
        assert proc.returncode == 0 and "delta=0.468878" in proc.stdout
