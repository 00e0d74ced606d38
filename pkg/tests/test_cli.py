import json

import numpy as np
import pytest

from sdpm.cli import run
from sdpm.config import RESOLVED_NAME, RunConfig, parse_config, parse_overrides
from sdpm.errors import ConfigError

FAST = ["--set", "ade.pop_size=4", "--set", "ade.max_generations=1", "--set", "model.epochs=4"]


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 120
    y = np.zeros(n, int)
    y[:24] = 1
    rng.shuffle(y)
    X = rng.normal(size=(n, 4)) * [40, 3, 1, 2] + [200, 5, 2, 4] + np.outer(y, [120, 6, 1.5, 3])
    path = tmp_path / "metrics.csv"
    lines = ["loc,cyclomatic_complexity,dit,cbo,defect"]
    lines += [",".join(f"{v:.3f}" for v in row) + f",{lab}" for row, lab in zip(X, y)]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        p = tmp_path / "empty.cfg"
        p.write_text("")
        cfg = parse_config(p)
        assert cfg == RunConfig() and cfg.seed == 0

    def test_no_file_gives_defaults(self):
        assert parse_config(None).seed == 0

    def test_sections_and_top_level_keys(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(
            "seed = 7  # top level\n"
            "[data]\npath = d.csv\nfeatures = a, b\nlabel = bug\n"
            "[ade]\npop_size = 10\n"
            "[model]\nepochs = 5\nlearning_rate = 0.05\n"
            "[space]\nlearning_rate = log 1e-3 0.5\nn_layers = linear 1 4 int\n"
            "[anra]\ndedup = false\n"
            "[sweep]\nmodels = ADE-QVAET, QVAET, LogReg\n"
        )
        cfg = parse_config(p)
        assert cfg.seed == 7 and cfg.ade.seed == 7 and cfg.anra.seed == 7
        assert cfg.data_path == str(tmp_path / "d.csv")
        assert cfg.schema.feature_names == ("a", "b") and cfg.schema.label_name == "bug"
        assert cfg.ade.pop_size == 10 and cfg.hyper.epochs == 5 and cfg.hyper.learning_rate == 0.05
        assert cfg.space.names == ("learning_rate", "n_layers")
        assert cfg.space.dims[1].kind == "integer" and cfg.space.dims[1].upper == 4
        assert cfg.anra.dedup is False
        assert cfg.models == ("ADE-QVAET", "QVAET", "LogReg")

    def test_override_wins(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("[ade]\npop_size = 10\n")
        cfg = parse_config(p, parse_overrides(["ade.pop_size=30"]))
        assert cfg.ade.pop_size == 30

    def test_unknown_key_named(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("[ade]\npop_sze = 10\n")
        with pytest.raises(ConfigError, match="pop_sze"):
            parse_config(p)

    @pytest.mark.parametrize("text,needle", [
        ("[ade]\npop_size = ten\n", "pop_size"),
        ("[nonsense]\na = 1\n", "nonsense"),
        ("[ade]\npop_size = 2\n", "pop_size"),
        ("[space]\nlearning_rate = cubic 1 2\n", "learning_rate"),
        ("[space]\nwidth = linear 1 2\n", "width"),
        ("[run]\nreport_format = xml\n", "report_format"),
        ("[run]\ntps = 40, 100\n", "training percentages"),
        ("[sweep]\nmodels = SVM\n", "models"),
        ("[model]\nlatent_dim = 7\n", "latent_dim"),
        ("[ade]\nseed = 3\n", "seed"),
    ])
    def test_invalid(self, tmp_path, text, needle):
        p = tmp_path / "bad.cfg"
        p.write_text(text)
        with pytest.raises(ConfigError, match=needle):
            parse_config(p)

    def test_resolved_roundtrip(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("seed = 3\n[model]\nepochs = 9\n[space]\nl2_reg = log 1e-5 1e-2\n")
        cfg = parse_config(p)
        path = cfg.write_resolved(tmp_path / "o")
        assert parse_config(path) == cfg

    def test_bad_override_syntax(self):
        with pytest.raises(ConfigError):
            parse_overrides(["ade.pop_size"])


class TestCli:
    def test_missing_data_exit_2(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        assert run(["preprocess", "--data", str(missing), "--out", str(tmp_path / "o")]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_usage_errors_exit_1(self, tmp_path):
        assert run([]) == 1
        assert run(["frobnicate"]) == 1
        assert run(["sweep", "--tp", "x"]) == 1
        assert run(["evaluate", "--out", str(tmp_path)]) == 1  # no --model-in

    def test_unknown_config_key_exit_1(self, tmp_path, capsys):
        p = tmp_path / "run.cfg"
        p.write_text("[ade]\npop_sze = 3\n")
        assert run(["sweep", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
        assert "pop_sze" in capsys.readouterr().err

    def test_bad_data_exit_2(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("loc,cyclomatic_complexity,dit,cbo,defect\n1,2,3,4,7\n")
        assert run(["preprocess", "--data", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_divergence_exit_3(self, tmp_path, data_csv):
        code = run(["train", "--data", str(data_csv), "--out", str(tmp_path / "o"),
                    "--set", "model.learning_rate=1e9", "--set", "model.epochs=3"])
        assert code == 3

    def test_preprocess(self, tmp_path, data_csv):
        out = tmp_path / "o"
        before = data_csv.read_bytes()
        assert run(["preprocess", "--data", str(data_csv), "--out", str(out), "--seed", "4"]) == 0
        prov = json.loads((out / "provenance.json").read_text())
        assert prov["seed"] == 4 and prov["synthetic_added"] == 72
        assert (out / "preprocessed.csv").read_text().splitlines()[0].endswith("defect,origin")
        assert "seed = 4" in (out / RESOLVED_NAME).read_text()
        assert (out / "seed.txt").read_text() == "4\n"
        assert data_csv.read_bytes() == before

    def test_tune_train_evaluate(self, tmp_path, data_csv):
        out = tmp_path / "o"
        args = ["--data", str(data_csv), "--out", str(out)]
        assert run(["tune", *args, *FAST]) == 0
        tuned = json.loads((out / "tuned.json").read_text())
        assert set(tuned["hyperparameters"]) == {"learning_rate", "l2_reg", "n_layers"}
        assert (out / "ade_history.csv").read_text().startswith("generation,best_fitness")
        ckpt = tmp_path / "m" / "model.ckpt"
        assert run(["train", *args, "--tuned", str(out / "tuned.json"), "--model-out", str(ckpt),
                    "--set", "model.epochs=4"]) == 0
        trained = json.loads((out / "train_metrics.json").read_text())
        assert trained["hyperparameters"]["learning_rate"] == tuned["hyperparameters"]["learning_rate"]
        eval_out = tmp_path / "e"
        assert run(["evaluate", "--data", str(data_csv), "--out", str(eval_out), "--model-in", str(ckpt)]) == 0
        evaluated = json.loads((eval_out / "metrics.json").read_text())
        assert evaluated["metrics"] == trained["metrics"]

    def test_sweep_deterministic_and_report(self, tmp_path, data_csv, capsys):
        args = ["sweep", "--data", str(data_csv), "--seed", "7", "--tp", "50", "--tp", "80", *FAST]
        assert run([*args, "--out", str(tmp_path / "a")]) == 0
        assert run([*args, "--out", str(tmp_path / "b"), "--format", "md"]) == 0
        a = (tmp_path / "a" / "report.csv").read_bytes()
        assert a == (tmp_path / "b" / "report.csv").read_bytes()
        assert len(a.decode().splitlines()) == 1 + 2 * 2
        md = (tmp_path / "b" / "report.md").read_text()
        assert md.splitlines()[0] == "| tp | model | accuracy | precision | recall | f1 |"
        capsys.readouterr()
        assert run(["report", "--out", str(tmp_path / "a"), "--format", "json"]) == 0
        rows = json.loads(capsys.readouterr().out)["rows"]
        assert [r["tp"] for r in rows] == [50, 50, 80, 80]

    def test_report_missing_source(self, tmp_path):
        assert run(["report", "--out", str(tmp_path), "--format", "md"]) == 2

    def test_config_file_drives_sweep(self, tmp_path, data_csv):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"seed = 2\ntps = 60\n[data]\npath = {data_csv.name}\n"
                       "[ade]\npop_size = 4\nmax_generations = 1\n[model]\nepochs = 3\n"
                       "[sweep]\nmodels = QVAET, LogReg\n")
        out = tmp_path / "o"
        assert run(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert [line.split(",")[1] for line in lines[1:]] == ["QVAET", "LogReg"]
