import csv
import json

import numpy as np
import pytest

from mical import cli
from mical.edf import parse_edf, parse_summary, read_edf
from mical.evaluation import SynthSpec, generate_synthetic

CONFIG = "mi_steps = 10\nmi_warm_start = yes\nmi_warm_steps = 3\nepochs = 2  # quick\n"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "fast.cfg"
    cfg.write_text(CONFIG)
    raw, prep = root / "raw", root / "prep"
    assert cli.main(["synth", "--out", str(raw), "--patients", "2", "--duration", "300",
                     "--num-channels", "2", "--seed", "3"]) == 0
    assert cli.main(["preprocess", "--config", str(cfg), "--data", str(raw), "--out", str(prep)]) == 0
    return {"root": root, "cfg": str(cfg), "raw": raw, "prep": prep}


class TestConfig:
    def test_defaults_match_reference_settings(self):
        cfg = cli.RunConfig()
        assert cfg.threshold == 0.5
        assert (cfg.p11, cfg.p10) == (0.8954, 0.1790)
        assert cfg.mi_tau == 0.9

    def test_file_then_flags(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("threshold = 0.7\nchannels = A, B ,C\nmi = no\neval_folds = 0,2\nseed = 4\n")
        args = cli.build_parser().parse_args(["eval", "--config", str(path), "--seed", "9"])
        cfg = cli._resolve(args)
        assert cfg.threshold == 0.7 and cfg.seed == 9
        assert cfg.channels == ("A", "B", "C")
        assert cfg.mi is False and cfg.eval_folds == (0, 2)

    def test_transition_flag(self):
        args = cli.build_parser().parse_args(["run", "--transition", "0.9", "0.05"])
        cfg = cli._resolve(args)
        assert (cfg.p11, cfg.p10) == (0.9, 0.05)

    @pytest.mark.parametrize("text,match", [
        ("bogus = 1\n", "unknown config key"),
        ("mi = maybe\n", "cannot parse"),
        ("epochs = 2.5\n", "cannot parse"),
    ])
    def test_bad_file(self, tmp_path, text, match):
        path = tmp_path / "c.cfg"
        path.write_text(text)
        with pytest.raises(cli.CliError, match=match):
            cli.load_config(path)

    @pytest.mark.parametrize("kwargs", [dict(threshold=1.0), dict(threshold=0.0), dict(variant="gru"),
                                        dict(p11=1.2), dict(jobs=0), dict(seed=-1)])
    def test_invalid_values(self, kwargs):
        with pytest.raises(cli.CliError):
            cli.RunConfig(**kwargs)

    def test_stage_seeds(self):
        assert cli.stage_seed(0, "mi") == cli.stage_seed(0, "mi")
        seeds = {cli.stage_seed(s, st) for s in (0, 1) for st in ("mi", "cnn", "folds", "synth")}
        assert len(seeds) == 8
        assert all(0 <= s < 2**32 for s in seeds)


class TestSynth:
    def test_layout_and_round_trip(self, workspace):
        raw = workspace["raw"]
        manifest = json.loads((raw / "manifest.json").read_text())
        entry = manifest["patients"][0]
        data = (raw / entry["edf"]).read_bytes()
        rec = parse_edf(data)
        assert rec.channels == ["CH1", "CH2"] and rec.fs == 256.0
        original = generate_synthetic(SynthSpec(num_channels=2, duration_s=300, seed=entry["seed"]))
        edf = read_edf(data)
        for spec, a, b in zip(edf.signals, original.samples, rec.samples):
            assert np.max(np.abs(a - b)) <= spec.gain / 2 * (1 + 1e-9)
        summary = parse_summary((raw / "synth01" / "synth01-summary.txt").read_text())
        assert [[a.start_s, a.end_s] for a in summary[0][1]] == entry["seizures"]

    def test_same_seed_identical_files(self, workspace, tmp_path):
        args = ["synth", "--out", str(tmp_path), "--patients", "2", "--duration", "300",
                "--num-channels", "2", "--seed", "3"]
        assert cli.main(args) == 0
        for name in ("manifest.json", "synth01/synth01_01.edf", "synth02/synth02-summary.txt"):
            if name == "manifest.json":
                a = json.loads((tmp_path / name).read_text())
                b = json.loads((workspace["raw"] / name).read_text())
                a["config"].pop("out"), b["config"].pop("out")
                assert a == b
            else:
                assert (tmp_path / name).read_bytes() == (workspace["raw"] / name).read_bytes()

    def test_different_seed_differs(self, workspace, tmp_path):
        cli.main(["synth", "--out", str(tmp_path), "--patients", "1", "--duration", "300",
                  "--num-channels", "2", "--seed", "4"])
        assert (tmp_path / "synth01/synth01_01.edf").read_bytes() != \
            (workspace["raw"] / "synth01/synth01_01.edf").read_bytes()


class TestPreprocess:
    def test_manifest(self, workspace):
        manifest = json.loads((workspace["prep"] / "manifest.json").read_text())
        assert manifest["channels"] == ["CH1", "CH2"]
        assert [r["patient"] for r in manifest["records"]] == ["synth01", "synth02"]
        for r in manifest["records"]:
            assert r["seizure_blocks"] > 0
            assert (workspace["prep"] / r["windows"]).is_file()
        rows = list(csv.reader(open(workspace["prep"] / "synth01" / "synth01_01_mi.csv")))
        assert rows[0] == ["block_second", "i", "j", "mi_nats"]

    def test_rerun_byte_identical(self, workspace, tmp_path):
        out = tmp_path / "again"
        assert cli.main(["preprocess", "--config", workspace["cfg"], "--data", str(workspace["raw"]),
                         "--out", str(out)]) == 0
        a = json.loads((out / "manifest.json").read_text())
        b = json.loads((workspace["prep"] / "manifest.json").read_text())
        a["config"].pop("out"), b["config"].pop("out")
        assert a == b
        np.testing.assert_array_equal(np.load(out / "synth02/synth02_01.npz")["mi"],
                                      np.load(workspace["prep"] / "synth02/synth02_01.npz")["mi"])

    def test_seizure_free_records_skipped(self, workspace, tmp_path):
        raw = tmp_path / "raw"
        (raw / "p1").mkdir(parents=True)
        src = workspace["raw"] / "synth01"
        (raw / "p1" / "a.edf").write_bytes((src / "synth01_01.edf").read_bytes())
        (raw / "p1" / "b.edf").write_bytes((src / "synth01_01.edf").read_bytes())
        seizures = (src / "synth01-summary.txt").read_text().replace("synth01_01.edf", "a.edf")
        (raw / "p1" / "p1-summary.txt").write_text(
            seizures + "\nFile Name: b.edf\nNumber of Seizures in File: 0\n")
        out = tmp_path / "prep"
        assert cli.main(["preprocess", "--no-mi", "--data", str(raw), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert [r["source"] for r in manifest["records"]] == ["p1/a.edf"]

    def test_empty_directory(self, tmp_path, capsys):
        assert cli.main(["preprocess", "--data", str(tmp_path), "--out", str(tmp_path / "o")]) == 2
        assert "0 file(s) found" in capsys.readouterr().err

    def test_missing_edf(self, tmp_path, capsys):
        (tmp_path / "p").mkdir()
        (tmp_path / "p" / "p-summary.txt").write_text(
            "File Name: gone.edf\nSeizure Start Time: 1 seconds\nSeizure End Time: 2 seconds\n")
        assert cli.main(["preprocess", "--data", str(tmp_path), "--out", str(tmp_path / "o")]) == 2
        assert "missing" in capsys.readouterr().err

    def test_missing_channel(self, workspace, tmp_path, capsys):
        assert cli.main(["preprocess", "--data", str(workspace["raw"]), "--channels", "CH1,CH9",
                         "--no-mi", "--out", str(tmp_path)]) == 2
        assert "CH9" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(workspace):
    out = workspace["root"] / "model"
    assert cli.main(["train", "--config", workspace["cfg"], "--data", str(workspace["prep"]),
                     "--out", str(out)]) == 0
    return out / "model.micl"


class TestTrainRun:
    def _rows(self, out):
        rows = []
        for path in sorted(out.glob("*/*_detections.csv")):
            rows += list(csv.DictReader(open(path)))
        return rows

    @pytest.mark.parametrize("threshold", [0.5, 0.3])
    def test_detection_matches_threshold(self, workspace, trained, tmp_path, threshold):
        assert cli.main(["run", "--config", workspace["cfg"], "--data", str(workspace["prep"]),
                         "--model", str(trained), "--threshold", str(threshold), "--out", str(tmp_path)]) == 0
        rows = self._rows(tmp_path)
        assert rows
        for row in rows:
            assert int(row["detected"]) == int(float(row["p_marginal"]) > threshold)
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        assert 0.0 <= metrics["overall"]["auc_roc"] <= 1.0

    def test_cnn_variant_skips_chain(self, workspace, tmp_path):
        assert cli.main(["run", "--config", workspace["cfg"], "--data", str(workspace["prep"]),
                         "--variant", "cnn", "--train", "--out", str(tmp_path)]) == 0
        for row in self._rows(tmp_path):
            assert row["p_raw"] == row["p_marginal"]

    def test_variant_checkpoint_mismatch(self, workspace, trained, tmp_path, capsys):
        assert cli.main(["run", "--data", str(workspace["prep"]), "--model", str(trained),
                         "--variant", "cnn", "--out", str(tmp_path)]) == 2
        assert "incompatible" in capsys.readouterr().err

    def test_missing_checkpoint(self, workspace, tmp_path, capsys):
        assert cli.main(["run", "--data", str(workspace["prep"]), "--out", str(tmp_path)]) == 2
        assert "no checkpoint" in capsys.readouterr().err
        assert cli.main(["run", "--data", str(workspace["prep"]), "--model", str(tmp_path / "nope.micl"),
                         "--out", str(tmp_path)]) == 2

    def test_run_deterministic(self, workspace, trained, tmp_path):
        outs = []
        for k in range(2):
            out = tmp_path / str(k)
            cli.main(["run", "--config", workspace["cfg"], "--data", str(workspace["prep"]),
                      "--model", str(trained), "--out", str(out)])
            outs.append(out)
        for a, b in zip(sorted(outs[0].glob("*/*.csv")), sorted(outs[1].glob("*/*.csv"))):
            assert a.read_bytes() == b.read_bytes()


class TestEval:
    def test_dataset_report(self, workspace, tmp_path, capsys):
        assert cli.main(["eval", "--config", workspace["cfg"], "--data", str(workspace["prep"]),
                         "--folds", "2", "--holdout", "1", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert set(report) == {"cnn", "cnn-fg", "cnn-smile", "mical", "_reference"}
        assert report["_reference"]["mical"]["auc_roc"] == 83.8
        assert len(report["mical"]["auc_roc"]["per_fold"]) == 2
        assert "mical" in capsys.readouterr().out

    def test_indivisible_folds(self, workspace, tmp_path, capsys):
        assert cli.main(["eval", "--data", str(workspace["prep"]), "--out", str(tmp_path)]) == 2
        assert "cannot form" in capsys.readouterr().err

    def test_without_mi_only_plain_variants(self, workspace, tmp_path):
        prep = tmp_path / "prep"
        cli.main(["preprocess", "--no-mi", "--data", str(workspace["raw"]), "--out", str(prep)])
        assert cli.main(["eval", "--config", workspace["cfg"], "--data", str(prep), "--folds", "2",
                         "--holdout", "1", "--eval-folds", "0", "--out", str(tmp_path / "e")]) == 0
        report = json.loads((tmp_path / "e" / "report.json").read_text())
        assert {"cnn", "cnn-fg"} <= set(report) and "mical" not in report
