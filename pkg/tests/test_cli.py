import csv
import json

import pytest

from multiface.cli import main
from multiface.core import read_groups


@pytest.fixture(scope="module")
def parsed(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--faces", "3", "--seed", "0", "--out", str(d / "scene")]) == 0
    assert main(["train-toy", "--scene", str(d / "scene"), "--out", str(d / "emb.fxt"),
                 "--trace", str(d / "trace.json")]) == 0
    assert main(["parse", "--heatmap", str(d / "scene" / "heatmap.fxt"),
                 "--embeddings", str(d / "emb.fxt"), "--out", str(d / "groups.json")]) == 0
    return d


class TestGradcheck:
    def test_default_passes(self, capsys):
        assert main(["gradcheck", "--trials", "10"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_zero_trials_is_usage_error(self):
        assert main(["gradcheck", "--trials", "0"]) == 2

    def test_corrupted_gradient_fails(self, capsys):
        assert main(["gradcheck", "--trials", "3", "--corrupt-gradient"]) == 1
        assert "FAIL" in capsys.readouterr().out


class TestPipelineCommands:
    def test_synth_deterministic(self, tmp_path):
        for name in ("a", "b"):
            assert main(["synth", "--faces", "2", "--seed", "5", "--out", str(tmp_path / name)]) == 0
        for f in ("heatmap.fxt", "mask.fxt", "annotation.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_after_or_before_subcommand(self, tmp_path):
        main(["--seed", "3", "synth", "--out", str(tmp_path / "a")])
        main(["synth", "--out", str(tmp_path / "b"), "--seed", "3"])
        assert ((tmp_path / "a" / "heatmap.fxt").read_bytes()
                == (tmp_path / "b" / "heatmap.fxt").read_bytes())

    def test_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FOX_SEED", "9")
        main(["synth", "--out", str(tmp_path / "a")])
        main(["synth", "--seed", "9", "--out", str(tmp_path / "b")])
        assert ((tmp_path / "a" / "annotation.json").read_bytes()
                == (tmp_path / "b" / "annotation.json").read_bytes())
        monkeypatch.setenv("FOX_SEED", "nope")
        assert main(["synth", "--out", str(tmp_path / "c")]) == 2

    def test_parse_three_faces(self, parsed):
        groups = read_groups(parsed / "groups.json")
        assert len(groups) == 3 and all(len(g.landmarks) == 5 for g in groups)
        trace = json.loads((parsed / "trace.json").read_text())
        assert len(trace) == 501

    def test_eval_perfect(self, parsed, capsys):
        out = parsed / "report.json"
        assert main(["eval", "--pred", str(parsed / "groups.json"),
                     "--gt", str(parsed / "scene" / "annotation.json"), "--out", str(out)]) == 0
        r = json.loads(out.read_text())
        assert r["nme_percent"] == 0.0 and r["f1"] == 1.0

    def test_missing_input_is_runtime_error(self, tmp_path, capsys):
        code = main(["parse", "--heatmap", str(tmp_path / "none.fxt"),
                     "--embeddings", str(tmp_path / "none.fxt"), "--out", str(tmp_path / "g")])
        assert code == 1
        assert "none.fxt" in capsys.readouterr().err

    def test_overcrowded_scene_is_runtime_error(self, tmp_path):
        assert main(["synth", "--faces", "50", "--height", "32", "--width", "32",
                     "--out", str(tmp_path / "s")]) == 1


class TestConfig:
    def test_print_config(self, capsys):
        assert main(["parse", "--heatmap", "h", "--embeddings", "e", "--out", "o",
                     "--delta-v", "0.7", "--print-config"]) == 0
        cfg = json.loads(capsys.readouterr().out)
        assert cfg["cluster"]["bandwidth"] == 0.7
        assert cfg["loss"]["gamma"] == 0.001

    def test_invalid_value_is_usage_error(self):
        assert main(["parse", "--heatmap", "h", "--embeddings", "e", "--out", "o",
                     "--threshold", "2"]) == 2

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--bogus"])
        assert exc.value.code == 2


class TestBench:
    def test_csv(self, tmp_path, capsys):
        out = tmp_path / "b.csv"
        assert main(["bench", "--faces", "1,2", "--repeats", "3", "--height", "64",
                     "--width", "64", "--steps", "50", "--out", str(out),
                     "--json", str(tmp_path / "b.json")]) == 0
        rows = list(csv.reader(open(out)))
        assert rows[0] == ["n_faces", "forward_ms", "nms_ms", "cluster_ms", "total_ms"]
        assert len(rows) == 3
        assert "ms/face" in capsys.readouterr().out

    def test_repeats_too_small(self):
        assert main(["bench", "--repeats", "2"]) == 2
