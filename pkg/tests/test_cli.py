import json

import numpy as np
import pytest

from tdid.augment import save_image
from tdid.backend import write_embedding_file
from tdid.cli import main
from tdid.enrollment import load_store

MOCK_FLAGS = ["--backend", "mock", "--mock-classes", "4", "--dim", "16", "--seed", "7"]


def render_pngs(backend, tmp_path, specs):
    paths = []
    for name, cls, inst in specs:
        path = tmp_path / name
        save_image(backend.render(cls, inst), path)
        paths.append(str(path))
    return paths


@pytest.mark.parametrize("cmd", ["enroll", "detect", "stats", "build-transform",
                                 "eval", "export-embeddings"])
def test_help_exits_zero(cmd, capsys):
    assert main([cmd, "--help"]) == 0
    assert "--" in capsys.readouterr().out


def test_usage_error_exits_two():
    assert main(["enroll", "--label", "mug"]) == 2


class TestEnroll:
    def test_two_images_augmented_adds_eight(self, tmp_path, clean_backend):
        imgs = render_pngs(clean_backend, tmp_path,
                           [("a.png", 1, 0), ("b.png", 1, 1)])
        store_path = tmp_path / "store.json"
        rc = main(["enroll", "--store", str(store_path), "--label", "mug",
                   *imgs, "--augment", "--fixed-clock", *MOCK_FLAGS])
        assert rc == 0
        store = load_store(store_path)
        assert len(store.get("mug").raw) == 8

    def test_margin_echoed_in_log(self, tmp_path, clean_backend, capsys):
        imgs = render_pngs(clean_backend, tmp_path, [("a.png", 0, 0)])
        rc = main(["enroll", "--store", str(tmp_path / "s.json"), "--label", "x",
                   *imgs, *MOCK_FLAGS])
        assert rc == 0
        assert "margin=15" in capsys.readouterr().err

    def test_blank_image_exits_five(self, tmp_path):
        blank = np.full((48, 48, 3), 128, dtype=np.uint8)
        path = tmp_path / "blank.png"
        save_image(blank, path)
        rc = main(["enroll", "--store", str(tmp_path / "s.json"), "--label", "x",
                   str(path), *MOCK_FLAGS])
        assert rc == 5


class TestDetect:
    def _enrolled_store(self, tmp_path, backend):
        imgs = render_pngs(backend, tmp_path, [("t0.png", 0, 0), ("t1.png", 1, 0)])
        store = tmp_path / "store.json"
        assert main(["enroll", "--store", str(store), "--label", "cup",
                     imgs[0], *MOCK_FLAGS]) == 0
        assert main(["enroll", "--store", str(store), "--label", "can",
                     imgs[1], *MOCK_FLAGS]) == 0
        return store

    def test_predicts_enrolled_label(self, tmp_path, clean_backend, capsys):
        store = self._enrolled_store(tmp_path, clean_backend)
        query = render_pngs(clean_backend, tmp_path, [("q.png", 1, 50)])[0]
        assert main(["detect", "--store", str(store), query, *MOCK_FLAGS]) == 0
        records = json.loads(capsys.readouterr().out)
        assert records[0]["predicted"] == "can"

    def test_min_confidence_filters_scores(self, tmp_path, clean_backend, capsys):
        store = self._enrolled_store(tmp_path, clean_backend)
        query = render_pngs(clean_backend, tmp_path, [("q.png", 0, 50)])[0]
        assert main(["detect", "--store", str(store), query,
                     "--min-confidence", "0.9", *MOCK_FLAGS]) == 0
        records = json.loads(capsys.readouterr().out)
        # the wrong-class prototype scores 0.5 and is filtered
        assert list(records[0]["scores"]) == ["cup"]

    def test_empty_store_exits_three(self, tmp_path, clean_backend):
        store = tmp_path / "empty.json"
        store.write_text(json.dumps(
            {"version": 1, "dim": 16, "adapter_digest": None, "objects": []}
        ))
        query = render_pngs(clean_backend, tmp_path, [("q.png", 0, 0)])[0]
        assert main(["detect", "--store", str(store), query, *MOCK_FLAGS]) == 3


class TestStatsAndTransform:
    def test_stats_matches_hand_computation(self, tmp_path, capsys):
        emb = tmp_path / "toy.emb"
        write_embedding_file(emb, np.array([[1, 0], [0, 1]], dtype=np.float32))
        out = tmp_path / "stats.json"
        assert main(["stats", "--input", str(emb), "--output", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["mean"] == pytest.approx([0.5, 0.5])
        assert doc["cov"][0] == pytest.approx([0.5, -0.5])

    def test_epsilon_default_echoed(self, tmp_path, capsys, rng):
        emb = tmp_path / "c.emb"
        write_embedding_file(emb, rng.standard_normal((10, 3)).astype(np.float32))
        stats = tmp_path / "s.json"
        main(["stats", "--input", str(emb), "--output", str(stats)])
        out = tmp_path / "t.json"
        assert main(["build-transform", "--image-stats", str(stats),
                     "--text-stats", str(stats), "--output", str(out)]) == 0
        assert "epsilon=1e-05" in capsys.readouterr().err

    def test_dim_mismatch_exits_three(self, tmp_path, rng):
        a, b = tmp_path / "a.emb", tmp_path / "b.emb"
        write_embedding_file(a, rng.standard_normal((8, 3)).astype(np.float32))
        write_embedding_file(b, rng.standard_normal((8, 4)).astype(np.float32))
        sa, sb = tmp_path / "sa.json", tmp_path / "sb.json"
        main(["stats", "--input", str(a), "--output", str(sa)])
        main(["stats", "--input", str(b), "--output", str(sb)])
        assert main(["build-transform", "--image-stats", str(sa),
                     "--text-stats", str(sb), "--output", str(tmp_path / "t.json")]) == 3

    def test_bad_emb1_exits_three(self, tmp_path):
        bad = tmp_path / "bad.emb"
        bad.write_bytes(b"JUNKJUNKJUNKJUNK")
        assert main(["stats", "--input", str(bad),
                     "--output", str(tmp_path / "s.json")]) == 3


class TestEval:
    EVAL_FLAGS = ["--backend", "mock", "--mock-classes", "6", "--dim", "16",
                  "--classes", "2,4", "--shots", "1", "--repeats", "2",
                  "--sizes", "m,l", "--aug-modes", "1", "--adapter-modes", "0",
                  "--seed", "42", "--test-per-class", "3"]

    def test_deterministic_reports(self, tmp_path, capsys):
        outs = []
        for name in ("r1", "r2"):
            rd = tmp_path / name
            assert main(["eval", *self.EVAL_FLAGS, "--report-dir", str(rd)]) == 0
            outs.append((rd / "report.csv").read_bytes()
                        + (rd / "report.json").read_bytes())
        assert outs[0] == outs[1]
        table = capsys.readouterr().out
        assert "%" in table

    def test_adapter_flag_runs_and_marks_column(self, tmp_path):
        rd = tmp_path / "r"
        flags = list(self.EVAL_FLAGS)
        flags[flags.index("--adapter-modes") + 1] = "1"
        assert main(["eval", *flags, "--report-dir", str(rd)]) == 0
        rows = (rd / "report.csv").read_text().splitlines()
        assert rows[0] == "size,c,k,aug,adapter,mean,std,n"
        assert all(row.split(",")[4] == "1" for row in rows[1:])


class TestExportEmbeddings:
    def test_export(self, tmp_path, clean_backend):
        imgs = render_pngs(clean_backend, tmp_path, [("a.png", 0, 0)])
        store = tmp_path / "s.json"
        main(["enroll", "--store", str(store), "--label", "x", *imgs, *MOCK_FLAGS])
        out = tmp_path / "out.emb"
        assert main(["export-embeddings", "--store", str(store),
                     "--output", str(out)]) == 0
        assert out.exists()
        labels = json.loads((tmp_path / "out.emb.labels.json").read_text())
        assert labels["labels"] == ["x"] * 4


class TestConfigFile:
    def test_config_defaults_and_flag_override(self, tmp_path, clean_backend, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"margin": 10.0}))
        imgs = render_pngs(clean_backend, tmp_path, [("a.png", 0, 0)])
        main(["--config", str(cfg), "enroll", "--store", str(tmp_path / "s1.json"),
              "--label", "x", *imgs, *MOCK_FLAGS])
        assert "margin=10" in capsys.readouterr().err
        main(["--config", str(cfg), "enroll", "--store", str(tmp_path / "s2.json"),
              "--label", "x", *imgs, "--margin", "5", *MOCK_FLAGS])
        assert "margin=5" in capsys.readouterr().err

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"not_a_flag": 1}))
        assert main(["--config", str(cfg), "stats", "--input", "x",
                     "--output", "y"]) == 2
