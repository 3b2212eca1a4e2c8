import json

import numpy as np
import pytest

from episcore import read_episodes, read_pairs, write_pairs, write_segments
from episcore.cli import main
from episcore.episodes import Segment, SegmentManifest, write_features

from conftest import make_pair
from test_evaluation import REFERENCE_COUNTS


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def synth_manifest(tmp_path):
    out_dir = tmp_path / "synth"
    assert run("synth", "--n", 12, "--out", "pairs.jsonl", "--out-dir", out_dir, "--seed", 3) == 0
    return out_dir / "pairs.jsonl"


class TestSynthCommand:
    def test_writes_manifest_and_run_manifest(self, synth_manifest):
        assert synth_manifest.exists()
        assert len(read_pairs(synth_manifest)) == 12
        manifest = json.loads((synth_manifest.parent / "run-manifest.json").read_text())
        assert manifest["subcommand"] == "synth"
        assert manifest["config"]["seed"] == 3
        assert "numpy" in manifest["versions"]

    def test_rerun_is_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert run("synth", "--n", 6, "--out", "p.jsonl", "--out-dir", tmp_path / name, "--seed", 1) == 0
        assert (tmp_path / "a" / "p.jsonl").read_bytes() == (tmp_path / "b" / "p.jsonl").read_bytes()

    def test_seed_env_var_used_when_flag_absent(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EPISCORE_SEED", "7")
        assert run("synth", "--n", 4, "--out", "p.jsonl", "--out-dir", tmp_path) == 0
        manifest = json.loads((tmp_path / "run-manifest.json").read_text())
        assert manifest["config"]["seed"] == 7

    def test_pipeline_synth_alias(self, tmp_path):
        assert run("pipeline", "synth", "--n", 4, "--out", "p.jsonl", "--out-dir", tmp_path) == 0
        assert len(read_pairs(tmp_path / "p.jsonl")) == 4


class TestPipelineCommands:
    def test_group_filter_stratify_flow(self, tmp_path):
        feat = tmp_path / "seg.f32"
        write_features(feat, np.full((3, 8), 0.5, dtype=np.float32))
        segments = SegmentManifest(
            [
                Segment("a", 0.0, 10.0, "well yeah", str(feat)),
                Segment("b", 10.0, 20.0, "okay right", str(feat)),
                Segment("a", 20.0, 30.0, "so um", str(feat)),
                Segment("b", 30.0, 40.0, "sure thing", str(feat)),
            ]
        )
        seg_path = tmp_path / "segments.jsonl"
        write_segments(segments, seg_path)
        assert run("pipeline", "group", "--manifest", seg_path, "--out", "episodes.jsonl", "--out-dir", tmp_path) == 0
        episodes = read_episodes(tmp_path / "episodes.jsonl")
        assert len(episodes) == 1 and episodes[0].n_turns == 4

        assert (
            run(
                "pipeline", "filter",
                "--in", tmp_path / "episodes.jsonl",
                "--out", "kept.jsonl",
                "--rejects", "rejects.jsonl",
                "--out-dir", tmp_path,
            )
            == 0
        )
        assert len(read_episodes(tmp_path / "kept.jsonl")) == 1
        assert (tmp_path / "rejects.jsonl").read_text() == ""

    def test_stratify_command(self, tmp_path):
        pairs = [
            make_pair(f"p{i:03d}", split="val", metadata={"primary_dimension": "x", "secondary_dimension": "laughter"})
            for i in range(80)
        ]
        src = tmp_path / "val.jsonl"
        write_pairs(pairs, src)
        assert (
            run("pipeline", "stratify", "--in", src, "--cap", 50, "--seed", 4, "--out", "bench.jsonl", "--out-dir", tmp_path)
            == 0
        )
        bench = read_pairs(tmp_path / "bench.jsonl")
        assert len(bench) == 50
        assert all(p.split == "bench" for p in bench)


class TestTrainScoreEval:
    def test_full_cycle(self, tmp_path):
        train_dir = tmp_path / "run"
        assert run("synth", "--n", 64, "--out", "train.jsonl", "--out-dir", tmp_path, "--seed", 0) == 0
        assert run("synth", "--n", 24, "--out", "val.jsonl", "--out-dir", tmp_path, "--seed", 1, "--split", "val") == 0
        cfg = tmp_path / "train.cfg"
        cfg.write_text("d_in = 8\nd = 8\nhead_hidden = 8\ntotal_steps = 40\neval_every = 20\nbatch_size = 16\n")
        assert (
            run(
                "train",
                "--pairs", tmp_path / "train.jsonl",
                "--val", tmp_path / "val.jsonl",
                "--config", cfg,
                "--out-dir", train_dir,
                "--seed", 0,
            )
            == 0
        )
        assert (train_dir / "best.ckpt").exists()
        history = [json.loads(line) for line in (train_dir / "history.jsonl").read_text().splitlines()]
        assert len(history) == 40
        assert history[0]["step"] == 1 and "loss_total" in history[0]
        assert any(h["val_loss"] is not None for h in history)

        assert (
            run(
                "score",
                "--pairs", tmp_path / "val.jsonl",
                "--checkpoint", train_dir / "best.ckpt",
                "--out", "scores.jsonl",
                "--out-dir", tmp_path,
            )
            == 0
        )
        scores = (tmp_path / "scores.jsonl").read_text().splitlines()
        assert len(scores) == 24

        eval_dir = tmp_path / "eval"
        assert (
            run("eval", "--scores", tmp_path / "scores.jsonl", "--pairs", tmp_path / "val.jsonl", "--out-dir", eval_dir)
            == 0
        )
        report = json.loads((eval_dir / "report.json").read_text())
        assert set(report["counts"]) == {"wild", "semi-wild", "scripted", "colloquial"}
        csv_lines = (eval_dir / "report.csv").read_text().splitlines()
        assert csv_lines[0].startswith("wild,semi_wild,")

    def test_eval_is_deterministic(self, tmp_path):
        assert run("synth", "--n", 16, "--out", "v.jsonl", "--out-dir", tmp_path, "--seed", 2) == 0
        pairs = read_pairs(tmp_path / "v.jsonl")
        from episcore import ScoredPair
        from episcore.evaluation import write_scores

        scored = [ScoredPair(p.pair_id, 1.0, 0.0, p.source_tier, p.criterion.value) for p in pairs]
        write_scores(scored, tmp_path / "s.jsonl")
        for name in ("e1", "e2"):
            assert run("eval", "--scores", tmp_path / "s.jsonl", "--out-dir", tmp_path / name) == 0
        assert (tmp_path / "e1" / "report.json").read_bytes() == (tmp_path / "e2" / "report.json").read_bytes()
        assert (tmp_path / "e1" / "report.csv").read_bytes() == (tmp_path / "e2" / "report.csv").read_bytes()

    def test_eval_empty_scores_fails_with_empty_set(self, tmp_path, capsys):
        (tmp_path / "empty.jsonl").write_text("")
        assert run("eval", "--scores", tmp_path / "empty.jsonl", "--out-dir", tmp_path) == 1
        assert "EMPTY_SET" in capsys.readouterr().err

    def test_eval_reference_fixture_csv(self, tmp_path):
        # Score file realizing the first reference scorecard by counts.
        from episcore import ScoredPair
        from episcore.evaluation import write_scores

        acc = {"wild": 1.0, "semi-wild": 0.9247, "scripted": 0.9227, "colloquial": 0.972}
        scored = []
        for subset, frac in acc.items():
            n = REFERENCE_COUNTS[subset]
            k = round(frac * n)
            for i in range(n):
                scored.append(ScoredPair(f"{subset}-{i}", 1.0 if i < k else 0.0, 0.5, subset, "modality"))
        write_scores(scored, tmp_path / "scores.jsonl")
        assert run("eval", "--scores", tmp_path / "scores.jsonl", "--out-dir", tmp_path) == 0
        row = (tmp_path / "report.csv").read_text().splitlines()[1]
        got = [float(v) for v in row.split(",")]
        want = [100.00, 92.47, 92.27, 96.61, 94.91, 97.20, 96.70, 96.06]
        assert got == pytest.approx(want, abs=0.015)  # double rounding: raw counts vs rounded scorecard


class TestAgreementCommand:
    def test_reference_table(self, tmp_path):
        rows = tmp_path / "rows.csv"
        rows.write_text(
            "subset,count,avg_margin,agree_rate\n"
            "high_confidence,20,1.65,0.883\n"
            "low_confidence,20,0.06,0.783\n"
            "random_sampling,20,0.77,0.767\n"
            "model_wrong,15,-0.19,0.933\n"
        )
        assert run("agreement", "--rows", rows, "--out-dir", tmp_path) == 0
        payload = json.loads((tmp_path / "agreement.json").read_text())
        assert payload["overall"]["agree_rate"] == pytest.approx(0.835, abs=0.001)
        assert payload["overall"]["se"] == pytest.approx(0.043, abs=0.001)
        assert len(payload["rows"]) == 4


class TestGradcheckCommand:
    def test_clean_build_exits_zero(self, tmp_path):
        assert run("gradcheck", "--draws", 3, "--seed", 5, "--out-dir", tmp_path) == 0
        report = json.loads((tmp_path / "gradcheck-report.json").read_text())
        assert report["passed"] is True
        assert report["max_rel_err"] < 1e-4
        assert set(report["groups"]) == {"w_enc", "b_enc", "e_crit", "q", "w1", "b1", "w2", "b2"}

    def test_corrupted_gradient_exits_nonzero_and_names_offender(self, tmp_path):
        assert run("gradcheck", "--draws", 2, "--seed", 5, "--corrupt-group", "b_enc", "--out-dir", tmp_path) == 1
        report = json.loads((tmp_path / "gradcheck-report.json").read_text())
        assert report["passed"] is False
        assert report["worst_group"] == "b_enc"


class TestEndToEnd:
    def test_small_run_produces_summary(self, tmp_path):
        assert (
            run("e2e", "--n-train", 48, "--n-val", 16, "--steps", 30, "--out-dir", tmp_path, "--seed", 0) == 0
        )
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert set(summary) >= {"val_accuracy", "drift", "mean_margin", "best_step", "seed", "lambda_center"}
        assert (tmp_path / "report.csv").exists()
        assert (tmp_path / "best.ckpt").exists()
        assert (tmp_path / "val-scores.jsonl").exists()

    def test_seed_changes_summary(self, tmp_path):
        for seed in (0, 1):
            assert (
                run("e2e", "--n-train", 48, "--n-val", 16, "--steps", 30, "--out-dir", tmp_path / str(seed), "--seed", seed)
                == 0
            )
        a = json.loads((tmp_path / "0" / "summary.json").read_text())
        b = json.loads((tmp_path / "1" / "summary.json").read_text())
        assert a["val_accuracy"] != b["val_accuracy"] or a["drift"] != b["drift"]

    def test_lambda_sweep_orders_drift_magnitudes(self, tmp_path):
        # Twin default-length runs differing only in the centering weight:
        # the centered run's score sum must sit closer to zero.
        summaries = {}
        for lam in (0.0, 1e-2):
            out = tmp_path / f"lam-{lam}"
            assert run("e2e", "--lambda-center", lam, "--out-dir", out, "--seed", 0) == 0
            summaries[lam] = json.loads((out / "summary.json").read_text())
        assert abs(summaries[1e-2]["drift"]) <= abs(summaries[0.0]["drift"]), summaries
        for lam, summary in summaries.items():
            assert summary["val_accuracy"] >= 0.9


class TestConfigFiles:
    def test_synth_config_file_parsing(self, tmp_path):
        cfg = tmp_path / "synth.cfg"
        cfg.write_text(
            "# synthetic generator settings\n"
            "d_in = 4\n"
            "noise_std = 0.0\n"
            "signature = 0,0,0.25,0.25\n"
            "channel_offset.wild = 0.5,0,0,0\n"
            "channel_offset.scripted = -0.5,0,0,0\n"
            "turns = 2,4\n"
            "frames_per_turn = 3,3\n"
        )
        assert run("synth", "--config", cfg, "--n", 6, "--out", "p.jsonl", "--out-dir", tmp_path, "--seed", 2) == 0
        pairs = read_pairs(tmp_path / "p.jsonl")
        assert {p.source_tier for p in pairs} == {"wild", "scripted"}
        assert pairs[0].chosen.turns[0].features.shape == (3, 4)

    def test_malformed_config_line_fails_cleanly(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("d_in 8\n")
        assert run("synth", "--config", cfg, "--n", 2, "--out", "p.jsonl", "--out-dir", tmp_path) == 1
        assert "PARSE_ERROR" in capsys.readouterr().err
