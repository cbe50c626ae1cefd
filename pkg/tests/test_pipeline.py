import json

import numpy as np
import pytest

from src.cli import main
from src.config import ModelConfig, TrimapGenConfig
from src.engine.checkpoint import read_archive
from src.errors import DataError, NumericalError
from src.evaluation.evaluator import EvalSample, evaluate
from src.imaging.buffers import AlphaMatte
from src.imaging.dataset import load_source_dir
from src.imaging.io import read_png_uint8, save_png
from src.imaging.trimap import FG, U, Trimap, save_trimap_png
from src.models.matte_predictor import MattePredictor
from src.pipeline.ablation import ablate
from src.pipeline.inference import infer
from src.pipeline.synthesis import LAYOUT, MANIFEST, load_held_out, synthesize_dataset
from src.pipeline.training import LOG_NAME, Trainer, train
from tests.helpers import disc_alpha, random_image, tiny_config, write_source_dir


def read_log(run_dir):
    with open(run_dir / LOG_NAME, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f]


class TestSynthesis:
    def test_layout_and_manifest(self, source_dir, tmp_path):
        manifest = synthesize_dataset(load_source_dir(source_dir), tmp_path / "set", per_fg=3, seed=7)
        for layer in LAYOUT:
            assert len(list((tmp_path / "set" / layer).glob("*.png"))) == 6
        stored = json.loads((tmp_path / "set" / MANIFEST).read_text())
        assert stored == manifest
        assert stored["seed"] == 7 and stored["count"] == 6
        assert [s["id"] for s in stored["samples"]][:3] == ["fg0_0", "fg0_1", "fg0_2"]

    def test_rerun_is_identical(self, source_dir, tmp_path):
        sources = load_source_dir(source_dir)
        synthesize_dataset(sources, tmp_path / "a", per_fg=2, seed=3)
        synthesize_dataset(sources, tmp_path / "b", per_fg=2, seed=3)
        assert (tmp_path / "a" / MANIFEST).read_text() == (tmp_path / "b" / MANIFEST).read_text()
        for path in sorted((tmp_path / "a" / "trimap_tcp").glob("*.png")):
            assert path.read_bytes() == (tmp_path / "b" / "trimap_tcp" / path.name).read_bytes()

    def test_load_held_out(self, source_dir, tmp_path):
        synthesize_dataset(load_source_dir(source_dir), tmp_path / "set", per_fg=1, seed=0)
        samples = load_held_out(tmp_path / "set")
        assert len(samples) == 2
        assert all(s.image.size == s.alpha.size == s.trimap.size for s in samples)
        with pytest.raises(DataError):
            load_held_out(tmp_path / "missing")


class TestTraining:
    def test_seeded_runs_are_identical(self, source_dir, tmp_path):
        train(tiny_config(source_dir, tmp_path / "a"))
        train(tiny_config(source_dir, tmp_path / "b"))
        first, second = read_log(tmp_path / "a"), read_log(tmp_path / "b")
        assert len(first) == 3
        assert first == second

    def test_log_records(self, source_dir, tmp_path):
        train(tiny_config(source_dir, tmp_path / "run"))
        records = read_log(tmp_path / "run")
        assert [r["step"] for r in records] == [0, 1, 2]
        assert records[0]["lr"] == 0.0
        assert records[1]["lr"] == pytest.approx(4e-4)
        assert all(np.isfinite(r["loss"]) for r in records)
        assert all(len(r["pairs"]) == 2 for r in records)
        assert (tmp_path / "run" / "step_2.mfck").exists()
        assert (tmp_path / "run" / "final.mfck").exists()
        assert (tmp_path / "run" / "final.json").exists()

    def test_batches_do_not_depend_on_thread_count(self, source_dir, tmp_path):
        config = tiny_config(source_dir, tmp_path / "run", batch_size=3)
        single = Trainer(config, n_jobs=1).make_batch(4)
        threaded = Trainer(config, n_jobs=3).make_batch(4)
        for a, b in zip(single, threaded):
            assert (a.sample.fg_id, a.sample.bg_id) == (b.sample.fg_id, b.sample.bg_id)
            assert a.sp.digest() == b.sp.digest() and a.tcp.digest() == b.tcp.digest()
            np.testing.assert_array_equal(a.sample.composite.data, b.sample.composite.data)

    def test_examples_always_have_unknown_pixels(self, source_dir, tmp_path):
        trainer = Trainer(tiny_config(source_dir, tmp_path / "run"), n_jobs=1)
        for step in range(10):
            for example in trainer.make_batch(step):
                assert example.sp.unknown.any()
                assert example.sample.size == (32, 32)

    def test_without_perturbation_trimaps_match(self, source_dir, tmp_path):
        train(tiny_config(source_dir, tmp_path / "run", imrp=False))
        for record in read_log(tmp_path / "run"):
            assert record["sp_hash"] == record["tcp_hash"]
            assert record["loss_bg"] == 0.0

    def test_non_finite_parameters_abort(self, source_dir, tmp_path):
        trainer = Trainer(tiny_config(source_dir, tmp_path / "run"), n_jobs=1)
        trainer.net.store["sp/head/out/b"].data[...] = np.nan
        with pytest.raises(NumericalError) as info:
            trainer.run()
        assert info.value.step == 0
        assert (tmp_path / "run" / "abort_step0.mfck").exists()

    def test_resume_continues_the_run(self, source_dir, tmp_path):
        full = train(tiny_config(source_dir, tmp_path / "full"))
        resumed = train(tiny_config(source_dir, tmp_path / "resumed"), resume=tmp_path / "full" / "step_2.mfck")
        assert [r["step"] for r in read_log(tmp_path / "resumed")] == [2]
        assert read_log(tmp_path / "resumed")[0]["pairs"] == read_log(tmp_path / "full")[2]["pairs"]
        expected, actual = read_archive(full.checkpoint), read_archive(resumed.checkpoint)
        assert list(expected) == list(actual)
        for name in expected:
            np.testing.assert_allclose(actual[name], expected[name], rtol=1e-4, atol=1e-6)

    def test_missing_data_dir(self, tmp_path):
        config = tiny_config(tmp_path, tmp_path / "run").model_copy(update={"data_dir": None})
        with pytest.raises(DataError):
            Trainer(config)

    @pytest.mark.slow
    def test_overfits_a_small_set(self, tmp_path):
        sources = write_source_dir(tmp_path / "sources", n_fg=8, n_bg=8, size=64, flat=True)
        config = tiny_config(
            sources,
            tmp_path / "run",
            total_steps=500,
            warmup_steps=25,
            batch_size=4,
            base_lr=1e-3,
            model=ModelConfig(base_width=8, tcp_width=8),
            trimap=TrimapGenConfig(sp_kernel=(3, 9)),
            crop_sizes=[64],
            crop_out=64,
            overfit_samples=8,
            checkpoint_every=1000,
            log_every=50,
        )
        train(config)
        losses = np.array([r["loss_a"] for r in read_log(tmp_path / "run")])
        windows = losses.reshape(-1, 50).mean(axis=1)
        assert np.all(np.diff(windows) < 0), windows
        assert windows[-1] < 0.05

    def test_fixed_pool_cycles_through_the_same_examples(self, source_dir, tmp_path):
        trainer = Trainer(tiny_config(source_dir, tmp_path, overfit_samples=3), n_jobs=1)
        assert len(trainer.fixed_pool) == 3
        assert [ex.sample.fg_id for ex in trainer.fixed_pool] == ["fg0", "fg1", "fg0"]
        assert trainer.make_example(0, 0) is trainer.fixed_pool[0]
        assert trainer.make_example(1, 1) is trainer.fixed_pool[0]
        assert trainer.make_example(4, 0) is trainer.fixed_pool[2]


class TestInference:
    def test_output_matches_input_size(self, trained_checkpoint, tmp_path, rng):
        save_png(tmp_path / "image.png", random_image(rng, 65, 97))
        save_trimap_png(tmp_path / "trimap.png", Trimap(rng.integers(0, 3, size=(65, 97))))
        infer(trained_checkpoint, tmp_path / "image.png", tmp_path / "trimap.png", tmp_path / "matte.png")
        assert read_png_uint8(tmp_path / "matte.png").shape == (65, 97)

    def test_all_foreground_trimap(self, trained_checkpoint, tmp_path, rng):
        save_png(tmp_path / "image.png", random_image(rng, 40, 40))
        save_trimap_png(tmp_path / "trimap.png", Trimap(np.full((40, 40), FG)))
        infer(trained_checkpoint, tmp_path / "image.png", tmp_path / "trimap.png", tmp_path / "matte.png")
        np.testing.assert_array_equal(read_png_uint8(tmp_path / "matte.png"), 255)

    def test_repeat_is_byte_identical_and_strip(self, trained_checkpoint, tmp_path, rng):
        save_png(tmp_path / "image.png", random_image(rng, 36, 30))
        save_trimap_png(tmp_path / "trimap.png", Trimap(np.full((36, 30), U)))
        save_png(tmp_path / "gt.png", disc_alpha(36, 30, 10))
        predictor = MattePredictor(trained_checkpoint)
        for name in ("a.png", "b.png"):
            infer(
                trained_checkpoint,
                tmp_path / "image.png",
                tmp_path / "trimap.png",
                tmp_path / name,
                comparison_path=tmp_path / "strip.png",
                gt_path=tmp_path / "gt.png",
                predictor=predictor,
            )
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
        assert read_png_uint8(tmp_path / "strip.png").shape == (36, 120, 3)

    def test_size_mismatch(self, trained_checkpoint, tmp_path, rng):
        save_png(tmp_path / "image.png", random_image(rng, 8, 8))
        save_trimap_png(tmp_path / "trimap.png", Trimap(np.full((8, 9), U)))
        with pytest.raises(DataError):
            infer(trained_checkpoint, tmp_path / "image.png", tmp_path / "trimap.png", tmp_path / "matte.png")

    def test_baseline_checkpoint_carries_no_textural_path(self, source_dir, tmp_path):
        model = ModelConfig(base_width=4, tcp_width=4, tcp_enabled=False)
        result = train(tiny_config(source_dir, tmp_path / "run", total_steps=2, model=model))
        assert not any(name.startswith(("tcp/", "ffu/")) for name in read_archive(result.checkpoint))
        assert MattePredictor(result.checkpoint).net.tcp is None


def _eval_sample(sample_id, gt, pred, labels):
    return EvalSample(id=sample_id, gt=AlphaMatte(gt), pred=AlphaMatte(pred), trimap=Trimap(labels))


class TestEvaluation:
    def test_perfect_predictions(self, rng):
        samples = []
        for k in range(3):
            alpha = rng.random((12, 12))
            samples.append(_eval_sample(f"s{k}", alpha, alpha, np.full((12, 12), U)))
        report = evaluate(samples)
        assert len(report.rows) == 3
        assert (report.mean.sad, report.mean.mse, report.mean.grad, report.mean.conn) == (0.0, 0.0, 0.0, 0.0)

    def test_means_are_unweighted_averages(self):
        unknown = np.full((10, 10), U)
        samples = [
            _eval_sample("a", np.zeros((10, 10)), np.full((10, 10), 0.1), unknown),
            _eval_sample("b", np.zeros((10, 10)), np.full((10, 10), 0.2), unknown),
            _eval_sample("c", np.zeros((10, 10)), np.full((10, 10), 0.6), unknown),
        ]
        report = evaluate(samples, n_jobs=2)
        assert [row.id for row in report.rows] == ["a", "b", "c"]
        assert report.rows[1].sad == pytest.approx(0.02)
        assert report.mean.sad == pytest.approx((0.01 + 0.02 + 0.06) / 3)
        assert report.mean.mse == pytest.approx((0.01 + 0.04 + 0.36) / 3)

    def test_empty_unknown_region_excluded_from_mse_mean(self, rng):
        alpha = rng.random((6, 6))
        samples = [
            _eval_sample("known", alpha, alpha, np.full((6, 6), FG)),
            _eval_sample("unknown", np.zeros((6, 6)), np.full((6, 6), 0.5), np.full((6, 6), U)),
        ]
        report = evaluate(samples)
        assert report.rows[0].mse is None
        assert report.undefined["mse"] == 1
        assert report.mean.mse == pytest.approx(0.25)
        assert "n/a" in report.to_table()


def _write_eval_dirs(root, rng, stems):
    for stem in stems:
        alpha = AlphaMatte(np.round(rng.random((10, 10)) * 255) / 255)
        save_png(root / "gt" / f"{stem}.png", alpha)
        save_png(root / "pred" / f"{stem}.png", alpha)
        save_trimap_png(root / "trimap" / f"{stem}.png", Trimap(np.full((10, 10), U)))


class TestCli:
    def test_synth_command(self, source_dir, tmp_path):
        code = main(["synth", "--data", str(source_dir), "--per-fg", "3", "--out", str(tmp_path / "set"), "--seed", "11"])
        assert code == 0
        manifest = json.loads((tmp_path / "set" / MANIFEST).read_text())
        assert manifest["seed"] == 11
        assert manifest["count"] == 6

    def test_eval_command(self, tmp_path, rng):
        _write_eval_dirs(tmp_path, rng, ["x", "y"])
        args = ["eval", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
                "--trimap", str(tmp_path / "trimap"), "--output", str(tmp_path / "report")]
        assert main(args) == 0
        report = json.loads((tmp_path / "report" / "report.json").read_text())
        assert report["mean"]["sad"] == 0.0
        assert (tmp_path / "report" / "report.txt").exists()

        save_png(tmp_path / "pred" / "z.png", AlphaMatte(np.zeros((10, 10))))
        assert main(args) == 2
        report = json.loads((tmp_path / "report" / "report.json").read_text())
        assert report["skipped"] == ["z"]

    def test_train_command(self, source_dir, tmp_path):
        code = main([
            "train", "--data", str(source_dir), "--output", str(tmp_path / "run"), "--steps", "2",
            "--warmup", "1", "--batch-size", "2", "--deterministic", "--no-imrp",
        ])
        assert code == 0
        assert (tmp_path / "run" / "final.mfck").exists()

    def test_synth_train_infer_eval_chain_is_reproducible(self, source_dir, tmp_path):
        config = tmp_path / "tiny.json"
        config.write_text(json.dumps({
            "model": {"base_width": 4, "tcp_width": 4},
            "crop_sizes": [32],
            "crop_out": 32,
            "checkpoint_every": 2,
        }))

        def run_chain(root):
            common = ["--seed", "5", "--deterministic"]
            assert main(["synth", "--data", str(source_dir), "--per-fg", "2", "--out", str(root / "set")] + common) == 0
            assert main([
                "train", "--config", str(config), "--data", str(source_dir), "--output", str(root / "run"),
                "--steps", "3", "--warmup", "1", "--batch-size", "2",
            ] + common) == 0
            assert main([
                "infer", "--checkpoint", str(root / "run" / "final.mfck"), "--dataset", str(root / "set"),
                "--output", str(root / "pred"),
            ] + common) == 0
            assert main([
                "eval", "--pred", str(root / "pred"), "--gt", str(root / "set" / "alpha"),
                "--trimap", str(root / "set" / "trimap_sp"), "--output", str(root / "report"),
            ] + common) == 0

        run_chain(tmp_path / "first")
        run_chain(tmp_path / "second")

        report = json.loads((tmp_path / "first" / "report" / "report.json").read_text())
        assert len(report["rows"]) == 4
        assert report["skipped"] == []
        assert set(report["mean"]) >= {"sad", "mse", "grad", "conn"}
        assert all(row["sad"] >= 0.0 for row in report["rows"])

        for relative in ["run/final.mfck", "report/report.json"] + [
            f"pred/{path.name}" for path in sorted((tmp_path / "first" / "pred").glob("*.png"))
        ]:
            first = (tmp_path / "first" / relative).read_bytes()
            assert first == (tmp_path / "second" / relative).read_bytes(), relative

    def test_usage_errors(self, tmp_path):
        assert main([]) == 1
        assert main(["bogus"]) == 1
        assert main(["eval", "--pred", "p"]) == 1
        assert main(["train", "--steps", "5", "--warmup", "10"]) == 1
        assert main(["train", "--config", str(tmp_path / "missing.json")]) == 1
        assert main(["infer", "--checkpoint", "c.mfck", "--output", "o.png"]) == 1

    def test_data_errors(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nothing"), "--output", str(tmp_path / "run")]) == 2
        assert main([
            "infer", "--checkpoint", str(tmp_path / "missing.mfck"), "--image", "i.png",
            "--trimap", "t.png", "--output", str(tmp_path / "o.png"),
        ]) == 2


class TestAblation:
    def test_three_variants_on_a_tiny_setup(self, tmp_path):
        sources = write_source_dir(tmp_path / "sources", size=40)
        synthesize_dataset(load_source_dir(sources), tmp_path / "held_out", per_fg=1, seed=1)
        base = tiny_config(sources, tmp_path / "ablation", total_steps=2, eval_dir=str(tmp_path / "held_out"))
        outcome = ablate(base, robustness=True)

        assert list(outcome.reports) == ["baseline", "baseline+TCP", "baseline+TCP+IMRP"]
        assert len(outcome.table()) == 3
        assert len(outcome.table(robustness=True)) == 3
        stored = json.loads((tmp_path / "ablation" / "ablation.json").read_text())
        assert set(stored["reports"]) == set(outcome.reports)
        text = (tmp_path / "ablation" / "ablation.txt").read_text()
        assert "SAD" in text and "Conn" in text and "Robustness" in text

        baseline_names = read_archive(outcome.checkpoints["baseline"])
        assert not any(name.startswith("tcp/") for name in baseline_names)
        logs = [read_log(tmp_path / "ablation" / slug) for slug in ("baseline", "baseline_tcp", "baseline_tcp_imrp")]
        assert [r["pairs"] for r in logs[0]] == [r["pairs"] for r in logs[1]] == [r["pairs"] for r in logs[2]]
        assert (tmp_path / "ablation" / "baseline_tcp" / "report.json").exists()
        assert (tmp_path / "ablation" / "baseline_tcp" / "report_robustness.json").exists()

    @pytest.mark.slow
    def test_textural_path_does_not_raise_sad(self, tmp_path):
        sources = write_source_dir(tmp_path / "sources", n_fg=8, n_bg=1, size=64, flat=True)
        trimap = TrimapGenConfig(sp_kernel=(3, 9))
        synthesize_dataset(load_source_dir(sources), tmp_path / "held_out", per_fg=1, seed=1, trimap_cfg=trimap)
        base = tiny_config(
            sources,
            tmp_path / "ablation",
            total_steps=300,
            warmup_steps=15,
            batch_size=4,
            base_lr=1e-3,
            model=ModelConfig(base_width=8, tcp_width=8),
            trimap=trimap,
            crop_sizes=[64],
            crop_out=64,
            overfit_samples=8,
            checkpoint_every=1000,
            log_every=50,
            eval_dir=str(tmp_path / "held_out"),
        )
        outcome = ablate(base)
        assert outcome.reports["baseline+TCP"].mean.sad <= outcome.reports["baseline"].mean.sad

    def test_needs_held_out_set(self, source_dir, tmp_path):
        with pytest.raises(DataError):
            ablate(tiny_config(source_dir, tmp_path / "ablation"))
