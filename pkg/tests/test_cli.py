"""End-to-end command behavior on a small corpus: artifacts, determinism,
exit codes."""

import json

import numpy as np
import pytest

from zids import dataset as ds
from zids import preprocess as pp
from zids import synthetic
from zids.cli import ExperimentConfig, main
from conftest import SMALL_PROFILE, run_cli


class TestConfig:
    def test_master_seed_fills_unset(self):
        cfg = ExperimentConfig(seed=42).resolved()
        assert cfg.split_seed == 42
        assert cfg.train_seed == 42
        assert cfg.background_seed == 42
        assert cfg.explain_seed == 42  # defaults to the background sample

    def test_explicit_seeds_kept(self):
        cfg = ExperimentConfig(seed=1, split_seed=7, explain_seed=9).resolved()
        assert cfg.split_seed == 7
        assert cfg.explain_seed == 9
        assert cfg.train_seed == 1

    def test_bad_variant(self):
        with pytest.raises(Exception):
            ExperimentConfig(variant="huge").resolved()

    def test_config_file_merge(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"epochs": 7, "variant": "base"}))

        class Args:
            pass

        args = Args()
        args.config = str(config)
        args.epochs = 3  # flag overrides file
        from zids.cli import load_config

        cfg = load_config(args)
        assert cfg.epochs == 3
        assert cfg.variant == "base"

    def test_unknown_config_field(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"nonsense": 1}))

        class Args:
            pass

        args = Args()
        args.config = str(path)
        from zids.cli import ConfigError, load_config

        with pytest.raises(ConfigError):
            load_config(args)


class TestPrepare:
    def test_artifacts(self, small_experiment):
        prepared = small_experiment.prepared
        for name in ("train.zids", "test.zids", "schema.json", "counts.csv",
                     "manifest.json"):
            assert (prepared / name).exists()
        assert pp.list_label_columns(prepared / "train.zids") == ["coarse", "fine"]

    def test_counts_match_streaming_oracle(self, small_experiment):
        expected = ds.coarse_counts(
            ds.parse_kdd(open(small_experiment.corpus)), ds.default_taxonomy()
        )
        got = dict(
            line.split(",")
            for line in (small_experiment.prepared / "counts.csv")
            .read_text()
            .strip()
            .splitlines()[1:]
        )
        assert {k: int(v) for k, v in got.items()} == expected

    def test_rerun_byte_identical(self, small_experiment, tmp_path):
        again = tmp_path / "prep2"
        rc = run_cli("prepare", "--data", small_experiment.corpus, "--out", again,
                     "--seed", 0)
        assert rc == 0
        for name in ("train.zids", "test.zids", "schema.json", "counts.csv"):
            assert (again / name).read_bytes() == (
                small_experiment.prepared / name
            ).read_bytes()

    def test_split_sizes(self, small_experiment):
        manifest = json.loads((small_experiment.prepared / "manifest.json").read_text())
        data = manifest["data"]
        assert data["train_rows"] + data["test_rows"] == data["rows"]
        assert data["coarse_classes"] == 4
        assert data["fine_classes"] == len(SMALL_PROFILE)

    def test_scaling_fits_train_only(self, small_experiment):
        train = pp.read_container(small_experiment.prepared / "train.zids")
        n_cont = len(ds.CONTINUOUS_POSITIONS)
        assert train.x[:, :n_cont].min() >= 0.0
        assert train.x[:, :n_cont].max() <= 1.0

    def test_streaming_prepare_matches_library_encode(self, small_experiment):
        """The two-pass streaming path and encode() agree bit for bit."""
        records = ds.parse_kdd(open(small_experiment.corpus))
        schema = ds.build_schema(records)
        tax = ds.default_taxonomy()
        fine_names = sorted({r.label for r in records})
        name_idx = {n: i for i, n in enumerate(fine_names)}
        y_fine = np.array([name_idx[r.label] for r in records], dtype=np.int32)
        train_idx, _ = pp.split_indices(y_fine, len(fine_names), 0.33, seed=0)
        train_records = [records[i] for i in train_idx]
        enc = pp.encode(train_records, schema, tax, granularity="coarse")
        loaded = pp.read_container(small_experiment.prepared / "train.zids", "coarse")
        assert np.array_equal(enc.x, loaded.x)
        assert np.array_equal(enc.y, loaded.y)
        assert enc.scaling == loaded.scaling

    def test_missing_file_exit_code(self, tmp_path, capsys):
        rc = run_cli("prepare", "--data", tmp_path / "nope.kdd", "--out", tmp_path / "o")
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_gzip_input(self, tmp_path):
        import gzip

        corpus = tmp_path / "c.kdd.gz"
        records = synthetic.generate_records({"normal": 30, "smurf": 30}, seed=0)
        with gzip.open(corpus, "wt") as fh:
            fh.write(ds.serialize_kdd(records))
        rc = run_cli("prepare", "--data", corpus, "--out", tmp_path / "out", "--seed", 1)
        assert rc == 0


class TestTrain:
    def test_truncated_artifacts(self, small_experiment):
        run = small_experiment.train("truncated")
        assert (run / "model.zmlp").exists()
        history = (run / "history.csv").read_text().strip().splitlines()
        assert history[0] == "epoch,train_loss,val_loss,val_accuracy"
        assert len(history) == 1 + 20
        manifest = json.loads((run / "manifest.json").read_text())
        assert manifest["config"]["granularity"] == "coarse"
        assert manifest["model"]["class_weights"] is None

    def test_weighted_variant_logs_weights(self, small_experiment):
        run = small_experiment.train("weighted-truncated")
        manifest = json.loads((run / "manifest.json").read_text())
        weights = manifest["model"]["class_weights"]
        assert weights is not None and len(weights) == 4
        assert abs(np.mean(weights) - 1.0) <= 1e-9

    def test_hidden_dims_override(self, small_experiment, tmp_path):
        out = tmp_path / "tiny"
        rc = run_cli("train", "--prepared", small_experiment.prepared,
                     "--variant", "truncated", "--out", out, "--seed", 0,
                     "--hidden-dims", "8", "--epochs", 2)
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        d = manifest["config"]["dims"][0]
        assert manifest["config"]["dims"] == [d, 8, 4]
        assert manifest["model"]["parameter_count"] == (d + 1) * 8 + 9 * 4

    def test_bad_variant_is_usage_error(self, small_experiment, tmp_path):
        rc = run_cli("train", "--prepared", small_experiment.prepared,
                     "--variant", "gigantic", "--out", tmp_path / "x")
        assert rc == 1

    def test_bad_epochs_is_usage_error(self, small_experiment, tmp_path):
        rc = run_cli("train", "--prepared", small_experiment.prepared,
                     "--variant", "truncated", "--out", tmp_path / "x",
                     "--epochs", 0)
        assert rc == 1

    def test_missing_prepared_dir(self, tmp_path):
        rc = run_cli("train", "--prepared", tmp_path / "void",
                     "--variant", "truncated", "--out", tmp_path / "x")
        assert rc == 2


class TestEvaluate:
    def test_report_row_order(self, small_experiment):
        rep = small_experiment.evaluate("truncated")
        assert [c["name"] for c in rep["classes"]] == list(ds.CATEGORIES)

    def test_confusion_consistent_with_accuracy(self, small_experiment):
        small_experiment.evaluate("truncated")
        eval_dir = small_experiment.root / "eval_truncated"
        lines = (eval_dir / "confusion.csv").read_text().strip().splitlines()
        matrix = np.array([r.split(",")[1:] for r in lines[1:]], dtype=int)
        rep = json.loads((eval_dir / "report.json").read_text())
        assert rep["accuracy"] == pytest.approx(
            np.trace(matrix) / matrix.sum(), abs=1e-12
        )
        assert matrix.sum() == rep["total_support"]

    def test_fine_model_picks_fine_column(self, small_experiment):
        rep = small_experiment.evaluate("base")
        assert len(rep["classes"]) == len(SMALL_PROFILE)

    def test_width_mismatch_exit_code(self, small_experiment, tmp_path):
        other_corpus = tmp_path / "other.kdd"
        synthetic.write_corpus(other_corpus, {"normal": 40, "smurf": 40}, seed=1)
        rc = run_cli("prepare", "--data", other_corpus, "--out", tmp_path / "otherprep",
                     "--seed", 0)
        assert rc == 0
        model = small_experiment.train("truncated") / "model.zmlp"
        rc = run_cli("evaluate", "--model", model,
                     "--test", tmp_path / "otherprep" / "test.zids",
                     "--out", tmp_path / "res")
        assert rc == 2

    def test_report_command_pretty_prints(self, small_experiment, capsys):
        small_experiment.evaluate("truncated")
        rc = run_cli("report", "--report",
                     small_experiment.root / "eval_truncated" / "report.json")
        assert rc == 0
        out = capsys.readouterr().out
        assert "Weighted average" in out


class TestExplain:
    def test_artifacts(self, small_experiment):
        out = small_experiment.explain("truncated")
        top5 = (out / "top5.csv").read_text().strip().splitlines()
        assert top5[0] == "class,rank,feature,mean_abs_shap"
        assert len(top5) == 1 + 4 * 5  # five rows per coarse class
        for category in ds.CATEGORIES:
            per_class = (out / f"shap_{category}.csv").read_text().splitlines()
            assert per_class[0].startswith("base_value,")
            assert len(per_class) == 2 + 12  # header rows + explained rows

    def test_efficiency_logged_within_tolerance(self, small_experiment):
        out = small_experiment.explain("truncated")
        manifest = json.loads((out / "manifest.json").read_text())
        residuals = manifest["efficiency_max_residual"]
        assert set(residuals) == set(ds.CATEGORIES)
        assert max(residuals.values()) <= 1e-6

    def test_seeds_change_sample_indices(self, small_experiment, tmp_path):
        model = small_experiment.train("truncated") / "model.zmlp"
        outs = []
        for seed in (1, 2):
            out = tmp_path / f"ex{seed}"
            rc = run_cli("explain", "--model", model,
                         "--prepared", small_experiment.prepared, "--out", out,
                         "--seed", seed, "--budget", 64, "--explain-n", 4,
                         "--background-n", 8)
            assert rc == 0
            outs.append(json.loads((out / "manifest.json").read_text()))
        assert (outs[0]["samples"]["explained_indices"]
                != outs[1]["samples"]["explained_indices"])

    def test_fine_model_rejected(self, small_experiment, tmp_path):
        model = small_experiment.train("base") / "model.zmlp"
        rc = run_cli("explain", "--model", model,
                     "--prepared", small_experiment.prepared,
                     "--out", tmp_path / "bad", "--budget", 64)
        assert rc == 2


class TestLockAndUsage:
    def test_locked_directory(self, small_experiment, tmp_path):
        out = tmp_path / "locked"
        out.mkdir()
        (out / ".zids.lock").write_text("999999")
        rc = run_cli("train", "--prepared", small_experiment.prepared,
                     "--variant", "truncated", "--out", out)
        assert rc == 1

    def test_lock_released_after_run(self, small_experiment):
        run = small_experiment.train("truncated")
        assert not (run / ".zids.lock").exists()

    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 1

    def test_no_command(self):
        assert main([]) == 1


class TestEndToEndDeterminism:
    def test_two_runs_byte_identical(self, tmp_path):
        """Full chain twice with one config; artifacts must match exactly."""
        corpus = tmp_path / "corpus.kdd"
        synthetic.write_corpus(corpus, SMALL_PROFILE, seed=0)
        artifacts = {}
        for run in ("one", "two"):
            root = tmp_path / run
            assert run_cli("prepare", "--data", corpus, "--out", root / "prep",
                           "--seed", 3) == 0
            assert run_cli("train", "--prepared", root / "prep",
                           "--variant", "weighted-truncated",
                           "--out", root / "model", "--seed", 3,
                           "--epochs", 5) == 0
            assert run_cli("evaluate", "--model", root / "model" / "model.zmlp",
                           "--test", root / "prep" / "test.zids",
                           "--out", root / "eval") == 0
            assert run_cli("explain", "--model", root / "model" / "model.zmlp",
                           "--prepared", root / "prep", "--out", root / "shap",
                           "--seed", 3, "--budget", 128, "--explain-n", 5,
                           "--background-n", 10) == 0
            artifacts[run] = {
                str(p.relative_to(root)): p.read_bytes()
                for p in sorted(root.rglob("*"))
                if p.is_file() and p.name != "manifest.json"
            }
        assert artifacts["one"].keys() == artifacts["two"].keys()
        for name in artifacts["one"]:
            assert artifacts["one"][name] == artifacts["two"][name], name
