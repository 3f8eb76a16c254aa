import json

import numpy as np
import pytest

from mrtranslate.cli import main
from mrtranslate.data import load_volume, read_split_manifest, write_grayscale_png


@pytest.fixture()
def dataset_root(tmp_path):
    rng = np.random.default_rng(0)
    root = tmp_path / "data"
    for domain in ("T1", "T2"):
        (root / domain).mkdir(parents=True)
    for i in range(6):
        base = rng.normal(size=(16, 16))
        write_grayscale_png(root / "T1" / f"sub{i}.png", base)
        write_grayscale_png(root / "T2" / f"sub{i}.png", np.tanh(base))
    return root


@pytest.fixture()
def prepared(dataset_root, tmp_path):
    manifest = tmp_path / "manifest.json"
    code = main(
        [
            "prepare",
            "--root",
            str(dataset_root),
            "--out",
            str(manifest),
            "--n-train",
            "4",
            "--seed",
            "1",
        ]
    )
    assert code == 0
    return dataset_root, manifest


def write_config(path, **overrides):
    values = {
        "kind": "simple",
        "epochs": 2,
        "batch_size": 2,
        "base_width": 4,
        "seed": 0,
        "checkpoint_every": 2,
    }
    values.update(overrides)
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return path


class TestPrepare:
    def test_manifest_contents(self, prepared):
        _, manifest_path = prepared
        manifest = read_split_manifest(manifest_path)
        assert len(manifest["train_subjects"]) == 4
        assert len(manifest["test_subjects"]) == 2
        assert manifest["seed"] == 1
        assert manifest["slice_index"] == 120

    def test_n_train_too_large(self, dataset_root, tmp_path, capsys):
        code = main(
            ["prepare", "--root", str(dataset_root), "--out", str(tmp_path / "m.json"), "--n-train", "6"]
        )
        assert code == 2
        assert "n_train" in capsys.readouterr().err

    def test_env_var_root(self, dataset_root, tmp_path, monkeypatch):
        monkeypatch.setenv("MRTRANSLATE_DATA_ROOT", str(dataset_root))
        out = tmp_path / "env_manifest.json"
        assert main(["prepare", "--out", str(out), "--n-train", "3"]) == 0
        assert out.exists()

    def test_deterministic(self, dataset_root, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            main(["prepare", "--root", str(dataset_root), "--out", str(out), "--n-train", "4", "--seed", "9"])
        assert json.loads(a.read_text()) == json.loads(b.read_text())


class TestTrain:
    def test_toy_run_outputs(self, prepared, tmp_path, capsys):
        root, manifest = prepared
        config = write_config(tmp_path / "run.cfg")
        out_dir = tmp_path / "run"
        code = main(
            ["train", "--config", str(config), "--root", str(root), "--manifest", str(manifest), "--out", str(out_dir)]
        )
        assert code == 0
        assert (out_dir / "simple_epoch2.ckpt").exists()
        history = (out_dir / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,loss_name,value,wall_seconds"
        # 2 epochs x (supervised, total)
        assert len(history) == 1 + 4

    def test_bad_kind_lists_valid_kinds(self, prepared, tmp_path, capsys):
        root, manifest = prepared
        config = write_config(tmp_path / "bad.cfg", kind="dcgan")
        code = main(
            ["train", "--config", str(config), "--root", str(root), "--manifest", str(manifest), "--out", str(tmp_path / "x")]
        )
        assert code == 2
        err = capsys.readouterr().err
        assert "cyclegan" in err and "generators_s" in err and "simple" in err

    def test_resume_flag(self, prepared, tmp_path):
        root, manifest = prepared
        out_dir = tmp_path / "run"
        config = write_config(tmp_path / "run.cfg")
        assert main(["train", "--config", str(config), "--root", str(root), "--manifest", str(manifest), "--out", str(out_dir)]) == 0
        config4 = write_config(tmp_path / "run4.cfg", epochs=4)
        code = main(
            [
                "train",
                "--config",
                str(config4),
                "--root",
                str(root),
                "--manifest",
                str(manifest),
                "--out",
                str(out_dir),
                "--resume",
                str(out_dir / "simple_epoch2.ckpt"),
            ]
        )
        assert code == 0
        history = (out_dir / "history.csv").read_text()
        assert "resumed" in history
        assert (out_dir / "simple_epoch4.ckpt").exists()


@pytest.fixture()
def trained(prepared, tmp_path):
    root, manifest = prepared
    config = write_config(tmp_path / "run.cfg")
    out_dir = tmp_path / "run"
    main(["train", "--config", str(config), "--root", str(root), "--manifest", str(manifest), "--out", str(out_dir)])
    return root, manifest, out_dir / "simple_epoch2.ckpt"


class TestTranslate:
    def test_translate_directory(self, trained, tmp_path):
        root, _, ckpt = trained
        out = tmp_path / "synthetic"
        code = main(
            ["translate", "--checkpoint", str(ckpt), "--input-dir", str(root / "T1"), "--direction", "t1_to_t2", "--output-dir", str(out)]
        )
        assert code == 0
        outputs = sorted(out.glob("*_syn.png"))
        assert len(outputs) == 6
        assert load_volume(outputs[0]).dims == (16, 16, 1)

    def test_empty_dir_warns(self, trained, tmp_path, capsys):
        _, _, ckpt = trained
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(
            ["translate", "--checkpoint", str(ckpt), "--input-dir", str(empty), "--direction", "t1_to_t2", "--output-dir", str(tmp_path / "o")]
        )
        assert code == 0
        assert "nothing to do" in capsys.readouterr().out

    def test_incompatible_image_skipped(self, trained, tmp_path, capsys):
        root, _, ckpt = trained
        mixed = tmp_path / "mixed"
        mixed.mkdir()
        for src in (root / "T1").glob("*.png"):
            (mixed / src.name).write_bytes(src.read_bytes())
        write_grayscale_png(mixed / "wrong_shape.png", np.zeros((32, 32)))
        out = tmp_path / "syn2"
        code = main(
            ["translate", "--checkpoint", str(ckpt), "--input-dir", str(mixed), "--direction", "t1_to_t2", "--output-dir", str(out)]
        )
        assert code == 1
        assert "skipped" in capsys.readouterr().err
        assert len(list(out.glob("*_syn.png"))) == 6


class TestEvaluate:
    def test_identity_predictions_zero_mae(self, prepared, tmp_path):
        root, manifest = prepared
        pred = tmp_path / "identity_pred"
        manifest_data = read_split_manifest(manifest)
        for domain in ("T1", "T2"):
            (pred / domain).mkdir(parents=True)
            for subject in manifest_data["test_subjects"]:
                src = root / domain / f"{subject}.png"
                (pred / domain / f"{subject}.png").write_bytes(src.read_bytes())
        out = tmp_path / "eval_identity"
        code = main(
            ["evaluate", "--pred-dir", str(pred), "--root", str(root), "--manifest", str(manifest), "--out", str(out)]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        for domain in ("T1", "T2"):
            assert report["aggregate"][domain]["mae"]["mean"] == pytest.approx(0.0, abs=1e-12)

    def test_checkpoint_evaluation_both_directions(self, trained, tmp_path):
        root, manifest, ckpt = trained
        out = tmp_path / "eval_ckpt"
        code = main(
            ["evaluate", "--checkpoint", str(ckpt), "--root", str(root), "--manifest", str(manifest), "--out", str(out), "--bins", "16"]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        directions = {m["direction"] for m in report["per_image"]}
        assert directions == {"t1_to_t2", "t2_to_t1"}
        assert (out / "report.csv").exists()
        maps = list((out / "error_maps").glob("*.png"))
        assert len(maps) == 2 * len(report["per_image"])  # map + preview per image

    def test_missing_prediction_recorded(self, prepared, tmp_path, capsys):
        root, manifest = prepared
        pred = tmp_path / "partial_pred"
        manifest_data = read_split_manifest(manifest)
        subjects = manifest_data["test_subjects"]
        for domain in ("T1", "T2"):
            (pred / domain).mkdir(parents=True)
        # only one subject gets predictions, and only for T2
        lone = subjects[0]
        (pred / "T2" / f"{lone}.png").write_bytes((root / "T2" / f"{lone}.png").read_bytes())
        out = tmp_path / "eval_partial"
        code = main(
            ["evaluate", "--pred-dir", str(pred), "--root", str(root), "--manifest", str(manifest), "--out", str(out)]
        )
        assert code == 1  # failures recorded -> nonzero exit
        report = json.loads((out / "report.json").read_text())
        failures = [m for m in report["per_image"] if m["failures"]]
        assert len(failures) == 2 * len(subjects) - 1

    def test_requires_exactly_one_source(self, prepared, tmp_path, capsys):
        root, manifest = prepared
        code = main(["evaluate", "--root", str(root), "--manifest", str(manifest), "--out", str(tmp_path / "no")])
        assert code == 2


class TestStudyServeValidation:
    def test_pool_too_small_startup_error(self, dataset_root, tmp_path, capsys, monkeypatch):
        # default composition (96+72) cannot be served from 6 subjects
        called = {}

        def fake_run(*args, **kwargs):  # pragma: no cover - must not be reached
            called["ran"] = True

        monkeypatch.setattr("uvicorn.run", fake_run)
        code = main(
            [
                "study-serve",
                "--real-dir",
                str(dataset_root),
                "--synthetic",
                f"cyclegan={dataset_root}",
                "--store",
                str(tmp_path / "store"),
            ]
        )
        assert code == 2
        assert "ran" not in called
        assert "pool" in capsys.readouterr().err

    def test_small_composition_starts(self, dataset_root, tmp_path, monkeypatch):
        called = {}

        def fake_run(app, **kwargs):
            called["app"] = app

        monkeypatch.setattr("uvicorn.run", fake_run)
        code = main(
            [
                "study-serve",
                "--real-dir",
                str(dataset_root),
                "--synthetic",
                f"cyclegan={dataset_root}",
                "--store",
                str(tmp_path / "store"),
                "--n-real",
                "4",
                "--n-synthetic",
                "4",
            ]
        )
        assert code == 0
        assert "app" in called

    def test_bad_synthetic_spec(self, dataset_root, tmp_path, capsys):
        code = main(
            [
                "study-serve",
                "--real-dir",
                str(dataset_root),
                "--synthetic",
                "no-equals-sign",
                "--store",
                str(tmp_path / "store"),
            ]
        )
        assert code == 2


class TestKindOverride:
    def test_kind_flag_overrides_config(self, prepared, tmp_path):
        root, manifest = prepared
        config = write_config(tmp_path / "run.cfg", kind="generators_s", epochs=1)
        out_dir = tmp_path / "override_run"
        code = main(
            [
                "train",
                "--config",
                str(config),
                "--kind",
                "simple",
                "--root",
                str(root),
                "--manifest",
                str(manifest),
                "--out",
                str(out_dir),
            ]
        )
        assert code == 0
        assert (out_dir / "simple_epoch1.ckpt").exists()
