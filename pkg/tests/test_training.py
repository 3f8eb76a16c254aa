import csv

import numpy as np
import pytest
import torch

from mrtranslate.data import ImageSlice, PairedDataset
from mrtranslate.errors import ConfigError, FormatError, NumericalError
from mrtranslate.losses import LossWeights
from mrtranslate.networks import build_model
from mrtranslate.training import (
    EpochRecord,
    TrainConfig,
    _batch_tensors,
    _step_cyclegan,
    _step_unit,
    load_checkpoint,
    parse_train_config,
    save_checkpoint,
    train,
    write_history_csv,
)

ALL_KINDS = ("cyclegan", "cyclegan_s", "unit", "generators_s", "simple")


def tiny_dataset(n=4, size=16, seed=0, split="train"):
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        sid = f"s{i:03d}"
        a = rng.normal(size=(size, size))
        b = np.tanh(a) + 0.1 * rng.normal(size=(size, size))
        pairs.append((ImageSlice(a, "T1", sid), ImageSlice(b, "T2", sid)))
    return PairedDataset(pairs, split)


def tiny_config(kind, **overrides):
    defaults = dict(
        kind=kind, epochs=2, batch_size=2, seed=0, base_width=4, checkpoint_every=100
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


class TestTrainConfig:
    def test_default_hyperparameters(self):
        config = TrainConfig(kind="cyclegan")
        assert config.epochs == 180
        assert config.batch_size == 1
        assert config.learning_rate == pytest.approx(2e-4)

    def test_unpaired_only_for_unpaired_capable_kinds(self):
        for kind in ("cyclegan_s", "generators_s", "simple"):
            with pytest.raises(ConfigError):
                TrainConfig(kind=kind, mode="unpaired").validate()
        for kind in ("cyclegan", "unit"):
            TrainConfig(kind=kind, mode="unpaired").validate()

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            TrainConfig(kind="simple", epochs=0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(kind="simple", batch_size=0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(kind="simple", learning_rate=0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(kind="nope")

    def test_roundtrip_dict(self):
        config = tiny_config("unit", loss_weights=LossWeights(w_adv=2, w_cyc=5, w_kl=0.2, w_vae_rec=3))
        recovered = TrainConfig.from_dict(config.to_dict())
        assert recovered == config


class TestConfigFile:
    def test_parse_full_config(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# toy run\n"
            "kind = cyclegan_s\n"
            "epochs = 3\n"
            "batch_size = 2\n"
            "learning_rate = 1e-3\n"
            "seed = 7\n"
            "mode = paired  # supervised needs pairs\n"
            "w_sup = 5.0\n"
        )
        config = parse_train_config(path)
        assert config.kind == "cyclegan_s"
        assert config.epochs == 3
        assert config.learning_rate == pytest.approx(1e-3)
        assert config.resolved_weights().w_sup == 5.0
        assert config.resolved_weights().w_cyc == 10.0  # untouched default

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("kind = simple\nmomentum = 0.9\n")
        with pytest.raises(ConfigError):
            parse_train_config(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("kind = simple\nepochs = many\n")
        with pytest.raises(ConfigError):
            parse_train_config(path)

    def test_kind_required(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("epochs = 5\n")
        with pytest.raises(ConfigError):
            parse_train_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_train_config(tmp_path / "none.cfg")


class TestTrainSmoke:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_two_epochs(self, kind):
        bundle, history = train(tiny_config(kind), tiny_dataset())
        assert len(history) == 2
        assert history[0].epoch == 1 and history[1].epoch == 2
        for record in history:
            assert all(np.isfinite(v) for v in record.losses.values())
        assert bundle.kind == kind

    def test_requires_train_split(self):
        with pytest.raises(ConfigError):
            train(tiny_config("simple"), tiny_dataset(split="test"))

    def test_mixed_shapes_rejected(self):
        ds = tiny_dataset()
        odd = tiny_dataset(n=1, size=32)
        mixed = PairedDataset(ds.pairs + odd.pairs, "train")
        with pytest.raises(ConfigError):
            train(tiny_config("simple"), mixed)

    def test_unpaired_smoke(self):
        bundle, history = train(
            tiny_config("cyclegan", epochs=1, mode="unpaired"), tiny_dataset()
        )
        assert len(history) == 1

    def test_supervised_loss_decreases(self):
        config = tiny_config("simple", epochs=25, batch_size=4, learning_rate=2e-3)
        _, history = train(config, tiny_dataset(n=8))
        assert history[-1].losses["supervised"] < history[0].losses["supervised"]

    def test_unit_with_optional_terms_disabled(self):
        # w_adv and w_cyc may be zero for unit (pure VAE ablation)
        config = tiny_config(
            "unit", epochs=1, loss_weights=LossWeights(w_kl=0.1, w_vae_rec=10.0)
        )
        _, history = train(config, tiny_dataset())
        assert "adversarial" not in history[0].losses
        assert "cycle" not in history[0].losses
        assert "vae_reconstruction" in history[0].losses


class TestDeterminism:
    @pytest.mark.parametrize("kind", ["simple", "cyclegan", "unit"])
    def test_identical_histories(self, kind):
        first = train(tiny_config(kind, epochs=1), tiny_dataset())[1]
        second = train(tiny_config(kind, epochs=1), tiny_dataset())[1]
        assert first[0].losses == second[0].losses

    def test_seed_changes_history(self):
        first = train(tiny_config("simple", epochs=1), tiny_dataset())[1]
        second = train(tiny_config("simple", epochs=1, seed=1), tiny_dataset())[1]
        assert first[0].losses != second[0].losses


class TestParameterIsolation:
    def _tensors(self):
        ds = tiny_dataset()
        from mrtranslate.data import make_batches

        return _batch_tensors(make_batches(ds, 4, "paired", 0)[0])

    @staticmethod
    def _snapshot(module):
        return [p.detach().clone() for p in module.parameters()]

    @staticmethod
    def _identical(module, snapshot):
        return all(torch.equal(p, s) for p, s in zip(module.parameters(), snapshot))

    def test_discriminator_step_leaves_generators_untouched(self):
        bundle = build_model("cyclegan", (16, 16), seed=0, base_width=4)
        xa, xb = self._tensors()
        opt_g = torch.optim.Adam(
            list(bundle.G_ab.parameters()) + list(bundle.G_ba.parameters()), lr=0.0
        )
        opt_d = torch.optim.Adam(
            list(bundle.D_a.parameters()) + list(bundle.D_b.parameters()), lr=1e-3
        )
        g_before = self._snapshot(bundle.G_ab) + self._snapshot(bundle.G_ba)
        d_before = self._snapshot(bundle.D_a)
        _step_cyclegan(bundle, opt_g, opt_d, xa, xb, bundle.loss_weights, "lsgan")
        combined = list(bundle.G_ab.parameters()) + list(bundle.G_ba.parameters())
        assert all(torch.equal(p, s) for p, s in zip(combined, g_before))
        assert not self._identical(bundle.D_a, d_before)

    def test_generator_step_leaves_discriminators_untouched(self):
        bundle = build_model("cyclegan", (16, 16), seed=0, base_width=4)
        xa, xb = self._tensors()
        opt_g = torch.optim.Adam(
            list(bundle.G_ab.parameters()) + list(bundle.G_ba.parameters()), lr=1e-3
        )
        opt_d = torch.optim.Adam(
            list(bundle.D_a.parameters()) + list(bundle.D_b.parameters()), lr=0.0
        )
        g_before = self._snapshot(bundle.G_ab)
        d_before = self._snapshot(bundle.D_a) + self._snapshot(bundle.D_b)
        _step_cyclegan(bundle, opt_g, opt_d, xa, xb, bundle.loss_weights, "lsgan")
        combined = list(bundle.D_a.parameters()) + list(bundle.D_b.parameters())
        assert all(torch.equal(p, s) for p, s in zip(combined, d_before))
        assert not self._identical(bundle.G_ab, g_before)


class TestUnitStep:
    def test_shared_parameters_stay_shared_after_step(self):
        bundle = build_model("unit", (16, 16), seed=0, base_width=4)
        xa, xb = TestParameterIsolation()._tensors()
        from mrtranslate.networks import unique_parameters

        opt_g = torch.optim.Adam(unique_parameters(*bundle.generator_modules()), lr=1e-3)
        opt_d = torch.optim.Adam(unique_parameters(*bundle.discriminator_modules()), lr=1e-3)
        rng = torch.Generator().manual_seed(0)
        before = [p.detach().clone() for p in bundle.E_a.shared.parameters()]
        _step_unit(bundle, opt_g, opt_d, xa, xb, bundle.loss_weights, "lsgan", rng)
        # single shared storage: both encoders still see identical tensors
        for pa, pb in zip(bundle.E_a.shared.parameters(), bundle.E_b.shared.parameters()):
            assert pa is pb
            assert torch.equal(pa, pb)
        # and the step actually moved the shared block
        moved = any(
            not torch.equal(p, b)
            for p, b in zip(bundle.E_a.shared.parameters(), before)
        )
        assert moved


class TestNanAbort:
    def test_poisoned_resume_aborts_with_location(self, tmp_path):
        config = tiny_config("simple", epochs=1)
        bundle, history = train(config, tiny_dataset())
        with torch.no_grad():
            next(bundle.G_ab.parameters())[0, 0, 0, 0] = float("nan")
        ckpt = tmp_path / "poisoned.ckpt"
        save_checkpoint(bundle, config, 1, ckpt, history)
        resume_config = tiny_config("simple", epochs=2)
        with pytest.raises(NumericalError, match="epoch 2, batch 0"):
            train(resume_config, tiny_dataset(), resume_from=ckpt)

    def test_epoch_record_rejects_nan(self):
        with pytest.raises(NumericalError):
            EpochRecord(epoch=1, losses={"total": float("nan")}, wall_seconds=0.1)


class TestCheckpointing:
    @pytest.mark.parametrize("kind", ["simple", "unit"])
    def test_roundtrip_bitwise(self, tmp_path, kind):
        config = tiny_config(kind, epochs=1)
        bundle, history = train(config, tiny_dataset())
        path = tmp_path / f"{kind}.ckpt"
        save_checkpoint(bundle, config, 1, path, history)
        loaded = load_checkpoint(path)
        assert loaded.epoch == 1
        assert loaded.config.to_dict() == config.to_dict()
        for name, module in bundle.components().items():
            for (pname, p), (_, q) in zip(
                module.state_dict().items(), loaded.bundle.components()[name].state_dict().items()
            ):
                assert torch.equal(p, q), f"{name}.{pname} differs after reload"

    def test_sidecar_written(self, tmp_path):
        config = tiny_config("simple", epochs=1)
        bundle, _ = train(config, tiny_dataset())
        path = tmp_path / "model.ckpt"
        save_checkpoint(bundle, config, 1, path)
        import json

        sidecar = json.loads((tmp_path / "model.ckpt.json").read_text())
        assert sidecar["kind"] == "simple"
        assert sidecar["image_shape"] == [16, 16]
        assert "loss_weights" in sidecar and "seed" in sidecar

    def test_truncated_file(self, tmp_path):
        config = tiny_config("simple", epochs=1)
        bundle, _ = train(config, tiny_dataset())
        path = tmp_path / "model.ckpt"
        save_checkpoint(bundle, config, 1, path)
        path.write_bytes(path.read_bytes()[: path.stat().st_size // 2])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "none.ckpt")

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_resume_kind_mismatch(self, tmp_path):
        config = tiny_config("simple", epochs=1)
        bundle, _ = train(config, tiny_dataset())
        path = tmp_path / "model.ckpt"
        save_checkpoint(bundle, config, 1, path)
        with pytest.raises(ConfigError):
            train(tiny_config("generators_s", epochs=2), tiny_dataset(), resume_from=path)


class TestResume:
    def test_resumed_history_complete_with_marker(self, tmp_path):
        config = tiny_config("simple", epochs=2, checkpoint_every=1)
        train(config, tiny_dataset(), out_dir=tmp_path)
        resume_config = tiny_config("simple", epochs=4, checkpoint_every=1)
        bundle, history = train(
            resume_config, tiny_dataset(), resume_from=tmp_path / "simple_epoch2.ckpt"
        )
        assert [r.epoch for r in history] == [1, 2, 3, 4]
        assert [r.resumed for r in history] == [False, False, True, False]

    def test_resume_past_target(self, tmp_path):
        config = tiny_config("simple", epochs=2, checkpoint_every=2)
        train(config, tiny_dataset(), out_dir=tmp_path)
        with pytest.raises(ConfigError):
            train(tiny_config("simple", epochs=2), tiny_dataset(), resume_from=tmp_path / "simple_epoch2.ckpt")


class TestHistoryCsv:
    def test_schema(self, tmp_path):
        history = [
            EpochRecord(epoch=1, losses={"total": 0.5, "supervised": 0.5}, wall_seconds=1.0),
            EpochRecord(epoch=2, losses={"total": 0.4, "supervised": 0.4}, wall_seconds=1.1, resumed=True),
        ]
        path = tmp_path / "history.csv"
        write_history_csv(path, history)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "loss_name", "value", "wall_seconds"]
        assert ["2", "resumed", "1.0", "1.1"] in rows
        assert len(rows) == 1 + 2 + 2 + 1  # header + 2 losses per epoch + resume marker

    def test_written_by_train(self, tmp_path):
        train(tiny_config("simple", epochs=1), tiny_dataset(), out_dir=tmp_path)
        assert (tmp_path / "history.csv").exists()
        assert (tmp_path / "simple_epoch1.ckpt").exists()
