"""Optimization loops for the five model kinds, with checkpointing and history.

Training is seed-deterministic: identical config + data reproduce the same
loss history. The per-epoch history is exportable as CSV with the schema
``epoch,loss_name,value,wall_seconds``.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import torch

from .data import Batch, PairedDataset, make_batches, zscore_normalize
from .errors import ConfigError, FormatError, NumericalError
from .losses import (
    ADVERSARIAL_KINDS,
    LossWeights,
    adversarial_loss,
    cycle_loss,
    kl_loss,
    normalize_kind,
    supervised_mae_loss,
    total_loss,
)
from .networks import ModelBundle, build_model, unique_parameters

CHECKPOINT_FORMAT = "mrtranslate-checkpoint-v1"

_CONFIG_BOOL_KEYS = {"lr_decay"}
_CONFIG_INT_KEYS = {"epochs", "batch_size", "seed", "checkpoint_every", "base_width", "n_residual_blocks"}
_CONFIG_FLOAT_KEYS = {"learning_rate", "beta1", "beta2", "w_adv", "w_cyc", "w_sup", "w_kl", "w_vae_rec"}
_CONFIG_STR_KEYS = {"kind", "mode", "adversarial_form"}


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    Paired mode is required for the supervised kinds (cyclegan_s,
    generators_s, simple); unpaired mode is permitted only for cyclegan and
    unit.
    """

    kind: str
    epochs: int = 180
    batch_size: int = 1
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    mode: str = "paired"
    checkpoint_every: int = 50
    adversarial_form: str = "lsgan"
    lr_decay: bool = False
    base_width: int = 64
    n_residual_blocks: int = 9
    loss_weights: LossWeights | None = None

    def __post_init__(self):
        self.kind = normalize_kind(self.kind)

    def resolved_weights(self) -> LossWeights:
        return self.loss_weights or LossWeights.defaults_for(self.kind)

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.mode not in ("paired", "unpaired"):
            raise ConfigError(f"mode must be 'paired' or 'unpaired', got {self.mode!r}")
        if self.mode == "unpaired" and self.kind not in ("cyclegan", "unit"):
            raise ConfigError(f"{self.kind} requires paired training data")
        if self.adversarial_form not in ("lsgan", "bce"):
            raise ConfigError(f"adversarial_form must be 'lsgan' or 'bce', got {self.adversarial_form!r}")
        self.resolved_weights().validate_for_kind(self.kind)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["loss_weights"] = self.resolved_weights().as_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        weights = data.pop("loss_weights", None)
        if weights is not None:
            weights = LossWeights(**weights)
        return cls(loss_weights=weights, **data)


def parse_train_config(path: str | Path) -> TrainConfig:
    """Parse a flat ``key = value`` training config file.

    Recognized keys: kind, epochs, batch_size, learning_rate, beta1, beta2,
    seed, mode, checkpoint_every, adversarial_form, lr_decay, base_width,
    n_residual_blocks, and the loss weights w_adv, w_cyc, w_sup, w_kl,
    w_vae_rec (unset weights take the kind's defaults). ``#`` starts a
    comment.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value

    if "kind" not in values:
        raise ConfigError(f"{path}: config must set 'kind'")
    kwargs: dict = {}
    weight_values: dict[str, float] = {}
    for key, value in values.items():
        try:
            if key in _CONFIG_INT_KEYS:
                kwargs[key] = int(value)
            elif key in _CONFIG_FLOAT_KEYS and key.startswith("w_"):
                weight_values[key] = float(value)
            elif key in _CONFIG_FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key in _CONFIG_BOOL_KEYS:
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                kwargs[key] = value.lower() in ("true", "1")
            elif key in _CONFIG_STR_KEYS:
                kwargs[key] = value
            else:
                raise ConfigError(f"{path}: unknown config key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {key!r}: {value!r}") from exc

    if weight_values:
        weights = LossWeights.defaults_for(kwargs["kind"]).as_dict()
        weights.update(weight_values)
        kwargs["loss_weights"] = LossWeights(**weights)
    config = TrainConfig(**kwargs)
    config.validate()
    return config


@dataclass
class EpochRecord:
    """Loss components and wall time for one completed epoch."""

    epoch: int
    losses: dict[str, float]
    wall_seconds: float
    resumed: bool = False

    def __post_init__(self):
        bad = {k: v for k, v in self.losses.items() if not _finite(v)}
        if bad:
            raise NumericalError(f"non-finite loss components at epoch {self.epoch}: {bad}")


def _finite(value: float) -> bool:
    return value == value and abs(value) != float("inf")


def _batch_tensors(batch: Batch) -> tuple[torch.Tensor, torch.Tensor]:
    xa = torch.stack(
        [torch.as_tensor(zscore_normalize(s).pixels, dtype=torch.float32) for s in batch.t1]
    )[:, None]
    xb = torch.stack(
        [torch.as_tensor(zscore_normalize(s).pixels, dtype=torch.float32) for s in batch.t2]
    )[:, None]
    return xa, xb


def _step_supervised(bundle: ModelBundle, opt_g, xa, xb, weights: LossWeights) -> dict[str, float]:
    opt_g.zero_grad()
    sup = 0.5 * (
        supervised_mae_loss(bundle.G_ab(xa), xb) + supervised_mae_loss(bundle.G_ba(xb), xa)
    )
    loss = total_loss(bundle.kind, {"supervised": sup}, weights)
    loss.backward()
    opt_g.step()
    return {"supervised": sup.item(), "total": loss.item()}


def _step_cyclegan(
    bundle: ModelBundle, opt_g, opt_d, xa, xb, weights: LossWeights, form: str
) -> dict[str, float]:
    fake_b = bundle.G_ab(xa)
    fake_a = bundle.G_ba(xb)

    opt_d.zero_grad()
    d_loss = 0.5 * (
        adversarial_loss(bundle.D_a(xa), bundle.D_a(fake_a.detach()), "discriminator", form)
        + adversarial_loss(bundle.D_b(xb), bundle.D_b(fake_b.detach()), "discriminator", form)
    )
    d_loss.backward()
    opt_d.step()

    opt_g.zero_grad()
    adv = 0.5 * (
        adversarial_loss(None, bundle.D_b(fake_b), "generator", form)
        + adversarial_loss(None, bundle.D_a(fake_a), "generator", form)
    )
    cyc = 0.5 * (cycle_loss(xa, bundle.G_ba(fake_b)) + cycle_loss(xb, bundle.G_ab(fake_a)))
    parts: dict = {"adversarial": adv, "cycle": cyc}
    components = {"disc": d_loss.item(), "adversarial": adv.item(), "cycle": cyc.item()}
    if bundle.kind == "cyclegan_s":
        sup = 0.5 * (supervised_mae_loss(fake_b, xb) + supervised_mae_loss(fake_a, xa))
        parts["supervised"] = sup
        components["supervised"] = sup.item()
    g_loss = total_loss(bundle.kind, parts, weights)
    g_loss.backward()
    opt_g.step()
    components["total"] = g_loss.item()
    return components


def _step_unit(
    bundle: ModelBundle,
    opt_g,
    opt_d,
    xa,
    xb,
    weights: LossWeights,
    form: str,
    noise_rng: torch.Generator,
) -> dict[str, float]:
    def sample(mu):
        return mu + torch.empty_like(mu).normal_(generator=noise_rng)

    mu_a = bundle.E_a(xa)
    mu_b = bundle.E_b(xb)
    z_a, z_b = sample(mu_a), sample(mu_b)
    recon_a, recon_b = bundle.G_ba(z_a), bundle.G_ab(z_b)
    fake_b, fake_a = bundle.G_ab(z_a), bundle.G_ba(z_b)

    opt_d.zero_grad()
    d_loss = 0.5 * (
        adversarial_loss(bundle.D_a(xa), bundle.D_a(fake_a.detach()), "discriminator", form)
        + adversarial_loss(bundle.D_b(xb), bundle.D_b(fake_b.detach()), "discriminator", form)
    )
    d_loss.backward()
    opt_d.step()

    # adversarial and cycle terms are optional for unit (their weights may be 0)
    parts = {}
    kl_terms = [kl_loss(mu_a), kl_loss(mu_b)]
    if weights.w_adv > 0:
        parts["adversarial"] = 0.5 * (
            adversarial_loss(None, bundle.D_b(fake_b), "generator", form)
            + adversarial_loss(None, bundle.D_a(fake_a), "generator", form)
        )
    if weights.w_cyc > 0:
        mu_ab = bundle.E_b(fake_b)
        mu_ba = bundle.E_a(fake_a)
        x_aba = bundle.G_ba(sample(mu_ab))
        x_bab = bundle.G_ab(sample(mu_ba))
        parts["cycle"] = 0.5 * (cycle_loss(xa, x_aba) + cycle_loss(xb, x_bab))
        kl_terms += [kl_loss(mu_ab), kl_loss(mu_ba)]
    parts["kl"] = sum(kl_terms) / len(kl_terms)
    parts["vae_reconstruction"] = 0.5 * (
        supervised_mae_loss(recon_a, xa) + supervised_mae_loss(recon_b, xb)
    )
    g_loss = total_loss("unit", parts, weights)
    opt_g.zero_grad()
    g_loss.backward()
    opt_g.step()
    components = {name: value.item() for name, value in parts.items()}
    components["disc"] = d_loss.item()
    components["total"] = g_loss.item()
    return components


def _make_optimizers(bundle: ModelBundle, config: TrainConfig):
    betas = (config.beta1, config.beta2)
    opt_g = torch.optim.Adam(
        unique_parameters(*bundle.generator_modules()), lr=config.learning_rate, betas=betas
    )
    opt_d = None
    if bundle.kind in ADVERSARIAL_KINDS:
        opt_d = torch.optim.Adam(
            unique_parameters(*bundle.discriminator_modules()), lr=config.learning_rate, betas=betas
        )
    return opt_g, opt_d


def _decay_factor(epoch: int, total: int) -> float:
    # linear decay from full rate at epoch 1 to ~0 at the final epoch
    return max(0.0, 1.0 - epoch / total)


def train(
    config: TrainConfig,
    data: PairedDataset,
    *,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    progress=None,
) -> tuple[ModelBundle, list[EpochRecord]]:
    """Run the optimization loop for ``config.kind`` and return (bundle, history).

    Adversarial kinds alternate a discriminator and a generator update on
    every batch. ``resume_from`` continues a checkpointed run; its first new
    epoch record carries ``resumed=True``. ``progress`` is an optional
    callback receiving each EpochRecord.
    """
    config.validate()
    if data.split != "train":
        raise ConfigError(f"training requires the train split, got {data.split!r}")
    if len(data) == 0:
        raise ConfigError("training dataset is empty")
    shapes = {s.pixels.shape for pair in data.pairs for s in pair}
    if len(shapes) != 1:
        raise ConfigError(f"all training slices must share one shape, got {sorted(shapes)}")
    image_shape = next(iter(shapes))
    weights = config.resolved_weights()

    history: list[EpochRecord] = []
    start_epoch = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.bundle.kind != config.kind:
            raise ConfigError(
                f"checkpoint kind {ckpt.bundle.kind!r} does not match config kind {config.kind!r}"
            )
        if ckpt.bundle.image_shape != tuple(image_shape):
            raise ConfigError(
                f"checkpoint shape {ckpt.bundle.image_shape} does not match data shape {tuple(image_shape)}"
            )
        bundle = ckpt.bundle
        start_epoch = ckpt.epoch
        history = list(ckpt.history)
        if start_epoch >= config.epochs:
            raise ConfigError(
                f"checkpoint is already at epoch {start_epoch} >= target epochs {config.epochs}"
            )
    else:
        bundle = build_model(
            config.kind,
            tuple(image_shape),
            config.seed,
            base_width=config.base_width,
            n_residual_blocks=config.n_residual_blocks,
            loss_weights=weights,
        )

    torch.manual_seed(config.seed)
    noise_rng = torch.Generator().manual_seed(config.seed + 0x5EED)
    opt_g, opt_d = _make_optimizers(bundle, config)

    for epoch in range(start_epoch, config.epochs):
        if config.lr_decay:
            factor = _decay_factor(epoch, config.epochs)
            for opt in (opt_g, opt_d):
                if opt is not None:
                    for group in opt.param_groups:
                        group["lr"] = config.learning_rate * factor

        started = time.perf_counter()
        sums: dict[str, float] = {}
        batches = make_batches(data, config.batch_size, config.mode, seed=config.seed + epoch)
        for batch_index, batch in enumerate(batches):
            xa, xb = _batch_tensors(batch)
            if bundle.kind in ("generators_s", "simple"):
                components = _step_supervised(bundle, opt_g, xa, xb, weights)
            elif bundle.kind in ("cyclegan", "cyclegan_s"):
                components = _step_cyclegan(
                    bundle, opt_g, opt_d, xa, xb, weights, config.adversarial_form
                )
            else:
                components = _step_unit(
                    bundle, opt_g, opt_d, xa, xb, weights, config.adversarial_form, noise_rng
                )
            if not all(_finite(v) for v in components.values()):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch + 1}, batch {batch_index}: {components}"
                )
            for name, value in components.items():
                sums[name] = sums.get(name, 0.0) + value

        record = EpochRecord(
            epoch=epoch + 1,
            losses={name: value / len(batches) for name, value in sums.items()},
            wall_seconds=time.perf_counter() - started,
            resumed=(resume_from is not None and epoch == start_epoch),
        )
        history.append(record)
        if progress is not None:
            progress(record)

        if out_dir is not None and (
            (epoch + 1) % config.checkpoint_every == 0 or epoch + 1 == config.epochs
        ):
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            save_checkpoint(bundle, config, epoch + 1, out / f"{bundle.kind}_epoch{epoch + 1}.ckpt", history)

    if out_dir is not None:
        write_history_csv(Path(out_dir) / "history.csv", history)
    return bundle, history


@dataclass
class Checkpoint:
    """A loaded checkpoint: the rebuilt bundle, its config, epoch, and history."""

    bundle: ModelBundle
    config: TrainConfig
    epoch: int
    history: list[EpochRecord] = field(default_factory=list)


def save_checkpoint(
    bundle: ModelBundle,
    config: TrainConfig,
    epoch: int,
    path: str | Path,
    history: list[EpochRecord] | None = None,
) -> None:
    """Write all parameter tensors plus a JSON sidecar describing the run."""
    path = Path(path)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "kind": bundle.kind,
        "image_shape": list(bundle.image_shape),
        "seed": bundle.seed,
        "base_width": bundle.base_width,
        "epoch": int(epoch),
        "loss_weights": bundle.loss_weights.as_dict(),
        "config": config.to_dict(),
        "state": {name: module.state_dict() for name, module in bundle.components().items()},
        "history": [asdict(record) for record in (history or [])],
    }
    torch.save(payload, path)
    sidecar = {
        "kind": bundle.kind,
        "image_shape": list(bundle.image_shape),
        "seed": bundle.seed,
        "loss_weights": bundle.loss_weights.as_dict(),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Rebuild a bundle from a checkpoint; load ∘ save is parameter-bitwise identity."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"no such checkpoint: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise FormatError(f"{path}: corrupt or unreadable checkpoint ({exc})") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a {CHECKPOINT_FORMAT} file")

    config = TrainConfig.from_dict(payload["config"])
    bundle = build_model(
        payload["kind"],
        tuple(payload["image_shape"]),
        payload["seed"],
        base_width=payload["base_width"],
        n_residual_blocks=config.n_residual_blocks,
        loss_weights=LossWeights(**payload["loss_weights"]),
    )
    saved_state = payload["state"]
    components = bundle.components()
    if set(saved_state) != set(components):
        raise ConfigError(
            f"{path}: checkpoint components {sorted(saved_state)} do not match "
            f"kind {bundle.kind!r} ({sorted(components)})"
        )
    for name, module in components.items():
        module.load_state_dict(saved_state[name])
    history = [EpochRecord(**record) for record in payload.get("history", [])]
    return Checkpoint(bundle=bundle, config=config, epoch=int(payload["epoch"]), history=history)


def write_history_csv(path: str | Path, history: list[EpochRecord]) -> None:
    """Emit the epoch history as ``epoch,loss_name,value,wall_seconds`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss_name", "value", "wall_seconds"])
        for record in history:
            for name, value in record.losses.items():
                writer.writerow([record.epoch, name, repr(value), record.wall_seconds])
            if record.resumed:
                writer.writerow([record.epoch, "resumed", 1.0, record.wall_seconds])
