"""Training objectives: adversarial, cycle-consistency, supervised MAE, and VAE terms.

All functions accept torch tensors (or anything ``torch.as_tensor`` accepts)
and return 0-dim tensors so they compose with autograd. Use ``.item()`` for a
plain float.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
import torch.nn.functional as F

from .errors import ConfigError, NumericalError, ShapeError

KINDS = ("cyclegan", "cyclegan_s", "unit", "generators_s", "simple")

#: kinds that carry discriminators and an adversarial objective
ADVERSARIAL_KINDS = ("cyclegan", "cyclegan_s", "unit")
#: kinds trained purely on the supervised MAE objective
SUPERVISED_ONLY_KINDS = ("generators_s", "simple")

LOSS_PART_WEIGHTS = {
    "adversarial": "w_adv",
    "cycle": "w_cyc",
    "supervised": "w_sup",
    "kl": "w_kl",
    "vae_reconstruction": "w_vae_rec",
}


def normalize_kind(kind: str) -> str:
    canonical = kind.strip().lower()
    if canonical not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    return canonical


@dataclass
class LossWeights:
    """Non-negative weights for the loss terms a model kind combines."""

    w_adv: float = 0.0
    w_cyc: float = 0.0
    w_sup: float = 0.0
    w_kl: float = 0.0
    w_vae_rec: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ConfigError(f"{name} must be >= 0, got {value}")

    @classmethod
    def defaults_for(cls, kind: str) -> "LossWeights":
        kind = normalize_kind(kind)
        if kind == "cyclegan":
            return cls(w_adv=1.0, w_cyc=10.0)
        if kind == "cyclegan_s":
            return cls(w_adv=1.0, w_cyc=10.0, w_sup=10.0)
        if kind == "unit":
            return cls(w_adv=1.0, w_cyc=10.0, w_kl=0.1, w_vae_rec=10.0)
        # generators_s / simple: pure MAE objective, weight scale is irrelevant
        return cls(w_sup=1.0)

    def validate_for_kind(self, kind: str) -> None:
        kind = normalize_kind(kind)
        if kind == "cyclegan":
            if self.w_sup != 0 or self.w_kl != 0:
                raise ConfigError("cyclegan requires w_sup = 0 and w_kl = 0")
            if self.w_adv <= 0 or self.w_cyc <= 0:
                raise ConfigError("cyclegan requires w_adv > 0 and w_cyc > 0")
        elif kind == "cyclegan_s":
            if self.w_sup <= 0:
                raise ConfigError("cyclegan_s requires w_sup > 0")
            if self.w_adv <= 0 or self.w_cyc <= 0:
                raise ConfigError("cyclegan_s requires w_adv > 0 and w_cyc > 0")
        elif kind in SUPERVISED_ONLY_KINDS:
            if self.w_sup <= 0:
                raise ConfigError(f"{kind} requires w_sup > 0")
            if any((self.w_adv, self.w_cyc, self.w_kl, self.w_vae_rec)):
                raise ConfigError(f"{kind} admits only the supervised term")
        elif kind == "unit":
            if self.w_kl <= 0 or self.w_vae_rec <= 0:
                raise ConfigError("unit requires w_kl > 0 and w_vae_rec > 0")
            if self.w_sup != 0:
                raise ConfigError("unit does not take a supervised term")

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    pixels = getattr(x, "pixels", x)
    return torch.as_tensor(pixels, dtype=torch.float64)


def adversarial_loss(
    scores_real: torch.Tensor | None,
    scores_fake: torch.Tensor,
    role: str,
    form: str = "lsgan",
) -> torch.Tensor:
    """Least-squares (or cross-entropy) GAN objective over patch score grids.

    Discriminator role: mean((real - 1)^2) + mean(fake^2).
    Generator role:     mean((fake - 1)^2); ``scores_real`` is ignored.
    """
    if role not in ("discriminator", "generator"):
        raise ConfigError(f"role must be 'discriminator' or 'generator', got {role!r}")
    if form not in ("lsgan", "bce"):
        raise ConfigError(f"form must be 'lsgan' or 'bce', got {form!r}")
    fake = _tensor(scores_fake)
    real = _tensor(scores_real) if scores_real is not None else None
    if role == "discriminator" and real is None:
        raise ConfigError("discriminator role requires scores_real")
    for name, scores in (("scores_real", real), ("scores_fake", fake)):
        if scores is not None and not torch.isfinite(scores).all():
            raise NumericalError(f"{name} contains NaN/Inf")
    if form == "lsgan":
        if role == "discriminator":
            return ((real - 1.0) ** 2).mean() + (fake**2).mean()
        return ((fake - 1.0) ** 2).mean()
    if role == "discriminator":
        return F.binary_cross_entropy_with_logits(
            real, torch.ones_like(real)
        ) + F.binary_cross_entropy_with_logits(fake, torch.zeros_like(fake))
    return F.binary_cross_entropy_with_logits(fake, torch.ones_like(fake))


def cycle_loss(x, x_cyc) -> torch.Tensor:
    """Mean absolute difference between an image and its round-trip translation."""
    a, b = _tensor(x), _tensor(x_cyc)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def supervised_mae_loss(y_pred, y_true) -> torch.Tensor:
    """Mean absolute error against ground truth (same form as the cycle term)."""
    return cycle_loss(y_pred, y_true)


def kl_loss(latent_mean) -> torch.Tensor:
    """Unit-variance Gaussian prior penalty on an encoder's mean field."""
    mu = _tensor(latent_mean)
    if not torch.isfinite(mu).all():
        raise NumericalError("latent mean contains NaN/Inf")
    return (mu**2).mean()


def total_loss(kind: str, parts: dict, weights: LossWeights) -> torch.Tensor:
    """Weighted sum of loss parts, enforcing the per-kind weight pattern.

    A part is required iff its weight is positive for this kind; supplying a
    part whose weight is zero is a configuration error, so mismatches surface
    instead of silently contributing nothing.
    """
    kind = normalize_kind(kind)
    weights.validate_for_kind(kind)
    unknown = set(parts) - set(LOSS_PART_WEIGHTS)
    if unknown:
        raise ConfigError(f"unknown loss parts: {sorted(unknown)}")
    total = None
    for part, weight_name in LOSS_PART_WEIGHTS.items():
        weight = getattr(weights, weight_name)
        if weight > 0 and part not in parts:
            raise ConfigError(f"{kind} requires loss part {part!r} ({weight_name} > 0)")
        if weight == 0 and part in parts:
            raise ConfigError(f"{kind} does not take loss part {part!r} ({weight_name} = 0)")
        if part in parts:
            term = weight * _tensor(parts[part])
            total = term if total is None else total + term
    if total is None:
        raise ConfigError(f"no loss parts supplied for kind {kind}")
    return total
