"""Network variants for contrast translation.

Five kinds are supported: ``cyclegan`` and ``cyclegan_s`` (residual generators
plus patch discriminators), ``unit`` (shared-latent encoders/decoders plus
patch discriminators), ``generators_s`` (the residual generators alone), and
``simple`` (a two-convolution baseline).

Generators end in a plain convolution, not tanh: inputs and targets are
z-scored and exceed [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError, ShapeError, UnsupportedOperationError
from .losses import ADVERSARIAL_KINDS, LossWeights, normalize_kind

DIRECTIONS = ("a2b", "b2a")

_DIRECTION_ALIASES = {
    "a2b": "a2b",
    "b2a": "b2a",
    "t1_to_t2": "a2b",
    "t2_to_t1": "b2a",
}


def normalize_direction(direction: str) -> str:
    canonical = _DIRECTION_ALIASES.get(direction.strip().lower())
    if canonical is None:
        raise ConfigError(
            f"unknown direction {direction!r}; valid: {', '.join(sorted(_DIRECTION_ALIASES))}"
        )
    return canonical


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with instance norm and an additive skip."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class ResnetGenerator(nn.Module):
    """Residual translation generator: 24 convolutional layers for 9 blocks.

    Layout: 7x7 stem, two stride-2 downsamplings, ``n_residual_blocks``
    residual blocks (2 convolutions each), two transposed-convolution
    upsamplings, 7x7 output convolution. Spatial downsampling factor is 4.
    """

    downsampling_factor = 4

    def __init__(
        self,
        in_channels: int = 1,
        out_channels: int = 1,
        base_width: int = 64,
        n_residual_blocks: int = 9,
    ):
        super().__init__()
        w = base_width
        layers: list[nn.Module] = [
            nn.Conv2d(in_channels, w, 7, padding=3, padding_mode="reflect"),
            nn.InstanceNorm2d(w),
            nn.ReLU(inplace=True),
        ]
        for _ in range(2):
            layers += [
                nn.Conv2d(w, 2 * w, 3, stride=2, padding=1),
                nn.InstanceNorm2d(2 * w),
                nn.ReLU(inplace=True),
            ]
            w *= 2
        layers += [ResidualBlock(w) for _ in range(n_residual_blocks)]
        for _ in range(2):
            layers += [
                nn.ConvTranspose2d(w, w // 2, 3, stride=2, padding=1, output_padding=1),
                nn.InstanceNorm2d(w // 2),
                nn.ReLU(inplace=True),
            ]
            w //= 2
        layers.append(nn.Conv2d(w, out_channels, 7, padding=3, padding_mode="reflect"))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


class SimpleGenerator(nn.Module):
    """Two-convolution baseline generator (no downsampling)."""

    downsampling_factor = 1

    def __init__(self, in_channels: int = 1, out_channels: int = 1, base_width: int = 64):
        super().__init__()
        self.model = nn.Sequential(
            nn.Conv2d(in_channels, base_width, 3, padding=1, padding_mode="reflect"),
            nn.ReLU(inplace=True),
            nn.Conv2d(base_width, out_channels, 3, padding=1, padding_mode="reflect"),
        )

    def forward(self, x):
        return self.model(x)


class PatchDiscriminator(nn.Module):
    """Patch discriminator: a grid of real/synthetic scores, one per patch.

    ``n_downsamplings`` stride-2 convolutions halve each spatial dimension
    (floor division), then a stride-1 convolution maps to a 1-channel score
    grid of shape (h // 2**k, w // 2**k).
    """

    def __init__(self, in_channels: int = 1, base_width: int = 64, n_downsamplings: int = 4):
        super().__init__()
        if n_downsamplings < 1:
            raise ConfigError(f"n_downsamplings must be >= 1, got {n_downsamplings}")
        self.n_downsamplings = n_downsamplings
        layers: list[nn.Module] = []
        in_ch = in_channels
        w = base_width
        for i in range(n_downsamplings):
            layers.append(nn.Conv2d(in_ch, w, 4, stride=2, padding=1))
            # no norm on the first layer (patchGAN convention) or the last,
            # whose output can be a single spatial element
            if 0 < i < n_downsamplings - 1:
                layers.append(nn.InstanceNorm2d(w))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            in_ch, w = w, min(w * 2, 8 * base_width)
        layers.append(nn.Conv2d(in_ch, 1, 3, padding=1))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)

    def score_grid_shape(self, image_shape: tuple[int, int]) -> tuple[int, int]:
        h, w = image_shape
        return (h // 2**self.n_downsamplings, w // 2**self.n_downsamplings)


class UnitEncoder(nn.Module):
    """Domain encoder mapping an image into the shared latent space.

    The final (highest-level) residual block is shared between the two
    domain encoders: pass the same module instance to both so the shared
    parameters live in a single storage.
    """

    downsampling_factor = 4

    def __init__(
        self,
        shared_block: ResidualBlock,
        in_channels: int = 1,
        base_width: int = 64,
        n_downsamplings: int = 2,
        n_residual_blocks: int = 4,
    ):
        super().__init__()
        self.n_downsamplings = n_downsamplings
        w = base_width
        layers: list[nn.Module] = [
            nn.Conv2d(in_channels, w, 7, padding=3, padding_mode="reflect"),
            nn.InstanceNorm2d(w),
            nn.ReLU(inplace=True),
        ]
        for _ in range(n_downsamplings):
            layers += [
                nn.Conv2d(w, 2 * w, 3, stride=2, padding=1),
                nn.InstanceNorm2d(2 * w),
                nn.ReLU(inplace=True),
            ]
            w *= 2
        layers += [ResidualBlock(w) for _ in range(n_residual_blocks - 1)]
        self.private = nn.Sequential(*layers)
        self.shared = shared_block

    def forward(self, x):
        return self.shared(self.private(x))


class UnitDecoder(nn.Module):
    """Domain decoder from the shared latent space back to image space.

    The first residual block is shared between the two domain decoders
    (single module instance), mirroring the encoder sharing.
    """

    def __init__(
        self,
        shared_block: ResidualBlock,
        out_channels: int = 1,
        base_width: int = 64,
        n_upsamplings: int = 2,
        n_residual_blocks: int = 4,
    ):
        super().__init__()
        self.shared = shared_block
        w = base_width * 2**n_upsamplings
        layers: list[nn.Module] = [ResidualBlock(w) for _ in range(n_residual_blocks - 1)]
        for _ in range(n_upsamplings):
            layers += [
                nn.ConvTranspose2d(w, w // 2, 3, stride=2, padding=1, output_padding=1),
                nn.InstanceNorm2d(w // 2),
                nn.ReLU(inplace=True),
            ]
            w //= 2
        layers.append(nn.Conv2d(w, out_channels, 7, padding=3, padding_mode="reflect"))
        self.private = nn.Sequential(*layers)

    def forward(self, z):
        return self.private(self.shared(z))


@dataclass
class GeneratorSpec:
    """Construction recipe for a generator network."""

    arch: str  # resnet24 | simple2 | unit_decoder
    in_channels: int = 1
    out_channels: int = 1
    base_width: int = 64
    n_residual_blocks: int = 9

    def build(self, shared_block: ResidualBlock | None = None) -> nn.Module:
        if self.arch == "resnet24":
            return ResnetGenerator(
                self.in_channels, self.out_channels, self.base_width, self.n_residual_blocks
            )
        if self.arch == "simple2":
            return SimpleGenerator(self.in_channels, self.out_channels, self.base_width)
        if self.arch == "unit_decoder":
            if shared_block is None:
                raise ConfigError("unit_decoder requires a shared residual block")
            return UnitDecoder(
                shared_block,
                out_channels=self.out_channels,
                base_width=self.base_width,
                n_residual_blocks=self.n_residual_blocks,
            )
        raise ConfigError(f"unknown generator arch {self.arch!r}")


@dataclass
class DiscriminatorSpec:
    """Construction recipe for a patch discriminator."""

    arch: str = "patch"
    n_downsamplings: int = 4
    base_width: int = 64

    def build(self, in_channels: int = 1) -> PatchDiscriminator:
        if self.arch != "patch":
            raise ConfigError(f"unknown discriminator arch {self.arch!r}")
        return PatchDiscriminator(in_channels, self.base_width, self.n_downsamplings)


@dataclass
class Latent:
    """Encoder output: the latent mean field and a reparameterized sample."""

    mean: np.ndarray
    sample: np.ndarray


@dataclass
class ModelBundle:
    """A named model variant with its networks and loss configuration.

    A = T1 and B = T2 throughout. For ``unit``, ``G_ab``/``G_ba`` are the
    decoders producing B/A from the shared latent space and are composed
    with the encoders in :func:`generate`.
    """

    kind: str
    image_shape: tuple[int, int]
    seed: int
    G_ab: nn.Module
    G_ba: nn.Module
    D_a: PatchDiscriminator | None = None
    D_b: PatchDiscriminator | None = None
    E_a: UnitEncoder | None = None
    E_b: UnitEncoder | None = None
    loss_weights: LossWeights = field(default_factory=LossWeights)
    base_width: int = 64

    def __post_init__(self):
        self.kind = normalize_kind(self.kind)
        has_disc = self.D_a is not None and self.D_b is not None
        if self.kind in ADVERSARIAL_KINDS and not has_disc:
            raise ConfigError(f"{self.kind} requires both discriminators")
        if self.kind not in ADVERSARIAL_KINDS and (self.D_a or self.D_b):
            raise ConfigError(f"{self.kind} does not carry discriminators")
        has_enc = self.E_a is not None and self.E_b is not None
        if (self.kind == "unit") != has_enc:
            raise ConfigError("encoders are required for unit and forbidden otherwise")

    def components(self) -> dict[str, nn.Module]:
        """Named networks present in this bundle, in a stable order."""
        out = {"G_ab": self.G_ab, "G_ba": self.G_ba}
        for name in ("D_a", "D_b", "E_a", "E_b"):
            module = getattr(self, name)
            if module is not None:
                out[name] = module
        return out

    def generator_modules(self) -> list[nn.Module]:
        mods = [self.G_ab, self.G_ba]
        if self.kind == "unit":
            mods += [self.E_a, self.E_b]
        return mods

    def discriminator_modules(self) -> list[nn.Module]:
        return [m for m in (self.D_a, self.D_b) if m is not None]


def count_conv_layers(module: nn.Module) -> int:
    """Number of convolutional layers (regular + transposed) in a module tree."""
    seen = set()
    count = 0
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)) and id(m) not in seen:
            seen.add(id(m))
            count += 1
    return count


def unique_parameters(*modules: nn.Module) -> list[nn.Parameter]:
    """Deduplicated parameters across modules (shared blocks appear once)."""
    seen: dict[int, nn.Parameter] = {}
    for module in modules:
        for p in module.parameters():
            seen.setdefault(id(p), p)
    return list(seen.values())


def _init_weights(module: nn.Module) -> None:
    """Zero-mean Gaussian (std 0.02) conv weights, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, 0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def generator_downsampling_factor(kind: str) -> int:
    kind = normalize_kind(kind)
    if kind == "simple":
        return SimpleGenerator.downsampling_factor
    return 4


def build_model(
    kind: str,
    image_shape: tuple[int, int],
    seed: int = 0,
    *,
    base_width: int = 64,
    n_residual_blocks: int = 9,
    disc_downsamplings: int = 4,
    loss_weights: LossWeights | None = None,
) -> ModelBundle:
    """Instantiate one of the five model variants with seeded initialization."""
    kind = normalize_kind(kind)
    h, w = image_shape
    if h <= 0 or w <= 0:
        raise ShapeError(f"image shape must be positive, got {image_shape}")
    factor = generator_downsampling_factor(kind)
    if h % factor or w % factor:
        raise ShapeError(
            f"image shape {image_shape} is not divisible by the generator "
            f"downsampling factor {factor}"
        )
    if kind in ADVERSARIAL_KINDS and min(h, w) < 2**disc_downsamplings:
        raise ShapeError(
            f"image shape {image_shape} is too small for a discriminator with "
            f"{disc_downsamplings} downsamplings"
        )
    if loss_weights is None:
        loss_weights = LossWeights.defaults_for(kind)
    loss_weights.validate_for_kind(kind)

    torch.manual_seed(seed)
    D_a = D_b = E_a = E_b = None
    if kind in ("cyclegan", "cyclegan_s", "generators_s"):
        gen = GeneratorSpec("resnet24", base_width=base_width, n_residual_blocks=n_residual_blocks)
        G_ab, G_ba = gen.build(), gen.build()
    elif kind == "simple":
        gen = GeneratorSpec("simple2", base_width=base_width)
        G_ab, G_ba = gen.build(), gen.build()
    else:  # unit
        latent_width = base_width * 4
        shared_enc = ResidualBlock(latent_width)
        shared_dec = ResidualBlock(latent_width)
        E_a = UnitEncoder(shared_enc, base_width=base_width)
        E_b = UnitEncoder(shared_enc, base_width=base_width)
        dec = GeneratorSpec("unit_decoder", base_width=base_width, n_residual_blocks=4)
        G_ab, G_ba = dec.build(shared_dec), dec.build(shared_dec)
    if kind in ADVERSARIAL_KINDS:
        disc = DiscriminatorSpec(n_downsamplings=disc_downsamplings, base_width=base_width)
        D_a, D_b = disc.build(), disc.build()

    bundle = ModelBundle(
        kind=kind,
        image_shape=(h, w),
        seed=seed,
        G_ab=G_ab,
        G_ba=G_ba,
        D_a=D_a,
        D_b=D_b,
        E_a=E_a,
        E_b=E_b,
        loss_weights=loss_weights,
        base_width=base_width,
    )
    for module in bundle.components().values():
        _init_weights(module)
    return bundle


def _as_input_tensor(image, image_shape: tuple[int, int]) -> torch.Tensor:
    pixels = getattr(image, "pixels", image)
    if isinstance(pixels, torch.Tensor):
        arr = pixels.detach().to(torch.float32)
    else:
        arr = torch.as_tensor(np.asarray(pixels), dtype=torch.float32)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2D image, got shape {tuple(arr.shape)}")
    if tuple(arr.shape) != tuple(image_shape):
        raise ShapeError(
            f"image shape {tuple(arr.shape)} does not match model build shape {tuple(image_shape)}"
        )
    return arr[None, None]


def generate(bundle: ModelBundle, image, direction: str):
    """Translate one image across domains; deterministic at inference.

    For ``unit`` the encoder mean is used (latent sampling disabled).
    Returns a dimensionless image in normalized intensity space.
    """
    from .data import NormalizedImage  # local import to avoid a module cycle

    direction = normalize_direction(direction)
    x = _as_input_tensor(image, bundle.image_shape)
    with torch.no_grad():
        if bundle.kind == "unit":
            encoder = bundle.E_a if direction == "a2b" else bundle.E_b
            decoder = bundle.G_ab if direction == "a2b" else bundle.G_ba
            out = decoder(encoder(x))
        else:
            generator = bundle.G_ab if direction == "a2b" else bundle.G_ba
            out = generator(x)
    pixels = out[0, 0].numpy().astype(np.float64)
    return NormalizedImage(pixels=pixels, source_mean=0.0, source_std=1.0)


def discriminate(bundle: ModelBundle, image, domain: str) -> np.ndarray:
    """Patch score grid for an image under the domain's discriminator."""
    if bundle.kind not in ADVERSARIAL_KINDS:
        raise UnsupportedOperationError(f"{bundle.kind} carries no discriminators")
    if domain not in ("T1", "T2"):
        raise ConfigError(f"domain must be 'T1' or 'T2', got {domain!r}")
    disc = bundle.D_a if domain == "T1" else bundle.D_b
    x = _as_input_tensor(image, bundle.image_shape)
    with torch.no_grad():
        scores = disc(x)
    return scores[0, 0].numpy().astype(np.float64)


def encode(
    bundle: ModelBundle,
    image,
    domain: str,
    *,
    sample: bool = True,
    generator: torch.Generator | None = None,
) -> Latent:
    """Encode an image into the shared latent space (unit only).

    The sample is mean + unit-Gaussian noise; with ``sample=False`` it
    equals the mean.
    """
    if bundle.kind != "unit":
        raise UnsupportedOperationError(f"encode is only defined for unit, not {bundle.kind}")
    if domain not in ("T1", "T2"):
        raise ConfigError(f"domain must be 'T1' or 'T2', got {domain!r}")
    encoder = bundle.E_a if domain == "T1" else bundle.E_b
    x = _as_input_tensor(image, bundle.image_shape)
    with torch.no_grad():
        mean = encoder(x)
        if sample:
            noise = torch.empty_like(mean).normal_(generator=generator)
            sampled = mean + noise
        else:
            sampled = mean
    return Latent(
        mean=mean[0].numpy().astype(np.float64),
        sample=sampled[0].numpy().astype(np.float64),
    )
