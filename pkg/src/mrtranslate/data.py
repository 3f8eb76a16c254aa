"""Loading, slicing, normalization, splitting, and batching of T1/T2 image data.

Dataset directory layout: ``<root>/{T1,T2}/<subject_id>.<ext>`` where ``<ext>``
is a NIfTI-1 volume (``.nii`` / ``.nii.gz``) or a lossless 2D grayscale image
(``.png``, ``.tif``, ``.tiff``, ``.bmp``). A 2D file is treated as a volume of
depth 1.
"""

from __future__ import annotations

import gzip
import json
import random
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    BoundsError,
    ConfigError,
    DegenerateImageError,
    FormatError,
    NotFoundError,
)

DOMAINS = ("T1", "T2")
DEFAULT_SLICE_INDEX = 120

VOLUME_EXTENSIONS = (".nii", ".nii.gz")
IMAGE_EXTENSIONS = (".png", ".tif", ".tiff", ".bmp")

# NIfTI-1 datatype code -> numpy dtype
_NIFTI_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}


@dataclass
class Volume:
    """A 3D scalar array with its source path; 2D images load as depth-1 volumes."""

    data: np.ndarray
    source_path: str = ""

    def __post_init__(self):
        if self.data.ndim != 3:
            raise FormatError(f"volume must be 3D, got shape {self.data.shape}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def depth(self) -> int:
        return self.data.shape[2]


@dataclass
class ImageSlice:
    """A single 2D axial slice tagged with its domain and provenance."""

    pixels: np.ndarray
    domain: str
    subject_id: str
    slice_index: int = 0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ConfigError(f"slice pixels must be a non-empty 2D array, got shape {self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)):
            raise ConfigError(f"slice {self.subject_id}/{self.domain} contains non-finite pixels")
        if self.domain not in DOMAINS:
            raise ConfigError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if self.slice_index < 0:
            raise ConfigError(f"slice_index must be non-negative, got {self.slice_index}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class NormalizedImage:
    """A z-scored image (mean 0, population std 1) with its source statistics."""

    pixels: np.ndarray
    source_mean: float
    source_std: float

    def __post_init__(self):
        if self.source_std <= 0:
            raise DegenerateImageError(f"source_std must be > 0, got {self.source_std}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class PairedDataset:
    """Subject-aligned (T1, T2) slice pairs belonging to one split."""

    pairs: list[tuple[ImageSlice, ImageSlice]]
    split: str = "train"

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ConfigError(f"split must be 'train' or 'test', got {self.split!r}")
        for t1, t2 in self.pairs:
            if t1.domain != "T1" or t2.domain != "T2":
                raise ConfigError(
                    f"pair for subject {t1.subject_id!r} must be ordered (T1, T2), "
                    f"got ({t1.domain}, {t2.domain})"
                )
            if t1.subject_id != t2.subject_id or t1.slice_index != t2.slice_index:
                raise ConfigError(
                    f"pair members must share subject and slice index, got "
                    f"{t1.subject_id}/{t1.slice_index} vs {t2.subject_id}/{t2.slice_index}"
                )

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def subjects(self) -> list[str]:
        return [t1.subject_id for t1, _ in self.pairs]


def _read_nifti(raw: bytes, path: str) -> np.ndarray:
    """Parse a NIfTI-1 single-file image (already decompressed)."""
    if len(raw) < 348:
        raise FormatError(f"{path}: file shorter than the 348-byte NIfTI-1 header")
    for order in ("<", ">"):
        (sizeof_hdr,) = struct.unpack_from(order + "i", raw, 0)
        if sizeof_hdr == 348:
            break
    else:
        raise FormatError(f"{path}: not a NIfTI-1 file (bad header size)")
    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise FormatError(f"{path}: bad NIfTI magic {magic!r}")
    if magic == b"ni1\x00":
        raise FormatError(f"{path}: two-file NIfTI (.hdr/.img) is not supported")

    dim = struct.unpack_from(order + "8h", raw, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise FormatError(f"{path}: corrupt dim[0]={ndim}")
    shape = tuple(int(d) for d in dim[1 : 1 + ndim])
    (datatype,) = struct.unpack_from(order + "h", raw, 70)
    if datatype not in _NIFTI_DTYPES:
        raise FormatError(f"{path}: unsupported NIfTI datatype code {datatype}")
    (vox_offset,) = struct.unpack_from(order + "f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from(order + "2f", raw, 112)

    dtype = np.dtype(_NIFTI_DTYPES[datatype]).newbyteorder(order)
    offset = int(vox_offset)
    count = int(np.prod(shape))
    if offset + count * dtype.itemsize > len(raw):
        raise FormatError(f"{path}: truncated voxel data")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    data = data.reshape(shape, order="F").astype(np.float64)
    # scl_slope == 0 means "no scaling" per the NIfTI-1 standard
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        data = data * slope + scl_inter
    return data


def load_volume(path: str | Path) -> Volume:
    """Load a NIfTI-1 volume or a 2D grayscale image file as a Volume.

    Trailing singleton dimensions beyond the third are dropped; a 2D image
    becomes a depth-1 volume. Intensities are kept as stored (NIfTI scl
    scaling applied when the header requests it).
    """
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"no such file: {path}")
    name = path.name.lower()
    if name.endswith(".nii.gz") or name.endswith(".nii"):
        raw = path.read_bytes()
        if raw[:2] == b"\x1f\x8b":
            try:
                raw = gzip.decompress(raw)
            except OSError as exc:
                raise FormatError(f"{path}: corrupt gzip stream ({exc})") from exc
        data = _read_nifti(raw, str(path))
        while data.ndim > 3:
            if data.shape[-1] != 1:
                raise FormatError(f"{path}: {data.ndim}D volumes are not supported")
            data = data[..., 0]
        if data.ndim == 2:
            data = data[:, :, None]
        return Volume(data=data, source_path=str(path))
    if name.endswith(IMAGE_EXTENSIONS):
        try:
            with Image.open(path) as img:
                if img.mode not in ("L", "I", "I;16", "F"):
                    img = img.convert("F")
                arr = np.asarray(img, dtype=np.float64)
        except (OSError, SyntaxError) as exc:
            raise FormatError(f"{path}: cannot decode image ({exc})") from exc
        if arr.ndim != 2:
            raise FormatError(f"{path}: expected a single-channel image, got shape {arr.shape}")
        return Volume(data=arr[:, :, None], source_path=str(path))
    raise FormatError(f"{path}: unsupported file extension")


def extract_slice(
    volume: Volume,
    index: int | None = None,
    *,
    domain: str,
    subject_id: str,
    axis: str = "axial",
) -> ImageSlice:
    """Extract one axial plane from a volume.

    ``index=None`` selects slice 120 when the volume is deep enough, or the
    sole plane of a depth-1 volume.
    """
    if axis != "axial":
        raise ConfigError(f"only axial extraction is supported, got {axis!r}")
    depth = volume.depth
    if index is None:
        if depth > DEFAULT_SLICE_INDEX:
            index = DEFAULT_SLICE_INDEX
        elif depth == 1:
            index = 0
        else:
            raise BoundsError(
                f"volume depth {depth} cannot take the default slice index "
                f"{DEFAULT_SLICE_INDEX}; pass an explicit index"
            )
    if not 0 <= index < depth:
        raise BoundsError(f"slice index {index} out of range for depth {depth}")
    return ImageSlice(
        pixels=volume.data[:, :, index].copy(),
        domain=domain,
        subject_id=subject_id,
        slice_index=index,
    )


def zscore_normalize(image: ImageSlice | np.ndarray) -> NormalizedImage:
    """Z-score an image: subtract its mean, divide by its population std."""
    pixels = image.pixels if isinstance(image, ImageSlice) else np.asarray(image, dtype=np.float64)
    pixels = pixels.astype(np.float64)
    mean = float(pixels.mean())
    std = float(pixels.std())  # population std (ddof=0)
    if std == 0.0:
        raise DegenerateImageError("cannot z-score a constant image (std = 0)")
    return NormalizedImage(pixels=(pixels - mean) / std, source_mean=mean, source_std=std)


def denormalize(image: NormalizedImage) -> np.ndarray:
    """Invert :func:`zscore_normalize`, recovering the source intensities."""
    return image.pixels * image.source_std + image.source_mean


def split_subjects(subjects: list[str], n_train: int, seed: int) -> tuple[list[str], list[str]]:
    """Shuffle subject ids deterministically and cut off the first ``n_train``."""
    if not 0 < n_train < len(subjects):
        raise ConfigError(f"n_train must be in (0, {len(subjects)}), got {n_train}")
    shuffled = sorted(subjects)
    random.Random(seed).shuffle(shuffled)
    return shuffled[:n_train], shuffled[n_train:]


def split_dataset(
    dataset: PairedDataset, n_train: int, seed: int
) -> tuple[PairedDataset, PairedDataset]:
    """Split into train/test with disjoint subjects, deterministically per seed."""
    n = len(dataset)
    if not 0 < n_train < n:
        raise ConfigError(f"n_train must be in (0, {n}), got {n_train}")

    by_subject: dict[str, list[tuple[ImageSlice, ImageSlice]]] = {}
    for pair in dataset.pairs:
        by_subject.setdefault(pair[0].subject_id, []).append(pair)
    subjects = sorted(by_subject)
    random.Random(seed).shuffle(subjects)

    train_pairs: list[tuple[ImageSlice, ImageSlice]] = []
    cut = 0
    while cut < len(subjects) and len(train_pairs) < n_train:
        train_pairs.extend(by_subject[subjects[cut]])
        cut += 1
    if len(train_pairs) != n_train:
        raise ConfigError(
            f"cannot split {n_train} training pairs on a subject boundary "
            f"(subjects contribute multiple slices)"
        )
    test_pairs = [pair for subject in subjects[cut:] for pair in by_subject[subject]]
    return (
        PairedDataset(pairs=train_pairs, split="train"),
        PairedDataset(pairs=test_pairs, split="test"),
    )


@dataclass
class Batch:
    """One batch of slices; ``t1`` and ``t2`` are index-aligned only in paired mode."""

    t1: list[ImageSlice]
    t2: list[ImageSlice]
    paired: bool

    def __len__(self) -> int:
        return len(self.t1)


def make_batches(
    dataset: PairedDataset, batch_size: int, mode: str = "paired", seed: int = 0
) -> list[Batch]:
    """Chunk one epoch of the dataset into batches.

    Paired mode keeps (T1, T2) tuples subject-aligned; unpaired mode shuffles
    the two domains independently, breaking the pairing. Every image appears
    exactly once per epoch; the final remainder batch is kept.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if mode not in ("paired", "unpaired"):
        raise ConfigError(f"mode must be 'paired' or 'unpaired', got {mode!r}")
    n = len(dataset)
    rng = random.Random(seed)
    if mode == "paired":
        order = rng.sample(range(n), n)
        t1_order = t2_order = order
    else:
        t1_order = rng.sample(range(n), n)
        t2_order = rng.sample(range(n), n)
    batches = []
    for start in range(0, n, batch_size):
        idx_a = t1_order[start : start + batch_size]
        idx_b = t2_order[start : start + batch_size]
        batches.append(
            Batch(
                t1=[dataset.pairs[i][0] for i in idx_a],
                t2=[dataset.pairs[i][1] for i in idx_b],
                paired=(mode == "paired"),
            )
        )
    return batches


def _strip_extension(name: str) -> str | None:
    lowered = name.lower()
    for ext in VOLUME_EXTENSIONS + IMAGE_EXTENSIONS:
        if lowered.endswith(ext):
            return name[: -len(ext)]
    return None


def list_subjects(root: str | Path) -> dict[str, dict[str, Path]]:
    """Map subject_id -> {domain: file path} for subjects present in both domains."""
    root = Path(root)
    files: dict[str, dict[str, Path]] = {}
    for domain in DOMAINS:
        domain_dir = root / domain
        if not domain_dir.is_dir():
            raise NotFoundError(f"missing domain directory: {domain_dir}")
        for path in sorted(domain_dir.iterdir()):
            subject = _strip_extension(path.name)
            if subject is None:
                continue
            files.setdefault(subject, {})[domain] = path
    return {s: d for s, d in sorted(files.items()) if len(d) == len(DOMAINS)}


def load_paired_dataset(
    root: str | Path,
    slice_index: int | None = None,
    subjects: list[str] | None = None,
    split: str = "train",
) -> PairedDataset:
    """Load (T1, T2) slice pairs from a dataset directory."""
    available = list_subjects(root)
    if subjects is None:
        subjects = list(available)
    pairs = []
    for subject in subjects:
        if subject not in available:
            raise NotFoundError(f"subject {subject!r} not found in both domains under {root}")
        slices = {}
        for domain in DOMAINS:
            volume = load_volume(available[subject][domain])
            # a 2D file is already the slice; the index applies to volumes
            index = 0 if volume.depth == 1 else slice_index
            slices[domain] = extract_slice(volume, index, domain=domain, subject_id=subject)
        pairs.append((slices["T1"], slices["T2"]))
    return PairedDataset(pairs=pairs, split=split)


def write_split_manifest(
    path: str | Path,
    *,
    seed: int,
    train_subjects: list[str],
    test_subjects: list[str],
    slice_index: int | None = None,
    root: str | None = None,
) -> None:
    """Write the JSON split manifest ({seed, train_subjects, test_subjects, ...})."""
    manifest = {
        "seed": seed,
        "train_subjects": list(train_subjects),
        "test_subjects": list(test_subjects),
    }
    if slice_index is not None:
        manifest["slice_index"] = slice_index
    if root is not None:
        manifest["root"] = root
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n")


def read_split_manifest(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"no such manifest: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("seed", "train_subjects", "test_subjects"):
        if key not in manifest:
            raise FormatError(f"{path}: manifest missing key {key!r}")
    return manifest


def write_grayscale_png(path: str | Path, pixels: np.ndarray, rescale: bool = True) -> None:
    """Write a 16-bit grayscale PNG.

    ``rescale=True`` maps min..max onto the full 16-bit range (a positive
    affine map, so z-scores survive the round trip up to quantization);
    otherwise values are clipped to [0, 65535] and rounded.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    if rescale:
        lo, hi = float(pixels.min()), float(pixels.max())
        scale = (hi - lo) or 1.0
        pixels = (pixels - lo) / scale * 65535.0
    arr = np.clip(np.round(pixels), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(Path(path), format="PNG")
