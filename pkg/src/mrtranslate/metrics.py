"""Quantitative evaluation: MAE, PSNR, mutual information, relative-error maps.

All metrics operate on z-scored images (callers normalize first; MR images
naturally differ in intensity). ``evaluate_model`` applies the normalization
itself, for both the ground truth and the synthetic output.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ImageSlice, NormalizedImage, PairedDataset, zscore_normalize
from .errors import ConfigError, DegenerateImageError, MrTranslateError, ShapeError
from .networks import ModelBundle, generate

PSNR_CAP_DB = 300.0
DEFAULT_MI_BINS = 256
DIRECTION_TARGETS = {"t1_to_t2": "T2", "t2_to_t1": "T1"}


def _pixels(image) -> np.ndarray:
    arr = image.pixels if isinstance(image, (ImageSlice, NormalizedImage)) else image
    return np.asarray(arr, dtype=np.float64)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def mae(a, b) -> float:
    """Mean absolute error over pixels; symmetric, 0 iff equal."""
    x, y = _pixels(a), _pixels(b)
    _check_same_shape(x, y)
    return float(np.abs(x - y).mean())


def psnr(reference, test) -> float:
    """Peak signal-to-noise ratio in dB, peak = data range of the reference.

    Not symmetric: the peak comes from ``reference``. A zero-MSE comparison
    returns the +inf sentinel, capped at 300 dB.
    """
    ref, tst = _pixels(reference), _pixels(test)
    _check_same_shape(ref, tst)
    peak = float(ref.max() - ref.min())
    if peak == 0.0:
        raise DegenerateImageError("PSNR is undefined for a constant reference image")
    mse = float(((ref - tst) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return 10.0 * math.log10(peak**2 / mse)


def joint_histogram(a, b, bins: int = DEFAULT_MI_BINS) -> np.ndarray:
    """Joint intensity histogram with per-image min-max bin ranges."""
    x, y = _pixels(a).ravel(), _pixels(b).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {y.shape}")
    if bins < 2:
        raise ConfigError(f"bins must be >= 2, got {bins}")
    for name, arr in (("first", x), ("second", y)):
        if arr.max() == arr.min():
            raise DegenerateImageError(f"{name} image has zero intensity range")
    counts, _, _ = np.histogram2d(x, y, bins=bins, range=[[x.min(), x.max()], [y.min(), y.max()]])
    return counts


def mutual_information(a, b, bins: int = DEFAULT_MI_BINS, unit: str = "nats") -> float:
    """Plug-in mutual information from the joint histogram.

    MI = sum p(i,j) * log(p(i,j) / (p(i) p(j))) over non-empty cells, in
    nats (natural log) or bits.
    """
    if unit not in ("nats", "bits"):
        raise ConfigError(f"unit must be 'nats' or 'bits', got {unit!r}")
    counts = joint_histogram(a, b, bins)
    p = counts / counts.sum()
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    nz = p > 0
    outer = np.outer(pa, pb)
    mi = float(np.sum(p[nz] * np.log(p[nz] / outer[nz])))
    if unit == "bits":
        mi /= math.log(2.0)
    return mi


def histogram_entropy(a, bins: int = DEFAULT_MI_BINS, unit: str = "nats") -> float:
    """Entropy of an image's marginal intensity histogram (min-max binned)."""
    if unit not in ("nats", "bits"):
        raise ConfigError(f"unit must be 'nats' or 'bits', got {unit!r}")
    x = _pixels(a).ravel()
    if x.max() == x.min():
        raise DegenerateImageError("entropy is undefined for a zero-range image")
    counts, _ = np.histogram(x, bins=bins, range=(x.min(), x.max()))
    p = counts / counts.sum()
    p = p[p > 0]
    h = float(-np.sum(p * np.log(p)))
    if unit == "bits":
        h /= math.log(2.0)
    return h


@dataclass
class ErrorMap:
    """Per-pixel relative absolute difference, masked where the real image is ~0."""

    values: np.ndarray
    mask: np.ndarray
    epsilon: float

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ShapeError(f"values/mask shape mismatch: {self.values.shape} vs {self.mask.shape}")


def relative_error_map(real, synthetic, epsilon: float = 1e-6) -> ErrorMap:
    """|real - synthetic| / |real|, with pixels where |real| < epsilon masked to 0."""
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    r, s = _pixels(real), _pixels(synthetic)
    _check_same_shape(r, s)
    mask = np.abs(r) >= epsilon
    values = np.zeros_like(r)
    np.divide(np.abs(r - s), np.abs(r), out=values, where=mask)
    return ErrorMap(values=values, mask=mask, epsilon=epsilon)


@dataclass
class ImageMetrics:
    """Metric values for one (image, direction); failed metrics are None."""

    subject_id: str
    slice_index: int
    direction: str
    target_domain: str
    mae: float | None = None
    psnr: float | None = None
    mi: float | None = None
    failures: dict[str, str] = field(default_factory=dict)


@dataclass
class MetricReport:
    """Per-image metrics and per-target-domain aggregates for a test set."""

    per_image: list[ImageMetrics]
    aggregate: dict[str, dict[str, dict[str, float]]]
    bins: int
    mi_unit: str

    def to_dict(self) -> dict:
        return {
            "bins": self.bins,
            "mi_unit": self.mi_unit,
            "aggregate": self.aggregate,
            "per_image": [
                {
                    "subject_id": m.subject_id,
                    "slice_index": m.slice_index,
                    "direction": m.direction,
                    "target_domain": m.target_domain,
                    "mae": m.mae,
                    "psnr": m.psnr,
                    "mi": m.mi,
                    "failures": m.failures,
                }
                for m in self.per_image
            ],
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["subject_id", "slice_index", "direction", "target_domain", "mae", "psnr", "mi", "failures"]
            )
            for m in self.per_image:
                writer.writerow(
                    [
                        m.subject_id,
                        m.slice_index,
                        m.direction,
                        m.target_domain,
                        "" if m.mae is None else m.mae,
                        "" if m.psnr is None else m.psnr,
                        "" if m.mi is None else m.mi,
                        ";".join(f"{k}:{v}" for k, v in m.failures.items()),
                    ]
                )

    @property
    def n_failures(self) -> int:
        return sum(len(m.failures) for m in self.per_image)


def bundle_translator(bundle: ModelBundle):
    """Adapt a ModelBundle to the (source ImageSlice, direction) -> pixels interface."""

    def translate(source: ImageSlice, direction: str) -> np.ndarray:
        normalized = zscore_normalize(source)
        return generate(bundle, normalized, direction).pixels

    return translate


def _aggregate(per_image: list[ImageMetrics]) -> dict:
    out: dict[str, dict[str, dict[str, float]]] = {}
    for domain in sorted({m.target_domain for m in per_image}):
        domain_metrics = [m for m in per_image if m.target_domain == domain]
        out[domain] = {}
        for name in ("mae", "psnr", "mi"):
            values = [getattr(m, name) for m in domain_metrics if getattr(m, name) is not None]
            if values:
                arr = np.asarray(values, dtype=np.float64)
                out[domain][name] = {
                    "mean": float(arr.mean()),
                    "std": float(arr.std()),
                    "n": len(values),
                }
            else:
                out[domain][name] = {"mean": math.nan, "std": math.nan, "n": 0}
    return out


def evaluate_model(
    model,
    test: PairedDataset,
    *,
    bins: int = DEFAULT_MI_BINS,
    mi_unit: str = "nats",
    epsilon: float = 1e-6,
    error_map_sink=None,
) -> MetricReport:
    """Evaluate a model over a test split, both translation directions.

    ``model`` is a ModelBundle or any callable ``(source_slice, direction) ->
    pixels``. Ground truth and synthetic output are each z-scored before the
    metrics. A constant synthetic image cannot be z-scored: PSNR and MI are
    recorded as per-image failures while MAE falls back to the centered
    synthetic (its z-score limit), so the run always completes.

    ``error_map_sink(subject_id, direction, ErrorMap)`` receives each
    relative-error map when given.
    """
    if test.split != "test":
        raise ConfigError(f"evaluation requires the test split, got {test.split!r}")
    translate = model if callable(model) else bundle_translator(model)

    per_image: list[ImageMetrics] = []
    for t1, t2 in sorted(test.pairs, key=lambda pair: (pair[0].subject_id, pair[0].slice_index)):
        for direction, target in sorted(DIRECTION_TARGETS.items()):
            source, truth = (t1, t2) if direction == "t1_to_t2" else (t2, t1)
            result = ImageMetrics(
                subject_id=source.subject_id,
                slice_index=source.slice_index,
                direction=direction,
                target_domain=target,
            )
            per_image.append(result)
            try:
                z_truth = zscore_normalize(truth).pixels
            except DegenerateImageError as exc:
                result.failures["ground_truth"] = str(exc)
                continue
            try:
                synthetic = np.asarray(translate(source, direction), dtype=np.float64)
            except MrTranslateError as exc:
                result.failures["synthetic"] = str(exc)
                continue
            if synthetic.shape != z_truth.shape:
                result.failures["synthetic"] = (
                    f"synthetic shape {synthetic.shape} does not match ground truth {z_truth.shape}"
                )
                continue
            try:
                z_syn = zscore_normalize(synthetic).pixels
            except DegenerateImageError as exc:
                # constant output: MAE is still defined in the limit, PSNR/MI are not
                z_syn = synthetic - synthetic.mean()
                result.failures["psnr"] = str(exc)
                result.failures["mi"] = str(exc)
                result.mae = mae(z_truth, z_syn)
            else:
                result.mae = mae(z_truth, z_syn)
                try:
                    result.psnr = psnr(z_truth, z_syn)
                except DegenerateImageError as exc:
                    result.failures["psnr"] = str(exc)
                try:
                    result.mi = mutual_information(z_truth, z_syn, bins=bins, unit=mi_unit)
                except DegenerateImageError as exc:
                    result.failures["mi"] = str(exc)
            if error_map_sink is not None:
                error_map_sink(
                    source.subject_id, direction, relative_error_map(z_truth, z_syn, epsilon)
                )

    return MetricReport(
        per_image=per_image, aggregate=_aggregate(per_image), bins=bins, mi_unit=mi_unit
    )
