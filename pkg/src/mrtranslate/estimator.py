"""Scikit-learn style estimator facade over the translation models.

``ContrastTranslator`` treats T1 -> T2 as the forward direction: ``fit(X, y)``
takes a stack of T1 slices and the paired T2 slices, ``transform`` produces
synthetic T2 from T1, and ``inverse_transform`` produces synthetic T1 from
T2. Images are z-scored per slice internally; outputs live in that
normalized intensity space.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .data import ImageSlice, PairedDataset, zscore_normalize
from .errors import ShapeError
from .losses import LossWeights
from .networks import generate
from .training import TrainConfig, train
from .validation import check_image_stack, check_paired_stacks


class ContrastTranslator(BaseEstimator, TransformerMixin):
    """Translate MR contrast with one of the five model variants.

    Parameters
    ----------
    kind : one of cyclegan, cyclegan_s, unit, generators_s, simple
    epochs, batch_size, learning_rate, seed : training hyperparameters
    mode : 'paired' or 'unpaired' (unpaired only for cyclegan/unit)
    base_width : channel width of the first convolution
    loss_weights : optional LossWeights overriding the kind's defaults

    Attributes (after fit)
    ----------------------
    bundle_ : the trained ModelBundle
    history_ : list of per-epoch loss records
    image_shape_ : (h, w) the model was built for
    """

    def __init__(
        self,
        kind: str = "generators_s",
        epochs: int = 50,
        batch_size: int = 1,
        learning_rate: float = 2e-4,
        seed: int = 0,
        mode: str = "paired",
        base_width: int = 64,
        loss_weights: LossWeights | None = None,
    ):
        self.kind = kind
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.mode = mode
        self.base_width = base_width
        self.loss_weights = loss_weights

    def _dataset(self, X: np.ndarray, y: np.ndarray) -> PairedDataset:
        pairs = []
        for i, (t1, t2) in enumerate(zip(X, y)):
            subject = f"s{i:04d}"
            pairs.append(
                (
                    ImageSlice(pixels=t1, domain="T1", subject_id=subject),
                    ImageSlice(pixels=t2, domain="T2", subject_id=subject),
                )
            )
        return PairedDataset(pairs=pairs, split="train")

    def fit(self, X, y):
        """Train on paired stacks: X = T1 slices (n, h, w), y = T2 slices."""
        X, y = check_paired_stacks(X, y)
        config = TrainConfig(
            kind=self.kind,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            mode=self.mode,
            base_width=self.base_width,
            loss_weights=self.loss_weights,
        )
        self.bundle_, self.history_ = train(config, self._dataset(X, y))
        self.image_shape_ = self.bundle_.image_shape
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "bundle_"):
            raise NotFittedError("this ContrastTranslator is not fitted; call fit first")

    def _translate_stack(self, X, direction: str) -> np.ndarray:
        self._check_fitted()
        X = check_image_stack(X)
        if X.shape[1:] != self.image_shape_:
            raise ShapeError(
                f"images of shape {X.shape[1:]} do not match the fitted shape {self.image_shape_}"
            )
        out = [
            generate(self.bundle_, zscore_normalize(image), direction).pixels for image in X
        ]
        return np.stack(out)

    def transform(self, X) -> np.ndarray:
        """Synthesize T2 from a stack of T1 slices."""
        return self._translate_stack(X, "t1_to_t2")

    def inverse_transform(self, y) -> np.ndarray:
        """Synthesize T1 from a stack of T2 slices."""
        return self._translate_stack(y, "t2_to_t1")

    def score(self, X, y) -> float:
        """Negative mean MAE between z-scored synthetic T2 and z-scored y."""
        X, y = check_paired_stacks(X, y)
        synthetic = self.transform(X)
        errors = []
        for syn, truth in zip(synthetic, y):
            z_truth = zscore_normalize(truth).pixels
            z_syn = zscore_normalize(syn).pixels
            errors.append(float(np.abs(z_truth - z_syn).mean()))
        return -float(np.mean(errors))
