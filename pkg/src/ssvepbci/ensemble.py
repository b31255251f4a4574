"""Bank of (preprocessing, classifier) variants combined by training-accuracy-weighted voting."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .classifiers import TrainableSpec, TrainedModel, predict, train
from .core import RecordingSpec, StimulusSpec, TrialRecording
from .preprocess import (
    FittedPreprocess, PreprocessConfig, default_configs, fit_preprocess, preprocess_trial,
)

log = logging.getLogger(__name__)

DEFAULT_CLASSIFIERS: tuple[TrainableSpec, ...] = (
    TrainableSpec("svm_linear"),
    TrainableSpec("random_forest"),
)


@dataclass(frozen=True, eq=False)
class Variant:
    config: PreprocessConfig
    fitted: FittedPreprocess
    model: TrainedModel

    @property
    def name(self) -> str:
        return f"{self.config.name}/{self.model.kind}"

    @property
    def weight(self) -> float:
        return self.model.training_accuracy


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    variants: tuple[Variant, ...]
    rec_spec: RecordingSpec
    stimuli: tuple[StimulusSpec, ...]

    @property
    def weights(self) -> np.ndarray:
        return np.array([v.weight for v in self.variants])

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variants]

    @property
    def n_labels(self) -> int:
        return len(self.stimuli)

    def __len__(self) -> int:
        return len(self.variants)


def build_ensemble(train_trials: Sequence[TrialRecording], labels: Optional[Sequence[int]] = None,
                   classifier_specs: Sequence[TrainableSpec] = DEFAULT_CLASSIFIERS,
                   configs: Optional[Sequence[PreprocessConfig]] = None,
                   rec_spec: RecordingSpec = RecordingSpec(),
                   stimuli: Sequence[StimulusSpec] = ()) -> EnsembleModel:
    """Fit every config x classifier pair on the same training trials.

    Variants are ordered config-major. A variant whose PCA has nothing to
    retain falls back to its no-PCA features (``fitted.pca_degenerate``).
    """
    if not train_trials:
        raise ValueError("training set is empty")
    if not stimuli:
        raise ValueError("stimuli are required")
    if configs is None:
        configs = default_configs()
    if labels is None:
        labels = [t.true_label for t in train_trials]
    y = np.asarray(labels)
    if any(lab is None for lab in labels):
        raise ValueError("every training trial needs a label")
    if len(np.unique(y)) < 2:
        raise ValueError("training set must contain at least 2 classes")
    variants = []
    for config in configs:
        fitted, X = fit_preprocess(train_trials, config, rec_spec, stimuli)
        if fitted.pca_degenerate:
            log.warning("variant %s: PCA retained no components; trained without PCA", config.name)
        for spec in classifier_specs:
            model = train(spec, X, y, n_classes=len(stimuli))
            variants.append(Variant(config, fitted, model))
    return EnsembleModel(tuple(variants), rec_spec, tuple(stimuli))


def weighted_vote(predictions: Sequence[int], weights: Sequence[float],
                  n_labels: Optional[int] = None) -> tuple[int, np.ndarray]:
    """Sum each variant's weight onto the label it predicted; the heaviest label wins.

    Returns ``(winner, tally)``; ties go to the lowest label.
    """
    preds = np.asarray(predictions, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if preds.size == 0:
        raise ValueError("no predictions to vote on")
    if preds.shape != w.shape:
        raise ValueError(f"{preds.size} predictions but {w.size} weights")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if np.any(preds < 0):
        raise ValueError("labels must be non-negative")
    size = int(preds.max()) + 1 if n_labels is None else max(n_labels, int(preds.max()) + 1)
    tally = np.zeros(size)
    for p, wi in zip(preds, w):
        tally[p] += wi
    return int(np.argmax(tally)), tally


@dataclass(frozen=True, eq=False)
class EnsemblePrediction:
    label: int
    tally: np.ndarray
    variant_predictions: tuple[int, ...]

    @property
    def winning_tally(self) -> float:
        return float(self.tally[self.label])


def ensemble_predict(model: EnsembleModel, trial: TrialRecording) -> EnsemblePrediction:
    expected = (model.rec_spec.samples_per_trial, model.rec_spec.n_channels)
    if trial.samples.shape != expected:
        raise ValueError(f"trial shape {trial.samples.shape} does not match recording spec {expected}")
    preds = tuple(variant_predictions(model, trial))
    label, tally = weighted_vote(preds, model.weights, model.n_labels)
    return EnsemblePrediction(label, tally, preds)


def variant_predictions(model: EnsembleModel, trial: TrialRecording) -> list[int]:
    out = []
    cache: dict[int, np.ndarray] = {}
    for v in model.variants:
        # Variants sharing a fitted chain reuse its features.
        key = id(v.fitted)
        if key not in cache:
            cache[key] = preprocess_trial(trial, v.config, v.fitted, model.rec_spec, model.stimuli)
        out.append(int(predict(v.model, cache[key])))
    return out
