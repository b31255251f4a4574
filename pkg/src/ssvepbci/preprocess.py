"""Preprocessing chain: CAR, channel selection, power spectrum, harmonic windows, PCA, z-score."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import OCCIPITAL_CHANNELS, RecordingSpec, StimulusSpec, TrialRecording

# Slack for the closed-interval bin test; bin centers are products of floats.
_BIN_EPS = 1e-9
# Relative std below which a feature is treated as constant.
_ZERO_STD_RTOL = 1e-12


class DegeneratePCAError(ValueError):
    """Raised when the training matrix has no variance to retain."""


@dataclass(frozen=True)
class PreprocessConfig:
    use_car: bool = True
    use_pca: bool = True
    channels: tuple[str, ...] = OCCIPITAL_CHANNELS
    harmonics: tuple[int, ...] = (1, 2)
    half_width_hz: float = 0.5
    pca_variance: float = 0.95

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "harmonics", tuple(int(h) for h in self.harmonics))
        if not self.channels:
            raise ValueError("channel set must be nonempty")
        if not self.harmonics or any(h < 1 for h in self.harmonics):
            raise ValueError(f"harmonics must be positive integers, got {self.harmonics}")
        if self.half_width_hz < 0:
            raise ValueError("half_width_hz must be >= 0")
        if not 0 < self.pca_variance <= 1:
            raise ValueError(f"pca_variance must be in (0, 1], got {self.pca_variance}")

    @property
    def name(self) -> str:
        parts = [p for p, on in (("CAR", self.use_car), ("PCA", self.use_pca)) if on]
        return "+".join(parts) if parts else "none"


def default_configs(channels: Sequence[str] = OCCIPITAL_CHANNELS, **kwargs) -> tuple[PreprocessConfig, ...]:
    """The four preprocessing variants: CAR+PCA, CAR only, PCA only, neither."""
    return tuple(PreprocessConfig(use_car=car, use_pca=pca, channels=tuple(channels), **kwargs)
                 for car, pca in ((True, True), (True, False), (False, True), (False, False)))


# -- spatial ---------------------------------------------------------------

def select_channels(samples: np.ndarray | TrialRecording, names: Sequence[str],
                    all_channels: Sequence[str]) -> np.ndarray:
    """Columns of ``samples`` for ``names``, in that order."""
    arr = samples.samples if isinstance(samples, TrialRecording) else np.asarray(samples)
    index = {c: i for i, c in enumerate(all_channels)}
    missing = [n for n in names if n not in index]
    if missing:
        raise KeyError(f"unknown channel {missing[0]!r}; known: {', '.join(all_channels)}")
    return arr[:, [index[n] for n in names]]


def car_filter(samples: np.ndarray) -> np.ndarray:
    """Subtract the across-electrode mean at every time instant."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a (samples, channels) matrix, got shape {arr.shape}")
    if arr.shape[1] < 2:
        raise ValueError("CAR needs at least 2 channels")
    return arr - arr.mean(axis=1, keepdims=True)


# -- spectral --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Spectrum:
    power: np.ndarray
    resolution_hz: float
    n_samples: int

    @property
    def nyquist_hz(self) -> float:
        return self.resolution_hz * self.n_samples / 2.0

    @property
    def n_bins(self) -> int:
        return len(self.power)

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.resolution_hz


def power_spectrum(signal: Sequence[float], sampling_rate: float) -> Spectrum:
    """|DFT|^2 for bins 0..floor(L/2), no taper."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("power_spectrum needs a 1-D signal with at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    return Spectrum(np.abs(np.fft.rfft(x)) ** 2, sampling_rate / len(x), len(x))


def power_spectra(samples: np.ndarray, sampling_rate: float) -> tuple[np.ndarray, float]:
    """Column-wise power spectra of a (samples, channels) matrix: (bins, channels), resolution."""
    arr = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("signal contains non-finite samples")
    return np.abs(np.fft.rfft(arr, axis=0)) ** 2, sampling_rate / arr.shape[0]


def window_bins(center_hz: float, half_width_hz: float, resolution_hz: float) -> np.ndarray:
    """Bins whose center frequency lies in the closed window around ``center_hz``."""
    lo = math.ceil((center_hz - half_width_hz) / resolution_hz - _BIN_EPS)
    hi = math.floor((center_hz + half_width_hz) / resolution_hz + _BIN_EPS)
    return np.arange(max(lo, 0), hi + 1)


@dataclass(frozen=True, eq=False)
class FeatureLayout:
    """Origin of each feature column as (channel, label_id, harmonic, bin)."""

    entries: tuple[tuple[str, int, int, int], ...]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    layout: Optional[FeatureLayout] = None

    def __len__(self) -> int:
        return len(self.values)


def band_layout(channels: Sequence[str], stimuli: Sequence[StimulusSpec], harmonics: Sequence[int],
                half_width_hz: float, resolution_hz: float, nyquist_hz: float) -> FeatureLayout:
    entries = []
    for ch in channels:
        for stim in stimuli:
            for h in harmonics:
                center = h * stim.frequency_hz
                if center + half_width_hz >= nyquist_hz:
                    raise ValueError(
                        f"window around {center:g} Hz (harmonic {h} of {stim.frequency_hz} Hz) "
                        f"exceeds Nyquist ({nyquist_hz} Hz)"
                    )
                for k in window_bins(center, half_width_hz, resolution_hz):
                    entries.append((ch, stim.label_id, int(h), int(k)))
    return FeatureLayout(tuple(entries))


def extract_band_features(spectra: Sequence[Spectrum], stimuli: Sequence[StimulusSpec],
                          harmonics: Sequence[int] = (1, 2), half_width_hz: float = 0.5,
                          channels: Optional[Sequence[str]] = None) -> FeatureVector:
    """Concatenate harmonic-window power bins in channel, stimulus, harmonic, bin order."""
    if not spectra:
        raise ValueError("need at least one channel spectrum")
    first = spectra[0]
    power = np.column_stack([s.power for s in spectra])
    names = list(channels) if channels is not None else [f"ch{i}" for i in range(len(spectra))]
    layout = band_layout(names, stimuli, harmonics, half_width_hz, first.resolution_hz, first.nyquist_hz)
    return FeatureVector(_gather(power, layout, names), layout)


def _gather(power: np.ndarray, layout: FeatureLayout, names: Sequence[str]) -> np.ndarray:
    index = {c: i for i, c in enumerate(names)}
    cols = np.array([index[e[0]] for e in layout.entries], dtype=np.intp)
    bins = np.array([e[3] for e in layout.entries], dtype=np.intp)
    return power[bins, cols]


def band_features_matrix(samples: np.ndarray, rec_spec: RecordingSpec, stimuli, channels,
                         harmonics, half_width_hz) -> np.ndarray:
    power, resolution = power_spectra(samples, rec_spec.sampling_rate_hz)
    layout = band_layout(channels, stimuli, harmonics, half_width_hz, resolution, rec_spec.nyquist_hz)
    return _gather(power, layout, channels)


# -- PCA -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray          # (k, n_features), orthonormal rows
    explained_variance_ratio: np.ndarray  # (k,), non-increasing
    total_variance: float

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]


def _orient(components: np.ndarray) -> np.ndarray:
    # Sign convention: the largest-magnitude loading of each component is positive.
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def pca_fit(features: np.ndarray, variance_threshold: float = 0.95, k: Optional[int] = None) -> PcaModel:
    """Fit PCA by SVD of the centered matrix.

    Retains the fewest components whose cumulative explained variance reaches
    ``variance_threshold`` (or exactly ``k`` if given), capped at
    ``min(rows - 1, features)``.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("pca_fit needs a 2-D matrix with at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    n, d = X.shape
    mean = X.mean(axis=0)
    centered = X - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = s ** 2 / (n - 1)
    total = float(var.sum())
    cap = min(n - 1, d)
    if total <= 0 or s[0] <= _ZERO_STD_RTOL * max(1.0, float(np.abs(X).max())):
        raise DegeneratePCAError("training matrix has zero variance; PCA would retain k=0 components")
    ratio = var / total
    if k is None:
        cumulative = np.cumsum(ratio)
        k = int(np.searchsorted(cumulative, variance_threshold - 1e-12) + 1)
    k = max(1, min(k, cap))
    return PcaModel(mean, _orient(vt[:k]), ratio[:k], total)


def pca_transform(model: PcaModel, features: np.ndarray) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.shape[-1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[-1]}")
    return (X - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, reduced: np.ndarray) -> np.ndarray:
    return np.asarray(reduced) @ model.components + model.mean


# -- z-score ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ZScoreModel:
    mean: np.ndarray
    std: np.ndarray
    zero_std: np.ndarray  # bool mask of constant features


def zscore_fit(features: np.ndarray) -> ZScoreModel:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("zscore_fit needs a 2-D matrix with at least 2 rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.maximum(np.abs(mean), np.abs(X).max(axis=0))
    zero = std <= _ZERO_STD_RTOL * np.maximum(scale, 1e-300)
    return ZScoreModel(mean, std, zero)


def zscore_apply(model: ZScoreModel, features: np.ndarray) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.shape[-1] != model.mean.shape[0]:
        raise ValueError(f"expected {model.mean.shape[0]} features, got {X.shape[-1]}")
    safe = np.where(model.zero_std, 1.0, model.std)
    return np.where(model.zero_std, 0.0, (X - model.mean) / safe)


# -- full chain ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FittedPreprocess:
    config: PreprocessConfig
    zscore: ZScoreModel
    pca: Optional[PcaModel] = None
    pca_degenerate: bool = False
    n_band_features: int = 0


def band_features(trial: TrialRecording | np.ndarray, config: PreprocessConfig, rec_spec: RecordingSpec,
                  stimuli: Sequence[StimulusSpec]) -> np.ndarray:
    """CAR (over the whole recorded montage) -> channel selection -> spectra -> harmonic windows."""
    samples = trial.samples if isinstance(trial, TrialRecording) else np.asarray(trial)
    if config.use_car:
        samples = car_filter(samples)
    picked = select_channels(samples, config.channels, rec_spec.channels)
    return band_features_matrix(picked, rec_spec, stimuli, config.channels,
                                config.harmonics, config.half_width_hz)


def fit_preprocess(trials: Sequence[TrialRecording], config: PreprocessConfig, rec_spec: RecordingSpec,
                   stimuli: Sequence[StimulusSpec]) -> tuple[FittedPreprocess, np.ndarray]:
    """Fit PCA/z-score on ``trials``; returns the fitted chain and the transformed training matrix."""
    raw = np.vstack([band_features(t, config, rec_spec, stimuli) for t in trials])
    pca = None
    degenerate = False
    reduced = raw
    if config.use_pca:
        try:
            pca = pca_fit(raw, config.pca_variance)
            reduced = pca_transform(pca, raw)
        except DegeneratePCAError:
            degenerate = True
    z = zscore_fit(reduced)
    fitted = FittedPreprocess(config, z, pca, degenerate, raw.shape[1])
    return fitted, zscore_apply(z, reduced)


def preprocess_trial(trial: TrialRecording | np.ndarray, config: PreprocessConfig, fitted: FittedPreprocess,
                     rec_spec: RecordingSpec, stimuli: Sequence[StimulusSpec]) -> np.ndarray:
    if fitted.config != config:
        raise ValueError(f"fitted models belong to variant {fitted.config.name}, not {config.name}")
    x = band_features(trial, config, rec_spec, stimuli)
    if fitted.pca is not None:
        x = pca_transform(fitted.pca, x)
    return zscore_apply(fitted.zscore, x)


def transform_many(trials: Sequence[TrialRecording], fitted: FittedPreprocess, rec_spec: RecordingSpec,
                   stimuli: Sequence[StimulusSpec]) -> np.ndarray:
    return np.vstack([preprocess_trial(t, fitted.config, fitted, rec_spec, stimuli) for t in trials])
