import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssvepbci.core import DEFAULT_STIMULI, OCCIPITAL_CHANNELS, RecordingSpec
from ssvepbci.preprocess import (
    DegeneratePCAError, PreprocessConfig, band_layout, car_filter, default_configs, extract_band_features,
    fit_preprocess, pca_fit, pca_inverse, pca_transform, power_spectrum, preprocess_trial, select_channels,
    window_bins, zscore_apply, zscore_fit,
)

SPEC = RecordingSpec()
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def dft_power(x):
    """Direct O(L^2) DFT, bins 0..floor(L/2)."""
    L = len(x)
    out = []
    for k in range(L // 2 + 1):
        re = sum(x[n] * math.cos(2 * math.pi * k * n / L) for n in range(L))
        im = -sum(x[n] * math.sin(2 * math.pi * k * n / L) for n in range(L))
        out.append(re * re + im * im)
    return np.array(out)


# -- channels / CAR --------------------------------------------------------

def test_select_occipital(clean_dataset):
    out = select_channels(clean_dataset.trials[0], ["O1", "O2"], SPEC.channels)
    assert out.shape == (1285, 2)
    assert np.array_equal(out[:, 0], clean_dataset.trials[0].samples[:, SPEC.channel_index("O1")])


def test_select_all_is_identity(clean_dataset):
    t = clean_dataset.trials[0]
    assert np.array_equal(select_channels(t, SPEC.channels, SPEC.channels), t.samples)


def test_select_unknown_channel():
    with pytest.raises(KeyError, match="XX"):
        select_channels(np.zeros((4, 14)), ["XX"], SPEC.channels)


def test_car_hand_example():
    assert car_filter(np.array([[1.0, 2.0, 3.0]])).tolist() == [[-1.0, 0.0, 1.0]]


def test_car_constant_is_zero():
    assert not car_filter(np.full((10, 5), 3.7)).any()


def test_car_single_channel_rejected():
    with pytest.raises(ValueError):
        car_filter(np.zeros((10, 1)))


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(2, 14)), elements=finite))
def test_car_row_sums_zero_and_idempotent(m):
    out = car_filter(m)
    scale = max(1.0, np.abs(m).max())
    assert np.abs(out.mean(axis=1)).max() <= 1e-12 * scale
    assert np.allclose(car_filter(out), out, atol=1e-12 * scale, rtol=0)


# -- spectra ---------------------------------------------------------------

def test_default_resolution_is_exact():
    assert power_spectrum(np.zeros(1285), 257.0).resolution_hz == 0.2


def test_sinusoid_peak_bin():
    t = np.arange(1285) / 257.0
    s = power_spectrum(np.sin(2 * np.pi * 12 * t), 257.0)
    assert int(np.argmax(s.power)) == 60
    assert s.n_bins == 643


def test_zero_signal():
    assert not power_spectrum(np.zeros(64), 257.0).power.any()


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        power_spectrum([0.0, np.inf, 1.0], 257.0)


@pytest.mark.parametrize("L", [2, 3, 7, 16, 33, 64])
def test_spectrum_matches_direct_dft(L):
    x = np.random.default_rng(L).standard_normal(L)
    oracle = dft_power(x)
    got = power_spectrum(x, 257.0).power
    assert np.allclose(got, oracle, rtol=1e-8, atol=1e-8 * oracle.max())


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(2, 64), elements=finite))
def test_parseval(x):
    L = len(x)
    half = power_spectrum(x, 257.0).power
    # Reconstruct the full two-sided sum from the one-sided bins.
    mirrored = half[1:(L + 1) // 2].sum()
    total = half.sum() + mirrored
    energy = float(np.sum(x * x))
    assert total / L == pytest.approx(energy, rel=1e-8, abs=1e-8)


# -- band windows ----------------------------------------------------------

@pytest.mark.parametrize("f, bins", [(12.0, range(58, 63)), (10.0, range(48, 53)), (8.57, range(41, 46))])
def test_window_bins(f, bins):
    assert window_bins(f, 0.5, 0.2).tolist() == list(bins)


def test_bin_centers_inside_window():
    for stim in DEFAULT_STIMULI:
        for h in (1, 2, 3):
            c = h * stim.frequency_hz
            b = window_bins(c, 0.5, 0.2)
            assert np.all(b * 0.2 >= c - 0.5 - 1e-9) and np.all(b * 0.2 <= c + 0.5 + 1e-9)
            assert (b[0] - 1) * 0.2 < c - 0.5 and (b[-1] + 1) * 0.2 > c + 0.5


def test_feature_length_occipital():
    spectra = [power_spectrum(np.random.default_rng(i).standard_normal(1285), 257.0) for i in range(2)]
    fv = extract_band_features(spectra, DEFAULT_STIMULI, (1, 2), 0.5, OCCIPITAL_CHANNELS)
    assert len(fv) == 2 * 3 * 2 * 5 == 60
    assert fv.layout.entries[0] == ("O1", 0, 1, 58)
    # 2 x 8.57 = 17.14 Hz: window [16.64, 17.64] holds bins 84..88.
    assert [e[3] for e in fv.layout.entries[-5:]] == [84, 85, 86, 87, 88]
    assert fv.values[0] == spectra[0].power[58] and fv.values[-1] == spectra[1].power[88]


def test_window_above_nyquist_rejected():
    with pytest.raises(ValueError, match="Nyquist"):
        band_layout(["O1"], DEFAULT_STIMULI, (1, 11), 0.5, 0.2, 128.5)


def test_full_montage_layout_length():
    layout = band_layout(SPEC.channels, DEFAULT_STIMULI, (1, 2), 0.5, 0.2, 128.5)
    assert len(layout.entries) == 420


# -- PCA -------------------------------------------------------------------

def test_pca_axis_aligned():
    X = np.zeros((6, 4))
    X[:, 0] = [1, -2, 3, 0, 5, -1]
    m = pca_fit(X)
    assert m.k == 1
    assert np.allclose(np.abs(m.components[0]), [1, 0, 0, 0])


def test_pca_full_retention():
    X = np.random.default_rng(0).standard_normal((5, 8))
    assert pca_fit(X, 1.0).k == 4
    X = np.random.default_rng(0).standard_normal((10, 3))
    assert pca_fit(X, 1.0).k == 3


def test_pca_constant_matrix_rejected():
    with pytest.raises(DegeneratePCAError):
        pca_fit(np.ones((5, 3)))


@pytest.mark.parametrize("seed", range(10))
def test_pca_matches_eigendecomposition_oracle(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((5, 4)) @ rng.standard_normal((4, 4))
    cov = np.cov(X, rowvar=False)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    m = pca_fit(X, k=2)
    assert np.allclose(m.explained_variance_ratio, evals[:2] / evals.sum(), atol=1e-10)
    # Same subspace: projectors agree.
    assert np.allclose(m.components.T @ m.components, evecs[:, :2] @ evecs[:, :2].T, atol=1e-8)
    # No random 2-D projection reconstructs better.
    Xc = X - X.mean(axis=0)
    err = np.sum((Xc - Xc @ m.components.T @ m.components) ** 2)
    for _ in range(200):
        q, _ = np.linalg.qr(rng.standard_normal((4, 2)))
        assert err <= np.sum((Xc - Xc @ q @ q.T) ** 2) + 1e-9


@given(st.integers(0, 10_000), st.integers(3, 12), st.integers(2, 10))
@settings(max_examples=40)
def test_pca_invariants(seed, n, d):
    X = np.random.default_rng(seed).standard_normal((n, d))
    m = pca_fit(X, 0.95)
    C = m.components
    assert np.allclose(C @ C.T, np.eye(m.k), atol=1e-8)
    r = m.explained_variance_ratio
    assert np.all(np.diff(r) <= 1e-12) and r.sum() <= 1 + 1e-12
    assert np.allclose(pca_transform(m, m.mean), 0, atol=1e-10)


def test_pca_full_rank_preserves_norms():
    X = np.random.default_rng(1).standard_normal((20, 5))
    m = pca_fit(X, 1.0)
    assert m.k == 5
    Z = pca_transform(m, X)
    assert np.allclose(np.linalg.norm(Z, axis=1), np.linalg.norm(X - m.mean, axis=1), atol=1e-8)


def test_pca_round_trip_error_monotone_in_k():
    X = np.random.default_rng(2).standard_normal((30, 8))
    errs = []
    for k in range(1, 9):
        m = pca_fit(X, k=k)
        errs.append(np.sum((pca_inverse(m, pca_transform(m, X)) - X) ** 2))
    assert all(a >= b - 1e-9 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-18 * max(1, np.sum(X ** 2)) + 1e-12


def test_pca_dimension_mismatch():
    m = pca_fit(np.random.default_rng(0).standard_normal((5, 3)))
    with pytest.raises(ValueError):
        pca_transform(m, np.zeros(4))


# -- z-score ---------------------------------------------------------------

def test_zscore_standardizes_training_matrix():
    X = np.random.default_rng(0).normal(3, 5, (40, 6))
    X[:, 2] = 7.0
    m = zscore_fit(X)
    Z = zscore_apply(m, X)
    live = [0, 1, 3, 4, 5]
    assert np.allclose(Z[:, live].mean(axis=0), 0, atol=1e-9)
    assert np.allclose(Z[:, live].std(axis=0), 1, atol=1e-9)
    assert not Z[:, 2].any() and m.zero_std.tolist() == [False, False, True, False, False, False]
    assert not zscore_apply(m, m.mean).any()
    assert np.all(m.std >= 0)


@given(st.floats(1e-3, 1e3))
def test_zscore_scale_invariant(c):
    X = np.random.default_rng(5).standard_normal((15, 4))
    a = zscore_apply(zscore_fit(X), X)
    b = zscore_apply(zscore_fit(c * X), c * X)
    assert np.allclose(a, b, atol=1e-9)


# -- chain -----------------------------------------------------------------

def test_default_configs_order():
    assert [c.name for c in default_configs()] == ["CAR+PCA", "CAR", "PCA", "none"]


def test_chain_without_car_or_pca_has_60_features(clean_dataset):
    cfg = PreprocessConfig(False, False)
    fitted, X = fit_preprocess(clean_dataset.trials[:30], cfg, SPEC, DEFAULT_STIMULI)
    assert X.shape == (30, 60) and fitted.pca is None
    assert preprocess_trial(clean_dataset.trials[40], cfg, fitted, SPEC, DEFAULT_STIMULI).shape == (60,)


def test_chain_with_pca_outputs_k(clean_dataset):
    cfg = PreprocessConfig(True, True)
    fitted, X = fit_preprocess(clean_dataset.trials[:60], cfg, SPEC, DEFAULT_STIMULI)
    x = preprocess_trial(clean_dataset.trials[70], cfg, fitted, SPEC, DEFAULT_STIMULI)
    assert x.shape == (fitted.pca.k,) and X.shape == (60, fitted.pca.k)
    again = preprocess_trial(clean_dataset.trials[70], cfg, fitted, SPEC, DEFAULT_STIMULI)
    assert np.array_equal(x, again)


def test_chain_rejects_foreign_fitted(clean_dataset):
    fitted, _ = fit_preprocess(clean_dataset.trials[:20], PreprocessConfig(False, False), SPEC, DEFAULT_STIMULI)
    with pytest.raises(ValueError):
        preprocess_trial(clean_dataset.trials[0], PreprocessConfig(True, False), fitted, SPEC, DEFAULT_STIMULI)


def test_degenerate_pca_falls_back():
    from ssvepbci.core import TrialRecording
    trials = [TrialRecording(np.zeros((1285, 14)), i % 3) for i in range(6)]
    fitted, X = fit_preprocess(trials, PreprocessConfig(True, True), SPEC, DEFAULT_STIMULI)
    assert fitted.pca_degenerate and fitted.pca is None and X.shape == (6, 60)
