import numpy as np
import pytest

from ssvepbci.core import DEFAULT_STIMULI, RecordingSpec, TrialRecording
from ssvepbci.preprocess import power_spectrum, select_channels, window_bins
from ssvepbci.protocol import make_offline_schedule
from ssvepbci.synth import (
    ArtifactEvent, ArtifactSpec, SubjectProfile, clean_profile, inject_artifacts, moderate_profile,
    noise_only_profile, pink_noise, profile_from_dict, profile_to_dict, synth_dataset, synth_trial,
)

SPEC = RecordingSpec()


def _o1(trial):
    return select_channels(trial, ["O1"], SPEC.channels)[:, 0]


def test_noiseless_trial_peaks_at_target():
    prof = clean_profile(0, harmonic_amplitudes=(1.0,))
    t = synth_trial(prof, 0, DEFAULT_STIMULI, SPEC, np.random.default_rng(0))
    spec = power_spectrum(_o1(t), SPEC.sampling_rate_hz)
    assert spec.frequencies[np.argmax(spec.power)] == pytest.approx(12.0)


def test_second_harmonic_gives_secondary_peak():
    prof = clean_profile(0, harmonic_amplitudes=(1.0, 0.5))
    t = synth_trial(prof, 0, DEFAULT_STIMULI, SPEC, np.random.default_rng(0))
    p = power_spectrum(_o1(t), SPEC.sampling_rate_hz).power.copy()
    p[58:63] = 0  # remove the fundamental's window
    assert np.argmax(p) * SPEC.resolution_hz == pytest.approx(24.0)


def test_noiseless_power_confined_to_harmonic_windows():
    prof = clean_profile(0)
    for target, stim in enumerate(DEFAULT_STIMULI):
        t = synth_trial(prof, target, DEFAULT_STIMULI, SPEC, np.random.default_rng(target))
        p = power_spectrum(_o1(t), SPEC.sampling_rate_hz).power
        inside = np.concatenate([window_bins(h * stim.frequency_hz, 0.5, SPEC.resolution_hz) for h in (1, 2)])
        # 8.57 Hz falls between bins; its leakage is the only power outside the windows.
        assert p[inside].sum() / p.sum() > 0.95


def test_synth_trial_is_deterministic():
    prof = moderate_profile(3)
    a = synth_trial(prof, 1, DEFAULT_STIMULI, SPEC, np.random.default_rng(9))
    b = synth_trial(prof, 1, DEFAULT_STIMULI, SPEC, np.random.default_rng(9))
    assert np.array_equal(a.samples, b.samples)


def test_synth_trial_rejects_harmonic_above_nyquist():
    prof = clean_profile(0, harmonic_amplitudes=(1.0,) + (0.0,) * 9 + (0.5,))
    with pytest.raises(ValueError, match="Nyquist"):
        synth_trial(prof, 0, DEFAULT_STIMULI, SPEC, np.random.default_rng(0))


def test_profile_invariants():
    with pytest.raises(ValueError):
        SubjectProfile(harmonic_amplitudes=(0.0, 0.0))
    with pytest.raises(ValueError):
        SubjectProfile(freq_jitter_hz=0.5)


def test_synth_dataset_follows_schedule():
    sched = make_offline_schedule(4)
    ds = synth_dataset(clean_profile(1), sched)
    assert len(ds) == 125
    assert list(ds.labels) == sched.labels()
    assert ds.provenance["seed"] == 1


def test_synth_dataset_single_trial():
    ds = synth_dataset(clean_profile(1), [[2]])
    assert len(ds) == 1 and ds.trials[0].true_label == 2


def test_seed_changes_samples_not_labels():
    sched = make_offline_schedule(0, n_sessions=1)
    a = synth_dataset(moderate_profile(1), sched)
    b = synth_dataset(moderate_profile(2), sched)
    assert list(a.labels) == list(b.labels)
    assert not np.array_equal(a.trials[0].samples, b.trials[0].samples)


def test_white_noise_lowers_target_power_fraction():
    def fraction(level):
        vals = []
        for seed in range(20):
            prof = clean_profile(seed, noise_white_level=level)
            t = synth_trial(prof, 0, DEFAULT_STIMULI, SPEC, np.random.default_rng(seed))
            p = power_spectrum(_o1(t), SPEC.sampling_rate_hz).power
            vals.append(p[58:63].sum() / p.sum())
        return np.mean(vals)
    fr = [fraction(level) for level in (0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(fr, fr[1:]))


def test_pink_noise_slope_near_minus_one():
    n = 257 * 64
    x = pink_noise(n, np.random.default_rng(0), 8)
    p = (np.abs(np.fft.rfft(x, axis=0)) ** 2).mean(axis=1)
    f = np.fft.rfftfreq(n, 1 / 257)
    band = (f >= 1) & (f <= 40)
    slope = np.polyfit(np.log10(f[band]), np.log10(p[band]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.1)
    assert x.std(axis=0) == pytest.approx(np.ones(8))


def _trial(seed=0):
    return synth_trial(moderate_profile(seed), 0, DEFAULT_STIMULI, SPEC, np.random.default_rng(seed))


def test_zero_amplitude_artifacts_are_identity():
    t = _trial()
    spec = ArtifactSpec(blink_amplitude=0.0, motion_amplitude=0.0)
    out = inject_artifacts(t, spec, np.random.default_rng(0), SPEC, 3.0, 3.0)
    assert np.array_equal(out.samples, t.samples)


def test_blink_confined_to_window():
    t = _trial()
    spec = ArtifactSpec()
    onset = 2.0
    out = inject_artifacts(t, spec, np.random.default_rng(0), SPEC, events=[ArtifactEvent("blink", onset, 2.0)])
    diff = np.abs(out.samples - t.samples).max(axis=1)
    start = round(onset * SPEC.sampling_rate_hz)
    stop = start + round(spec.blink_duration_s * SPEC.sampling_rate_hz)
    assert diff[start:stop].max() > 0
    assert not diff[:start].any() and not diff[stop:].any()
    assert out.true_label == t.true_label and out.samples.shape == t.samples.shape


def test_large_blink_raises_low_frequency_power():
    t = _trial()
    out = inject_artifacts(t, ArtifactSpec(blink_amplitude=500.0), np.random.default_rng(0), SPEC,
                           events=[ArtifactEvent("blink", 1.0, 2.0)])
    af3 = SPEC.channel_index("AF3")
    lo = slice(1, 16)  # 0.2-3.0 Hz
    before = power_spectrum(t.samples[:, af3], 257.0).power[lo].sum()
    after = power_spectrum(out.samples[:, af3], 257.0).power[lo].sum()
    assert after > before


def test_artifact_durations_must_fit():
    with pytest.raises(ValueError):
        inject_artifacts(_trial(), ArtifactSpec(blink_duration_s=6.0), np.random.default_rng(0), SPEC)


def test_noise_only_profile_has_no_response():
    prof = noise_only_profile(0, noise_pink_level=0.0, noise_white_level=0.0)
    t = synth_trial(prof, 0, DEFAULT_STIMULI, SPEC, np.random.default_rng(0))
    assert not t.samples.any()


def test_profile_dict_round_trip():
    prof = moderate_profile(5, blink_rate_per_trial=0.5)
    assert profile_from_dict(profile_to_dict(prof)) == prof


def test_artifact_injection_preserves_shape_and_label():
    rng = np.random.default_rng(3)
    for seed in range(5):
        t = _trial(seed)
        out = inject_artifacts(t, ArtifactSpec(), rng, SPEC, 2.0, 2.0)
        assert out.samples.shape == t.samples.shape and out.true_label == t.true_label
        assert isinstance(out, TrialRecording)
