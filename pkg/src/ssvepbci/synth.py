"""Synthetic SSVEP EEG: harmonic responses, pink/white background, blink and motion transients."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_STIMULI, OCCIPITAL_CHANNELS, RecordingSpec, StimulusSpec, SubjectDataset,
    TrialRecording, check_stimuli,
)

# Relative artifact pickup per channel; unlisted channels use the default key.
BLINK_TOPOGRAPHY = {"AF3": 1.0, "AF4": 1.0, "F7": 0.9, "F8": 0.9, "F3": 0.7, "F4": 0.7,
                    "FC5": 0.4, "FC6": 0.4, "default": 0.05}
MOTION_TOPOGRAPHY = {"T7": 1.0, "T8": 1.0, "F7": 0.7, "F8": 0.7, "P7": 0.6, "P8": 0.6,
                     "default": 0.3}


@dataclass(frozen=True)
class ArtifactSpec:
    blink_amplitude: float = 80.0
    blink_duration_s: float = 0.4
    blink_band_hz: tuple[float, float] = (1.0, 3.0)
    motion_amplitude: float = 15.0
    motion_duration_s: float = 1.0
    motion_reference_gain: float = 1.0

    def __post_init__(self) -> None:
        if self.blink_amplitude < 0 or self.motion_amplitude < 0:
            raise ValueError("artifact amplitudes must be >= 0")
        if self.blink_duration_s <= 0 or self.motion_duration_s <= 0:
            raise ValueError("artifact durations must be positive")
        lo, hi = self.blink_band_hz
        if not 0 < lo <= hi:
            raise ValueError(f"bad blink band {self.blink_band_hz}")

    def check_fits(self, flicker_seconds: float) -> None:
        if self.blink_duration_s > flicker_seconds or self.motion_duration_s > flicker_seconds:
            raise ValueError("artifact durations must not exceed the flicker window")


@dataclass(frozen=True)
class SubjectProfile:
    """Generative parameters for one synthetic subject.

    ``ssvep_gain`` maps channel name to response gain; channels not listed
    get ``default_gain``. ``noise_common_fraction`` is the share of pink
    background power that is identical on every electrode (what CAR removes).
    """

    ssvep_gain: dict[str, float] = field(default_factory=lambda: {"O1": 1.0, "O2": 0.8})
    default_gain: float = 0.1
    harmonic_amplitudes: tuple[float, ...] = (1.0, 0.5)
    noise_pink_level: float = 0.0
    noise_white_level: float = 0.0
    noise_common_fraction: float = 0.5
    freq_jitter_hz: float = 0.0
    trial_gain_sd: float = 0.0
    alpha_amplitude: float = 0.0
    alpha_hz: float = 10.0
    blink_rate_per_trial: float = 0.0
    motion_burst_rate_per_trial: float = 0.0
    artifacts: ArtifactSpec = field(default_factory=ArtifactSpec)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "harmonic_amplitudes", tuple(self.harmonic_amplitudes))
        if not any(a > 0 for a in self.harmonic_amplitudes):
            raise ValueError("at least one harmonic amplitude must be > 0")
        if not 0 <= self.freq_jitter_hz < 0.5:
            raise ValueError(f"freq_jitter_hz must be in [0, 0.5), got {self.freq_jitter_hz}")
        if not 0 <= self.noise_common_fraction <= 1:
            raise ValueError("noise_common_fraction must be in [0, 1]")
        for name in ("noise_pink_level", "noise_white_level", "trial_gain_sd", "alpha_amplitude",
                     "blink_rate_per_trial", "motion_burst_rate_per_trial", "default_gain"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if any(g < 0 for g in self.ssvep_gain.values()):
            raise ValueError("ssvep gains must be >= 0")

    def gains(self, channels: Sequence[str]) -> np.ndarray:
        return np.array([self.ssvep_gain.get(c, self.default_gain) for c in channels])


def clean_profile(seed: int = 0, **overrides) -> SubjectProfile:
    """Noiseless, jitter-free, artifact-free subject."""
    return replace(SubjectProfile(seed=seed), **overrides)


def moderate_profile(seed: int = 0, **overrides) -> SubjectProfile:
    """Noisy subject whose individual pipelines land roughly in the 60-85% band."""
    base = SubjectProfile(
        noise_pink_level=7.0,
        noise_white_level=2.0,
        noise_common_fraction=0.3,
        freq_jitter_hz=0.3,
        trial_gain_sd=0.35,
        seed=seed,
    )
    return replace(base, **overrides)


def noise_only_profile(seed: int = 0, **overrides) -> SubjectProfile:
    """No SSVEP response anywhere; only background noise."""
    base = SubjectProfile(ssvep_gain={}, default_gain=0.0, noise_pink_level=5.0,
                          noise_white_level=2.0, seed=seed)
    return replace(base, **overrides)


def pink_noise(n: int, rng: np.random.Generator, n_series: int = 1) -> np.ndarray:
    """Unit-variance 1/f noise, shape ``(n, n_series)``, by spectral shaping of white noise."""
    spec = rng.standard_normal((n // 2 + 1, n_series)) + 1j * rng.standard_normal((n // 2 + 1, n_series))
    k = np.arange(n // 2 + 1, dtype=np.float64)
    scale = np.zeros_like(k)
    scale[1:] = 1.0 / np.sqrt(k[1:])
    out = np.fft.irfft(spec * scale[:, None], n=n, axis=0)
    std = out.std(axis=0)
    std[std == 0] = 1.0
    return out / std


def _topography(table: dict[str, float], channels: Sequence[str]) -> np.ndarray:
    return np.array([table.get(c, table["default"]) for c in channels])


@dataclass(frozen=True)
class ArtifactEvent:
    kind: str          # "blink" or "motion"
    onset_s: float
    freq_hz: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("blink", "motion"):
            raise ValueError(f"unknown artifact kind {self.kind!r}")


def artifact_waveforms(events: Iterable[ArtifactEvent], spec: ArtifactSpec, rec_spec: RecordingSpec,
                       rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Sum of the transients described by ``events``; zero outside each event window."""
    fs = rec_spec.sampling_rate_hz
    n = rec_spec.samples_per_trial
    out = np.zeros((n, rec_spec.n_channels))
    blink_topo = _topography(BLINK_TOPOGRAPHY, rec_spec.channels)
    motion_topo = _topography(MOTION_TOPOGRAPHY, rec_spec.channels)
    for ev in events:
        start = int(round(ev.onset_s * fs))
        if ev.kind == "blink":
            width = max(int(round(spec.blink_duration_s * fs)), 1)
            stop = min(start + width, n)
            if start >= n or stop <= start:
                continue
            t = np.arange(width) / fs
            shape = np.hanning(width + 2)[1:-1] * np.cos(2 * np.pi * ev.freq_hz * (t - t[width // 2]))
            out[start:stop] += spec.blink_amplitude * np.outer(shape[: stop - start], blink_topo)
        else:
            width = max(int(round(spec.motion_duration_s * fs)), 1)
            stop = min(start + width, n)
            if start >= n or stop <= start:
                continue
            gen = rng if rng is not None else np.random.default_rng(start)
            env = np.hanning(width + 2)[1:-1][:, None]
            # Muscle activity near the moving electrodes, plus a reference-lead
            # disturbance that reaches every channel identically.
            emg = gen.standard_normal((width, rec_spec.n_channels)) * motion_topo
            reference = pink_noise(width, gen, 1) * spec.motion_reference_gain
            wave = spec.motion_amplitude * env * (emg + reference)
            out[start:stop] += wave[: stop - start]
    return out


def sample_artifact_events(spec: ArtifactSpec, rec_spec: RecordingSpec, rng: np.random.Generator,
                           blink_rate: float, motion_rate: float) -> list[ArtifactEvent]:
    """Poisson counts per trial, uniform onsets that keep each event inside the window."""
    events = []
    span = rec_spec.flicker_seconds
    for kind, rate, dur in (("blink", blink_rate, spec.blink_duration_s),
                            ("motion", motion_rate, spec.motion_duration_s)):
        count = int(rng.poisson(rate)) if rate > 0 else 0
        for _ in range(count):
            onset = float(rng.uniform(0.0, max(span - dur, 0.0)))
            freq = float(rng.uniform(*spec.blink_band_hz))
            events.append(ArtifactEvent(kind, onset, freq))
    return events


def inject_artifacts(trial: TrialRecording, artifact_spec: ArtifactSpec, rng: np.random.Generator,
                     rec_spec: RecordingSpec = RecordingSpec(), blink_rate: float = 1.0,
                     motion_rate: float = 1.0,
                     events: Optional[Sequence[ArtifactEvent]] = None) -> TrialRecording:
    """Return a copy of ``trial`` with additive blink/motion transients.

    Event onsets are drawn from ``rng`` unless ``events`` is given explicitly.
    """
    artifact_spec.check_fits(rec_spec.flicker_seconds)
    if events is None:
        events = sample_artifact_events(artifact_spec, rec_spec, rng, blink_rate, motion_rate)
    if not events or (artifact_spec.blink_amplitude == 0 and artifact_spec.motion_amplitude == 0):
        return trial.with_samples(trial.samples)
    wave = artifact_waveforms(events, artifact_spec, rec_spec, rng)
    if wave.shape != trial.samples.shape:
        raise ValueError(f"trial shape {trial.samples.shape} does not match recording spec {wave.shape}")
    return trial.with_samples(trial.samples + wave)


def synth_trial(profile: SubjectProfile, target: int, stimuli: Sequence[StimulusSpec],
                rec_spec: RecordingSpec, rng: np.random.Generator, trial_index: int = 0,
                session_index: int = 0, subject_id: str = "S0") -> TrialRecording:
    if not 0 <= target < len(stimuli):
        raise ValueError(f"target {target} does not index {len(stimuli)} stimuli")
    f_target = stimuli[target].frequency_hz
    for h, amp in enumerate(profile.harmonic_amplitudes, start=1):
        if amp != 0 and h * (f_target + profile.freq_jitter_hz) >= rec_spec.nyquist_hz:
            raise ValueError(
                f"harmonic {h} of {f_target} Hz reaches Nyquist ({rec_spec.nyquist_hz} Hz)"
            )

    fs = rec_spec.sampling_rate_hz
    n = rec_spec.samples_per_trial
    t = np.arange(n) / fs

    # Draw order is fixed so a seed fully determines the trial.
    jitter = float(rng.uniform(-profile.freq_jitter_hz, profile.freq_jitter_hz)) if profile.freq_jitter_hz else 0.0
    phases = rng.uniform(0.0, 2 * np.pi, size=len(profile.harmonic_amplitudes))
    trial_gain = float(rng.lognormal(0.0, profile.trial_gain_sd)) if profile.trial_gain_sd else 1.0

    f = f_target + jitter
    response = np.zeros(n)
    for h, (amp, phi) in enumerate(zip(profile.harmonic_amplitudes, phases), start=1):
        if amp:
            response += amp * np.sin(2 * np.pi * h * f * t + phi)
    samples = trial_gain * np.outer(response, profile.gains(rec_spec.channels))

    n_ch = rec_spec.n_channels
    if profile.noise_pink_level:
        common = pink_noise(n, rng, 1)
        local = pink_noise(n, rng, n_ch)
        c = profile.noise_common_fraction
        samples += profile.noise_pink_level * (np.sqrt(c) * common + np.sqrt(1 - c) * local)
    if profile.noise_white_level:
        samples += profile.noise_white_level * rng.standard_normal((n, n_ch))
    if profile.alpha_amplitude:
        alpha_phase = rng.uniform(0.0, 2 * np.pi)
        samples += profile.alpha_amplitude * np.sin(2 * np.pi * profile.alpha_hz * t + alpha_phase)[:, None]

    trial = TrialRecording(samples, target, trial_index, session_index, subject_id)
    if profile.blink_rate_per_trial or profile.motion_burst_rate_per_trial:
        trial = inject_artifacts(trial, profile.artifacts, rng, rec_spec,
                                 profile.blink_rate_per_trial, profile.motion_burst_rate_per_trial)
    return trial


def synth_dataset(profile: SubjectProfile, schedule, stimuli: Sequence[StimulusSpec] = DEFAULT_STIMULI,
                  rec_spec: RecordingSpec = RecordingSpec(), subject_id: Optional[str] = None) -> SubjectDataset:
    """Generate one trial per scheduled label.

    ``schedule`` is a :class:`~ssvepbci.protocol.ProtocolSchedule` or any
    sequence of per-session label sequences. Each trial draws from its own
    substream spawned from ``profile.seed``.
    """
    check_stimuli(stimuli, rec_spec.sampling_rate_hz)
    sessions = schedule.session_labels() if hasattr(schedule, "session_labels") else [list(s) for s in schedule]
    subject_id = subject_id if subject_id is not None else f"synth-{profile.seed}"
    n_total = sum(len(s) for s in sessions)
    streams = np.random.SeedSequence(profile.seed).spawn(n_total)
    trials = []
    k = 0
    for s_idx, labels in enumerate(sessions):
        for t_idx, label in enumerate(labels):
            rng = np.random.default_rng(streams[k])
            trials.append(synth_trial(profile, int(label), stimuli, rec_spec, rng,
                                      trial_index=t_idx, session_index=s_idx, subject_id=subject_id))
            k += 1
    provenance = {"generator": "ssvepbci.synth", "seed": profile.seed, "profile": profile_to_dict(profile)}
    return SubjectDataset(rec_spec, tuple(stimuli), tuple(trials), provenance,
                          session_lengths=tuple(len(s) for s in sessions))


def profile_to_dict(profile: SubjectProfile) -> dict:
    from dataclasses import asdict
    d = asdict(profile)
    d["artifacts"]["blink_band_hz"] = list(profile.artifacts.blink_band_hz)
    d["harmonic_amplitudes"] = list(profile.harmonic_amplitudes)
    return d


def profile_from_dict(d: dict) -> SubjectProfile:
    d = dict(d)
    art = dict(d.pop("artifacts", {}))
    if "blink_band_hz" in art:
        art["blink_band_hz"] = tuple(art["blink_band_hz"])
    return SubjectProfile(artifacts=ArtifactSpec(**art), **d)


__all__ = [
    "ArtifactEvent", "ArtifactSpec", "SubjectProfile", "artifact_waveforms", "clean_profile",
    "inject_artifacts", "moderate_profile", "noise_only_profile", "pink_noise", "profile_from_dict",
    "profile_to_dict", "sample_artifact_events", "synth_dataset", "synth_trial", "OCCIPITAL_CHANNELS",
]
