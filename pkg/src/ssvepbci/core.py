"""Domain types shared across the pipeline: stimuli, recording layout, trials, datasets."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

EMOTIV_CHANNELS: tuple[str, ...] = (
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1",
    "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
)
OCCIPITAL_CHANNELS: tuple[str, ...] = ("O1", "O2")

# A command label is a dense integer index into the stimulus list.
CommandLabel = int


@dataclass(frozen=True)
class StimulusSpec:
    label_id: int
    name: str
    frequency_hz: float
    color: str = "green"

    def __post_init__(self) -> None:
        if self.label_id < 0:
            raise ValueError(f"label_id must be >= 0, got {self.label_id}")
        if not self.frequency_hz > 0:
            raise ValueError(f"frequency_hz must be positive, got {self.frequency_hz}")


DEFAULT_STIMULI: tuple[StimulusSpec, ...] = (
    StimulusSpec(0, "create_cube", 12.0),
    StimulusSpec(1, "delete_all", 10.0),
    StimulusSpec(2, "create_sphere", 8.57),
)


def check_stimuli(stimuli: Sequence[StimulusSpec], sampling_rate_hz: float) -> None:
    """Raise ``ValueError`` unless the stimulus list is a valid command set."""
    if len(stimuli) < 2:
        raise ValueError(f"need at least 2 stimuli, got {len(stimuli)}")
    ids = [s.label_id for s in stimuli]
    if ids != list(range(len(stimuli))):
        raise ValueError(f"label ids must be 0..N-1 in list order, got {ids}")
    freqs = [s.frequency_hz for s in stimuli]
    if len(set(freqs)) != len(freqs):
        raise ValueError(f"stimulus frequencies must be distinct, got {freqs}")
    nyquist = sampling_rate_hz / 2.0
    for s in stimuli:
        if s.frequency_hz >= nyquist:
            raise ValueError(
                f"stimulus {s.name!r} at {s.frequency_hz} Hz is not below Nyquist ({nyquist} Hz)"
            )


@dataclass(frozen=True)
class RecordingSpec:
    sampling_rate_hz: float = 257.0
    channels: tuple[str, ...] = EMOTIV_CHANNELS
    samples_per_trial: int = 1285
    flicker_seconds: float = 5.0
    rest_seconds: float = 5.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.sampling_rate_hz > 0:
            raise ValueError(f"sampling_rate_hz must be positive, got {self.sampling_rate_hz}")
        if self.samples_per_trial <= 0:
            raise ValueError(f"samples_per_trial must be positive, got {self.samples_per_trial}")
        expected = round(self.sampling_rate_hz * self.flicker_seconds)
        if self.samples_per_trial != expected:
            raise ValueError(
                f"samples_per_trial={self.samples_per_trial} but "
                f"sampling_rate_hz*flicker_seconds rounds to {expected}"
            )
        if len(set(self.channels)) != len(self.channels):
            raise ValueError(f"channel names must be unique, got {self.channels}")
        if not self.channels:
            raise ValueError("at least one channel is required")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def resolution_hz(self) -> float:
        return self.sampling_rate_hz / self.samples_per_trial

    @property
    def nyquist_hz(self) -> float:
        return self.sampling_rate_hz / 2.0

    def channel_index(self, name: str) -> int:
        try:
            return self.channels.index(name)
        except ValueError:
            raise KeyError(f"unknown channel {name!r}; known: {', '.join(self.channels)}") from None


@dataclass(frozen=True, eq=False)
class TrialRecording:
    """One flicker window, shape ``(samples_per_trial, n_channels)``, ear-referenced.

    ``true_label`` is ``None`` for unlabeled (free-running online) trials.
    Non-finite values are allowed here so they can be reported by
    :func:`validate_dataset` rather than failing at construction.
    """

    samples: np.ndarray
    true_label: Optional[int]
    trial_index: int = 0
    session_index: int = 0
    subject_id: str = "S0"

    def __post_init__(self) -> None:
        arr = np.array(self.samples, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"samples must be 2-D (samples x channels), got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape  # type: ignore[return-value]

    def with_samples(self, samples: np.ndarray) -> "TrialRecording":
        return TrialRecording(samples, self.true_label, self.trial_index,
                              self.session_index, self.subject_id)


@dataclass(frozen=True)
class SubjectDataset:
    spec: RecordingSpec
    stimuli: tuple[StimulusSpec, ...]
    trials: tuple[TrialRecording, ...]
    provenance: dict[str, Any] = field(default_factory=dict)
    # Expected trial count per session index, when the dataset follows a schedule.
    session_lengths: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "stimuli", tuple(self.stimuli))
        object.__setattr__(self, "trials", tuple(self.trials))
        if self.session_lengths is not None:
            object.__setattr__(self, "session_lengths", tuple(self.session_lengths))

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.true_label for t in self.trials])

    @property
    def subject_id(self) -> str:
        ids = {t.subject_id for t in self.trials}
        return ids.pop() if len(ids) == 1 else ",".join(sorted(ids))

    def __len__(self) -> int:
        return len(self.trials)


@dataclass(frozen=True)
class Violation:
    trial_index: Optional[int]
    rule: str
    detail: str

    def __str__(self) -> str:
        where = "dataset" if self.trial_index is None else f"trial {self.trial_index}"
        return f"{where}: {self.rule}: {self.detail}"


def validate_trial(trial: TrialRecording, spec: RecordingSpec, n_labels: int,
                   position: Optional[int] = None) -> list[Violation]:
    """Check one trial against the recording layout; ``position`` names it in reports."""
    where = trial.trial_index if position is None else position
    out: list[Violation] = []
    rows, cols = trial.samples.shape
    if rows != spec.samples_per_trial:
        out.append(Violation(where, "row count",
                             f"expected {spec.samples_per_trial} rows, got {rows}"))
    if cols != spec.n_channels:
        out.append(Violation(where, "column count",
                             f"expected {spec.n_channels} columns, got {cols}"))
    if not np.all(np.isfinite(trial.samples)):
        bad = int(np.count_nonzero(~np.isfinite(trial.samples)))
        out.append(Violation(where, "non-finite value", f"{bad} non-finite sample(s)"))
    if trial.true_label is not None and not 0 <= trial.true_label < n_labels:
        out.append(Violation(where, "label range",
                             f"label {trial.true_label} does not index {n_labels} stimuli"))
    return out


def validate_dataset(dataset: SubjectDataset) -> list[Violation]:
    """Return every invariant violation in ``dataset``; empty means well formed."""
    report: list[Violation] = []
    try:
        check_stimuli(dataset.stimuli, dataset.spec.sampling_rate_hz)
    except ValueError as exc:
        report.append(Violation(None, "stimuli", str(exc)))
    n_labels = len(dataset.stimuli)
    for pos, trial in enumerate(dataset.trials):
        report.extend(validate_trial(trial, dataset.spec, n_labels, position=pos))
        if trial.true_label is None:
            report.append(Violation(pos, "label range", "dataset trials must carry a label"))
    if dataset.session_lengths is not None:
        counts: dict[int, int] = {}
        for trial in dataset.trials:
            counts[trial.session_index] = counts.get(trial.session_index, 0) + 1
        expected = dict(enumerate(dataset.session_lengths))
        for session in sorted(set(counts) | set(expected)):
            got, want = counts.get(session, 0), expected.get(session, 0)
            if got != want:
                report.append(Violation(None, "session trial count",
                                        f"session {session}: expected {want} trials, got {got}"))
    return report
