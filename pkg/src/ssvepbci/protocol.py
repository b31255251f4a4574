"""Recording schedule, synchronization-clock slicing, stratified splits, offline and online runners."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .classifiers import TrainableSpec, predict
from .core import RecordingSpec, SubjectDataset, TrialRecording, validate_trial
from .ensemble import (
    DEFAULT_CLASSIFIERS, EnsembleModel, EnsemblePrediction, build_ensemble, ensemble_predict,
    weighted_vote,
)
from .metrics import ItrResult, accuracy, itr, paired_t_test
from .preprocess import PreprocessConfig, default_configs, transform_many

# Example part-a order: 0 = create cube, 1 = delete all, 2 = create sphere.
EXAMPLE_PART_A = (2, 0, 1, 2, 0, 2, 1, 0, 1, 0, 1, 2)
PART_LENGTHS = (12, 13)


@dataclass(frozen=True)
class SessionPlan:
    part_a: tuple[int, ...]
    part_b: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "part_a", tuple(int(x) for x in self.part_a))
        object.__setattr__(self, "part_b", tuple(int(x) for x in self.part_b))

    @property
    def labels(self) -> tuple[int, ...]:
        return self.part_a + self.part_b

    def __len__(self) -> int:
        return len(self.part_a) + len(self.part_b)


@dataclass(frozen=True)
class ProtocolSchedule:
    sessions: tuple[SessionPlan, ...]
    flicker_seconds: float = 5.0
    rest_seconds: float = 5.0
    inter_part_rest_seconds: float = 30.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "sessions", tuple(self.sessions))

    @property
    def n_trials(self) -> int:
        return sum(len(s) for s in self.sessions)

    def session_labels(self) -> list[tuple[int, ...]]:
        return [s.labels for s in self.sessions]

    def labels(self) -> list[int]:
        return [lab for s in self.sessions for lab in s.labels]

    def onsets_s(self, session: SessionPlan) -> list[float]:
        """Flicker onset of every trial in ``session``, seconds from the session start."""
        period = self.flicker_seconds + self.rest_seconds
        out = [k * period for k in range(len(session.part_a))]
        if session.part_b:
            start_b = len(session.part_a) * period + (self.inter_part_rest_seconds if session.part_a else 0.0)
            out += [start_b + k * period for k in range(len(session.part_b))]
        return out

    def session_duration_s(self, session: SessionPlan) -> float:
        period = self.flicker_seconds + self.rest_seconds
        gap = self.inter_part_rest_seconds if session.part_a and session.part_b else 0.0
        return len(session) * period + gap


def _part_problems(seq: Sequence[int], n_labels: int, expected_len: Optional[int], name: str) -> list[str]:
    out = []
    if expected_len is not None and len(seq) != expected_len:
        out.append(f"{name}: expected {expected_len} trials, got {len(seq)}")
    bad = [x for x in seq if not 0 <= x < n_labels]
    if bad:
        out.append(f"{name}: labels {bad} outside 0..{n_labels - 1}")
    return out


def _balance_problem(seq: Sequence[int], n_labels: int, name: str) -> list[str]:
    counts = np.bincount(np.asarray(seq, dtype=np.int64), minlength=n_labels)[:n_labels]
    if counts.max() - counts.min() > 1:
        return [f"{name}: label counts {counts.tolist()} differ by more than 1"]
    return []


def validate_part_sequence(seq: Sequence[int], n_labels: int = 3, expected_len: Optional[int] = 12) -> list[str]:
    """Problems with one part's label sequence (length, range, near-balance)."""
    return (_part_problems(seq, n_labels, expected_len, "part")
            + _balance_problem(seq, n_labels, "part"))


def validate_schedule(schedule: ProtocolSchedule, n_labels: int = 3,
                      part_lengths: Optional[tuple[int, int]] = PART_LENGTHS) -> list[str]:
    problems = []
    for i, s in enumerate(schedule.sessions):
        la, lb = part_lengths if part_lengths else (None, None)
        problems += _part_problems(s.part_a, n_labels, la, f"session {i} part a")
        problems += _part_problems(s.part_b, n_labels, lb, f"session {i} part b")
        problems += _balance_problem(s.labels, n_labels, f"session {i}")
    return problems


def make_offline_schedule(seed: int = 0, n_sessions: int = 5, part_lengths: tuple[int, int] = PART_LENGTHS,
                          n_labels: int = 3, flicker_seconds: float = 5.0, rest_seconds: float = 5.0,
                          inter_part_rest_seconds: float = 30.0) -> ProtocolSchedule:
    """Pseudorandom near-balanced cue sequences, deterministic under ``seed``.

    Leftover trials (when a part length is not a multiple of ``n_labels``)
    rotate over labels so each session's counts differ by at most one.
    """
    rng = np.random.default_rng(seed)
    sessions = []
    offset = 0
    for _ in range(n_sessions):
        parts = []
        for length in part_lengths:
            counts = [length // n_labels] * n_labels
            for i in range(length % n_labels):
                counts[(offset + i) % n_labels] += 1
            offset = (offset + length % n_labels) % n_labels
            seq = np.repeat(np.arange(n_labels), counts)
            parts.append(tuple(int(x) for x in rng.permutation(seq)))
        sessions.append(SessionPlan(parts[0], parts[1] if len(parts) > 1 else ()))
    return ProtocolSchedule(tuple(sessions), flicker_seconds, rest_seconds, inter_part_rest_seconds)


# -- synchronization clock ---------------------------------------------------

def flicker_windows(schedule: ProtocolSchedule, session: SessionPlan, rec_spec: RecordingSpec) -> list[tuple[int, int]]:
    fs = rec_spec.sampling_rate_hz
    return [(int(round(t * fs)), int(round(t * fs)) + rec_spec.samples_per_trial)
            for t in schedule.onsets_s(session)]


def slice_recording(stream: np.ndarray, schedule: ProtocolSchedule, rec_spec: RecordingSpec,
                    session: Union[int, SessionPlan] = 0, subject_id: str = "S0") -> list[TrialRecording]:
    """Cut the flicker windows of one session out of a continuous recording.

    Rest periods are dropped; each window carries the scheduled label.
    """
    plan = schedule.sessions[session] if isinstance(session, int) else session
    session_index = session if isinstance(session, int) else 0
    arr = np.asarray(stream, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != rec_spec.n_channels:
        raise ValueError(f"stream must be (samples, {rec_spec.n_channels}), got {arr.shape}")
    needed = int(round(schedule.session_duration_s(plan) * rec_spec.sampling_rate_hz))
    if arr.shape[0] < needed:
        raise ValueError(f"stream too short for the schedule: expected {needed} samples, got {arr.shape[0]}")
    windows = flicker_windows(schedule, plan, rec_spec)
    return [TrialRecording(arr[a:b], label, k, session_index, subject_id)
            for k, ((a, b), label) in enumerate(zip(windows, plan.labels))]


def continuous_session(trials: Sequence[TrialRecording], schedule: ProtocolSchedule,
                       rec_spec: RecordingSpec, session: Union[int, SessionPlan] = 0,
                       rest_fill: Optional[Callable[[int], np.ndarray]] = None) -> np.ndarray:
    """Lay trials out on the session timeline, filling rests (zeros by default)."""
    plan = schedule.sessions[session] if isinstance(session, int) else session
    n = int(round(schedule.session_duration_s(plan) * rec_spec.sampling_rate_hz))
    stream = np.zeros((n, rec_spec.n_channels)) if rest_fill is None else np.asarray(rest_fill(n), dtype=float)
    for (a, b), trial in zip(flicker_windows(schedule, plan, rec_spec), trials):
        stream[a:b] = trial.samples
    return stream


# -- splitting ---------------------------------------------------------------

def split_subjectwise_stratified(dataset: Union[SubjectDataset, Sequence[TrialRecording]],
                                 train_fraction: float = 0.8, seed: int = 0
                                 ) -> tuple[list[TrialRecording], list[TrialRecording]]:
    """Stratified train/test partition of a single subject's trials.

    The test set has ``N - round(N * train_fraction)`` trials; per-class
    test quotas are floored and the remainder goes to the classes with the
    largest fractional parts (ties to the lowest label). Both halves keep
    the original trial order.
    """
    trials = list(dataset.trials if isinstance(dataset, SubjectDataset) else dataset)
    subjects = {t.subject_id for t in trials}
    if len(subjects) > 1:
        raise ValueError(f"split must be within one subject, got {sorted(subjects)}")
    if not 0 < train_fraction <= 1:
        raise ValueError(f"train_fraction must be in (0, 1], got {train_fraction}")
    labels = np.array([t.true_label for t in trials])
    classes, counts = np.unique(labels, return_counts=True)
    small = [int(c) for c, n in zip(classes, counts) if n < 2]
    if small:
        raise ValueError(f"classes {small} have fewer than 2 trials")
    frac_test = 1 - Fraction(str(train_fraction))
    n_total = len(trials)
    n_test = n_total - round(n_total * Fraction(str(train_fraction)))
    exact = [Fraction(int(n)) * frac_test for n in counts]
    quota = [int(q) for q in exact]  # floor; values are non-negative
    leftover = n_test - sum(quota)
    order = sorted(range(len(classes)), key=lambda i: (-(exact[i] - quota[i]), classes[i]))
    for i in order[:max(leftover, 0)]:
        quota[i] += 1
    if n_test == 0:
        warnings.warn("train_fraction leaves an empty test set", stacklevel=2)
    rng = np.random.default_rng(seed)
    test_idx: set[int] = set()
    for cls, q in zip(classes, quota):
        members = np.flatnonzero(labels == cls)
        test_idx.update(int(i) for i in rng.permutation(members)[:q])
    train = [t for i, t in enumerate(trials) if i not in test_idx]
    test = [t for i, t in enumerate(trials) if i in test_idx]
    return train, test


# -- offline experiment ------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    configs: tuple[PreprocessConfig, ...] = field(default_factory=default_configs)
    classifiers: tuple[TrainableSpec, ...] = DEFAULT_CLASSIFIERS
    train_fraction: float = 0.8
    split_seed: int = 0
    time_base: str = "stimulation"
    seconds_per_classification: Optional[float] = None


@dataclass
class ExperimentReport:
    subject_id: str
    n_labels: int
    n_train: int
    n_test: int
    variant_names: list[str]
    variant_weights: list[float]
    variant_accuracy: list[float]
    ensemble_accuracy: float
    confusion: list[list[int]]
    trials: list[dict[str, Any]]
    time_base: str
    seconds_per_classification: float
    variant_itr: list[float] = field(default_factory=list)
    ensemble_itr: float = 0.0
    significance: Optional[dict[str, Any]] = None
    notes: list[str] = field(default_factory=list)

    @property
    def best_variant_accuracy(self) -> float:
        return max(self.variant_accuracy)

    @property
    def worst_variant_accuracy(self) -> float:
        return min(self.variant_accuracy)

    @property
    def ensemble_predictions(self) -> list[int]:
        return [t["predicted"] for t in self.trials]

    def to_dict(self) -> dict[str, Any]:
        from dataclasses import asdict
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentReport":
        return cls(**d)


def _seconds(config: ExperimentConfig, rec_spec: RecordingSpec) -> float:
    if config.seconds_per_classification is not None:
        return config.seconds_per_classification
    if config.time_base == "compute":
        raise ValueError("compute time base needs seconds_per_classification (a measured time)")
    return rec_spec.flicker_seconds


def evaluate_ensemble(model: EnsembleModel, test: Sequence[TrialRecording], config: ExperimentConfig,
                      subject_id: str, n_train: int) -> ExperimentReport:
    n_labels = model.n_labels
    y = np.array([t.true_label for t in test], dtype=np.int64)
    seconds = _seconds(config, model.rec_spec)
    # Batch per-variant predictions; equals per-trial ensemble_predict.
    per_variant = np.zeros((len(model.variants), len(test)), dtype=np.int64)
    cache: dict[int, np.ndarray] = {}
    for k, v in enumerate(model.variants):
        if id(v.fitted) not in cache:
            cache[id(v.fitted)] = transform_many(test, v.fitted, model.rec_spec, model.stimuli)
        per_variant[k] = predict(v.model, cache[id(v.fitted)]) if len(test) else []
    weights = model.weights
    rows, winners = [], []
    for j, trial in enumerate(test):
        label, tally = weighted_vote(per_variant[:, j], weights, n_labels)
        winners.append(label)
        rows.append({"session": trial.session_index, "trial": trial.trial_index,
                     "true": int(trial.true_label), "predicted": int(label),
                     "tally": [float(x) for x in tally],
                     "variant_predictions": [int(p) for p in per_variant[:, j]]})
    confusion = np.zeros((n_labels, n_labels), dtype=np.int64)
    for t, p in zip(y, winners):
        confusion[t, p] += 1
    notes = []
    if not len(test):
        return ExperimentReport(subject_id, n_labels, n_train, 0, model.names, weights.tolist(),
                                [float("nan")] * len(model.variants), float("nan"), confusion.tolist(), [],
                                config.time_base, seconds, notes=["empty test set"])
    v_acc = [accuracy(per_variant[k], y) for k in range(len(model.variants))]
    e_acc = accuracy(winners, y)
    v_itr = [itr(a, n_labels, seconds, config.time_base).itr_bpm for a in v_acc]
    e_itr = itr(e_acc, n_labels, seconds, config.time_base).itr_bpm
    best = int(np.argmax(v_acc))
    ens_correct = (np.array(winners) == y).astype(float)
    best_correct = (per_variant[best] == y).astype(float)
    try:
        tt = paired_t_test(ens_correct, best_correct)
        significance = {"test": "paired t on per-trial correctness", "versus": model.names[best],
                        "t": tt.t, "p_value": tt.p_value, "df": tt.df}
    except ValueError as exc:
        significance = {"test": "paired t on per-trial correctness", "versus": model.names[best],
                        "error": str(exc)}
    for v in model.variants:
        if v.fitted.pca_degenerate:
            notes.append(f"{v.name}: PCA degenerate, trained without PCA")
    return ExperimentReport(subject_id, n_labels, n_train, len(test), model.names, weights.tolist(), v_acc,
                            e_acc, confusion.tolist(), rows, config.time_base, seconds, v_itr, e_itr,
                            significance, notes)


def run_offline_experiment(dataset: SubjectDataset, config: ExperimentConfig = ExperimentConfig(),
                           test_transform: Optional[Callable[[list[TrialRecording]], list[TrialRecording]]] = None,
                           ) -> ExperimentReport:
    """Split, build the ensemble on the training part, score every variant and the vote on the test part.

    ``test_transform`` optionally perturbs the test trials (e.g. artifact
    injection) after the split.
    """
    train, test = split_subjectwise_stratified(dataset, config.train_fraction, config.split_seed)
    model = build_ensemble(train, None, config.classifiers, config.configs, dataset.spec, dataset.stimuli)
    if test_transform is not None:
        test = test_transform(test)
    return evaluate_ensemble(model, test, config, dataset.subject_id, len(train))


def ensemble_vs_best(reports: Sequence[ExperimentReport]) -> dict[str, Any]:
    """Across subjects: mean ensemble vs mean per-subject best variant, with a paired t-test."""
    ens = np.array([r.ensemble_accuracy for r in reports])
    best = np.array([r.best_variant_accuracy for r in reports])
    out: dict[str, Any] = {"n_subjects": len(reports), "mean_ensemble": float(ens.mean()),
                           "mean_best_individual": float(best.mean())}
    try:
        tt = paired_t_test(ens, best)
        out.update(t=tt.t, p_value=tt.p_value, p_one_sided=tt.p_one_sided_greater)
    except ValueError as exc:
        out.update(error=str(exc))
    return out


# -- online session ----------------------------------------------------------

@dataclass(frozen=True)
class OnlineCommand:
    seq: int
    label: int
    name: str
    tally: tuple[float, ...]
    winning_tally: float
    true_label: Optional[int]
    seconds: float
    variant_predictions: tuple[int, ...] = ()


@dataclass(frozen=True)
class OnlineError:
    seq: int
    code: str
    detail: str


@dataclass
class OnlineReport:
    commands: list[OnlineCommand] = field(default_factory=list)
    errors: list[OnlineError] = field(default_factory=list)

    @property
    def labeled(self) -> list[OnlineCommand]:
        return [c for c in self.commands if c.true_label is not None]

    @property
    def accuracy(self) -> Optional[float]:
        lab = self.labeled
        if not lab:
            return None
        return accuracy([c.label for c in lab], [c.true_label for c in lab])

    @property
    def mean_seconds(self) -> Optional[float]:
        if not self.commands:
            return None
        return float(np.mean([c.seconds for c in self.commands]))

    def itr(self, n_labels: int, time_base: str = "compute",
            stimulation_seconds: float = 5.0) -> Optional[ItrResult]:
        if self.accuracy is None:
            return None
        if time_base == "compute":
            return itr(self.accuracy, n_labels, self.mean_seconds, "compute")
        return itr(self.accuracy, n_labels, stimulation_seconds, "stimulation")


def check_online_trial(item: Any, model: EnsembleModel) -> Optional[str]:
    if isinstance(item, str):
        # Upstream readers pass a parse failure through as its message.
        return item
    if not isinstance(item, TrialRecording):
        return f"expected a TrialRecording, got {type(item).__name__}"
    problems = validate_trial(item, model.rec_spec, model.n_labels)
    return "; ".join(str(p) for p in problems) or None


def run_online_session(ensemble: EnsembleModel, trial_source: Iterable[Any],
                       command_sink: Optional[Callable[[Union[OnlineCommand, OnlineError]], None]] = None,
                       clock: Callable[[], float] = time.perf_counter) -> OnlineReport:
    """Classify trials in arrival order, emitting one command (or error) per trial."""
    report = OnlineReport()
    for seq, item in enumerate(trial_source):
        problem = check_online_trial(item, ensemble)
        if problem is not None:
            err = OnlineError(seq, "BAD_TRIAL", problem)
            report.errors.append(err)
            if command_sink is not None:
                command_sink(err)
            continue
        start = clock()
        pred: EnsemblePrediction = ensemble_predict(ensemble, item)
        elapsed = clock() - start
        cmd = OnlineCommand(seq, pred.label, ensemble.stimuli[pred.label].name,
                            tuple(float(x) for x in pred.tally), pred.winning_tally,
                            item.true_label, elapsed, pred.variant_predictions)
        report.commands.append(cmd)
        if command_sink is not None:
            command_sink(cmd)
    return report
