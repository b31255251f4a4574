"""File formats: trial CSVs, dataset directories, run configuration, serialized ensembles."""
from __future__ import annotations

import dataclasses
import io as _io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Optional, Sequence, Union

import numpy as np

from .classifiers import SvmParams, TrainableSpec, TrainedModel, Tree
from .core import (
    DEFAULT_STIMULI, OCCIPITAL_CHANNELS, RecordingSpec, StimulusSpec, SubjectDataset, TrialRecording,
    check_stimuli,
)
from .ensemble import DEFAULT_CLASSIFIERS, EnsembleModel, Variant
from .preprocess import (
    FittedPreprocess, PcaModel, PreprocessConfig, ZScoreModel, band_layout, default_configs,
)
from .protocol import ExperimentConfig, make_offline_schedule

TRIAL_MAGIC = "# ssvepbci-trial v1"
MODEL_FORMAT = "ssvepbci-ensemble"
MODEL_VERSION = 1
DATASET_MANIFEST = "dataset.json"

PathOrStream = Union[str, os.PathLike, IO[str]]


class TrialFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


# -- trial CSV -------------------------------------------------------------

def write_trial(trial: TrialRecording, dest: PathOrStream, rec_spec: RecordingSpec = RecordingSpec()) -> None:
    """Header of ``# key: value`` lines, then one comma-separated row per sample.

    Values use Python's shortest round-trip float repr, so reading back is exact.
    """
    label = "none" if trial.true_label is None else str(trial.true_label)
    lines = [
        TRIAL_MAGIC,
        f"# label: {label}",
        f"# session: {trial.session_index}",
        f"# trial: {trial.trial_index}",
        f"# subject: {trial.subject_id}",
        f"# sampling_rate_hz: {rec_spec.sampling_rate_hz!r}",
        f"# samples_per_trial: {rec_spec.samples_per_trial}",
        f"# channels: {','.join(rec_spec.channels)}",
    ]
    body = "\n".join(",".join(repr(float(v)) for v in row) for row in trial.samples)
    text = "\n".join(lines) + "\n" + body + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


def _parse_trial_text(text: str, expected: Optional[RecordingSpec]) -> tuple[TrialRecording, RecordingSpec]:
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    data_row = 0
    width: Optional[int] = None
    for line in text.splitlines():
        if line.startswith("#"):
            if data_row == 0 and ":" in line:
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            continue
        if not line.strip():
            continue
        data_row += 1
        if width is None:
            if "channels" in meta:
                width = len(meta["channels"].split(","))
            elif expected is not None:
                width = expected.n_channels
        cells = line.split(",")
        if width is not None and len(cells) != width:
            raise TrialFormatError(f"row {data_row}: expected {width} columns, got {len(cells)}")
        row = []
        for col, cell in enumerate(cells, start=1):
            try:
                row.append(float(cell))
            except ValueError:
                raise TrialFormatError(f"row {data_row}, column {col}: cannot parse {cell.strip()!r} as a number") from None
        width = len(cells) if width is None else width
        rows.append(row)
    channels = tuple(meta["channels"].split(",")) if "channels" in meta else (
        expected.channels if expected is not None else tuple(f"ch{i}" for i in range(width or 0)))
    if expected is not None:
        if channels != expected.channels:
            raise TrialFormatError(f"channels {list(channels)} do not match expected {list(expected.channels)}")
        spec = expected
    else:
        fs = float(meta.get("sampling_rate_hz", 257.0))
        spec = RecordingSpec(fs, channels, int(meta.get("samples_per_trial", len(rows))),
                             flicker_seconds=int(meta.get("samples_per_trial", len(rows))) / fs)
    if len(rows) != spec.samples_per_trial:
        raise TrialFormatError(f"expected {spec.samples_per_trial} rows, got {len(rows)}")
    label_text = meta.get("label", "none")
    label = None if label_text in ("none", "") else int(label_text)
    trial = TrialRecording(np.array(rows, dtype=np.float64).reshape(len(rows), len(channels)), label,
                           int(meta.get("trial", 0)), int(meta.get("session", 0)), meta.get("subject", "S0"))
    return trial, spec


def read_trial(source: PathOrStream, rec_spec: Optional[RecordingSpec] = None) -> TrialRecording:
    """Parse a trial CSV; shape is checked against ``rec_spec`` (or the file's own header)."""
    text = source.read() if hasattr(source, "read") else Path(source).read_text(encoding="utf-8")
    return _parse_trial_text(text, rec_spec)[0]


def trial_to_text(trial: TrialRecording, rec_spec: RecordingSpec = RecordingSpec()) -> str:
    buf = _io.StringIO()
    write_trial(trial, buf, rec_spec)
    return buf.getvalue()


# -- dataset directories -----------------------------------------------------

def recording_to_dict(spec: RecordingSpec) -> dict[str, Any]:
    d = dataclasses.asdict(spec)
    d["channels"] = list(spec.channels)
    return d


def stimuli_to_list(stimuli: Sequence[StimulusSpec]) -> list[dict[str, Any]]:
    return [dataclasses.asdict(s) for s in stimuli]


def write_dataset(dataset: SubjectDataset, directory: Union[str, os.PathLike]) -> Path:
    root = Path(directory)
    (root / "trials").mkdir(parents=True, exist_ok=True)
    entries = []
    for t in dataset.trials:
        name = f"trials/s{t.session_index:02d}_t{t.trial_index:02d}.csv"
        write_trial(t, root / name, dataset.spec)
        entries.append({"file": name, "session": t.session_index, "trial": t.trial_index, "label": t.true_label})
    manifest = {
        "format": "ssvepbci-dataset", "version": 1, "subject": dataset.subject_id,
        "recording": recording_to_dict(dataset.spec), "stimuli": stimuli_to_list(dataset.stimuli),
        "session_lengths": list(dataset.session_lengths) if dataset.session_lengths else None,
        "provenance": dataset.provenance, "trials": entries,
    }
    (root / DATASET_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return root


def read_dataset(directory: Union[str, os.PathLike]) -> SubjectDataset:
    root = Path(directory)
    manifest = json.loads((root / DATASET_MANIFEST).read_text(encoding="utf-8"))
    spec = _build(RecordingSpec, manifest["recording"], "recording")
    stimuli = tuple(_build(StimulusSpec, s, f"stimuli[{i}]") for i, s in enumerate(manifest["stimuli"]))
    trials = []
    for entry in manifest["trials"]:
        try:
            trials.append(read_trial(root / entry["file"], spec))
        except TrialFormatError as exc:
            raise TrialFormatError(f"{entry['file']}: {exc}") from None
    lengths = manifest.get("session_lengths")
    return SubjectDataset(spec, stimuli, tuple(trials), manifest.get("provenance", {}),
                          tuple(lengths) if lengths else None)


# -- run configuration -------------------------------------------------------

def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class PreprocessSection:
    channels: tuple[str, ...] = OCCIPITAL_CHANNELS
    harmonics: tuple[int, ...] = (1, 2)
    half_width_hz: float = 0.5
    pca_variance: float = 0.95


@dataclass(frozen=True)
class VariantSection:
    use_car: bool = True
    use_pca: bool = True


@dataclass(frozen=True)
class ProtocolSection:
    schedule_seed: int = 0
    n_sessions: int = 5
    part_lengths: tuple[int, ...] = (12, 13)
    inter_part_rest_seconds: float = 30.0
    train_fraction: float = 0.8
    split_seed: int = 0

    def __post_init__(self) -> None:
        if len(self.part_lengths) != 2 or any(n < 0 for n in self.part_lengths):
            raise ValueError("part_lengths must be two non-negative counts")
        if self.n_sessions < 1:
            raise ValueError("n_sessions must be >= 1")


@dataclass(frozen=True)
class OnlineSection:
    channels: tuple[str, ...] = OCCIPITAL_CHANNELS


@dataclass(frozen=True)
class MetricsSection:
    time_base: str = "stimulation"
    seconds_per_classification: Optional[float] = None

    def __post_init__(self) -> None:
        if self.time_base not in ("stimulation", "compute"):
            raise ValueError(f"time_base must be 'stimulation' or 'compute', got {self.time_base!r}")
        if self.seconds_per_classification is not None and not self.seconds_per_classification > 0:
            raise ValueError("seconds_per_classification must be > 0")


@dataclass(frozen=True)
class SynthSection:
    profile: str = "moderate"
    seed: int = 0
    overrides: tuple = ()

    def __post_init__(self) -> None:
        if self.profile not in ("clean", "moderate", "noise"):
            raise ValueError(f"profile must be clean, moderate or noise, got {self.profile!r}")


@dataclass(frozen=True)
class RunConfig:
    stimuli: tuple[StimulusSpec, ...] = DEFAULT_STIMULI
    recording: RecordingSpec = field(default_factory=RecordingSpec)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    variants: tuple[VariantSection, ...] = tuple(VariantSection(c.use_car, c.use_pca) for c in default_configs())
    classifiers: tuple[TrainableSpec, ...] = DEFAULT_CLASSIFIERS
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    online: OnlineSection = field(default_factory=OnlineSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    synth: SynthSection = field(default_factory=SynthSection)

    def preprocess_configs(self, channels: Optional[Sequence[str]] = None) -> tuple[PreprocessConfig, ...]:
        p = self.preprocess
        chans = tuple(channels) if channels is not None else p.channels
        return tuple(PreprocessConfig(v.use_car, v.use_pca, chans, p.harmonics, p.half_width_hz, p.pca_variance)
                     for v in self.variants)

    def experiment(self, channels: Optional[Sequence[str]] = None) -> ExperimentConfig:
        return ExperimentConfig(self.preprocess_configs(channels), self.classifiers, self.protocol.train_fraction,
                                self.protocol.split_seed, self.metrics.time_base,
                                self.metrics.seconds_per_classification)

    def schedule(self):
        p = self.protocol
        return make_offline_schedule(p.schedule_seed, p.n_sessions, tuple(p.part_lengths), len(self.stimuli),
                                     self.recording.flicker_seconds, self.recording.rest_seconds,
                                     p.inter_part_rest_seconds)


_SECTIONS = {"preprocess": PreprocessSection, "protocol": ProtocolSection, "online": OnlineSection,
             "metrics": MetricsSection, "recording": RecordingSpec}


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected an object at top level")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    kwargs: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build(cls, data[name], name)
    if "stimuli" in data:
        kwargs["stimuli"] = tuple(_build(StimulusSpec, s, f"stimuli[{i}]") for i, s in enumerate(data["stimuli"]))
    if "variants" in data:
        kwargs["variants"] = tuple(_build(VariantSection, v, f"variants[{i}]") for i, v in enumerate(data["variants"]))
        if not kwargs["variants"]:
            raise ConfigError("variants: at least one variant is required")
    if "classifiers" in data:
        kwargs["classifiers"] = tuple(_build(TrainableSpec, c, f"classifiers[{i}]")
                                      for i, c in enumerate(data["classifiers"]))
        if not kwargs["classifiers"]:
            raise ConfigError("classifiers: at least one classifier is required")
    if "synth" in data:
        synth = dict(data["synth"]) if isinstance(data["synth"], dict) else data["synth"]
        if isinstance(synth, dict) and isinstance(synth.get("overrides"), dict):
            synth["overrides"] = tuple(sorted(synth["overrides"].items()))
        kwargs["synth"] = _build(SynthSection, synth, "synth")
    config = RunConfig(**kwargs)
    _check_config(config)
    return config


def _check_config(config: RunConfig) -> None:
    rec = config.recording
    try:
        check_stimuli(config.stimuli, rec.sampling_rate_hz)
    except ValueError as exc:
        raise ConfigError(f"stimuli: {exc}") from None
    for name, chans in (("preprocess.channels", config.preprocess.channels), ("online.channels", config.online.channels)):
        missing = [c for c in chans if c not in rec.channels]
        if missing:
            raise ConfigError(f"{name}: unknown channel {missing[0]!r}")
        if not chans:
            raise ConfigError(f"{name}: at least one channel is required")
    try:
        PreprocessConfig(True, True, config.preprocess.channels, config.preprocess.harmonics,
                         config.preprocess.half_width_hz, config.preprocess.pca_variance)
        band_layout(config.preprocess.channels, config.stimuli, config.preprocess.harmonics,
                    config.preprocess.half_width_hz, rec.resolution_hz, rec.nyquist_hz)
    except ValueError as exc:
        raise ConfigError(f"preprocess.harmonics: {exc}") from None
    if any(v.use_car for v in config.variants) and rec.n_channels < 2:
        raise ConfigError("variants: CAR needs a recording with at least 2 channels")


def config_to_dict(config: RunConfig) -> dict[str, Any]:
    def plain(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, (list, tuple)):
            return [plain(x) for x in obj]
        return obj
    d = plain(config)
    d["synth"]["overrides"] = {k: v for k, v in config.synth.overrides}
    return d


def load_config(path: Optional[Union[str, os.PathLike]] = None) -> RunConfig:
    """Read a JSON run configuration; missing keys take their defaults, unknown keys are rejected."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text) if text.strip() else {}
    return config_from_dict(data)


def save_config(config: RunConfig, path: Union[str, os.PathLike]) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- model serialization -----------------------------------------------------

def _arr(a: np.ndarray) -> dict[str, Any]:
    return {"dtype": str(a.dtype), "shape": list(a.shape), "data": a.ravel().tolist()}


def _unarr(d: dict[str, Any]) -> np.ndarray:
    return np.array(d["data"], dtype=d["dtype"]).reshape(d["shape"])


def _model_to_dict(m: TrainedModel) -> dict[str, Any]:
    out: dict[str, Any] = {"spec": dataclasses.asdict(m.spec), "n_features": m.n_features,
                           "n_classes": m.n_classes, "training_accuracy": m.training_accuracy}
    if m.svm is not None:
        out["svm"] = {k: _arr(getattr(m.svm, k)) for k in ("support", "dual_coef", "bias", "gaps", "iterations")}
    else:
        out["trees"] = [{k: _arr(getattr(t, k)) for k in ("feature", "threshold", "left", "right", "counts")}
                        for t in m.trees]
    return out


def _model_from_dict(d: dict[str, Any]) -> TrainedModel:
    spec = TrainableSpec(**d["spec"])
    svm = SvmParams(**{k: _unarr(v) for k, v in d["svm"].items()}) if "svm" in d else None
    trees = tuple(Tree(**{k: _unarr(v) for k, v in t.items()}) for t in d.get("trees", []))
    return TrainedModel(spec, d["n_features"], d["n_classes"], d["training_accuracy"], svm, trees)


def ensemble_to_dict(model: EnsembleModel, meta: Optional[dict[str, Any]] = None) -> dict[str, Any]:
    variants = []
    for v in model.variants:
        f = v.fitted
        variants.append({
            "config": {**dataclasses.asdict(v.config), "channels": list(v.config.channels),
                       "harmonics": list(v.config.harmonics)},
            "zscore": {"mean": _arr(f.zscore.mean), "std": _arr(f.zscore.std), "zero_std": _arr(f.zscore.zero_std)},
            "pca": None if f.pca is None else {
                "mean": _arr(f.pca.mean), "components": _arr(f.pca.components),
                "explained_variance_ratio": _arr(f.pca.explained_variance_ratio),
                "total_variance": f.pca.total_variance},
            "pca_degenerate": f.pca_degenerate,
            "n_band_features": f.n_band_features,
            "model": _model_to_dict(v.model),
        })
    return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "recording": recording_to_dict(model.rec_spec),
            "stimuli": stimuli_to_list(model.stimuli), "variants": variants, "meta": meta or {}}


def ensemble_from_dict(d: dict[str, Any]) -> tuple[EnsembleModel, dict[str, Any]]:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a serialized ensemble (format={d.get('format')!r})")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')!r}; expected {MODEL_VERSION}")
    rec = RecordingSpec(**{**d["recording"], "channels": tuple(d["recording"]["channels"])})
    stimuli = tuple(StimulusSpec(**s) for s in d["stimuli"])
    variants = []
    for v in d["variants"]:
        cfg = PreprocessConfig(**v["config"])
        z = ZScoreModel(*(_unarr(v["zscore"][k]) for k in ("mean", "std", "zero_std")))
        pca = None
        if v["pca"] is not None:
            p = v["pca"]
            pca = PcaModel(_unarr(p["mean"]), _unarr(p["components"]), _unarr(p["explained_variance_ratio"]),
                           p["total_variance"])
        fitted = FittedPreprocess(cfg, z, pca, v["pca_degenerate"], v["n_band_features"])
        variants.append(Variant(cfg, fitted, _model_from_dict(v["model"])))
    # Variants built from one config share a fitted chain, as in build_ensemble.
    shared: dict[Any, FittedPreprocess] = {}
    merged = []
    for v in variants:
        key = json.dumps(ensemble_fitted_key(v.fitted))
        fitted = shared.setdefault(key, v.fitted)
        merged.append(Variant(v.config, fitted, v.model))
    return EnsembleModel(tuple(merged), rec, stimuli), d.get("meta", {})


def ensemble_fitted_key(f: FittedPreprocess) -> list:
    return [dataclasses.asdict(f.config), f.zscore.mean.tolist(), f.zscore.std.tolist(),
            None if f.pca is None else f.pca.components.tolist()]


def save_ensemble(model: EnsembleModel, path: Union[str, os.PathLike], meta: Optional[dict[str, Any]] = None) -> None:
    Path(path).write_text(json.dumps(ensemble_to_dict(model, meta), sort_keys=True) + "\n", encoding="utf-8")


def load_ensemble(path: Union[str, os.PathLike]) -> tuple[EnsembleModel, dict[str, Any]]:
    return ensemble_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
