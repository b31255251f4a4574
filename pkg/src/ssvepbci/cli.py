"""Command-line entry point: ``ssvepbci {synth,train,evaluate,online,report}``."""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import io as sio
from .bridge import CommandServer, format_frame, iter_trial_stream, socket_trial_source
from .core import validate_dataset
from .ensemble import build_ensemble
from .kernels import BACKEND
from .protocol import (
    ExperimentReport, ensemble_vs_best, evaluate_ensemble, run_online_session, split_subjectwise_stratified,
)
from .synth import clean_profile, inject_artifacts, moderate_profile, noise_only_profile, synth_dataset

log = logging.getLogger("ssvepbci")

PROFILES = {"clean": clean_profile, "moderate": moderate_profile, "noise": noise_only_profile}
REPORT_FORMAT = "ssvepbci-report"


def _channels_arg(text: Optional[str], config: sio.RunConfig) -> Optional[tuple[str, ...]]:
    if text is None:
        return None
    if text == "all":
        return config.recording.channels
    return tuple(c.strip() for c in text.split(",") if c.strip())


def _trial_key(t) -> list[int]:
    return [t.session_index, t.trial_index]


# -- synth -------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace, config: sio.RunConfig) -> int:
    overrides = dict(config.synth.overrides)
    profile_name = args.profile or config.synth.profile
    seed = config.synth.seed if args.seed is None else args.seed
    profile = PROFILES[profile_name](seed, **overrides)
    schedule = config.schedule()
    subject = args.subject or f"{profile_name}-{seed}"
    ds = synth_dataset(profile, schedule, config.stimuli, config.recording, subject)
    if args.blink_rate or args.motion_rate:
        rng = np.random.default_rng([seed, 1])
        trials = tuple(inject_artifacts(t, profile.artifacts, rng, config.recording, args.blink_rate,
                                        args.motion_rate) for t in ds.trials)
        ds = dataclasses.replace(ds, trials=trials, provenance={
            **ds.provenance, "artifacts": {"blink_rate": args.blink_rate, "motion_rate": args.motion_rate}})
    sio.write_dataset(ds, args.out)
    print(f"wrote {len(ds)} trials for subject {subject} to {args.out}")
    return 0


# -- train -------------------------------------------------------------------

def _load_dataset(path: str):
    ds = sio.read_dataset(path)
    problems = validate_dataset(ds)
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        raise SystemExit(2)
    return ds


def cmd_train(args: argparse.Namespace, config: sio.RunConfig) -> int:
    ds = _load_dataset(args.data)
    exp = config.experiment(_channels_arg(args.channels, config))
    train, test = split_subjectwise_stratified(ds, exp.train_fraction, exp.split_seed)
    model = build_ensemble(train, None, exp.classifiers, exp.configs, ds.spec, ds.stimuli)
    meta = {"subject": ds.subject_id, "dataset": str(args.data), "train_fraction": exp.train_fraction,
            "split_seed": exp.split_seed, "train_trials": [_trial_key(t) for t in train],
            "test_trials": [_trial_key(t) for t in test], "backend": BACKEND}
    sio.save_ensemble(model, args.out, meta)
    print(f"trained {len(model)} variants on {len(train)} trials ({len(test)} held out) -> {args.out}")
    for name, w in zip(model.names, model.weights):
        print(f"  {name:24s} training accuracy {w:.3f}")
    return 0


# -- evaluate ----------------------------------------------------------------

def _test_trials(ds, meta: dict[str, Any]):
    keys = {tuple(k) for k in meta.get("test_trials", [])}
    if not keys:
        raise SystemExit("model file does not record its test split")
    return [t for t in ds.trials if (t.session_index, t.trial_index) in keys]


def format_report_table(report: ExperimentReport) -> str:
    lines = [f"subject {report.subject_id}: {report.n_train} train / {report.n_test} test trials, "
             f"N={report.n_labels}, ITR time base: {report.time_base} "
             f"({report.seconds_per_classification:g} s per classification)",
             f"{'variant':26s} {'weight':>7s} {'accuracy':>9s} {'ITR bpm':>9s}"]
    for name, w, a, r in zip(report.variant_names, report.variant_weights, report.variant_accuracy,
                             report.variant_itr or [float("nan")] * len(report.variant_names)):
        lines.append(f"{name:26s} {w:7.3f} {a:9.3f} {r:9.2f}")
    lines.append(f"{'weighted-vote ensemble':26s} {'':7s} {report.ensemble_accuracy:9.3f} {report.ensemble_itr:9.2f}")
    sig = report.significance or {}
    if "p_value" in sig:
        lines.append(f"ensemble vs {sig['versus']}: t={sig['t']:.3f}, p={sig['p_value']:.4g} (df={sig['df']})")
    elif "error" in sig:
        lines.append(f"ensemble vs {sig['versus']}: {sig['error']}")
    lines += [f"note: {n}" for n in report.notes]
    return "\n".join(lines)


def _report_document(report: ExperimentReport, args: argparse.Namespace) -> dict[str, Any]:
    doc = {"format": REPORT_FORMAT, "version": 1, "report": report.to_dict(), "backend": BACKEND}
    if not args.no_timestamp:
        doc["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return doc


def cmd_evaluate(args: argparse.Namespace, config: sio.RunConfig) -> int:
    ds = _load_dataset(args.data)
    exp = config.experiment(_channels_arg(args.channels, config))
    if args.model:
        model, meta = sio.load_ensemble(args.model)
        test = _test_trials(ds, meta)
        n_train = len(meta.get("train_trials", []))
    else:
        train, test = split_subjectwise_stratified(ds, exp.train_fraction, exp.split_seed)
        model = build_ensemble(train, None, exp.classifiers, exp.configs, ds.spec, ds.stimuli)
        n_train = len(train)
    report = evaluate_ensemble(model, test, exp, ds.subject_id, n_train)
    print(format_report_table(report))
    if args.out:
        Path(args.out).write_text(json.dumps(_report_document(report, args), indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
    return 0


# -- online ------------------------------------------------------------------

def _parse_hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def cmd_online(args: argparse.Namespace, config: sio.RunConfig) -> int:
    model, meta = sio.load_ensemble(args.model)
    if args.connect:
        host, port = args.connect
        source = lambda: socket_trial_source(host, port, model.rec_spec)  # noqa: E731
    elif args.stdin:
        source = lambda: iter_trial_stream(sys.stdin, model.rec_spec)  # noqa: E731
    else:
        ds = _load_dataset(args.data)
        trials = _test_trials(ds, meta)
        source = lambda: iter(trials)  # noqa: E731
    if args.serve:
        host, port = args.serve
        server = CommandServer(model, source, host, port)
        print(f"serving commands on {server.address[0]}:{server.address[1]}", file=sys.stderr, flush=True)
        try:
            if args.sessions:
                server.serve_sessions(args.sessions)
            else:
                server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return 0

    def sink(event):
        sys.stdout.write(format_frame(event))
        sys.stdout.flush()

    report = run_online_session(model, source(), sink)
    sink(None)
    acc = report.accuracy
    summary = f"{len(report.commands)} commands, {len(report.errors)} errors"
    if acc is not None:
        r = report.itr(model.n_labels, config.metrics.time_base, model.rec_spec.flicker_seconds)
        summary += f", accuracy {acc:.3f}; {r.describe()}"
    print(summary, file=sys.stderr)
    return 0


# -- report ------------------------------------------------------------------

def _load_report(path: str) -> ExperimentReport:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != REPORT_FORMAT:
        raise SystemExit(f"{path}: not an evaluation report")
    return ExperimentReport.from_dict(doc["report"])


def cmd_report(args: argparse.Namespace, config: sio.RunConfig) -> int:
    reports = [_load_report(p) for p in args.reports]
    names = reports[0].variant_names
    if any(r.variant_names != names for r in reports):
        raise SystemExit("reports cover different variant sets")
    header = f"{'subject':14s} " + " ".join(f"{n:>18s}" for n in names) + f" {'ensemble':>9s}"
    print(header)
    for r in reports:
        print(f"{r.subject_id:14s} " + " ".join(f"{a:18.3f}" for a in r.variant_accuracy)
              + f" {r.ensemble_accuracy:9.3f}")
    acc = np.array([r.variant_accuracy for r in reports])
    ens = np.array([r.ensemble_accuracy for r in reports])
    print(f"{'mean':14s} " + " ".join(f"{a:18.3f}" for a in acc.mean(axis=0)) + f" {ens.mean():9.3f}")
    summary = ensemble_vs_best(reports)
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.plot:
        _plot(names, acc, ens, args.plot)
        print(f"plot written to {args.plot}")
    return 0


def _plot(names: Sequence[str], acc: np.ndarray, ens: np.ndarray, path: str) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise SystemExit("--plot needs matplotlib (pip install matplotlib)") from None
    fig, ax = plt.subplots(figsize=(8, 4))
    labels = list(names) + ["ensemble"]
    means = list(acc.mean(axis=0)) + [float(ens.mean())]
    ax.bar(range(len(labels)), means, color=["0.6"] * len(names) + ["C0"])
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_ylabel("mean test accuracy")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssvepbci", description="SSVEP BCI toolkit")
    p.add_argument("--config", help="JSON run configuration (defaults apply to missing keys)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic subject dataset")
    s.add_argument("--out", required=True, help="output dataset directory")
    s.add_argument("--profile", choices=sorted(PROFILES))
    s.add_argument("--seed", type=int)
    s.add_argument("--subject")
    s.add_argument("--blink-rate", type=float, default=0.0, help="expected blinks per trial")
    s.add_argument("--motion-rate", type=float, default=0.0, help="expected motion bursts per trial")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="split a dataset and train the ensemble")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="model JSON path")
    t.add_argument("--channels", help="comma-separated channels, or 'all'")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score variants and the ensemble on the held-out split")
    e.add_argument("--data", required=True)
    e.add_argument("--model", help="trained model; omit to train on the split first")
    e.add_argument("--channels", help="comma-separated channels, or 'all' (ignored with --model)")
    e.add_argument("--out", help="write the JSON report here")
    e.add_argument("--no-timestamp", action="store_true", help="omit the generation time from the report")
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("online", help="replay trials through the online loop")
    o.add_argument("--model", required=True)
    src = o.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="replay this dataset's held-out split")
    src.add_argument("--stdin", action="store_true", help="read concatenated trial CSVs from stdin")
    src.add_argument("--connect", type=_parse_hostport, metavar="HOST:PORT",
                     help="read concatenated trial CSVs from a TCP trial producer")
    o.add_argument("--serve", type=_parse_hostport, metavar="HOST:PORT", help="push frames to a TCP client")
    o.add_argument("--sessions", type=int, help="with --serve: exit after this many client sessions")
    o.set_defaults(func=cmd_online)

    r = sub.add_parser("report", help="aggregate evaluation reports")
    r.add_argument("reports", nargs="+")
    r.add_argument("--plot", help="write a bar chart (needs matplotlib)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = sio.load_config(args.config)
    except (sio.ConfigError, json.JSONDecodeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args, config)
    except (sio.TrialFormatError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
