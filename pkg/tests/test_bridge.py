import io
import socket
import threading

import numpy as np
import pytest

from ssvepbci import io as sio
from ssvepbci.bridge import (
    CommandServer, Frame, format_frame, iter_trial_stream, parse_frame, read_frames, serve_commands,
    socket_trial_source,
)
from ssvepbci.core import RecordingSpec, TrialRecording
from ssvepbci.ensemble import ensemble_predict
from ssvepbci.protocol import OnlineCommand, OnlineError


@pytest.fixture
def server_factory():
    servers = []

    def make(model, source):
        srv = CommandServer(model, source, "127.0.0.1", 0)
        srv.start()
        servers.append(srv)
        return srv
    yield make
    for s in servers:
        s.stop()


def test_frame_round_trip():
    cmd = OnlineCommand(0, 2, "create_sphere", (0.1, 0.2, 5.5), 5.5, None, 0.01)
    assert format_frame(cmd) == "CMD 2 create_sphere 5.500000\n"
    assert parse_frame(format_frame(cmd)) == Frame("CMD", 2, "create_sphere", 5.5)
    err = OnlineError(3, "BAD_TRIAL", "row count:\nshort")
    assert format_frame(err) == "ERR BAD_TRIAL row count: short\n"
    assert parse_frame(format_frame(None)) == Frame("END")
    with pytest.raises(ValueError):
        parse_frame("HELLO")


def test_three_trials_three_cmds_then_end(clean_model, clean_split, server_factory):
    trials = clean_split[1][:3]
    srv = server_factory(clean_model, trials)
    frames = read_frames(*srv.address)
    assert [f.kind for f in frames] == ["CMD", "CMD", "CMD", "END"]
    assert [f.label for f in frames[:3]] == [ensemble_predict(clean_model, t).label for t in trials]
    assert [f.name for f in frames[:3]] == [clean_model.stimuli[f.label].name for f in frames[:3]]


def test_malformed_trial_yields_err_and_continues(clean_model, clean_split, server_factory):
    trials = list(clean_split[1][:3])
    trials.insert(1, TrialRecording(np.zeros((1285, 3)), 0))
    srv = server_factory(clean_model, trials)
    frames = read_frames(*srv.address)
    assert [f.kind for f in frames] == ["CMD", "ERR", "CMD", "CMD", "END"]
    assert frames[1].code == "BAD_TRIAL"


def test_reconnect_after_disconnect(clean_model, clean_split, server_factory):
    trials = clean_split[1]
    srv = server_factory(clean_model, lambda: iter(trials))
    # First client hangs up after one frame.
    with socket.create_connection(srv.address, timeout=10) as s:
        s.makefile("r").readline()
    frames = read_frames(*srv.address)
    assert len(frames) == len(trials) + 1 and frames[-1].kind == "END"


def test_serve_commands_blocking(clean_model, clean_split):
    trials = clean_split[1][:4]
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    result = {}

    def run():
        result["server"] = serve_commands(("127.0.0.1", port), clean_model, trials, sessions=1)
    th = threading.Thread(target=run)
    th.start()
    for _ in range(100):
        try:
            frames = read_frames("127.0.0.1", port)
            break
        except ConnectionRefusedError:
            threading.Event().wait(0.05)
    th.join(10)
    assert len(frames) == 5
    assert len(result["server"].reports) == 1 and len(result["server"].reports[0].commands) == 4


def test_trial_stream_parsing(clean_split):
    trials = clean_split[1][:3]
    text = "".join(sio.trial_to_text(t) for t in trials)
    lines = text.splitlines(keepends=True)
    # Corrupt one value of the second trial.
    start = [i for i, ln in enumerate(lines) if ln.startswith(sio.TRIAL_MAGIC)][1]
    k = start + 20
    lines[k] = "x" + lines[k][1:]
    items = list(iter_trial_stream(io.StringIO("".join(lines)), RecordingSpec()))
    assert isinstance(items[0], TrialRecording) and isinstance(items[2], TrialRecording)
    assert isinstance(items[1], str) and "cannot parse" in items[1]
    assert np.array_equal(items[2].samples, trials[2].samples)


def test_socket_trial_source(clean_split):
    trials = clean_split[1][:2]
    payload = "".join(sio.trial_to_text(t) for t in trials).encode()
    listener = socket.create_server(("127.0.0.1", 0))

    def producer():
        conn, _ = listener.accept()
        with conn:
            conn.sendall(payload)
    th = threading.Thread(target=producer)
    th.start()
    got = list(socket_trial_source(*listener.getsockname()[:2], RecordingSpec()))
    th.join(10)
    listener.close()
    assert [t.true_label for t in got] == [t.true_label for t in trials]
    assert all(np.array_equal(a.samples, b.samples) for a, b in zip(got, trials))
