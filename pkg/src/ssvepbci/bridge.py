"""Line-oriented TCP bridge that pushes decoded commands to one client at a time.

Frames, one per line (UTF-8, ``\\n``-terminated)::

    CMD <label_id> <name> <winning_tally>
    ERR <code> <detail>
    END
"""
from __future__ import annotations

import logging
import socket
import socketserver
import threading
from dataclasses import dataclass
from typing import IO, Any, Callable, Iterable, Iterator, Optional, Union

from .core import RecordingSpec
from .ensemble import EnsembleModel
from .io import TRIAL_MAGIC, TrialFormatError, _parse_trial_text
from .protocol import OnlineCommand, OnlineError, run_online_session

log = logging.getLogger(__name__)

TrialSource = Union[Iterable[Any], Callable[[], Iterable[Any]]]


def format_frame(event: Union[OnlineCommand, OnlineError, None]) -> str:
    """Render one event as a frame line; ``None`` renders the end marker."""
    if event is None:
        return "END\n"
    if isinstance(event, OnlineCommand):
        return f"CMD {event.label} {event.name} {event.winning_tally:.6f}\n"
    detail = " ".join(event.detail.split())
    return f"ERR {event.code} {detail}\n"


@dataclass(frozen=True)
class Frame:
    kind: str                      # "CMD", "ERR" or "END"
    label: Optional[int] = None
    name: Optional[str] = None
    winning_tally: Optional[float] = None
    code: Optional[str] = None
    detail: Optional[str] = None


def parse_frame(line: str) -> Frame:
    line = line.rstrip("\r\n")
    kind, _, rest = line.partition(" ")
    if kind == "END" and not rest:
        return Frame("END")
    if kind == "CMD":
        parts = rest.split(" ")
        if len(parts) != 3:
            raise ValueError(f"malformed CMD frame: {line!r}")
        return Frame("CMD", int(parts[0]), parts[1], float(parts[2]))
    if kind == "ERR":
        code, _, detail = rest.partition(" ")
        if not code:
            raise ValueError(f"malformed ERR frame: {line!r}")
        return Frame("ERR", code=code, detail=detail)
    raise ValueError(f"unknown frame: {line!r}")


def _open_source(source: TrialSource) -> Iterable[Any]:
    # A factory gives every connection a fresh stream; a plain iterable is
    # iterated anew per connection (a one-shot iterator is simply exhausted).
    return source() if callable(source) else iter(source)


class _Handler(socketserver.StreamRequestHandler):
    server: "CommandServer"

    def handle(self) -> None:
        srv = self.server
        peer = self.client_address
        log.info("client connected: %s", peer)

        def sink(event):
            self.wfile.write(format_frame(event).encode("utf-8"))
            self.wfile.flush()

        try:
            report = run_online_session(srv.ensemble, _open_source(srv.source), sink)
            sink(None)
            srv.reports.append(report)
        except (BrokenPipeError, ConnectionResetError, ConnectionAbortedError) as exc:
            log.info("client %s went away: %s", peer, exc)
        except Exception as exc:  # source or classifier failure: abort this session only
            log.exception("session for %s aborted", peer)
            try:
                sink(OnlineError(-1, "SESSION_ABORTED", f"{type(exc).__name__}: {exc}"))
            except OSError:
                pass
        finally:
            srv.sessions_served += 1


class CommandServer(socketserver.TCPServer):
    """Serves sessions sequentially: a second client waits until the first finishes."""

    allow_reuse_address = True

    def __init__(self, ensemble: EnsembleModel, source: TrialSource, host: str = "127.0.0.1", port: int = 0):
        self.ensemble = ensemble
        self.source = source
        self.reports: list = []
        self.sessions_served = 0
        super().__init__((host, port), _Handler)

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server_address[:2]
        return host, port

    def start(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, name="ssvepbci-bridge", daemon=True)
        thread.start()
        return thread

    def stop(self) -> None:
        self.shutdown()
        self.server_close()

    def serve_sessions(self, n: int) -> None:
        """Block until ``n`` client sessions have been served (finished or dropped)."""
        while self.sessions_served < n:
            self.handle_request()


def read_frames(host: str, port: int, timeout: float = 30.0, limit: Optional[int] = None) -> list[Frame]:
    """Connect, read frames until END (or ``limit`` frames), and return them."""
    frames: list[Frame] = []
    with socket.create_connection((host, port), timeout=timeout) as sock, sock.makefile("r", encoding="utf-8") as f:
        for line in f:
            frame = parse_frame(line)
            frames.append(frame)
            if frame.kind == "END" or (limit is not None and len(frames) >= limit):
                break
    return frames


def iter_trial_stream(stream: IO[str], rec_spec: RecordingSpec) -> Iterator[Any]:
    """Yield trials from concatenated trial-CSV blocks, each opened by the format line.

    A block that fails to parse is yielded as its error message (a str),
    which the online session reports as a BAD_TRIAL frame and skips.
    """
    block: list[str] = []
    for line in stream:
        if line.rstrip("\r\n") == TRIAL_MAGIC and block:
            yield _parse_block(block, rec_spec)
            block = []
        block.append(line)
    if block:
        yield _parse_block(block, rec_spec)


def _parse_block(lines: list[str], rec_spec: RecordingSpec) -> Any:
    try:
        return _parse_trial_text("".join(lines), rec_spec)[0]
    except (TrialFormatError, ValueError) as exc:
        return f"unparseable trial: {exc}"


def serve_commands(endpoint: tuple[str, int], ensemble: EnsembleModel, trial_source: TrialSource,
                   sessions: Optional[int] = None) -> CommandServer:
    """Bind ``endpoint`` and serve client sessions.

    With ``sessions`` set, blocks until that many sessions finish and returns
    the closed server (its ``reports`` hold each completed session); without
    it, returns a server already running in a background thread.
    """
    server = CommandServer(ensemble, trial_source, *endpoint)
    if sessions is None:
        server.start()
        return server
    try:
        server.serve_sessions(sessions)
    finally:
        server.server_close()
    return server


def socket_trial_source(host: str, port: int, rec_spec: RecordingSpec, timeout: float = 30.0) -> Iterator[Any]:
    """Connect to a trial producer and yield trials from its concatenated trial-CSV stream."""
    with socket.create_connection((host, port), timeout=timeout) as sock, sock.makefile("r", encoding="utf-8") as f:
        yield from iter_trial_stream(f, rec_spec)
