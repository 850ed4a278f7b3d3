"""Discrete-event simulation of DASH-style clients on bandwidth-capped servers.

Model: each server splits its capacity equally among its concurrent segment
downloads (processor sharing); the client-side link is never the bottleneck.
Clients fetch fixed-duration segments back to back, estimate throughput with a
harmonic mean over recent segments, and pick the highest ladder bitrate that
fits under a safety factor of the estimate. A full buffer pauses requesting
until one segment of room has drained; an empty buffer during playback is a
rebuffer stall that lasts until the in-flight segment lands.

Time is continuous and exact: the clock, shares, and buffers are rationals
(`fractions.Fraction`), so event ordering, capacity conservation and buffer
bounds never depend on floating-point rounding. Per-server download progress
is tracked with a virtual service counter (cumulative per-download service),
which makes each event O(log n) instead of touching every active download.

Segment completions fire in timestamp order with ties broken by event kind
(completions first) and then client id. Launches are staggered across one
segment duration using offsets derived from the seed, so equal-capacity
clients do not run in artificial lockstep.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple

from .game import seed_stream

# event kinds, in tie-break priority order at equal timestamps
_DONE, _EMPTY, _RESUME, _LAUNCH = 0, 1, 2, 3


@dataclass(frozen=True)
class Ladder:
    """Ascending bitrate ladder with parallel quality labels."""

    bitrates: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.bitrates:
            raise ValueError("ladder is empty")
        if list(self.bitrates) != sorted(set(self.bitrates)):
            raise ValueError("ladder bitrates must be strictly ascending")
        if len(self.labels) != len(self.bitrates):
            raise ValueError("labels must parallel bitrates")

    @property
    def lowest(self) -> int:
        return self.bitrates[0]

    def level(self, bitrate: int) -> int:
        return self.bitrates.index(bitrate)


PAPER_LADDER = Ladder((1360, 3265, 6117, 9330), ("360p", "480p", "720p", "1080p"))


@dataclass(frozen=True)
class SimConfig:
    segment_duration_s: int = 2
    buffer_cap_s: int = 30
    panic_buffer_s: int = 2
    history_window: int = 5
    safety_alpha: float = 0.9
    warmup_segments: int = 15
    measure_segments: int = 60
    seed: int = 0

    def __post_init__(self) -> None:
        if self.segment_duration_s <= 0:
            raise ValueError("segment_duration_s must be > 0")
        if not (0 < self.safety_alpha <= 1):
            raise ValueError("safety_alpha must be in (0, 1]")
        if self.panic_buffer_s >= self.buffer_cap_s:
            raise ValueError("panic_buffer_s must be < buffer_cap_s")
        if self.history_window < 1:
            raise ValueError("history_window must be >= 1")

    @property
    def alpha(self) -> Fraction:
        # decimal-exact reading of the configured float ("0.9" -> 9/10)
        return Fraction(str(self.safety_alpha))


@dataclass(frozen=True)
class ClientState:
    """Immutable snapshot of one client."""

    id: str
    assigned_server: str
    buffer_s: float
    throughput_history: tuple[float, ...]
    current_bitrate: int
    segments_done: int
    rebuffer_events: int
    rebuffer_time_s: float


@dataclass(frozen=True)
class ServerState:
    """Immutable snapshot of one server."""

    id: str
    bandwidth_kbps: int
    active_downloads: frozenset[str]


class SimEvent(NamedTuple):
    t_s: Fraction
    client: str
    server: str
    kind: str  # START | DONE | REBUF_BEGIN | REBUF_END
    bitrate_kbps: int
    share_kbps: Fraction


@dataclass(frozen=True)
class WindowMetrics:
    """Aggregates over a per-client segment-index window."""

    mean_bitrate_kbps: float
    mean_level_index: float
    per_server_counts: dict[str, int]
    rebuffer_events: int
    rebuffer_time_s: float
    sample_count: int


def allocate_shares(server: ServerState) -> dict[str, Fraction]:
    """Equal split of the server's capacity among its active downloads."""
    n = len(server.active_downloads)
    if n == 0:
        return {}
    share = Fraction(server.bandwidth_kbps, n)
    return {cid: share for cid in server.active_downloads}


def estimate_throughput(
    history: Iterable[Fraction | int],
    window: int,
    cold_start_kbps: int,
) -> Fraction:
    """Harmonic mean of up to the last `window` samples; cold start when empty."""
    samples = list(history)[-window:]
    if not samples:
        return Fraction(cold_start_kbps)
    return Fraction(len(samples)) / sum(Fraction(1, 1) / Fraction(s) for s in samples)


def select_bitrate(est, buffer_s, ladder: Ladder, cfg: SimConfig) -> int:
    """Highest ladder rate under safety_alpha * est; lowest when buffer panics."""
    if Fraction(buffer_s) < cfg.panic_buffer_s:
        return ladder.lowest
    cap = cfg.alpha * Fraction(est)
    pick = ladder.lowest
    for rate in ladder.bitrates:
        if rate <= cap:
            pick = rate
    return pick


class _Download:
    __slots__ = ("server_id", "bitrate", "size_kbits", "start_t")

    def __init__(self, server_id: str, bitrate: int, size_kbits: int, start_t: Fraction):
        self.server_id = server_id
        self.bitrate = bitrate
        self.size_kbits = size_kbits
        self.start_t = start_t


class _Server:
    __slots__ = ("id", "bandwidth", "svc", "svc_mark", "targets", "gen")

    def __init__(self, server_id: str, bandwidth: int):
        if bandwidth <= 0:
            raise ValueError(f"server {server_id!r}: bandwidth must be > 0")
        self.id = server_id
        self.bandwidth = bandwidth
        self.svc = Fraction(0)        # cumulative per-download service, kbits
        self.svc_mark = Fraction(0)   # time svc was last advanced to
        self.targets: list[tuple[Fraction, str]] = []  # (svc at completion, client)
        self.gen = 0

    def advance(self, t: Fraction) -> None:
        if self.targets and t != self.svc_mark:
            self.svc += Fraction(self.bandwidth, len(self.targets)) * (t - self.svc_mark)
        self.svc_mark = t

    def share(self) -> Fraction:
        return Fraction(self.bandwidth, len(self.targets))

    def next_completion(self) -> tuple[Fraction, str] | None:
        if not self.targets:
            return None
        target, cid = self.targets[0]
        dt = (target - self.svc) * len(self.targets) / self.bandwidth
        return self.svc_mark + dt, cid


class _Client:
    __slots__ = (
        "id", "server_id", "buffer", "buffer_mark", "playing", "stalled",
        "stall_begin", "frozen", "download", "history", "current_bitrate",
        "segments_done", "seg_bitrates", "seg_stall_events", "seg_stall_time",
        "rebuffer_events", "rebuffer_time", "empty_gen", "resume_gen",
    )

    def __init__(self, client_id: str, server_id: str, cold_start_bitrate: int, window: int):
        self.id = client_id
        self.server_id = server_id
        self.buffer = Fraction(0)
        self.buffer_mark = Fraction(0)
        self.playing = False
        self.stalled = False
        self.stall_begin = Fraction(0)
        self.frozen = False
        self.download: _Download | None = None
        self.history: deque[Fraction] = deque(maxlen=window)
        self.current_bitrate = cold_start_bitrate
        self.segments_done = 0
        self.seg_bitrates: list[int] = []
        self.seg_stall_events: list[int] = []
        self.seg_stall_time: list[Fraction] = []
        self.rebuffer_events = 0
        self.rebuffer_time = Fraction(0)
        self.empty_gen = 0
        self.resume_gen = 0

    def draining(self) -> bool:
        return self.playing and not self.stalled and not self.frozen

    def buffer_at(self, t: Fraction) -> Fraction:
        if self.draining():
            return self.buffer - (t - self.buffer_mark)
        return self.buffer


class Simulation:
    """One multi-server streaming scenario, advanced event by event.

    `servers` is a list of (server_id, bandwidth_kbps); `assignment` maps every
    client id to its initial server. Identical inputs (including the seed)
    produce identical event traces.
    """

    def __init__(
        self,
        servers: list[tuple[str, int]],
        assignment: dict[str, str],
        ladder: Ladder = PAPER_LADDER,
        cfg: SimConfig = SimConfig(),
        trace: bool = False,
    ):
        self.ladder = ladder
        self.cfg = cfg
        self.clock = Fraction(0)
        self.quota: int | None = None
        self.trace: list[SimEvent] | None = [] if trace else None

        self._servers: dict[str, _Server] = {}
        for sid, bw in sorted(servers):
            if sid in self._servers:
                raise ValueError(f"duplicate server id {sid!r}")
            self._servers[sid] = _Server(sid, bw)

        self._clients: dict[str, _Client] = {}
        seg = cfg.segment_duration_s
        offsets = seed_stream(cfg.seed)
        self._heap: list[tuple] = []
        for cid in sorted(assignment):
            sid = assignment[cid]
            if sid not in self._servers:
                raise ValueError(f"client {cid!r} assigned to unknown server {sid!r}")
            self._clients[cid] = _Client(cid, sid, ladder.lowest, cfg.history_window)
            offset = Fraction(next(offsets) % 1000, 1000) * seg
            heapq.heappush(self._heap, (offset, _LAUNCH, cid, 0))

    # -- public queries ------------------------------------------------------

    def client_ids(self) -> list[str]:
        return sorted(self._clients)

    def client_state(self, client_id: str) -> ClientState:
        c = self._clients[client_id]
        return ClientState(
            id=c.id,
            assigned_server=c.server_id,
            buffer_s=float(c.buffer_at(self.clock)),
            throughput_history=tuple(float(x) for x in c.history),
            current_bitrate=c.current_bitrate,
            segments_done=c.segments_done,
            rebuffer_events=c.rebuffer_events,
            rebuffer_time_s=float(c.rebuffer_time),
        )

    def server_state(self, server_id: str) -> ServerState:
        s = self._servers[server_id]
        return ServerState(
            id=s.id,
            bandwidth_kbps=s.bandwidth,
            active_downloads=frozenset(cid for _, cid in s.targets),
        )

    def snapshot_lambdas(self) -> dict[str, int]:
        """Each client's current requested bitrate, as an immutable copy."""
        return {cid: c.current_bitrate for cid, c in self._clients.items()}

    def apply_assignment(self, assignment) -> int:
        """Reassign clients; takes a Collection or a client->server mapping.

        In-flight downloads finish on the old server; the change takes effect
        at each client's next segment request. Returns how many clients moved.
        """
        mapping = assignment.assignment() if hasattr(assignment, "assignment") else dict(assignment)
        if set(mapping) != set(self._clients):
            missing = set(self._clients) ^ set(mapping)
            raise ValueError(f"assignment does not cover the client set exactly: {sorted(missing)}")
        unknown = sorted(set(mapping.values()) - set(self._servers))
        if unknown:
            raise ValueError(f"assignment names unknown servers: {unknown}")
        changed = 0
        for cid, sid in mapping.items():
            c = self._clients[cid]
            if c.server_id != sid:
                c.server_id = sid
                changed += 1
        return changed

    def collect_metrics(self, window: tuple[int, int]) -> WindowMetrics:
        """Pooled metrics over per-client segment indices [lo, hi)."""
        lo, hi = window
        if lo < 0 or hi <= lo:
            raise ValueError(f"empty or invalid window {window}")
        bit_sum = 0
        level_sum = 0
        count = 0
        stalls = 0
        stall_time = Fraction(0)
        for c in self._clients.values():
            if c.segments_done < hi:
                raise ValueError(
                    f"client {c.id!r} has only {c.segments_done} segments, window ends at {hi}"
                )
            for i in range(lo, hi):
                bit_sum += c.seg_bitrates[i]
                level_sum += self.ladder.level(c.seg_bitrates[i])
                stalls += c.seg_stall_events[i]
                stall_time += c.seg_stall_time[i]
            count += hi - lo
        counts: dict[str, int] = {sid: 0 for sid in self._servers}
        for c in self._clients.values():
            counts[c.server_id] += 1
        return WindowMetrics(
            mean_bitrate_kbps=bit_sum / count,
            mean_level_index=level_sum / count,
            per_server_counts=counts,
            rebuffer_events=stalls,
            rebuffer_time_s=float(stall_time),
            sample_count=count,
        )

    # -- event loop ------------------------------------------------------------

    def set_quota(self, quota: int) -> None:
        """Let every client stream until it has completed `quota` segments.

        A client at quota freezes in place: no further requests and no buffer
        drain, so its ABR state is exactly where it stopped. Raising the quota
        thaws frozen clients and they continue from that state.
        """
        if self.quota is not None and quota < self.quota:
            raise ValueError("quota cannot decrease")
        self.quota = quota
        for c in self._clients.values():
            if c.frozen and c.segments_done < quota:
                c.frozen = False
                c.buffer_mark = self.clock
                self._request_or_idle(c, self.clock)

    def run_to_quota(self, sink: list[SimEvent] | None = None) -> None:
        """Process events until every client has frozen at the current quota."""
        if self.quota is None:
            raise ValueError("no quota set")
        while not all(c.frozen for c in self._clients.values()):
            if not self._step(sink):
                raise RuntimeError("event queue drained before quota was reached")

    def advance(self, until) -> list[SimEvent]:
        """Process all events with timestamp <= until; returns them in order."""
        until = Fraction(until)
        if until < self.clock:
            raise ValueError(f"cannot advance to {until}: clock is at {self.clock}")
        out: list[SimEvent] = []
        while self._heap:
            entry = self._heap[0]
            if not self._valid(entry):
                heapq.heappop(self._heap)
                continue
            if entry[0] > until:
                break
            self._step(out)
        self.clock = max(self.clock, until)
        return out

    # -- internals ----------------------------------------------------------------

    def _valid(self, entry: tuple) -> bool:
        t, kind, key, gen = entry[0], entry[1], entry[2], entry[3]
        if kind == _DONE:
            return self._servers[entry[4]].gen == gen
        if kind == _EMPTY:
            return self._clients[key].empty_gen == gen
        if kind == _RESUME:
            return self._clients[key].resume_gen == gen
        return True  # LAUNCH

    def _step(self, sink: list[SimEvent] | None) -> bool:
        """Pop and process the next valid event. False if the queue is empty."""
        while self._heap:
            entry = heapq.heappop(self._heap)
            if not self._valid(entry):
                continue
            t, kind, key = entry[0], entry[1], entry[2]
            assert t >= self.clock
            self.clock = t
            if kind == _DONE:
                self._on_done(t, self._servers[entry[4]], sink)
            elif kind == _EMPTY:
                self._on_buffer_empty(t, self._clients[key], sink)
            elif kind == _RESUME:
                self._on_resume(t, self._clients[key], sink)
            else:
                self._on_launch(t, self._clients[key], sink)
            return True
        return False

    def _emit(self, sink, t, client: _Client, server_id: str, kind: str, bitrate: int, share):
        if sink is None and self.trace is None:
            return
        ev = SimEvent(t, client.id, server_id, kind, bitrate, share)
        if sink is not None:
            sink.append(ev)
        if self.trace is not None:
            self.trace.append(ev)

    def _pick_bitrate(self, c: _Client, t: Fraction) -> int:
        est = estimate_throughput(c.history, self.cfg.history_window, self.ladder.lowest)
        return select_bitrate(est, c.buffer_at(t), self.ladder, self.cfg)

    def _schedule_done(self, s: _Server) -> None:
        s.gen += 1
        nxt = s.next_completion()
        if nxt is not None:
            t, cid = nxt
            heapq.heappush(self._heap, (t, _DONE, cid, s.gen, s.id))

    def _reschedule_empty(self, c: _Client, t: Fraction) -> None:
        c.empty_gen += 1
        if c.draining() and c.download is not None:
            heapq.heappush(
                self._heap, (t + c.buffer_at(t), _EMPTY, c.id, c.empty_gen)
            )

    def _start_download(self, c: _Client, t: Fraction, sink) -> None:
        bitrate = self._pick_bitrate(c, t)
        size = bitrate * self.cfg.segment_duration_s
        s = self._servers[c.server_id]
        s.advance(t)
        heapq.heappush(s.targets, (s.svc + size, c.id))
        self._schedule_done(s)
        c.download = _Download(s.id, bitrate, size, t)
        c.current_bitrate = bitrate
        self._emit(sink, t, c, s.id, "START", bitrate, s.share())
        self._reschedule_empty(c, t)

    def _request_or_idle(self, c: _Client, t: Fraction, sink=None) -> None:
        """Issue the next request now, or schedule it for when the buffer has room."""
        if self.quota is not None and c.segments_done >= self.quota:
            c.frozen = True
            c.buffer = c.buffer_at(t)
            c.buffer_mark = t
            c.empty_gen += 1
            c.resume_gen += 1
            return
        seg = self.cfg.segment_duration_s
        buffer = c.buffer_at(t)
        if buffer + seg <= self.cfg.buffer_cap_s:
            self._start_download(c, t, sink)
        else:
            # full buffer: idle until exactly one segment of room has drained
            c.resume_gen += 1
            resume_at = t + (buffer - (self.cfg.buffer_cap_s - seg))
            heapq.heappush(self._heap, (resume_at, _RESUME, c.id, c.resume_gen))
            c.empty_gen += 1  # not downloading: no stall can happen

    def _on_launch(self, t: Fraction, c: _Client, sink) -> None:
        self._request_or_idle(c, t, sink)

    def _on_done(self, t: Fraction, s: _Server, sink) -> None:
        s.advance(t)
        share_before = s.share()
        target, cid = heapq.heappop(s.targets)
        assert target == s.svc, "virtual service drifted from completion target"
        c = self._clients[cid]
        dl = c.download
        assert dl is not None and dl.server_id == s.id
        c.download = None
        self._schedule_done(s)

        c.history.append(Fraction(dl.size_kbits) / (t - dl.start_t))

        stall_time = Fraction(0)
        had_stall = 0
        if c.stalled:
            stall_time = t - c.stall_begin
            c.rebuffer_time += stall_time
            had_stall = 1
            c.stalled = False
            c.buffer_mark = t  # buffer stayed at 0 during the stall
            self._emit(sink, t, c, s.id, "REBUF_END", dl.bitrate, share_before)

        buffer = c.buffer_at(t)
        assert 0 <= buffer <= self.cfg.buffer_cap_s
        c.buffer = min(buffer + self.cfg.segment_duration_s, Fraction(self.cfg.buffer_cap_s))
        c.buffer_mark = t
        if not c.playing:
            c.playing = True  # playback starts with the first completed segment

        c.seg_bitrates.append(dl.bitrate)
        c.seg_stall_events.append(had_stall)
        c.seg_stall_time.append(stall_time)
        c.segments_done += 1
        self._emit(sink, t, c, s.id, "DONE", dl.bitrate, share_before)

        self._request_or_idle(c, t, sink)

    def _on_buffer_empty(self, t: Fraction, c: _Client, sink) -> None:
        assert c.draining() and c.download is not None
        assert c.buffer_at(t) == 0
        c.buffer = Fraction(0)
        c.buffer_mark = t
        c.stalled = True
        c.stall_begin = t
        c.rebuffer_events += 1
        s = self._servers[c.download.server_id]
        self._emit(sink, t, c, s.id, "REBUF_BEGIN", c.download.bitrate, s.share())

    def _on_resume(self, t: Fraction, c: _Client, sink) -> None:
        assert c.download is None and not c.frozen
        buffer = c.buffer_at(t)
        assert buffer + self.cfg.segment_duration_s == self.cfg.buffer_cap_s
        c.buffer = buffer
        c.buffer_mark = t
        self._start_download(c, t, sink)


def format_event_trace(events: Iterable[SimEvent]) -> str:
    """One line per event: t_s,client,server,event,bitrate_kbps,share_kbps."""
    return "".join(
        f"{float(e.t_s)},{e.client},{e.server},{e.kind},{e.bitrate_kbps},{float(e.share_kbps)}\n"
        for e in events
    )
