"""Coalitional client-to-server assignment game.

Each server is a coalition of the streaming clients currently assigned to it.
A coalition's payoff is its residual bandwidth: server capacity minus the sum
of its members' requested bitrates (all integer Kbps, signed — an
oversubscribed server has negative payoff). A client migrates from its current
server to another one whenever the destination's payoff *after* absorbing the
client exceeds the source's current payoff by at least a configurable
threshold. `stabilize` applies such migrations in a fixed deterministic scan
order until none is admissible; the resulting assignment admits no further
beneficial single-client move.

All ids are opaque strings ordered by plain string comparison; scan order and
every tie-break derive from that ordering, so runs are fully reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class MigrationError(ValueError):
    """Raised on precondition violations of migration operations."""


class TransferCapExceeded(RuntimeError):
    """Raised when stabilize applies more transfers than the configured cap.

    Unreachable with a positive migration threshold; exists to surface
    misconfiguration instead of looping.
    """


@dataclass(frozen=True)
class PlayerRef:
    """A streaming client: unique id plus its requested bitrate in Kbps."""

    id: str
    lambda_kbps: int


@dataclass
class Coalition:
    """One server and the set of clients currently assigned to it."""

    server_id: str
    bandwidth_kbps: int
    members: dict[str, PlayerRef] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.bandwidth_kbps <= 0:
            raise ValueError(f"coalition {self.server_id!r}: bandwidth must be > 0")

    def add(self, player: PlayerRef) -> None:
        if player.id in self.members:
            raise MigrationError(f"player {player.id!r} already in {self.server_id!r}")
        self.members[player.id] = player

    def remove(self, player_id: str) -> PlayerRef:
        try:
            return self.members.pop(player_id)
        except KeyError:
            raise MigrationError(f"player {player_id!r} not in {self.server_id!r}") from None

    def sorted_members(self) -> list[PlayerRef]:
        return [self.members[pid] for pid in sorted(self.members)]

    def copy(self) -> Coalition:
        return Coalition(self.server_id, self.bandwidth_kbps, dict(self.members))


@dataclass
class Collection:
    """A partition of all clients across all servers (the game state).

    Coalitions are kept in ascending server_id order. `validate` checks the
    partition invariants: unique server ids, disjoint member sets, positive
    bitrates.
    """

    coalitions: list[Coalition]

    def __post_init__(self) -> None:
        self.coalitions = sorted(self.coalitions, key=lambda c: c.server_id)

    def validate(self) -> None:
        seen_servers: set[str] = set()
        seen_players: set[str] = set()
        for c in self.coalitions:
            if c.server_id in seen_servers:
                raise ValueError(f"duplicate server id {c.server_id!r}")
            seen_servers.add(c.server_id)
            for pid, p in c.members.items():
                if pid != p.id:
                    raise ValueError(f"member key {pid!r} does not match player id {p.id!r}")
                if p.lambda_kbps <= 0:
                    raise ValueError(f"player {pid!r}: lambda_kbps must be > 0")
                if pid in seen_players:
                    raise ValueError(f"player {pid!r} present in two coalitions")
                seen_players.add(pid)

    def coalition(self, server_id: str) -> Coalition:
        for c in self.coalitions:
            if c.server_id == server_id:
                return c
        raise KeyError(f"no coalition for server {server_id!r}")

    def players(self) -> list[PlayerRef]:
        """All players, ascending id."""
        out = [p for c in self.coalitions for p in c.members.values()]
        return sorted(out, key=lambda p: p.id)

    def assignment(self) -> dict[str, str]:
        """player id -> server id."""
        return {pid: c.server_id for c in self.coalitions for pid in c.members}

    def copy(self) -> Collection:
        return Collection([c.copy() for c in self.coalitions])


@dataclass(frozen=True)
class GameConfig:
    """Migration threshold and a runaway guard for the stabilization loop.

    xi_kbps is the minimum payoff gain (Kbps) a move must achieve to be
    applied. It must be strictly positive: that is what makes every applied
    move strictly decrease the sum of squared payoffs and hence guarantees
    termination. max_transfers=None resolves to 10 * players * coalitions.
    """

    xi_kbps: int = 100
    max_transfers: int | None = None

    def __post_init__(self) -> None:
        if self.xi_kbps <= 0:
            raise ValueError("xi_kbps must be > 0")
        if self.max_transfers is not None and self.max_transfers < 1:
            raise ValueError("max_transfers must be >= 1")

    def effective_cap(self, n_players: int, n_coalitions: int) -> int:
        if self.max_transfers is not None:
            return self.max_transfers
        return max(1, 10 * n_players * n_coalitions)


@dataclass(frozen=True)
class TransferEvent:
    """One applied migration, with the payoffs that justified it."""

    player: PlayerRef
    from_server: str
    to_server: str
    payoff_src_before: int
    payoff_dst_after: int
    sequence: int


@dataclass(frozen=True)
class TransferLog:
    initial: Collection
    events: tuple[TransferEvent, ...]
    final: Collection


def payoff(c: Coalition) -> int:
    """Residual bandwidth of a coalition: capacity minus member demand, Kbps."""
    return c.bandwidth_kbps - sum(p.lambda_kbps for p in c.members.values())


def payoff_after_join(c: Coalition, p: PlayerRef) -> int:
    """Payoff c would have if p joined it; c is not mutated."""
    if p.id in c.members:
        raise MigrationError(f"player {p.id!r} already in {c.server_id!r}")
    return payoff(c) - p.lambda_kbps


def check_migration(
    col: Collection,
    player_id: str,
    src: str,
    dst: str,
    cfg: GameConfig,
    sequence: int = 0,
) -> TransferEvent | None:
    """Apply the move player_id: src -> dst if it clears the threshold.

    The source payoff is evaluated with the player still counted in it. On
    success the collection is mutated and the event returned; otherwise the
    collection is untouched and None is returned.
    """
    if src == dst:
        raise MigrationError("source and destination coalitions are the same")
    c_src = col.coalition(src)
    c_dst = col.coalition(dst)
    if player_id not in c_src.members:
        raise MigrationError(f"player {player_id!r} not in {src!r}")
    p = c_src.members[player_id]
    before = payoff(c_src)
    after = payoff_after_join(c_dst, p)
    if after - before < cfg.xi_kbps:
        return None
    c_src.remove(player_id)
    c_dst.add(p)
    return TransferEvent(
        player=p,
        from_server=src,
        to_server=dst,
        payoff_src_before=before,
        payoff_dst_after=after,
        sequence=sequence,
    )


def stabilize(initial: Collection, cfg: GameConfig) -> TransferLog:
    """Run migration rounds until no admissible move remains.

    Scan order: coalitions ascending server_id, members ascending player id,
    destinations ascending server_id. The first admissible move is applied and
    the whole scan restarts. A scan that completes without applying anything
    means the collection is stable.

    Payoffs are cached per coalition and adjusted incrementally on each move;
    results are identical to recomputing from scratch.
    """
    initial.validate()
    work = initial.copy()
    snapshot = initial.copy()
    coalitions = work.coalitions
    payoffs = [payoff(c) for c in coalitions]
    cap = cfg.effective_cap(sum(len(c.members) for c in coalitions), len(coalitions))

    events: list[TransferEvent] = []
    migrated = True
    while migrated:
        migrated = False
        for i, c_src in enumerate(coalitions):
            for p in c_src.sorted_members():
                for j, c_dst in enumerate(coalitions):
                    if j == i:
                        continue
                    before = payoffs[i]
                    after = payoffs[j] - p.lambda_kbps
                    if after - before < cfg.xi_kbps:
                        continue
                    c_src.remove(p.id)
                    c_dst.add(p)
                    payoffs[i] = before + p.lambda_kbps
                    payoffs[j] = after
                    event = TransferEvent(
                        player=p,
                        from_server=c_src.server_id,
                        to_server=c_dst.server_id,
                        payoff_src_before=before,
                        payoff_dst_after=after,
                        sequence=len(events),
                    )
                    events.append(event)
                    if len(events) > cap:
                        raise TransferCapExceeded(
                            f"exceeded max_transfers={cap}; last event: "
                            f"{format_transfer_event(event)}"
                        )
                    migrated = True
                    break
                if migrated:
                    break
            if migrated:
                break

    return TransferLog(initial=snapshot, events=tuple(events), final=work)


def is_stable(col: Collection, cfg: GameConfig) -> bool:
    """True iff no single-player move clears the migration threshold."""
    payoffs = {c.server_id: payoff(c) for c in col.coalitions}
    for c_src in col.coalitions:
        before = payoffs[c_src.server_id]
        for p in c_src.members.values():
            for c_dst in col.coalitions:
                if c_dst.server_id == c_src.server_id:
                    continue
                after = payoffs[c_dst.server_id] - p.lambda_kbps
                if after - before >= cfg.xi_kbps:
                    return False
    return True


def potential(col: Collection) -> int:
    """Sum of squared coalition payoffs.

    Every applied transfer of a player with bitrate lam under threshold xi
    lowers this by at least 2*lam*xi, which bounds the number of transfers any
    stabilization can perform.
    """
    return sum(payoff(c) ** 2 for c in col.coalitions)


def replay(log: TransferLog) -> Collection:
    """Re-apply the logged events to the initial collection."""
    col = log.initial.copy()
    for e in log.events:
        src = col.coalition(e.from_server)
        dst = col.coalition(e.to_server)
        dst.add(src.remove(e.player.id))
    return col


# ---------------------------------------------------------------------------
# Deterministic random assignment.

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    """One step of SplitMix64; returns (new_state, output)."""
    state = (state + _SPLITMIX_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def seed_stream(seed: int):
    """Infinite deterministic stream of 64-bit values from a seed."""
    state = seed & _MASK64
    while True:
        state, out = _splitmix64(state)
        yield out


def derive_seed(base: int, *parts: int) -> int:
    """Mix integers into a new 64-bit seed, deterministically."""
    state = base & _MASK64
    for part in parts:
        state, out = _splitmix64((state ^ (part & _MASK64)) & _MASK64)
        state = out
    state, out = _splitmix64(state)
    return out


def random_collection(
    players: list[PlayerRef],
    servers: list[tuple[str, int]],
    seed: int,
) -> Collection:
    """Assign each player to a uniformly random server, reproducibly.

    Generator: SplitMix64 seeded with `seed`; players are processed in
    ascending id order and the i-th draw modulo the server count (servers in
    ascending id order) picks the server. Identical inputs give identical
    collections on any platform.
    """
    if not servers:
        raise ValueError("server list is empty")
    if not players:
        raise ValueError("player list is empty")
    ordered_servers = sorted(servers)
    coalitions = {sid: Coalition(sid, bw) for sid, bw in ordered_servers}
    if len(coalitions) != len(servers):
        raise ValueError("duplicate server ids")
    stream = seed_stream(seed)
    for p in sorted(players, key=lambda p: p.id):
        sid = ordered_servers[next(stream) % len(ordered_servers)][0]
        coalitions[sid].add(p)
    col = Collection(list(coalitions.values()))
    col.validate()
    return col


# ---------------------------------------------------------------------------
# Serialization.


def collection_to_snapshot(col: Collection) -> str:
    """JSON snapshot: servers with bandwidth and member bitrates, sorted."""
    doc = {
        "servers": [
            {
                "id": c.server_id,
                "bandwidth_kbps": c.bandwidth_kbps,
                "members": [
                    {"id": p.id, "lambda_kbps": p.lambda_kbps} for p in c.sorted_members()
                ],
            }
            for c in col.coalitions
        ]
    }
    return json.dumps(doc, indent=2) + "\n"


def collection_from_snapshot(text: str) -> Collection:
    doc = json.loads(text)
    coalitions = []
    for entry in doc["servers"]:
        c = Coalition(entry["id"], entry["bandwidth_kbps"])
        for m in entry.get("members", []):
            c.add(PlayerRef(m["id"], m["lambda_kbps"]))
        coalitions.append(c)
    col = Collection(coalitions)
    col.validate()
    return col


def format_transfer_event(e: TransferEvent) -> str:
    return (
        f"{e.sequence},{e.player.id},{e.from_server},{e.to_server},"
        f"{e.payoff_src_before},{e.payoff_dst_after}"
    )


def format_transfer_log(log: TransferLog) -> str:
    """One CSV-ish line per event: seq,player,from,to,payoff_src_before,payoff_dst_after."""
    return "".join(format_transfer_event(e) + "\n" for e in log.events)
