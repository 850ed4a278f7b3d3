"""Random game instances and brute-force oracles shared across test modules."""

from __future__ import annotations

import itertools
import random

from coalition_cdn.game import Coalition, Collection, PlayerRef

PAPER_LADDER = [1360, 3265, 6117, 9330]


def random_instance(
    rng: random.Random,
    max_players: int = 100,
    max_servers: int = 8,
    min_servers: int = 1,
) -> Collection:
    """A random collection: ladder bitrates, bandwidths in [1000, 10000] Kbps."""
    n_servers = rng.randint(min_servers, max_servers)
    n_players = rng.randint(1, max_players)
    coalitions = [
        Coalition(f"s{i:02d}", rng.randint(1, 10) * 1000) for i in range(n_servers)
    ]
    for i in range(n_players):
        p = PlayerRef(f"p{i:03d}", rng.choice(PAPER_LADDER))
        coalitions[rng.randrange(n_servers)].add(p)
    col = Collection(coalitions)
    col.validate()
    return col


def brute_force_stable_assignments(col: Collection, xi: int) -> set[tuple[str, ...]]:
    """Every xi-stable assignment of col's players to col's servers.

    Enumerates all server choices per player and keeps those where no single
    player can move to another server with payoff-after-join at least xi above
    its current server's payoff. Deliberately independent of the engine: plain
    recomputation per candidate.
    """
    players = col.players()
    servers = [(c.server_id, c.bandwidth_kbps) for c in col.coalitions]
    stable: set[tuple[str, ...]] = set()
    for choice in itertools.product(range(len(servers)), repeat=len(players)):
        load = [0] * len(servers)
        for pi, si in enumerate(choice):
            load[si] += players[pi].lambda_kbps
        payoffs = [bw - load[si] for si, (_, bw) in enumerate(servers)]
        ok = True
        for pi, si in enumerate(choice):
            lam = players[pi].lambda_kbps
            for sj in range(len(servers)):
                if sj == si:
                    continue
                if (payoffs[sj] - lam) - payoffs[si] >= xi:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            stable.add(tuple(servers[si][0] for si in choice))
    return stable


def assignment_tuple(col: Collection) -> tuple[str, ...]:
    """Server of each player, players in ascending id order."""
    assignment = col.assignment()
    return tuple(assignment[p.id] for p in col.players())
