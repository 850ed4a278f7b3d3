"""Seeded randomized property tests for the stabilization loop."""

from __future__ import annotations

import random

from coalition_cdn.game import (
    GameConfig,
    format_transfer_log,
    is_stable,
    payoff,
    potential,
    replay,
    stabilize,
)

from instances import assignment_tuple, brute_force_stable_assignments, random_instance

CFG = GameConfig(xi_kbps=100)


def test_partition_and_payoff_invariants_over_random_instances():
    rng = random.Random(0xC0A1)
    for _ in range(300):
        col = random_instance(rng, max_players=40, max_servers=6)
        players_before = {p.id for p in col.players()}
        log = stabilize(col, CFG)
        log.final.validate()  # disjointness + grand coalition intact
        assert {p.id for p in log.final.players()} == players_before

        # walk the log: source payoff rises by exactly lambda, threshold holds
        work = log.initial.copy()
        for e in log.events:
            src = work.coalition(e.from_server)
            dst = work.coalition(e.to_server)
            assert payoff(src) == e.payoff_src_before
            assert e.payoff_dst_after - e.payoff_src_before >= CFG.xi_kbps
            dst.add(src.remove(e.player.id))
            assert payoff(src) == e.payoff_src_before + e.player.lambda_kbps
            assert payoff(dst) == e.payoff_dst_after


def test_termination_potential_and_stability():
    rng = random.Random(0xBEEF)
    for _ in range(300):
        col = random_instance(rng, max_players=60, max_servers=8)
        p0 = potential(col)
        log = stabilize(col, CFG)
        assert is_stable(log.final, CFG)

        min_lam = min(p.lambda_kbps for p in col.players())
        assert len(log.events) <= p0 // (2 * min_lam * CFG.xi_kbps)

        work = log.initial.copy()
        prev = potential(work)
        for e in log.events:
            src = work.coalition(e.from_server)
            dst = work.coalition(e.to_server)
            dst.add(src.remove(e.player.id))
            cur = potential(work)
            assert prev - cur >= 2 * e.player.lambda_kbps * CFG.xi_kbps
            prev = cur


def test_replay_soundness():
    rng = random.Random(0xF00D)
    for _ in range(100):
        col = random_instance(rng, max_players=30, max_servers=5)
        log = stabilize(col, CFG)
        assert replay(log).assignment() == log.final.assignment()


def test_deterministic_logs():
    rng = random.Random(0x5EED)
    for _ in range(50):
        col = random_instance(rng, max_players=30, max_servers=5)
        a = stabilize(col.copy(), CFG)
        b = stabilize(col.copy(), CFG)
        assert format_transfer_log(a) == format_transfer_log(b)
        assert a.final.assignment() == b.final.assignment()


def test_small_instances_match_brute_force():
    rng = random.Random(0xACE)
    checked = 0
    for _ in range(60):
        col = random_instance(rng, max_players=8, max_servers=3)
        stable_set = brute_force_stable_assignments(col, CFG.xi_kbps)
        log = stabilize(col, CFG)
        assert assignment_tuple(log.final) in stable_set
        checked += 1
    assert checked == 60
