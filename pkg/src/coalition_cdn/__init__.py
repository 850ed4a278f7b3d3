"""Coalitional client-to-server assignment for multi-server adaptive streaming.

Subsystems:
  game         - the assignment game: payoffs, migrations, stabilization
  sim          - discrete-event multi-server DASH streaming simulator
  orchestrator - assignment store, line protocol, game trigger
  harness      - scenario sweeps and CSV summaries
"""

from .game import (
    Coalition,
    Collection,
    GameConfig,
    MigrationError,
    PlayerRef,
    TransferCapExceeded,
    TransferEvent,
    TransferLog,
    check_migration,
    collection_from_snapshot,
    collection_to_snapshot,
    derive_seed,
    format_transfer_log,
    is_stable,
    payoff,
    payoff_after_join,
    potential,
    random_collection,
    replay,
    stabilize,
)

__all__ = [
    "Coalition",
    "Collection",
    "GameConfig",
    "MigrationError",
    "PlayerRef",
    "TransferCapExceeded",
    "TransferEvent",
    "TransferLog",
    "check_migration",
    "collection_from_snapshot",
    "collection_to_snapshot",
    "derive_seed",
    "format_transfer_log",
    "is_stable",
    "payoff",
    "payoff_after_join",
    "potential",
    "random_collection",
    "replay",
    "stabilize",
]
