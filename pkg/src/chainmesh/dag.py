"""Shared inter-chain block ledger: a parent-approval DAG with stake weights.

Every block enters as a tip, turns unconfirmed once some later block names it
as a parent, and confirms when the combined stake of the distinct chains in
its approver closure -- the proposing chains of all blocks from which it is
reachable along parent edges, plus its own -- meets the confirmation
threshold. Each chain's stake counts once no matter how many of its blocks
approve, so no chain can push its own blocks over the threshold by itself.

Approver stake is maintained incrementally: each block carries a bitmask of
contributing chains which is pushed to its ancestors on attach, pruned where
already present (a chain present on a block is always present on all of that
block's ancestors). A brute-force reachability recomputation is reserved for
test oracles.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .balances import BlockPayload

TIP = "tip"
UNCONFIRMED = "unconfirmed"
CONFIRMED = "confirmed"

GENESIS_ID = "genesis"


class DagError(Exception):
    """Structural error in the block ledger."""


def _as_fraction(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


@dataclass(frozen=True)
class ChainWeights:
    """Positive per-chain stake weights, normalized to sum to one."""

    weights: tuple[Fraction, ...]

    def __post_init__(self):
        if not self.weights:
            raise DagError("at least one chain weight required")
        if any(w <= 0 for w in self.weights):
            raise DagError("chain weights must be positive")
        if sum(self.weights) != 1:
            raise DagError("chain weights must sum to exactly 1")

    @classmethod
    def equal(cls, n: int) -> "ChainWeights":
        return cls(tuple(Fraction(1, n) for _ in range(n)))

    @classmethod
    def from_values(cls, values: Sequence) -> "ChainWeights":
        fracs = [_as_fraction(v) for v in values]
        total = sum(fracs)
        if total <= 0:
            raise DagError("chain weights must have a positive total")
        return cls(tuple(f / total for f in fracs))

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, chain: int) -> Fraction:
        return self.weights[chain]


@dataclass
class DagBlock:
    """One ledger block and its bookkeeping.

    `chains` is the bitmask of chains contributing stake to this block:
    its own proposer plus the proposers of everything in its future cone.
    """

    id: str
    proposer: int | None
    epoch: int
    parents: tuple[str, ...]
    payload: BlockPayload | None
    attach_time: float
    status: str = TIP
    confirm_time: float | None = None
    chains: int = 0
    depth: int = 0
    approvers: int = 0          # direct children count


class DagLedger:
    """Single-writer DAG rooted at a synthetic confirmed genesis block."""

    def __init__(self, weights: ChainWeights, eta, genesis_time: float = 0.0):
        self.weights = weights
        self.eta = _as_fraction(eta)
        if not 0 < self.eta <= 1:
            raise DagError("confirmation threshold must lie in (0, 1]")
        genesis = DagBlock(id=GENESIS_ID, proposer=None, epoch=0, parents=(),
                           payload=None, attach_time=genesis_time,
                           status=CONFIRMED, confirm_time=genesis_time,
                           chains=0, depth=0)
        self.blocks: dict[str, DagBlock] = {GENESIS_ID: genesis}
        self.children: dict[str, list[str]] = {GENESIS_ID: []}
        self.order: list[str] = [GENESIS_ID]
        self.tips: set[str] = set()
        self._pending: set[str] = set()
        self._confirmed: set[str] = {GENESIS_ID}

    # -- attachment --------------------------------------------------------

    def attach(self, block_id: str, proposer: int, epoch: int,
               parents: Iterable[str], payload: BlockPayload | None = None,
               time: float = 0.0) -> DagBlock:
        """Add a block approving `parents`; errors leave the ledger unchanged."""
        if block_id in self.blocks:
            raise DagError(f"duplicate block id {block_id!r}")
        if not 0 <= proposer < len(self.weights):
            raise DagError(f"proposer chain {proposer} out of range")
        parent_ids = tuple(sorted(set(parents)))
        if not parent_ids:
            raise DagError("a block must approve at least one parent")
        for p in parent_ids:
            if p not in self.blocks:
                raise DagError(f"unknown parent {p!r}")
        block = DagBlock(id=block_id, proposer=proposer, epoch=epoch,
                         parents=parent_ids, payload=payload, attach_time=time,
                         chains=1 << proposer,
                         depth=1 + max(self.blocks[p].depth for p in parent_ids))
        self.blocks[block_id] = block
        self.children[block_id] = []
        self.order.append(block_id)
        self.tips.add(block_id)
        self._pending.add(block_id)
        for p in parent_ids:
            self.children[p].append(block_id)
            parent = self.blocks[p]
            parent.approvers += 1
            if parent.status == TIP:
                parent.status = UNCONFIRMED
                self.tips.discard(p)
        self._propagate(parent_ids, 1 << proposer)
        return block

    def _propagate(self, start: Sequence[str], bit: int) -> None:
        stack = list(start)
        while stack:
            bid = stack.pop()
            block = self.blocks[bid]
            if block.chains & bit:
                continue            # ancestors already carry this chain
            block.chains |= bit
            stack.extend(block.parents)

    # -- weight and confirmation ------------------------------------------

    def aggregated_weight(self, block_id: str) -> Fraction:
        """Stake share backing a block, deduplicated per chain, in (0, 1]."""
        block = self.blocks.get(block_id)
        if block is None:
            raise DagError(f"unknown block {block_id!r}")
        if block_id == GENESIS_ID:
            return Fraction(1)
        total = Fraction(0)
        mask = block.chains
        chain = 0
        while mask:
            if mask & 1:
                total += self.weights[chain]
            mask >>= 1
            chain += 1
        return total

    def update_confirmations(self, now: float = 0.0) -> set[str]:
        """Flip every pending block whose aggregated weight meets the threshold."""
        newly: set[str] = set()
        for bid in sorted(self._pending):
            if self.aggregated_weight(bid) >= self.eta:
                block = self.blocks[bid]
                block.status = CONFIRMED
                block.confirm_time = now
                self.tips.discard(bid)
                self._confirmed.add(bid)
                newly.add(bid)
        self._pending -= newly
        return newly

    # -- parent selection --------------------------------------------------

    def deepest_confirmed(self) -> str:
        """Fallback attachment target: deepest confirmed block, ties to low id."""
        return min(self._confirmed,
                   key=lambda bid: (-self.blocks[bid].depth, bid))

    def select_tips_honest(self, k: int, rng: random.Random) -> list[str]:
        """Uniform sample of min(k, #tips) tips; falls back when none exist."""
        if k < 1:
            raise DagError("parent count must be at least 1")
        pool = sorted(self.tips)
        if not pool:
            return [self.deepest_confirmed()]
        take = min(k, len(pool))
        return sorted(rng.sample(pool, take)) if take < len(pool) else pool

    def select_tips_orphanage(self, k: int, attacker_chain: int,
                              rng: random.Random) -> list[str]:
        """Stale-parent strategy: own tips oldest-first, then oldest others."""
        if k < 1:
            raise DagError("parent count must be at least 1")
        if not self.tips:
            return [self.deepest_confirmed()]

        def age_key(bid: str):
            return (self.blocks[bid].attach_time, bid)

        own = sorted((b for b in self.tips
                      if self.blocks[b].proposer == attacker_chain), key=age_key)
        others = sorted((b for b in self.tips
                         if self.blocks[b].proposer != attacker_chain), key=age_key)
        take = min(k, len(self.tips))
        return (own + others)[:take]

    # -- accounting views --------------------------------------------------

    def confirmed_ids(self) -> set[str]:
        return set(self._confirmed)

    def status_counts(self) -> dict[str, int]:
        counts = {TIP: 0, UNCONFIRMED: 0, CONFIRMED: 0}
        for block in self.blocks.values():
            counts[block.status] += 1
        return counts

    def snapshot_lines(self) -> list[str]:
        """One line per block in attach order: id, chain, epoch, parents, status, weight."""
        lines = []
        for bid in self.order:
            b = self.blocks[bid]
            aw = self.aggregated_weight(bid)
            proposer = "-" if b.proposer is None else str(b.proposer)
            parents = ",".join(b.parents) if b.parents else "-"
            lines.append(f"{b.id} {proposer} {b.epoch} {parents} "
                         f"{b.status} {aw.numerator}/{aw.denominator}")
        return lines


def assemble_confirmed_superblock(ledger: DagLedger, block_ids: Iterable[str],
                                  rng: random.Random) -> dict[int, str]:
    """Pick one confirmed block per proposing chain from the given candidates.

    Chains with no confirmed candidate are omitted. Selection is uniform per
    chain, iterated in chain order so a seeded generator gives every caller
    the same choice.
    """
    by_chain: dict[int, list[str]] = {}
    for bid in sorted(set(block_ids)):
        block = ledger.blocks.get(bid)
        if block is None:
            raise DagError(f"unknown block {bid!r}")
        if block.status != CONFIRMED:
            raise DagError(f"block {bid!r} is not confirmed")
        if block.proposer is None:
            continue
        by_chain.setdefault(block.proposer, []).append(bid)
    return {chain: rng.choice(by_chain[chain]) for chain in sorted(by_chain)}
