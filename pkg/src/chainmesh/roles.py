"""Node fleets and behavior policies: stragglers, adversaries, issuance.

Each chain runs a fleet of worker/committee nodes. A configured fraction of
workers are stragglers that silently drop their shard tasks. Adversarial
chains pad valid-looking transfer blocks with overspending rows and race to
approve their own payloads while validating everyone else honestly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .balances import TransactionMatrix
from .coding import StragglerProfile


class RoleError(Exception):
    """Misconfigured fleet or behavior policy."""


@dataclass(frozen=True)
class NodeSpec:
    """One node of a chain's fleet."""

    node_id: str
    chain: int
    index: int                      # worker slot within the fleet
    stake: int = 1
    straggler_p: float = 0.0
    responds: bool = True           # stragglers never respond at all


@dataclass(frozen=True)
class Fleet:
    """A chain's worker fleet plus its straggler designation."""

    chain: int
    nodes: tuple[NodeSpec, ...]
    profile: StragglerProfile

    def size(self) -> int:
        return len(self.nodes)

    def responders(self) -> tuple[int, ...]:
        return tuple(n.index for n in self.nodes if n.responds)

    def silent(self) -> tuple[int, ...]:
        return tuple(n.index for n in self.nodes if not n.responds)


def build_fleet(chain: int, size: int, straggler_fraction: float,
                rng: np.random.Generator, stakes: Sequence[int] | None = None,
                ) -> Fleet:
    """Assemble a fleet; the worst `straggler_fraction` of nodes go silent.

    Per-node straggle probabilities are drawn uniformly, then the designated
    straggler set (the highest-probability nodes, count rounded half-up) is
    marked as never responding. Remaining nodes always respond in time.
    """
    if size < 1:
        raise RoleError("fleet needs at least one node")
    probs = tuple(float(p) for p in rng.uniform(0.0, 1.0, size=size))
    profile = StragglerProfile(probabilities=probs,
                               fraction=straggler_fraction)
    silent = set(profile.straggler_set())
    nodes = []
    for i in range(size):
        stake = int(stakes[i]) if stakes is not None else 1
        nodes.append(NodeSpec(node_id=f"c{chain}n{i}", chain=chain, index=i,
                              stake=stake, straggler_p=probs[i],
                              responds=i not in silent))
    return Fleet(chain=chain, nodes=tuple(nodes), profile=profile)


def worker_respond(node: NodeSpec, compute_s: float) -> float | None:
    """Response time for a shard task, or None when the node stays silent."""
    if not node.responds:
        return None
    return float(compute_s)


# ---------------------------------------------------------------------------
# Adversarial block construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdversaryPolicy:
    """Behavior knobs for adversarial chains."""

    spam_fraction: float = 0.0          # share of total issuance it controls
    invalid_tx_fraction: float = 0.5    # share of active rows that overspend
    self_approve: bool = True           # vote own payloads through


def make_invalid_block(dest: int, epoch: int, balances: np.ndarray,
                       policy: AdversaryPolicy, rng: np.random.Generator,
                       source: int, active_rows: int | None = None,
                       ) -> TransactionMatrix:
    """Build a transfer block mixing valid rows with overspending ones.

    Rows are drawn from accounts that currently hold funds. A
    floor(invalid_tx_fraction * active) subset spends more than its account
    holds; the rest spend within balance. With fraction 1.0 every populated
    row overspends.
    """
    if source == dest:
        raise RoleError("transfer block must target a different chain")
    frac = policy.invalid_tx_fraction
    if not 0.0 <= frac <= 1.0:
        raise RoleError("invalid_tx_fraction must be within [0, 1]")
    m = len(balances)
    funded = [a for a in range(m) if balances[a] > 0]
    if active_rows is None:
        active_rows = min(len(funded), max(1, m // 10))
    active_rows = min(active_rows, len(funded))
    amounts = np.zeros((m, m), dtype=np.int64)
    if active_rows == 0:
        return TransactionMatrix(source=source, dest=dest, epoch=epoch,
                                 amounts=amounts)
    chosen = sorted(int(a) for a in
                    rng.choice(np.asarray(funded), size=active_rows,
                               replace=False))
    n_bad = int(frac * active_rows)         # floor
    bad = set(chosen[:n_bad])
    for acct in chosen:
        bal = int(balances[acct])
        target = int(rng.integers(0, m))
        if acct in bad:
            # Overspend by more than any possible future balance so the row
            # stays invalid no matter what inflows land before validation.
            amounts[acct, target] = bal + 1_000_000_000 + int(rng.integers(0, 100))
        else:
            amounts[acct, target] = max(1, min(bal, int(rng.integers(1, 11))))
    return TransactionMatrix(source=source, dest=dest, epoch=epoch,
                             amounts=amounts)


def make_valid_block(dest: int, epoch: int, balances: np.ndarray,
                     rng: np.random.Generator, source: int,
                     active_rows: int | None = None,
                     amount_max: int = 10) -> TransactionMatrix:
    """Build an honest transfer block: every populated row spends in budget."""
    if source == dest:
        raise RoleError("transfer block must target a different chain")
    m = len(balances)
    funded = [a for a in range(m) if balances[a] > 0]
    if active_rows is None:
        active_rows = min(len(funded), max(1, m // 10))
    active_rows = min(active_rows, len(funded))
    amounts = np.zeros((m, m), dtype=np.int64)
    if active_rows:
        chosen = rng.choice(np.asarray(funded), size=active_rows,
                            replace=False)
        for acct in sorted(int(a) for a in chosen):
            bal = int(balances[acct])
            target = int(rng.integers(0, m))
            amounts[acct, target] = max(1, min(bal,
                                               int(rng.integers(1, amount_max + 1))))
    return TransactionMatrix(source=source, dest=dest, epoch=epoch,
                             amounts=amounts)


# ---------------------------------------------------------------------------
# Issuance scheduling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IssuanceSlot:
    time_s: float
    chain: int
    honest: bool


def schedule_issuance(rate_per_min: float, spam_fraction: float,
                      honest_chains: Sequence[int],
                      adversarial_chains: Sequence[int],
                      duration_min: float) -> list[IssuanceSlot]:
    """Fixed-cadence block slots split between the two factions.

    The honest faction issues at (1 - spam_fraction) * rate and the
    adversarial faction at spam_fraction * rate, each stream evenly spaced
    and dealt round-robin over its chains. Slot i of a stream with per-minute
    rate r lands at i * 60 / r seconds, for i = 1 .. floor(duration * r).
    """
    if rate_per_min <= 0:
        raise RoleError("issuance rate must be positive")
    if not 0.0 <= spam_fraction <= 1.0:
        raise RoleError("spam fraction must be within [0, 1]")
    if spam_fraction > 0 and not adversarial_chains:
        raise RoleError("spam fraction positive but no adversarial chains")
    if spam_fraction < 1 and not honest_chains:
        raise RoleError("honest rate positive but no honest chains")
    slots: list[IssuanceSlot] = []

    def stream(rate: float, chains: Sequence[int], honest: bool) -> None:
        if rate <= 0 or not chains:
            return
        period = 60.0 / rate
        count = int(round(duration_min * rate))
        for i in range(1, count + 1):
            chain = chains[(i - 1) % len(chains)]
            slots.append(IssuanceSlot(time_s=i * period, chain=chain,
                                      honest=honest))

    stream(rate_per_min * (1.0 - spam_fraction), honest_chains, True)
    stream(rate_per_min * spam_fraction, adversarial_chains, False)
    slots.sort(key=lambda s: (s.time_s, not s.honest, s.chain))
    return slots
