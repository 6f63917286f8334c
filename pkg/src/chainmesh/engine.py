"""Deterministic discrete-event simulator tying every layer together.

Each chain runs a staged epoch pipeline driven by issuance slots: form a
transfer proposal, shard it across the worker fleet (coded or plain
partitions), validate, pick and check foreign tips, attach to the shared DAG,
and update confirmations. Confirmed blocks are ingested into the exact
cross-chain balance states at fixed ledger windows, where the super-block
artifact is assembled. All randomness flows from purpose-keyed streams of the
scenario seed, so a rerun reproduces every artifact byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import events as ev
from .balances import (BlockPayload, CumulativeState, FlowAggregates,
                       net_balances, new_state, update_cumulative,
                       validate_block, validate_tip_payloads)
from .coding import GroupPlan, decodable, plan_groups
from .config import ScenarioConfig
from .dag import (CONFIRMED, GENESIS_ID, ChainWeights, DagLedger,
                  assemble_confirmed_superblock)
from .doublespend import ConflictTracker, InjectionPlan, plan_injections
from .events import EventPools, propose_and_vote, select_committee
from .metrics import MetricsReport, SeriesRecorder, gini
from .roles import (AdversaryPolicy, Fleet, build_fleet, make_invalid_block,
                    make_valid_block, schedule_issuance)


class SimulationError(Exception):
    """Inconsistent simulation state; indicates a modeling bug."""


def derive_seed(seed: int, *keys) -> int:
    """Stable purpose-keyed sub-seed."""
    text = "|".join([str(seed)] + [str(k) for k in keys])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


@dataclass(frozen=True)
class BlockInfo:
    """Engine-side payload attached to each DAG block."""

    payload: BlockPayload
    honest: bool
    valid: bool                     # ground truth used to cross-check verdicts


@dataclass
class _ChainRuntime:
    chain: int
    honest: bool
    fleet: Fleet
    plan: GroupPlan | None          # None when uncoded or nothing decodable
    state: CumulativeState
    pool: EventPools
    candidates: list[tuple[str, int]]
    committee_seed: str
    slots: deque = field(default_factory=deque)   # (time_s, txn_id | None)
    epoch: int = 0
    busy: bool = False
    next_wake: float = -1.0
    first_block: str | None = None
    confirmed_count: int = 0
    intra_done: int = 0
    skipped: int = 0
    uncoded_rows: tuple[int, ...] = ()
    missing_rows: int = 0
    # labeled conflict candidates this chain has sighted but whose detection
    # has not yet been finalised by any confirmed proposal
    watch: set = field(default_factory=set)


@dataclass
class RunResult:
    """Everything a finished run exposes for reporting and inspection."""

    config: ScenarioConfig
    report: MetricsReport
    recorder: SeriesRecorder
    snapshot_lines: list[str]
    event_lines: list[str]
    states: dict[int, CumulativeState]
    dag: DagLedger
    tracker: ConflictTracker | None
    superblocks: list[dict[int, str]]


class Simulation:
    """One deterministic run of a scenario."""

    def __init__(self, cfg: ScenarioConfig, scenario: str = "scenario"):
        if cfg.chains < 2:
            raise SimulationError("simulation needs at least two chains")
        if cfg.spam_fraction > 0 and \
                int(cfg.invalid_tx_fraction * cfg.active_rows) < 1:
            raise SimulationError(
                "spam requires at least one overspending row per spam block; "
                "raise invalid_tx_fraction or active_rows")
        self.cfg = cfg
        self.scenario = scenario
        self._queue: list = []
        self._seq = 0
        self._now = 0.0
        self._end = cfg.duration_min * 60.0
        self.recorder = SeriesRecorder()
        self.dag = DagLedger(ChainWeights.equal(cfg.chains),
                             eta=cfg.confirm_threshold)
        self.tracker: ConflictTracker | None = None
        self._orphaned: set[str] = set()    # tips sighted invalid/conflicting
        self._to_ingest: list[str] = []
        self.superblocks: list[dict[int, str]] = []
        self._window_index = 0
        self._setup_chains()
        self._setup_injection()

    # -- construction ------------------------------------------------------

    def _setup_chains(self) -> None:
        cfg = self.cfg
        adversarial = set(cfg.adversarial_chains())
        self.chains: dict[int, _ChainRuntime] = {}
        for c in range(cfg.chains):
            rng = np.random.default_rng(derive_seed(cfg.seed, "fleet", c))
            fleet = build_fleet(c, cfg.fleet_size, cfg.straggler_fraction, rng)
            plan = None
            silent: set[int] | None = None
            if cfg.coding and cfg.straggler_fraction < 1.0:
                plan = plan_groups(cfg.fleet_size, cfg.accounts, fleet.profile)
                # the planner freezes the worst predicted responders; those
                # designated positions are exactly the nodes that go silent
                silent = {g.members[p] for g in plan.groups for p in g.frozen}
            elif cfg.straggler_fraction >= 1.0:
                silent = set(range(cfg.fleet_size))
            if silent is not None:
                nodes = tuple(dataclasses.replace(n, responds=n.index
                                                  not in silent)
                              for n in fleet.nodes)
                fleet = Fleet(chain=c, nodes=nodes, profile=fleet.profile)
            genesis = np.full(cfg.accounts, cfg.genesis_balance,
                              dtype=np.int64)
            rt = _ChainRuntime(
                chain=c,
                honest=c not in adversarial,
                fleet=fleet,
                plan=plan,
                state=new_state(c, genesis),
                pool=EventPools(chain=c),
                candidates=[(n.node_id, n.stake) for n in fleet.nodes],
                committee_seed=f"{cfg.seed}|committee|{c}",
            )
            if not cfg.coding:
                base, extra = divmod(cfg.accounts, cfg.fleet_size)
                rows = tuple(base + (1 if i < extra else 0)
                             for i in range(cfg.fleet_size))
                rt.uncoded_rows = rows
                rt.missing_rows = sum(rows[i] for i in fleet.silent())
            self.chains[c] = rt
        slots = schedule_issuance(cfg.issuance_rate, cfg.spam_fraction,
                                  cfg.honest_chains(),
                                  cfg.adversarial_chains(), cfg.duration_min)
        self._honest_slot_chains = [s.chain for s in slots if s.honest]
        honest_idx = 0
        self._slot_carriers: dict[int, str] = {}
        self._slots = slots
        self._honest_indices = []
        for s in slots:
            if s.honest:
                self._honest_indices.append(honest_idx)
                honest_idx += 1
            else:
                self._honest_indices.append(-1)

    def _setup_injection(self) -> None:
        ds = self.cfg.double_spend
        self.injection: InjectionPlan | None = None
        if ds.pairs or ds.regular:
            rng = np.random.default_rng(derive_seed(self.cfg.seed, "inject"))
            self.injection = plan_injections(self._honest_slot_chains,
                                             ds.pairs, ds.regular, rng)
            self.tracker = ConflictTracker()
        carriers = self.injection.carriers if self.injection else {}
        for s, hidx in zip(self._slots, self._honest_indices):
            txn = carriers.get(hidx) if hidx >= 0 else None
            self.chains[s.chain].slots.append((s.time_s, txn))

    # -- scheduler ---------------------------------------------------------

    def _push(self, time_s: float, fn: Callable, *args) -> None:
        if time_s > self._end:
            return
        self._seq += 1
        heapq.heappush(self._queue, (time_s, self._seq, fn, args))

    def _drain_queue(self) -> None:
        while self._queue:
            time_s, _, fn, args = heapq.heappop(self._queue)
            self._now = time_s
            fn(time_s, *args)

    # -- timing model ------------------------------------------------------

    def _transfer_s(self, nbytes: float) -> float:
        cfg = self.cfg
        return cfg.link_latency_ms / 1000.0 + nbytes / (cfg.bandwidth_mbps
                                                        * 125000.0)

    @property
    def _vote_s(self) -> float:
        return 2.0 * self.cfg.link_latency_ms / 1000.0

    def _shard_stage_s(self, rt: _ChainRuntime, factor: int
                       ) -> tuple[float, bool]:
        """Worker round duration for `factor` matrix-sized jobs, and success.

        Coded fleets wait for every data position; their silent nodes sit at
        frozen positions, so the designed reception always decodes. A silent
        data position forces a re-poll that cannot succeed, so the stage times
        out. Uncoded fleets fall back to central recomputation of the silent
        partitions after the task timeout.
        """
        cfg = self.cfg
        m = cfg.accounts
        timeout = cfg.task_timeout_ms / 1000.0
        if factor <= 0:
            return 0.0, True
        if cfg.coding:
            if rt.plan is None:
                return 2.0 * timeout, False      # nothing can be recovered
            silent = set(rt.fleet.silent())
            worst = 0.0
            for g in rt.plan.groups:
                rows = factor * g.rows_per_block
                t = (self._transfer_s(8.0 * 3 * rows * m)
                     + rows * cfg.worker_ms_per_row / 1000.0
                     + self._transfer_s(8.0 * 2 * rows * m))
                worst = max(worst, t)
                received = [p for p in g.data_positions
                            if g.members[p] not in silent]
                if len(received) < len(g.data_positions):
                    if decodable(received, g):
                        worst = max(worst, timeout)
                    else:
                        return 2.0 * timeout, False   # one re-poll, then skip
            return worst, True
        rows_max = factor * max(rt.uncoded_rows)
        nominal = (self._transfer_s(8.0 * 3 * rows_max * m)
                   + rows_max * cfg.worker_ms_per_row / 1000.0
                   + self._transfer_s(8.0 * 2 * rows_max * m))
        if rt.missing_rows:
            fallback = (timeout + factor * rt.missing_rows
                        * cfg.fallback_ms_per_row / 1000.0)
            return max(nominal, fallback), True
        return nominal, True

    # -- committee helpers -------------------------------------------------

    def _committee(self, rt: _ChainRuntime, epoch: int):
        return select_committee(rt.candidates, rt.committee_seed, epoch,
                                self.cfg.committee_size())

    def _publish(self, rt: _ChainRuntime, kind: str, epoch: int,
                 payload) -> None:
        committee = self._committee(rt, epoch)
        validators = {m: (lambda _p, _pl: True) for m in committee.members}
        record = propose_and_vote(kind, payload, committee, validators,
                                  chain=rt.chain)
        rt.pool.publish(record)

    # -- chain pipeline ----------------------------------------------------

    def _wake(self, now: float, chain: int) -> None:
        self._try_start(self.chains[chain], now)

    def _try_start(self, rt: _ChainRuntime, now: float) -> None:
        if rt.busy or not rt.slots:
            return
        slot_time, txn = rt.slots[0]
        if slot_time > now:
            if rt.next_wake != slot_time:
                rt.next_wake = slot_time
                self._push(slot_time, self._wake, rt.chain)
            return
        rt.slots.popleft()
        rt.busy = True
        self._epoch_begin(rt, max(now, slot_time), txn)

    def _epoch_begin(self, rt: _ChainRuntime, t0: float,
                     txn: str | None) -> None:
        rt.epoch += 1
        e = rt.epoch
        if not rt.honest:
            payload = self._adversarial_payload(rt, e)
            self._publish(rt, ev.PROPOSAL_FORMED, e, ("form", rt.chain, e))
            self._push(t0 + 3.0 * self._vote_s, self._attach_adversarial,
                       rt.chain, e, payload)
            return
        payload = self._honest_payload(rt, e, txn)
        self._publish(rt, ev.PROPOSAL_FORMED, e, ("form", rt.chain, e))
        stage_s, ok = self._shard_stage_s(rt, factor=1)
        if not ok:
            self._push(t0 + self._vote_s + stage_s, self._finish_skipped,
                       rt.chain, e)
            return
        t2 = t0 + self._vote_s + stage_s + self._vote_s
        self._push(t2, self._stage_tips, rt.chain, e, payload)

    def _honest_payload(self, rt: _ChainRuntime, epoch: int,
                        txn: str | None) -> BlockPayload:
        cfg = self.cfg
        others = [c for c in range(cfg.chains) if c != rt.chain]
        dest = others[(epoch - 1) % len(others)]
        rng = np.random.default_rng(derive_seed(cfg.seed, "payload",
                                                rt.chain, epoch))
        tm = make_valid_block(dest=dest, epoch=epoch,
                              balances=net_balances(rt.state), rng=rng,
                              source=rt.chain, active_rows=cfg.active_rows,
                              amount_max=cfg.amount_max)
        ids = (txn,) if txn else ()
        return BlockPayload(source=rt.chain, epoch=epoch, matrices=(tm,),
                            txn_ids=ids)

    def _adversarial_payload(self, rt: _ChainRuntime,
                             epoch: int) -> BlockPayload:
        cfg = self.cfg
        honest = cfg.honest_chains()
        dest = honest[(epoch - 1) % len(honest)]
        rng = np.random.default_rng(derive_seed(cfg.seed, "spam",
                                                rt.chain, epoch))
        policy = AdversaryPolicy(spam_fraction=cfg.spam_fraction,
                                 invalid_tx_fraction=cfg.invalid_tx_fraction)
        tm = make_invalid_block(dest=dest, epoch=epoch,
                                balances=net_balances(rt.state), policy=policy,
                                rng=rng, source=rt.chain,
                                active_rows=cfg.active_rows)
        return BlockPayload(source=rt.chain, epoch=epoch, matrices=(tm,))

    def _stage_tips(self, now: float, chain: int, epoch: int,
                    payload: BlockPayload) -> None:
        """Proposal validated; debit it, then pick and check foreign tips."""
        rt = self.chains[chain]
        rt.intra_done += 1
        self._publish(rt, ev.PROPOSAL_RESULTS, epoch,
                      ("results", chain, epoch))
        check_state = dataclasses.replace(
            rt.state, last_proposed=np.zeros_like(rt.state.last_proposed))
        result = validate_block(payload.matrices, check_state)
        if result.any_zeroed:
            raise SimulationError(
                f"honest proposal of chain {chain} failed validation")
        new_outstanding = rt.state.last_proposed + result.proposed
        rt.state = update_cumulative(rt.state, FlowAggregates(
            chain=chain, epoch=rt.state.epoch + 1,
            inflow=np.zeros_like(new_outstanding),
            outflow_confirmed=np.zeros_like(new_outstanding),
            outflow_proposed=new_outstanding))

        rng = random.Random(derive_seed(self.cfg.seed, "tips", chain, epoch))
        selected = self._select_tips(self.cfg.tip_sample, rng)
        batch: list[str] = []
        seen_sources: set[int] = set()
        for bid in selected:
            block = self.dag.blocks[bid]
            if block.status != CONFIRMED and block.payload is not None:
                src = block.payload.payload.source
                if src in seen_sources:
                    continue        # one tip per source chain in a batch
                seen_sources.add(src)
                batch.append(bid)
        parents: list[str] = []
        if batch:
            infos = [self.dag.blocks[b].payload for b in batch]
            verdicts = validate_tip_payloads([i.payload for i in infos],
                                             self.states)
            for bid, info, verdict in zip(batch, infos, verdicts):
                if verdict != info.valid:
                    raise SimulationError(
                        f"tip verdict for {bid} disagrees with ground truth")
                conflicting = False
                if self.tracker is not None:
                    conflicting = self.tracker.inspect_tip(bid, now)
                    if conflicting:
                        rt.watch.add(bid)
                if verdict and not conflicting:
                    parents.append(bid)
                else:
                    # verdicts are deterministic and shared: a tip sighted
                    # invalid or conflicting is never sampled again, so it
                    # wastes one approval slot in total, not one per epoch
                    self._orphaned.add(bid)
        elif selected and selected[0] in self.dag.blocks and \
                self.dag.blocks[selected[0]].status == CONFIRMED:
            parents = [selected[0]]         # fallback parent, nothing to check
        self._publish(rt, ev.TIP_BATCH_FORMED, epoch, ("tips", tuple(batch)))
        stage_s, ok = self._shard_stage_s(rt, factor=len(batch))
        if not ok:
            self._push(now + self._vote_s + stage_s, self._finish_skipped,
                       chain, epoch)
            return
        t_attach = now + self._vote_s + stage_s + 2.0 * self._vote_s
        self._push(t_attach, self._attach_block, chain, epoch, payload,
                   tuple(parents))

    def _select_tips(self, k: int, rng: random.Random) -> list[str]:
        """Uniform tip sample, skipping tips already sighted unapprovable."""
        pool = sorted(self.dag.tips - self._orphaned)
        if not pool:
            return [self.dag.deepest_confirmed()]
        take = min(k, len(pool))
        return sorted(rng.sample(pool, take)) if take < len(pool) else pool

    def _attach_block(self, now: float, chain: int, epoch: int,
                      payload: BlockPayload, parents: tuple[str, ...]) -> None:
        rt = self.chains[chain]
        self._publish(rt, ev.TIP_RESULTS, epoch, ("verdicts", parents))
        keep = [p for p in parents
                if self.tracker is None or not self.tracker.is_labeled(p)]
        if not keep:
            keep = [self.dag.deepest_confirmed()]
        block_id = f"c{chain:02d}e{epoch:05d}"
        info = BlockInfo(payload=payload, honest=True, valid=True)
        self.dag.attach(block_id, proposer=chain, epoch=epoch, parents=keep,
                        payload=info, time=now)
        if rt.first_block is None:
            rt.first_block = block_id
        if self.tracker is not None:
            self.tracker.register_attach(block_id, payload.txn_ids, now)
            # carry every still-unresolved sighting on this proposal too: a
            # claimer that never confirms must not strand the observation
            rt.watch = set(self.tracker.unresolved(sorted(rt.watch)))
            if rt.watch:
                self.tracker.attribute(block_id, sorted(rt.watch))
        self._publish(rt, ev.DAG_SUBMISSION, epoch, ("attach", block_id))
        self._confirmations(now)
        self._publish(rt, ev.WEIGHT_UPDATE, epoch, ("weights", block_id))
        rt.pool.drain(epoch)
        rt.busy = False
        self._try_start(rt, now)

    def _attach_adversarial(self, now: float, chain: int, epoch: int,
                            payload: BlockPayload) -> None:
        rt = self.chains[chain]
        # stale single parent: the chain's own first block, else genesis --
        # approving an already-covered ancestor removes nothing from the pool
        parent = rt.first_block if rt.first_block is not None else GENESIS_ID
        block_id = f"c{chain:02d}e{epoch:05d}"
        info = BlockInfo(payload=payload, honest=False, valid=False)
        self.dag.attach(block_id, proposer=chain, epoch=epoch,
                        parents=[parent], payload=info, time=now)
        if rt.first_block is None:
            rt.first_block = block_id
        if self.tracker is not None:
            self.tracker.register_attach(block_id, payload.txn_ids, now)
        self._publish(rt, ev.DAG_SUBMISSION, epoch, ("attach", block_id))
        self._confirmations(now)
        self._publish(rt, ev.WEIGHT_UPDATE, epoch, ("weights", block_id))
        rt.pool.drain(epoch)
        rt.busy = False
        self._try_start(rt, now)

    def _finish_skipped(self, now: float, chain: int, epoch: int) -> None:
        """Stage timed out: the epoch produced no block; the chain moves on."""
        rt = self.chains[chain]
        rt.skipped += 1
        rt.pool.drain(epoch)
        rt.busy = False
        self._try_start(rt, now)

    # -- confirmation and ingestion ----------------------------------------

    def _confirmations(self, now: float) -> None:
        newly = self.dag.update_confirmations(now=now)
        for bid in sorted(newly):
            block = self.dag.blocks[bid]
            info: BlockInfo = block.payload
            if not info.valid:
                raise SimulationError(f"invalid block {bid} confirmed")
            self.recorder.record_finality(bid, now - block.attach_time)
            self.recorder.record_confirmed(now)
            self.chains[block.proposer].confirmed_count += 1
            self._to_ingest.append(bid)
            if self.tracker is not None:
                self.tracker.on_confirm(bid, now)

    def _window(self, now: float, index: int) -> None:
        if self._to_ingest:
            ids = sorted(self._to_ingest)
            self._to_ingest.clear()
            m = self.cfg.accounts
            inflow = {c: np.zeros((m, m), dtype=np.int64)
                      for c in range(self.cfg.chains)}
            confirmed = {c: np.zeros((m, m), dtype=np.int64)
                         for c in range(self.cfg.chains)}
            for bid in ids:
                info: BlockInfo = self.dag.blocks[bid].payload
                if not info.honest:
                    raise SimulationError(f"ingesting dishonest block {bid}")
                for tm in info.payload.matrices:
                    inflow[tm.dest] += tm.amounts
                    confirmed[tm.source] += tm.amounts
            for c, rt in self.chains.items():
                if not inflow[c].any() and not confirmed[c].any():
                    continue
                rt.state = update_cumulative(rt.state, FlowAggregates(
                    chain=c, epoch=rt.state.epoch + 1, inflow=inflow[c],
                    outflow_confirmed=confirmed[c],
                    outflow_proposed=rt.state.last_proposed - confirmed[c]))
            rng = random.Random(derive_seed(self.cfg.seed, "superblock",
                                            index))
            superblock = assemble_confirmed_superblock(self.dag, ids, rng)
            self.superblocks.append(superblock)
            window_epoch = -(index + 1)     # windows use their own epoch space
            payload = ("superblock", tuple(sorted(superblock.items())))
            for rt in self.chains.values():
                self._publish(rt, ev.LEDGER_APPEND, window_epoch, payload)
                rt.pool.drain(window_epoch)
        self._push(now + self.cfg.ledger_interval_s, self._window, index + 1)

    def _sample(self, now: float) -> None:
        self.recorder.sample_tip_pool(now, len(self.dag.tips))
        self._push(now + self.cfg.tip_pool_sample_s, self._sample)

    # -- top level ---------------------------------------------------------

    @property
    def states(self) -> dict[int, CumulativeState]:
        return {c: rt.state for c, rt in self.chains.items()}

    def conservation_holds(self) -> bool:
        """Exact identity: genesis supply = net balances + outstanding spend."""
        total = 0
        outstanding = 0
        supply = 0
        for rt in self.chains.values():
            nets = net_balances(rt.state)
            if rt.honest and (nets < 0).any():
                return False
            total += int(nets.sum())
            outstanding += int(rt.state.last_proposed.sum())
            supply += int(rt.state.genesis.sum())
        return total + outstanding == supply

    def run(self) -> RunResult:
        cfg = self.cfg
        for rt in self.chains.values():
            if rt.slots:
                rt.next_wake = rt.slots[0][0]
                self._push(rt.slots[0][0], self._wake, rt.chain)
        self._push(cfg.ledger_interval_s, self._window, 0)
        self._push(cfg.tip_pool_sample_s, self._sample)
        self._drain_queue()
        if (not self.recorder.tip_pool
                or self.recorder.tip_pool[-1][0] != round(self._end, 6)):
            self.recorder.sample_tip_pool(self._end, len(self.dag.tips))
        return RunResult(config=cfg, report=self._report(),
                         recorder=self.recorder,
                         snapshot_lines=self.dag.snapshot_lines(),
                         event_lines=self._event_lines(),
                         states=self.states, dag=self.dag,
                         tracker=self.tracker, superblocks=self.superblocks)

    def _event_lines(self) -> list[str]:
        lines: list[str] = []
        for c in sorted(self.chains):
            lines.extend(self.chains[c].pool.audit_lines())
        return lines

    def _report(self) -> MetricsReport:
        cfg = self.cfg
        intra = sum(rt.intra_done for rt in self.chains.values()
                    if rt.honest)
        confirmed = sum(rt.confirmed_count for rt in self.chains.values())
        attached = len(self.dag.order) - 1
        finals = [s for _, s in self.recorder.finality]
        pools = [c for _, c in self.recorder.tip_pool]
        counts = [self.chains[c].confirmed_count
                  for c in range(cfg.chains)]
        ds = None
        if self.injection is not None and self.tracker is not None:
            ds = self.tracker.score(self.injection.pair_ids,
                                    self.injection.regular_ids)
        return MetricsReport(
            scenario=self.scenario,
            seed=cfg.seed,
            duration_min=cfg.duration_min,
            intra_blocks_per_min=intra / cfg.duration_min,
            inter_blocks_per_min=confirmed / cfg.duration_min,
            confirmed_blocks=confirmed,
            attached_blocks=attached,
            mean_finality_s=(float(np.mean(finals)) if finals else None),
            mean_tip_pool=(float(np.mean(pools)) if pools else None),
            final_tip_pool=(pools[-1] if pools else None),
            confirmation_gini=gini(counts),
            conservation_ok=self.conservation_holds(),
            double_spend=ds,
        )


def run_scenario(cfg: ScenarioConfig, scenario: str = "scenario",
                 out_dir=None) -> RunResult:
    """Run one scenario deterministically; optionally write its artifacts."""
    sim = Simulation(cfg, scenario=scenario)
    result = sim.run()
    if out_dir is not None:
        from .metrics import write_artifacts
        write_artifacts(out_dir, result.recorder, result.report,
                        result.snapshot_lines, result.event_lines)
    return result
