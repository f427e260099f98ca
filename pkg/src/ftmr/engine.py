"""Bulk-synchronous MapReduce engine over simulated PEs.

One MapReduce step is: Map every local record, shuffle the mapped records
to their hash-range owners, then Reduce each key group on its owner.  The
shuffle doubles as the fault-tolerance mechanism:

* every sender keeps an ordered log of the records it sent, per
  destination, until the log is older than the newest recovery point;
* at recovery-point steps, records that never leave their failure unit
  (self-messages, plus intra-group traffic when failure groups are
  configured) are additionally copied to peer PEs, split round-robin so
  no peer carries more than one share.

Together the logs and shares let recovery rebuild any failed PE's inbox
without checkpoints; see :mod:`ftmr.recovery`.

Failures are injected at the shuffle barrier: the exchange of the step
completes (real failures are detected at the synchronization point), then
the failed PEs lose all local state.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol

from .core import PeId, Record, StepId
from .metrics import ORIGINAL, DeliveryLedger, Metrics
from .partition import (
    BackupMode,
    PartitionMap,
    backup_targets,
    hash_key,
    initial_partition,
    split_self_message,
)

logger = logging.getLogger(__name__)

MapFn = Callable[[Record], list[Record]]
ReduceFn = Callable[[bytes, list[bytes]], list[Record]]
CounterFn = Callable[[bytes, list[bytes]], int]


class JobError(RuntimeError):
    """A user function failed; carries enough context to find the record."""

    def __init__(self, pe: PeId, step: StepId, where: str, cause: BaseException):
        super().__init__(f"PE {pe}, step {step}, {where}: {cause!r}")
        self.pe = pe
        self.step = step
        self.where = where
        self.__cause__ = cause


@dataclass(frozen=True)
class StepSpec:
    """User functions for one MapReduce step.

    ``counter_fn`` feeds the per-step global aggregate that iterative
    drivers use for termination; it must be order-insensitive in the
    value list, like the reducers themselves.
    """

    name: str
    map_fn: MapFn
    reduce_fn: ReduceFn
    counter_fn: CounterFn | None = None


class StepDriver(Protocol):
    """Yields step specs; sees the previous step's aggregate."""

    def next_step(self, index: StepId, prev_aggregate: int | None) -> StepSpec | None:
        ...


class ListDriver:
    """Fixed, non-adaptive step sequence."""

    def __init__(self, steps: Iterable[StepSpec]):
        self.steps = list(steps)

    def next_step(self, index: StepId, prev_aggregate: int | None) -> StepSpec | None:
        if index <= len(self.steps):
            return self.steps[index - 1]
        return None


@dataclass
class RecordSource:
    """Per-PE input generator; ``fn(pe)`` must be rerunnable when
    ``replayable`` is set (it is the zero-overhead recovery path)."""

    fn: Callable[[PeId], list[Record]]
    replayable: bool = True


@dataclass
class Job:
    source: RecordSource
    driver: StepDriver


# Inbox entries are (src PE, emission seq within the src->dst payload,
# record); the pair gives the stable value order inside reduce groups.
InboxEntry = tuple[PeId, int, Record]


@dataclass
class PeState:
    id: PeId
    alive: bool = True
    current_records: list[Record] = field(default_factory=list)
    outbound: list[Record] = field(default_factory=list)
    inbox: list[InboxEntry] = field(default_factory=list)
    # step -> dst -> ordered payload (the records sent there that step)
    sent_log: dict[StepId, dict[PeId, list[Record]]] = field(default_factory=dict)
    # step -> (origin, share index) -> share entries (src, dst, seq, record)
    backup_store: dict[StepId, dict[tuple[PeId, int], list]] = field(default_factory=dict)

    def scrub(self) -> None:
        """Drop all local state; what a fail-stop crash leaves behind."""
        self.alive = False
        self.current_records = []
        self.outbound = []
        self.inbox = []
        self.sent_log = {}
        self.backup_store = {}


@dataclass
class StepRecord:
    """Execution history needed to replay a step during recovery."""

    spec: StepSpec
    is_recovery_point: bool
    pm: PartitionMap
    live: frozenset[PeId]
    # origin -> ordered list of (target, share index) actually stored
    backup_manifest: dict[PeId, list[tuple[PeId, int]]] = field(default_factory=dict)


@dataclass
class ClusterState:
    p_initial: int
    group_of: tuple[int, ...]
    source: RecordSource
    pes: list[PeState]
    live: set[PeId]
    pm: PartitionMap
    step_history: dict[StepId, StepRecord] = field(default_factory=dict)
    warned_unprotected: set[PeId] = field(default_factory=set)
    # (step, pe): pe's sends of that step are gone for good (pe died
    # mid-interval); any recovery chain touching the step must refuse
    lost_logs: set[tuple[StepId, PeId]] = field(default_factory=set)
    # holder -> {(step, dst)}: re-protection log copies the holder keeps
    # for other PEs' step inboxes (injection and re-log traffic)
    reprotect_holdings: dict[PeId, set[tuple[StepId, PeId]]] = field(
        default_factory=dict
    )
    # (step, dst): dst's step inbox lost its only off-dst copy when a
    # holder died; a chain needing it must refuse
    lost_inboxes: set[tuple[StepId, PeId]] = field(default_factory=set)

    def group_map(self) -> dict[PeId, int]:
        return {i: g for i, g in enumerate(self.group_of)}

    def unit_of(self, pe: PeId) -> frozenset[PeId]:
        gid = self.group_of[pe]
        return frozenset(
            j for j in range(self.p_initial) if self.group_of[j] == gid
        )


def recovery_point_schedule(interval) -> Callable[[StepId], bool]:
    """Recovery points every ``interval`` steps starting at step 1.

    ``interval`` may be a positive int or ``"input-only"``, in which case
    no shuffle is a recovery point and recovery replays from the
    regenerable step-0 input.
    """
    if interval == "input-only":
        return lambda step: False
    if not isinstance(interval, int) or interval < 1:
        raise ValueError(f"bad recovery point interval {interval!r}")
    return lambda step: (step - 1) % interval == 0


def last_recovery_point(state: ClusterState, step: StepId) -> StepId:
    """Newest recovery point at or before ``step``; 0 means the input."""
    for u in range(step, 0, -1):
        rec = state.step_history.get(u)
        if rec is not None and rec.is_recovery_point:
            return u
    return 0


def ingest(source: RecordSource, p: int, group_size: int = 1) -> ClusterState:
    """Step 0: every PE materializes its input partition locally.

    The input is itself the oldest recovery point, because ``source`` can
    regenerate any PE's partition on demand.
    """
    if p < 1:
        raise ValueError("need at least one PE")
    if group_size < 1 or p % group_size != 0:
        raise ValueError(f"group size {group_size} must evenly divide p={p}")
    group_of = tuple(i // group_size for i in range(p))
    state = ClusterState(
        p_initial=p,
        group_of=group_of,
        source=source,
        pes=[PeState(i) for i in range(p)],
        live=set(range(p)),
        pm=initial_partition(p),
    )
    for pe in state.pes:
        pe.current_records = list(source.fn(pe.id))
    return state


def map_phase(state: ClusterState, map_fn: MapFn, step: StepId, metrics: Metrics) -> None:
    """Apply the map function on every live PE, filling outbound buffers."""
    for i in sorted(state.live):
        pe = state.pes[i]
        out: list[Record] = []
        for idx, rec in enumerate(pe.current_records):
            try:
                produced = map_fn(rec)
            except Exception as exc:  # noqa: BLE001 - rewrap with context
                raise JobError(i, step, f"map of record {idx}", exc) from exc
            out.extend(produced)
            metrics.map_calls += 1
        pe.outbound = out
        pe.current_records = []


def shuffle(
    state: ClusterState,
    step: StepId,
    *,
    is_recovery_point: bool,
    backup_mode: BackupMode,
    metrics: Metrics,
    ledger: DeliveryLedger,
) -> None:
    """Route outbound records to their hash-range owners.

    Also appends sender-side logs, ships backup shares of failure-unit
    internal traffic when the step is a recovery point, and tallies the
    traffic volumes.  Delivery order is canonical: ascending sender, then
    emission order, which is what the reduce value order relies on.
    """
    sm = metrics.step_metrics(step)
    pm = state.pm
    group_of = state.group_of
    group_map = state.group_map()
    fault_tolerant = backup_mode is not BackupMode.OFF
    hashes: dict[bytes, int] = {}
    # per sender: dst -> payload, and the unit-internal slice of it
    unit_self: dict[PeId, list] = {}

    for src in sorted(state.live):
        pe = state.pes[src]
        payloads: dict[PeId, list[Record]] = {}
        internal: list = []
        src_gid = group_of[src]
        for rec in pe.outbound:
            h = hashes.get(rec.key)
            if h is None:
                h = hash_key(rec.key)
                hashes[rec.key] = h
            dst = pm.owner_of(h)
            payload = payloads.setdefault(dst, [])
            seq = len(payload)
            payload.append(rec)
            size = rec.size
            sm.records += 1
            metrics.note_record(rec)
            if dst != src:
                sm.network_bytes += size
            if group_of[dst] == src_gid:
                sm.self_bytes += size
                internal.append((src, dst, seq, rec))
        pe.outbound = []
        if fault_tolerant:
            pe.sent_log[step] = payloads
        unit_self[src] = internal
        # canonical delivery: ascending destination within this sender
        for dst in sorted(payloads):
            inbox = state.pes[dst].inbox
            for seq, rec in enumerate(payloads[dst]):
                inbox.append((src, seq, rec))
                ledger.note(step, dst, ORIGINAL, rec)

    if is_recovery_point and fault_tolerant:
        manifest = state.step_history[step].backup_manifest
        for src in sorted(state.live):
            targets = backup_targets(src, state.live, backup_mode, group_map)
            if not targets:
                log = logger.debug if src in state.warned_unprotected else logger.warning
                state.warned_unprotected.add(src)
                log(
                    "PE %d has no backup target (first at step %d); its "
                    "self-messages are unprotected", src, step,
                )
                continue
            manifest[src] = [(t, k) for k, t in enumerate(targets)]
            for k, (target, share) in enumerate(split_self_message(unit_self[src], targets)):
                store = state.pes[target].backup_store.setdefault(step, {})
                store[(src, k)] = share
                got = sum(entry[3].size for entry in share)
                sm.backup_bytes += got
                sm.backup_received[target] = sm.backup_received.get(target, 0) + got


def group_entries(entries: Iterable[InboxEntry]) -> list[tuple[bytes, list[bytes]]]:
    """Group records by key for reducing.

    Keys are sorted bytewise; within a group, values follow the stable
    arrival order (ascending source PE, then emission order), so grouping
    is invariant under any interleaving of the physical deliveries.
    """
    by_key: dict[bytes, list[tuple[PeId, int, bytes]]] = {}
    for src, seq, rec in entries:
        by_key.setdefault(rec.key, []).append((src, seq, rec.value))
    out = []
    for key in sorted(by_key):
        vals = by_key[key]
        vals.sort(key=lambda t: (t[0], t[1]))
        out.append((key, [v for (_s, _q, v) in vals]))
    return out


def reduce_phase(
    state: ClusterState,
    reduce_fn: ReduceFn,
    step: StepId,
    counter_fn: CounterFn | None,
    metrics: Metrics,
) -> int:
    """Reduce every key group on its owner; returns the global aggregate."""
    aggregate = 0
    for i in sorted(state.live):
        pe = state.pes[i]
        out: list[Record] = []
        for key, values in group_entries(pe.inbox):
            try:
                out.extend(reduce_fn(key, values))
                if counter_fn is not None:
                    aggregate += counter_fn(key, values)
            except Exception as exc:  # noqa: BLE001
                raise JobError(i, step, f"reduce of key {key!r}", exc) from exc
            metrics.reduce_calls += 1
        pe.inbox = []
        pe.current_records = out
    return aggregate


def gc_logs(state: ClusterState, completed_step: StepId) -> None:
    """Drop logs and shares strictly older than the newest recovery point.

    Anything at least as new as the newest recovery point at or before
    ``completed_step`` is still needed to reconstruct a failure before
    the next recovery point completes.
    """
    cut = last_recovery_point(state, completed_step)
    for i in state.live:
        pe = state.pes[i]
        for step in [s for s in pe.sent_log if s < cut]:
            del pe.sent_log[step]
        for step in [s for s in pe.backup_store if s < cut]:
            del pe.backup_store[step]
    state.lost_logs = {(s, f) for (s, f) in state.lost_logs if s >= cut}
    state.lost_inboxes = {(s, d) for (s, d) in state.lost_inboxes if s >= cut}
    for holder in list(state.reprotect_holdings):
        kept = {(s, d) for (s, d) in state.reprotect_holdings[holder] if s >= cut}
        if kept:
            state.reprotect_holdings[holder] = kept
        else:
            del state.reprotect_holdings[holder]


@dataclass
class JobResult:
    outputs: dict[PeId, list[Record]]
    metrics: Metrics
    ledger: DeliveryLedger
    steps_run: int


def run_job(
    job: Job,
    p: int,
    *,
    backup_mode: BackupMode = BackupMode.SPLIT,
    recovery_point_interval=1,
    failure_plan=None,
    group_size: int = 1,
    single_recoverer: bool = False,
    metrics: Metrics | None = None,
    ledger: DeliveryLedger | None = None,
    max_steps: int = 10_000,
) -> JobResult:
    """Run a job to completion, injecting failures at shuffle barriers.

    The simulator executes PEs sequentially in PE order, which makes runs
    with equal seeds, plans, and failure plans byte-identical.
    """
    metrics = metrics if metrics is not None else Metrics()
    ledger = ledger if ledger is not None else DeliveryLedger()
    is_rp = recovery_point_schedule(recovery_point_interval)
    state = ingest(job.source, p, group_size)
    if p == 1 and backup_mode is not BackupMode.OFF:
        logger.warning("single PE: no peers to back up to, backup disabled")
    if group_size == p and p > 1 and backup_mode is not BackupMode.OFF:
        raise ValueError(
            "one failure group spanning every PE leaves no backup targets"
        )

    from .recovery import recover  # deferred: recovery imports this module

    prev_aggregate: int | None = None
    steps_run = 0
    for index in itertools.count(1):
        spec = job.driver.next_step(index, prev_aggregate)
        if spec is None:
            break
        if index > max_steps:
            raise JobError(-1, index, "driver", RuntimeError("step budget exhausted"))
        plan_rp = is_rp(index)
        state.step_history[index] = StepRecord(
            spec=spec,
            is_recovery_point=plan_rp,
            pm=state.pm,
            live=frozenset(state.live),
        )
        map_phase(state, spec.map_fn, index, metrics)
        shuffle(
            state,
            index,
            is_recovery_point=plan_rp,
            backup_mode=backup_mode,
            metrics=metrics,
            ledger=ledger,
        )
        event = failure_plan.event_at(index) if failure_plan is not None else None
        if event is not None:
            recover(
                state,
                event,
                backup_mode=backup_mode,
                metrics=metrics,
                ledger=ledger,
                single_recoverer=single_recoverer,
            )
        prev_aggregate = reduce_phase(state, spec.reduce_fn, index, spec.counter_fn, metrics)
        gc_logs(state, index)
        steps_run = index

    if failure_plan is not None:
        for event in failure_plan.remaining_after(steps_run):
            logger.warning(
                "failure event at step %d never fired (job ran %d steps)",
                event.step, steps_run,
            )
    outputs = {i: list(state.pes[i].current_records) for i in sorted(state.live)}
    return JobResult(outputs=outputs, metrics=metrics, ledger=ledger, steps_run=steps_run)
