"""Volume accounting and the exactly-once delivery ledger.

Per shuffle step the engine tallies, in payload bytes (key length plus
value length, no framing):

* ``network_bytes``  -- records delivered to a different PE,
* ``self_bytes``     -- records staying inside the sender's failure unit
  (the sender itself, or its failure group when groups are configured),
* ``backup_bytes``   -- backup-share records shipped to peers at recovery
  points (equal to ``self_bytes`` whenever backup is on),
* ``records``        -- number of records routed.

Each recovery contributes one :class:`RecoveryRecord` with the bytes
re-sent to survivors and the records recomputed during replay.

CSV schema (stable): ``step,phase,network_bytes,self_bytes,backup_bytes,records``
with ``phase=shuffle`` rows per step and one ``phase=recovery`` row per
failure event, where ``network_bytes`` holds the bytes re-sent,
``backup_bytes`` the bytes spent re-creating backup shares the failed
PEs held for survivors, and ``records`` the records recomputed.
"""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field

from .core import PeId, Record, StepId
from .partition import hash_key

CSV_HEADER = "step,phase,network_bytes,self_bytes,backup_bytes,records"


@dataclass
class StepMetrics:
    step: StepId
    network_bytes: int = 0
    self_bytes: int = 0
    backup_bytes: int = 0
    records: int = 0
    # bytes of backup shares received, per holding PE (not in the CSV;
    # used by the load-balance checks)
    backup_received: dict[PeId, int] = field(default_factory=dict)


@dataclass
class RecoveryRecord:
    step: StepId
    failed: tuple[PeId, ...]
    recovery_point: StepId
    replayed_steps: tuple[StepId, ...]
    bytes_resent: int = 0
    records_recomputed: int = 0
    # bytes shipped to re-create backup shares the failed PEs held for
    # surviving PEs (lands in the recovery row's backup_bytes column)
    backup_repair_bytes: int = 0


@dataclass
class Metrics:
    """Accumulates per-step volumes and recovery events for one run."""

    steps: list[StepMetrics] = field(default_factory=list)
    recoveries: list[RecoveryRecord] = field(default_factory=list)
    map_calls: int = 0
    reduce_calls: int = 0
    max_record_size: int = 0

    def step_metrics(self, step: StepId) -> StepMetrics:
        for sm in self.steps:
            if sm.step == step:
                return sm
        sm = StepMetrics(step)
        self.steps.append(sm)
        return sm

    def note_record(self, record: Record) -> None:
        if record.size > self.max_record_size:
            self.max_record_size = record.size

    # -- totals ----------------------------------------------------------

    @property
    def total_network_bytes(self) -> int:
        return sum(s.network_bytes for s in self.steps)

    @property
    def total_self_bytes(self) -> int:
        return sum(s.self_bytes for s in self.steps)

    @property
    def total_backup_bytes(self) -> int:
        return sum(s.backup_bytes for s in self.steps)

    def relative_overhead(self) -> float:
        """Backup traffic as a fraction of shuffle network traffic."""
        net = self.total_network_bytes
        if net == 0:
            return 0.0
        return self.total_backup_bytes / net

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(CSV_HEADER + "\n")
        rows = [
            (s.step, "shuffle", s.network_bytes, s.self_bytes, s.backup_bytes, s.records)
            for s in self.steps
        ] + [
            (r.step, "recovery", r.bytes_resent, 0, r.backup_repair_bytes,
             r.records_recomputed)
            for r in self.recoveries
        ]
        for row in sorted(rows, key=lambda t: (t[0], t[1] != "shuffle")):
            out.write(",".join(str(c) for c in row) + "\n")
        return out.getvalue()


ORIGINAL = "original"
RECOVERY = "recovery"


def record_fingerprint(record: Record) -> int:
    """Collision-tolerant 64-bit content fingerprint of one record."""
    return hash_key(
        len(record.key).to_bytes(4, "little") + record.key + record.value
    )


class DeliveryLedger:
    """Counts every logical delivery ``(step, destination, generation)``.

    The ledger is a verification instrument, not part of the protocol.
    ``generation`` separates deliveries of the original execution from
    records re-delivered (or re-derived) while reconstructing a failed
    PE.  Comparing a faulty run's ledger with a fault-free shadow run
    proves that recovery re-delivered every lost record exactly once and
    never re-sent data that had already reached a surviving PE.
    """

    def __init__(self):
        # (step, dst, generation) -> Counter of record fingerprints
        self.deliveries: dict[tuple[StepId, PeId, str], Counter] = {}

    def note(self, step: StepId, dst: PeId, generation: str, record: Record) -> None:
        key = (step, dst, generation)
        bucket = self.deliveries.get(key)
        if bucket is None:
            bucket = Counter()
            self.deliveries[key] = bucket
        bucket[record_fingerprint(record)] += 1

    # -- views -----------------------------------------------------------

    def bucket(self, step: StepId, dst: PeId, generation: str) -> Counter:
        return self.deliveries.get((step, dst, generation), Counter())

    def step_total(self, step: StepId, generation: str | None = None) -> Counter:
        total: Counter = Counter()
        for (s, _dst, gen), bucket in self.deliveries.items():
            if s == step and (generation is None or gen == generation):
                total.update(bucket)
        return total

    def steps(self) -> list[StepId]:
        return sorted({s for (s, _, _) in self.deliveries})

    # -- verification ----------------------------------------------------

    def check_against(
        self,
        reference: "DeliveryLedger",
        failed: set[PeId],
        event_step: StepId,
        recovery_point: StepId,
        exact_after: bool = True,
        exact_recovered: bool = True,
    ) -> list[str]:
        """Compare a single-failure run against a fault-free shadow run.

        Checks, returning a list of human-readable problems (empty when
        the run was exactly-once):

        * the original-generation deliveries match the reference exactly
          through the failure step (the runs are identical up to there);
        * per replayed step, the recovery-generation deliveries equal the
          reference deliveries into the failed PEs: each lost record was
          re-derived once, nothing already delivered was re-sent;
        * after the failure step the global per-step delivery multiset
          still matches.

        The exactness flags relax a fingerprint comparison to a delivery
        count, for float-carrying workloads where a different summation
        order legitimately shifts the bytes in the last ulp:
        ``exact_after`` covers the post-failure steps (reduce groups move
        to new owners, so value order changes); ``exact_recovered``
        covers the recovered stream (single-PE replay preserves value
        order and stays byte-exact even for floats; multi-PE units may
        interleave member streams differently).
        """
        problems = []
        ref_steps = reference.steps()
        for step in ref_steps:
            if step <= event_step:
                for dst in {d for (s, d, _) in reference.deliveries if s == step}:
                    got = self.bucket(step, dst, ORIGINAL)
                    want = reference.bucket(step, dst, ORIGINAL)
                    if got != want:
                        problems.append(
                            f"step {step} PE {dst}: original deliveries diverge"
                        )
            else:
                got_all = self.step_total(step)
                want_all = reference.step_total(step)
                if exact_after:
                    if got_all != want_all:
                        problems.append(f"step {step}: post-failure deliveries diverge")
                elif sum(got_all.values()) != sum(want_all.values()):
                    problems.append(f"step {step}: post-failure delivery count diverges")
        for step in range(max(recovery_point, 1), event_step + 1):
            want: Counter = Counter()
            for f in failed:
                want.update(reference.bucket(step, f, ORIGINAL))
            got = self.step_total(step, RECOVERY)
            if exact_recovered:
                if got != want:
                    missing = sum((want - got).values())
                    extra = sum((got - want).values())
                    problems.append(
                        f"step {step}: recovered stream mismatch "
                        f"({missing} missing, {extra} duplicated/re-sent)"
                    )
            elif sum(got.values()) != sum(want.values()):
                problems.append(
                    f"step {step}: recovered stream count mismatch "
                    f"({sum(got.values())} vs {sum(want.values())})"
                )
        return problems
