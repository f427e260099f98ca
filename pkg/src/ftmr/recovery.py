"""Rebuilding failed PEs from survivor-held message state.

A failure fires at a step's shuffle barrier: the exchange has completed,
then the failed PEs (one PE, or one predefined failure group treated as
a single logical unit) lose everything.  Recovery never restarts them;
instead their hash ranges are split across the survivors and their data
is rebuilt there:

1. Reconstruct the unit's inbox at the newest recovery point ``r``: the
   union of what every survivor logged as sent to the unit at step ``r``
   plus the unit-internal records backed up on peers (or, when no shuffle
   was a recovery point, the unit's regenerated step-0 input).
2. Replay steps ``r+1 .. t`` (the failure step): re-execute the unit's
   Reduce and the following Map over the reconstructed stream, re-feed
   the survivors' logged messages for each replayed step, and keep only
   recomputed records whose hash still falls in the unit's former ranges;
   everything outside was delivered to its surviving owner before the
   failure and must not be sent twice.
3. At step ``t``, route the reconstructed records to their new owners
   under the shrunk partition map and merge them into the pending reduce
   inboxes; normal execution resumes with the step-``t`` Reduce.

All re-routed records are appended to survivors' sent logs under their
step ids (a record whose new owner would also be its holder is attributed
to a rotated peer, so an off-owner copy always exists).  That keeps a
later failure before the next recovery point recoverable as well.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .core import PeId, Record, StepId
from .engine import ClusterState, JobError, group_entries, last_recovery_point
from .metrics import RECOVERY, DeliveryLedger, Metrics, RecoveryRecord
from .partition import (
    BackupMode,
    backup_targets,
    hash_key,
    shrink_partition,
    transfer_partition,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FailureEvent:
    """Fail-stop of ``failed`` at step ``step``'s shuffle barrier."""

    step: StepId
    failed: frozenset[PeId]

    def __post_init__(self):
        object.__setattr__(self, "failed", frozenset(self.failed))
        if self.step < 1:
            raise ValueError("failures fire at MapReduce steps (step >= 1)")


class UnrecoverableFailure(RuntimeError):
    """The surviving state cannot reproduce the lost data; gives the reason."""


# chain entries: (holder PE, src tag, seq tag, record)
_Entry = tuple[PeId, PeId, int, Record]


def recover(
    state: ClusterState,
    event: FailureEvent,
    *,
    backup_mode: BackupMode,
    metrics: Metrics,
    ledger: DeliveryLedger,
    single_recoverer: bool = False,
) -> None:
    """Handle one failure event; mutates cluster state in place.

    Raises :class:`UnrecoverableFailure` when the survivors provably do
    not hold (and cannot regenerate) the lost data.
    """
    failed = set(event.failed)
    if not failed:
        return
    if not failed <= state.live:
        raise ValueError(f"event fails already-dead PEs {sorted(failed - state.live)}")
    if backup_mode is BackupMode.OFF:
        raise UnrecoverableFailure(
            "fault tolerance is off: no logs or backups exist for "
            f"PEs {sorted(failed)}"
        )
    survivors = state.live - failed
    if not survivors:
        raise UnrecoverableFailure("every PE failed; nothing holds any state")

    t = event.step
    r = last_recovery_point(state, t)
    if r == 0:
        if not state.source.replayable:
            raise UnrecoverableFailure(
                "no recovery point completed and the input source cannot "
                "be replayed"
            )
    elif len(failed) > 1:
        _require_one_group(state, failed)
    lo = max(r, 1)
    holes = sorted((s, pe) for (s, pe) in state.lost_logs if lo <= s <= t)
    if holes:
        s, pe = holes[0]
        raise UnrecoverableFailure(
            f"recovering PEs {sorted(failed)} needs the step-{s} sends of "
            f"PE {pe}, which were lost for good when it failed mid-interval"
        )
    inbox_holes = sorted(
        (s, d) for (s, d) in state.lost_inboxes if d in failed and lo <= s <= t
    )
    if inbox_holes:
        s, d = inbox_holes[0]
        raise UnrecoverableFailure(
            f"the step-{s} inbox of PE {d} lost its only off-PE copy when "
            f"an earlier failure took the holder down"
        )

    # Fail-stop: the unit's local state is gone before reconstruction
    # starts, so recovery can only draw on survivor-held data.  Any
    # re-protection copies the unit held for others die with it.
    for f in failed:
        for (s, d) in state.reprotect_holdings.pop(f, set()):
            if d in failed:
                if lo <= s <= t:
                    raise UnrecoverableFailure(
                        f"the step-{s} inbox of PE {d} was protected only "
                        f"by PE {f}, which is failing in the same event"
                    )
            elif d in state.live:
                state.lost_inboxes.add((s, d))
        state.pes[f].scrub()
        state.live.discard(f)

    pm_old = state.pm
    if single_recoverer:
        heir = _pick_heir(state, failed, r, backup_mode)
        pm_new = transfer_partition(pm_old, failed, heir)
    else:
        pm_new = shrink_partition(pm_old, failed)

    hashes: dict[bytes, int] = {}

    def h(key: bytes) -> int:
        v = hashes.get(key)
        if v is None:
            v = hash_key(key)
            hashes[key] = v
        return v

    records_recomputed = 0
    relog_bytes = 0
    replayed: list[StepId] = []

    # --- phase 1: the unit's stream at the recovery point ---------------
    if r == 0:
        current: list[tuple[PeId, Record]] = []
        for f in sorted(failed):
            for rec in state.source.fn(f):
                current.append((pm_new.owner_of(h(rec.key)), rec))
        records_recomputed += len(current)
        entries: list[_Entry] | None = None
        next_step = 1
    else:
        entries = _logged_to(state, r, failed)
        entries += _share_entries(state, r, failed)
        next_step = r + 1

    # --- phase 2: replay up to the failure step --------------------------
    while True:
        if entries is not None:
            step = next_step - 1  # the step whose inbox `entries` rebuilds
            if step == t:
                break
            for _holder, _src, _seq, rec in entries:
                ledger.note(step, pm_new.owner_of(h(rec.key)), RECOVERY, rec)
            current = _replay_reduce(state, step, entries, pm_new, h)
            records_recomputed += len(entries)
            replayed.append(step)
            entries = None
        step = next_step
        spec = state.step_history[step].spec
        pm_then = state.step_history[step].pm
        mapped: list[tuple[PeId, Record]] = []
        for holder, rec in current:
            try:
                produced = spec.map_fn(rec)
            except Exception as exc:  # noqa: BLE001
                raise JobError(holder, step, "map during replay", exc) from exc
            mapped.extend((holder, out) for out in produced)
        # Keep only what the unit would have sent to itself; the rest
        # already reached surviving owners before the failure.
        self_part: list[_Entry] = []
        unit_src = min(failed)
        for holder, rec in mapped:
            if pm_then.owner_of(h(rec.key)) in failed:
                self_part.append((holder, unit_src, len(self_part), rec))
        if r == 0 and step < t:
            # The unit's own sends of this step died with its logs; with
            # no shuffle recovery point, a later input replay would need
            # them again, so re-log the recomputed copies on survivors.
            relog_bytes += _relog_mapped(state, step, mapped, failed, pm_then, h)
        entries = _logged_to(state, step, failed) + self_part
        next_step = step + 1

    # entries now hold the unit's reconstructed inbox at step t
    records_recomputed += len(entries)
    bytes_resent = _inject(state, t, entries, pm_new, ledger, h)
    repair_bytes = relog_bytes + _repair_shares(state, r, failed, backup_mode)
    if r == t or r == 0:
        # The unit's delivered step-t sends still sit in the survivors'
        # pending inboxes; give them live log copies while they exist.
        repair_bytes += _relog_pending(state, t, failed)
    else:
        # The unit's step-r sends are gone for good (consumed by the
        # step-r reduces); refuse any later chain through step r.
        state.lost_logs.update((r, f) for f in failed)
    metrics.recoveries.append(
        RecoveryRecord(
            step=t,
            failed=tuple(sorted(failed)),
            recovery_point=r,
            replayed_steps=tuple(replayed),
            bytes_resent=bytes_resent,
            records_recomputed=records_recomputed,
            backup_repair_bytes=repair_bytes,
        )
    )
    state.pm = pm_new
    logger.info(
        "recovered PEs %s at step %d from recovery point %d "
        "(%d records recomputed, %d bytes re-sent)",
        sorted(failed), t, r, records_recomputed, bytes_resent,
    )


def recover_group(state: ClusterState, event: FailureEvent, **kwargs) -> None:
    """Recover a whole predefined failure group as one logical PE."""
    if len(event.failed) < 2:
        raise ValueError("group recovery expects a multi-PE event")
    recover(state, event, **kwargs)


def recover_from_input(state: ClusterState, event: FailureEvent, **kwargs) -> None:
    """Recover with no shuffle recovery point, replaying from the input."""
    if last_recovery_point(state, event.step) != 0:
        raise ValueError("a newer shuffle recovery point exists; use recover()")
    recover(state, event, **kwargs)


# ----------------------------------------------------------------------


def _require_one_group(state: ClusterState, failed: set[PeId]) -> None:
    gids = {state.group_of[f] for f in failed}
    if len(gids) != 1:
        raise UnrecoverableFailure(
            f"simultaneous failure of PEs {sorted(failed)} spans multiple "
            "failure units; only one PE or one predefined group can fail at once"
        )
    gid = gids.pop()
    members_alive = {
        j for j in state.live if state.group_of[j] == gid
    }
    if failed != members_alive:
        raise UnrecoverableFailure(
            f"simultaneous failure of {sorted(failed)} is a strict subset of "
            f"failure group {gid}; groups fail as a unit"
        )


def _pick_heir(
    state: ClusterState, failed: set[PeId], r: StepId, backup_mode: BackupMode
) -> PeId:
    survivors = sorted(state.live - failed)
    if backup_mode is BackupMode.SINGLE and r >= 1:
        manifest = state.step_history[r].backup_manifest.get(min(failed), [])
        for target, _idx in manifest:
            if target in state.live and target not in failed:
                return target
    return survivors[0]


def _logged_to(state: ClusterState, step: StepId, failed: set[PeId]) -> list[_Entry]:
    """What the survivors' sent logs say reached the unit at ``step``."""
    entries: list[_Entry] = []
    for s in sorted(state.live):
        log = state.pes[s].sent_log.get(step)
        if not log:
            continue
        for f in sorted(failed):
            for seq, rec in enumerate(log.get(f, ())):
                entries.append((s, s, seq, rec))
    return entries


def _share_entries(state: ClusterState, r: StepId, failed: set[PeId]) -> list[_Entry]:
    """The unit-internal records backed up on peers at recovery point ``r``.

    Every share listed in the step's backup manifest must still be held
    by a live PE; a missing share means the data is gone for good.
    """
    hist = state.step_history[r]
    collected: list[tuple[PeId, PeId, PeId, int, Record]] = []
    for origin in sorted(failed):
        manifest = hist.backup_manifest.get(origin)
        if manifest is None:
            if hist.is_recovery_point:
                raise UnrecoverableFailure(
                    f"no backup shares were stored for PE {origin} at "
                    f"recovery point {r}"
                )
            continue
        for target, idx in manifest:
            if target not in state.live:
                raise UnrecoverableFailure(
                    f"backup share {idx} of PE {origin} at step {r} was held "
                    f"by PE {target}, which has also failed"
                )
            share = state.pes[target].backup_store.get(r, {}).get((origin, idx))
            if share is None:
                raise UnrecoverableFailure(
                    f"backup share {idx} of PE {origin} at step {r} is missing "
                    f"on PE {target}"
                )
            for src, dst, seq, rec in share:
                if dst in failed:
                    collected.append((target, src, dst, seq, rec))
    collected.sort(key=lambda e: (e[1], e[2], e[3]))
    return [(holder, src, seq, rec) for (holder, src, _dst, seq, rec) in collected]


def _holder_for(state: ClusterState, dst: PeId) -> PeId:
    """A live PE to hold a log copy guarding ``dst``'s inbox.

    Prefers a PE outside ``dst``'s failure group (group failures take the
    whole unit down at once), scanning ascending from ``dst``; falls back
    to any live peer, and to ``dst`` itself only in a one-PE cluster.
    """
    live_sorted = sorted(state.live)
    n = len(live_sorted)
    if n <= 1:
        return dst
    start = live_sorted.index(dst) if dst in state.live else 0
    gid = state.group_of[dst]
    fallback = None
    for k in range(1, n + 1):
        cand = live_sorted[(start + k) % n]
        if cand == dst:
            continue
        if state.group_of[cand] != gid:
            return cand
        if fallback is None:
            fallback = cand
    return fallback if fallback is not None else dst


def _note_holding(state: ClusterState, holder: PeId, step: StepId, dst: PeId) -> None:
    if holder != dst:
        state.reprotect_holdings.setdefault(holder, set()).add((step, dst))


def _relog_pending(state: ClusterState, t: StepId, failed: set[PeId]) -> int:
    """Give the unit's already-delivered step-``t`` sends live log copies.

    The exchange of step ``t`` completed before the unit died, so its
    outgoing records sit in the survivors' pending inboxes -- but the
    authoritative sender-side log is gone.  Each surviving receiver's
    slice is copied into a peer's sent log (off the receiver, so the copy
    outlives a failure of the receiver itself).  Returns bytes shipped.
    """
    live_sorted = sorted(state.live)
    if len(live_sorted) < 2:
        return 0
    shipped = 0
    for owner in live_sorted:
        pending = [
            (src, seq, rec)
            for (src, seq, rec) in state.pes[owner].inbox
            if src in failed
        ]
        if not pending:
            continue
        pending.sort(key=lambda e: (e[0], e[1]))
        holder = _holder_for(state, owner)
        if holder == owner:
            continue
        _note_holding(state, holder, t, owner)
        log = state.pes[holder].sent_log.setdefault(t, {}).setdefault(owner, [])
        for _src, _seq, rec in pending:
            log.append(rec)
            shipped += rec.size
    return shipped


def _relog_mapped(
    state: ClusterState,
    step: StepId,
    mapped: list[tuple[PeId, Record]],
    failed: set[PeId],
    pm_then,
    h,
) -> int:
    """Re-log the unit's recomputed cross-PE sends of a replayed step.

    The recomputed copies already live on their recomputing survivors;
    appending them to sent logs costs network traffic only when the log
    copy must move off the original receiver.  Returns bytes shipped.
    """
    group_of = state.group_of
    shipped = 0
    for holder, rec in mapped:
        dst = pm_then.owner_of(h(rec.key))
        if dst in failed or dst not in state.live:
            continue
        if group_of[holder] != group_of[dst]:
            sender = holder
        else:
            sender = _holder_for(state, dst)
        _note_holding(state, sender, step, dst)
        log = state.pes[sender].sent_log.setdefault(step, {}).setdefault(dst, [])
        log.append(rec)
        if sender != holder:
            shipped += rec.size
    return shipped


def _repair_shares(
    state: ClusterState, r: StepId, failed: set[PeId], backup_mode: BackupMode
) -> int:
    """Re-create backup shares the failed PEs were holding for survivors.

    A share's origin keeps the authoritative copy of its unit-internal
    traffic in its own sent log, so the lost share's content is the
    origin's logged internal records minus whatever the surviving shares
    still cover.  Re-storing it on a live peer keeps the origin
    recoverable if it fails before the next recovery point.  Returns the
    bytes shipped to the new holders.
    """
    if r == 0:
        return 0
    hist = state.step_history[r]
    group_map = state.group_map()
    shipped = 0
    for origin in sorted(state.live):
        manifest = hist.backup_manifest.get(origin)
        if not manifest:
            continue
        lost = [(target, idx) for (target, idx) in manifest if target in failed]
        if not lost:
            continue
        gid = state.group_of[origin]
        full: dict[tuple[PeId, int], Record] = {}
        for dst, payload in state.pes[origin].sent_log.get(r, {}).items():
            if state.group_of[dst] == gid:
                for seq, rec in enumerate(payload):
                    full[(dst, seq)] = rec
        covered: set[tuple[PeId, int]] = set()
        for target, idx in manifest:
            if target in failed:
                continue
            share = state.pes[target].backup_store.get(r, {}).get((origin, idx), ())
            covered.update((dst, seq) for (_src, dst, seq, _rec) in share)
        missing = [
            (origin, dst, seq, full[(dst, seq)])
            for (dst, seq) in sorted(full.keys() - covered)
        ]
        eligible = backup_targets(origin, state.live, backup_mode, group_map)
        if not eligible:
            logger.warning(
                "cannot re-create the backup shares PE %s lost for PE %d: "
                "no live peer outside its failure group remains",
                sorted(t for t, _ in lost), origin,
            )
            hist.backup_manifest[origin] = [
                (target, idx) for (target, idx) in manifest if target not in failed
            ]
            continue
        holders = {target for (target, idx) in manifest if target not in failed}
        fresh = [t for t in eligible if t not in holders] or eligible
        new_manifest = []
        replacement = {}
        for k, (target, idx) in enumerate(lost):
            replacement[idx] = fresh[k % len(fresh)]
        for target, idx in manifest:
            new_manifest.append((replacement.get(idx, target), idx))
        for k, (_old, idx) in enumerate(lost):
            share = missing[k :: len(lost)]
            new_target = replacement[idx]
            store = state.pes[new_target].backup_store.setdefault(r, {})
            store[(origin, idx)] = share
            shipped += sum(rec.size for (_s, _d, _q, rec) in share)
        hist.backup_manifest[origin] = new_manifest
    return shipped


def _replay_reduce(
    state: ClusterState,
    step: StepId,
    entries: list[_Entry],
    pm_new,
    h,
) -> list[tuple[PeId, Record]]:
    """Re-execute the unit's Reduce of ``step`` over reconstructed entries.

    Each key group is attributed to the survivor that owns the key under
    the shrunk map, mirroring where the recomputation runs.
    """
    spec = state.step_history[step].spec
    out: list[tuple[PeId, Record]] = []
    for key, values in group_entries(
        (src, seq, rec) for (_holder, src, seq, rec) in entries
    ):
        owner = pm_new.owner_of(h(key))
        try:
            produced = spec.reduce_fn(key, values)
        except Exception as exc:  # noqa: BLE001
            raise JobError(owner, step, "reduce during replay", exc) from exc
        out.extend((owner, rec) for rec in produced)
    return out


def _inject(
    state: ClusterState,
    t: StepId,
    entries: list[_Entry],
    pm_new,
    ledger: DeliveryLedger,
    h,
) -> int:
    """Deliver the reconstructed step-``t`` inbox to its new owners.

    Records are appended to the contributors' sent logs under step ``t``
    so the recovery traffic is itself protected until the next recovery
    point retires it.  A record whose holder sits in its new owner's
    failure group is attributed to a PE outside that group instead, so
    the log copy never dies together with the inbox it guards.  Returns
    the bytes that crossed the (simulated) network.
    """
    group_of = state.group_of
    bytes_resent = 0
    for holder, _src, _seq, rec in entries:
        dst = pm_new.owner_of(h(rec.key))
        if group_of[holder] != group_of[dst]:
            sender = holder
        else:
            sender = _holder_for(state, dst)
        _note_holding(state, sender, t, dst)
        log = state.pes[sender].sent_log.setdefault(t, {}).setdefault(dst, [])
        seq = len(log)
        log.append(rec)
        state.pes[dst].inbox.append((sender, seq, rec))
        ledger.note(t, dst, RECOVERY, rec)
        if holder != dst:
            bytes_resent += rec.size
        if sender != holder:
            bytes_resent += rec.size
    return bytes_resent
