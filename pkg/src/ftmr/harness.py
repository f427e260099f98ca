"""Experiment harness: failure plans, sweeps, and overhead measurement.

Everything here drives :func:`ftmr.engine.run_job` from a
:class:`ftmr.config.JobConfig` and checks the results:

* :func:`run_simulation` -- one run, optionally with injected failures;
* :func:`sweep_failures` -- a fault-free reference run, then one faulty
  run per (step, failure unit) pair, each verified for output equality
  and exactly-once re-delivery against the reference;
* :func:`measure_overhead` -- a uniform random workload that compares
  backup traffic against shuffle traffic; with ``p`` PEs and backup on,
  the expected ratio is ``1/(p-1)``.
"""

from __future__ import annotations

import contextlib
import logging
import random
import time
from collections import Counter
from dataclasses import dataclass, field

from .benchmarks import make_job, pagerank_scores, uniform_job
from .config import INPUT_ONLY, ConfigError, JobConfig
from .core import PeId, Record, StepId
from .engine import Job, run_job
from .metrics import DeliveryLedger, Metrics
from .partition import BackupMode, mix_seed
from .recovery import FailureEvent


# -- failure plans ------------------------------------------------------


@dataclass(frozen=True)
class FailurePlan:
    """Failure events to inject, at most one per step."""

    events: tuple[FailureEvent, ...] = ()

    def __post_init__(self):
        steps = [e.step for e in self.events]
        if len(set(steps)) != len(steps):
            raise ValueError(f"multiple failure events share a step: {sorted(steps)}")
        object.__setattr__(
            self, "events", tuple(sorted(self.events, key=lambda e: e.step))
        )

    def event_at(self, step: StepId) -> FailureEvent | None:
        for event in self.events:
            if event.step == step:
                return event
        return None

    def remaining_after(self, steps_run: StepId) -> list[FailureEvent]:
        return [e for e in self.events if e.step > steps_run]


def parse_failure_spec(text: str) -> FailurePlan:
    """Parse ``"step:pe,pe;step:pe"`` into a plan.

    Example: ``"2:1;4:0,3"`` fails PE 1 at step 2, then PEs 0 and 3
    together at step 4.
    """
    events = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        step_text, sep, pes_text = part.partition(":")
        if not sep:
            raise ValueError(f"bad failure event {part!r}; want 'step:pe[,pe...]'")
        try:
            step = int(step_text)
            pes = frozenset(int(x) for x in pes_text.split(","))
        except ValueError:
            raise ValueError(f"bad failure event {part!r}; want 'step:pe[,pe...]'")
        events.append(FailureEvent(step, pes))
    return FailurePlan(tuple(events))


def random_failure_plan(
    p: int,
    seed: int,
    fraction: float,
    *,
    window: int,
    group_size: int = 1,
) -> FailurePlan:
    """Seeded plan failing ``round(fraction * p)`` units at distinct steps.

    Units are whole failure groups (single PEs when ``group_size`` is 1),
    drawn without replacement, so the events stay individually
    recoverable; steps are drawn from ``1 .. window``.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"failure fraction {fraction} not in [0, 1]")
    n_units = p // group_size
    k = round(fraction * n_units)
    if k == 0:
        return FailurePlan()
    if k >= n_units:
        raise ValueError(
            f"failing {k} of {n_units} units leaves no survivors"
        )
    if k > window:
        raise ValueError(
            f"{k} failure events do not fit in a {window}-step window"
        )
    rng = random.Random(mix_seed(seed, 0xFA17))
    steps = rng.sample(range(1, window + 1), k)
    units = rng.sample(range(n_units), k)
    events = tuple(
        FailureEvent(
            step,
            frozenset(range(gid * group_size, (gid + 1) * group_size)),
        )
        for step, gid in zip(sorted(steps), units)
    )
    return FailurePlan(events)


# -- single runs --------------------------------------------------------


def build_job(config: JobConfig) -> Job:
    if config.benchmark == "uniform":
        return uniform_job(
            config.p, config.seed, total_records=config.total_records
        )
    return make_job(
        config.benchmark,
        config.p,
        config.seed,
        iterations=config.iterations,
        vertices_per_pe=config.vertices_per_pe,
        avg_degree=config.avg_degree,
        words_per_pe=config.words_per_pe,
        dict_words=config.dict_words,
    )


@dataclass
class SimulationResult:
    config: JobConfig
    outputs: dict[PeId, list[Record]]
    metrics: Metrics
    ledger: DeliveryLedger
    steps_run: int
    elapsed: float

    def output_counter(self) -> Counter:
        return output_counter(self.outputs)


def run_simulation(
    config: JobConfig, plan: FailurePlan | None = None
) -> SimulationResult:
    config.validate()
    if plan is not None:
        for event in plan.events:
            bad = [f for f in event.failed if not 0 <= f < config.p]
            if bad:
                raise ConfigError(f"failure event names unknown PEs {sorted(bad)}")
    start = time.perf_counter()
    result = run_job(
        build_job(config),
        config.p,
        backup_mode=BackupMode.parse(config.backup_mode),
        recovery_point_interval=config.recovery_point_interval,
        failure_plan=plan,
        group_size=config.group_size,
        single_recoverer=config.single_recoverer,
    )
    return SimulationResult(
        config=config,
        outputs=result.outputs,
        metrics=result.metrics,
        ledger=result.ledger,
        steps_run=result.steps_run,
        elapsed=time.perf_counter() - start,
    )


# -- output comparison --------------------------------------------------


def output_counter(outputs: dict[PeId, list[Record]]) -> Counter:
    """Global output multiset, ignoring which PE holds what."""
    return Counter(
        (rec.key, rec.value) for recs in outputs.values() for rec in recs
    )


def outputs_match(
    reference: dict[PeId, list[Record]],
    got: dict[PeId, list[Record]],
    benchmark: str,
    tol: float = 1e-12,
) -> list[str]:
    """Compare global outputs; returns human-readable problems.

    PageRank outputs are compared as per-vertex scores within ``tol``
    (replay may re-add floats in a different order); everything else must
    match as an exact multiset of records.
    """
    if benchmark == "pagerank":
        want = pagerank_scores(reference)
        have = pagerank_scores(got)
        problems = []
        if want.keys() != have.keys():
            missing = sorted(want.keys() - have.keys())[:5]
            extra = sorted(have.keys() - want.keys())[:5]
            problems.append(f"vertex sets differ (missing {missing}, extra {extra})")
        else:
            worst = max((abs(want[v] - have[v]) for v in want), default=0.0)
            if worst > tol:
                problems.append(f"max score deviation {worst:.3e} exceeds {tol:.1e}")
        return problems
    want_counter = output_counter(reference)
    got_counter = output_counter(got)
    if want_counter == got_counter:
        return []
    missing = sum((want_counter - got_counter).values())
    extra = sum((got_counter - want_counter).values())
    return [f"output multiset differs ({missing} missing, {extra} extra records)"]


# -- exhaustive single-failure sweep ------------------------------------


@contextlib.contextmanager
def _quiet(log: logging.Logger):
    old = log.level
    log.setLevel(logging.ERROR)
    try:
        yield
    finally:
        log.setLevel(old)


@dataclass
class SweepCase:
    step: StepId
    failed: tuple[PeId, ...]
    problems: list[str] = field(default_factory=list)


@dataclass
class SweepResult:
    config: JobConfig
    reference: SimulationResult
    cases: list[SweepCase]

    @property
    def ok(self) -> bool:
        return all(not c.problems for c in self.cases)

    def failures(self) -> list[SweepCase]:
        return [c for c in self.cases if c.problems]

    def describe(self) -> str:
        lines = [
            f"swept {len(self.cases)} single-failure runs over "
            f"{self.reference.steps_run} steps: "
            + ("all verified" if self.ok else f"{len(self.failures())} FAILED")
        ]
        for case in self.failures():
            for problem in case.problems:
                lines.append(f"  step {case.step}, PEs {list(case.failed)}: {problem}")
        return "\n".join(lines)


def sweep_failures(
    config: JobConfig,
    *,
    steps: list[StepId] | None = None,
) -> SweepResult:
    """Fail every unit at every step (or the given steps), one run each.

    Each faulty run must reproduce the reference outputs and pass the
    delivery-ledger exactly-once checks.  Engine warnings about degraded
    protection after the injected failure are muted; the sweep itself
    reports anything that went wrong.
    """
    config.validate()
    reference = run_simulation(config)
    units = [
        tuple(range(gid * config.group_size, (gid + 1) * config.group_size))
        for gid in range(config.p // config.group_size)
    ]
    if config.p - config.group_size < 1:
        raise ConfigError("sweep needs at least one surviving PE per failure")
    step_list = list(steps) if steps is not None else list(
        range(1, reference.steps_run + 1)
    )
    cases = []
    engine_log = logging.getLogger("ftmr")
    for step in step_list:
        for unit in units:
            case = SweepCase(step=step, failed=unit)
            plan = FailurePlan((FailureEvent(step, frozenset(unit)),))
            with _quiet(engine_log):
                result = run_simulation(config, plan)
            case.problems.extend(
                outputs_match(reference.outputs, result.outputs, config.benchmark)
            )
            if result.steps_run != reference.steps_run:
                case.problems.append(
                    f"ran {result.steps_run} steps, reference ran "
                    f"{reference.steps_run}"
                )
            if len(result.metrics.recoveries) != 1:
                case.problems.append(
                    f"{len(result.metrics.recoveries)} recoveries recorded, wanted 1"
                )
            else:
                rec = result.metrics.recoveries[0]
                floats = config.benchmark == "pagerank"
                case.problems.extend(
                    result.ledger.check_against(
                        reference.ledger,
                        set(unit),
                        event_step=step,
                        recovery_point=rec.recovery_point,
                        exact_after=not floats,
                        exact_recovered=not (floats and len(unit) > 1),
                    )
                )
            cases.append(case)
    return SweepResult(config=config, reference=reference, cases=cases)


# -- communication overhead ---------------------------------------------


@dataclass
class OverheadResult:
    p: int
    seed: int
    total_records: int
    network_bytes: int
    backup_bytes: int
    share_balance: float = 0.0  # worst per-step max/mean of share sizes

    @property
    def ratio(self) -> float:
        return self.backup_bytes / self.network_bytes if self.network_bytes else 0.0

    @property
    def expected(self) -> float:
        return 1.0 / (self.p - 1) if self.p > 1 else 0.0

    def describe(self) -> str:
        return (
            f"p={self.p:3d}  backup/network = {self.ratio:.4f}  "
            f"expected 1/(p-1) = {self.expected:.4f}  "
            f"worst share imbalance = {self.share_balance:.2f}x"
        )


def measure_overhead(
    p: int,
    seed: int,
    *,
    total_records: int = 100_000,
    recovery_point_interval: int | str = 1,
    backup_mode: str = "split",
) -> OverheadResult:
    """Run the uniform workload and relate backup bytes to network bytes.

    Self-messages are a ``1/p`` fraction of a uniform shuffle and only
    they are backed up, so the ratio should sit near ``1/(p-1)`` and fall
    as the cluster grows.
    """
    config = JobConfig(
        benchmark="uniform",
        p=p,
        seed=seed,
        total_records=total_records,
        backup_mode=backup_mode,
        recovery_point_interval=recovery_point_interval,
    )
    result = run_simulation(config)
    balance = 0.0
    for sm in result.metrics.steps:
        received = list(sm.backup_received.values())
        if received and sum(received) > 0:
            mean = sum(received) / len(received)
            balance = max(balance, max(received) / mean)
    return OverheadResult(
        p=p,
        seed=seed,
        total_records=total_records,
        network_bytes=result.metrics.total_network_bytes,
        backup_bytes=result.metrics.total_backup_bytes,
        share_balance=balance,
    )
