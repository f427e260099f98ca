"""Benchmark jobs and seeded input generators.

Four workloads exercise the engine:

* ``wordcount``  -- count words drawn from a seeded dictionary,
* ``rmat``       -- deduplicate an R-MAT edge sample, redrawing a fresh
  edge per duplicate until a round sees none,
* ``cc``         -- connected components by alternating neighborhood
  rewrites until an iteration changes no edge,
* ``pagerank``   -- damped PageRank over a seeded random digraph.

Every generator derives a per-PE sub-seed with :func:`mix_seed`, so any
single PE's input partition can be regenerated on its own; that is what
input-replay recovery leans on.

Typed encodings (little-endian) on top of the byte-record model:
vertices are u64, counters u64, scores IEEE f64, edges pairs of u64.
"""

from __future__ import annotations

import random
import struct
from functools import lru_cache

from .core import Record
from .engine import Job, ListDriver, RecordSource, StepSpec
from .partition import hash_key, mix_seed

U64 = struct.Struct("<Q")
F64 = struct.Struct("<d")
PAIR = struct.Struct("<QQ")

# Graph500 R-MAT quadrant probabilities (a, b, c, d).
RMAT_GRAPH500 = (0.57, 0.19, 0.19, 0.05)

# Desk-scale defaults: average degrees per workload, vertices per PE.
DEFAULT_DEGREES = {"rmat": 30.0, "cc": 0.5, "pagerank": 38.0}
DEFAULT_VERTICES_PER_PE = 1024

PAGERANK_DAMPING = 0.85


# -- input generators --------------------------------------------------


def gen_text(seed: int, n_words: int, dictionary: list[bytes]) -> list[Record]:
    """``n_words`` uniform draws from the dictionary, packed 8 per line."""
    if not dictionary:
        raise ValueError("empty dictionary")
    rng = random.Random(seed)
    words = [dictionary[rng.randrange(len(dictionary))] for _ in range(n_words)]
    return [
        Record(b"", b" ".join(words[i : i + 8])) for i in range(0, len(words), 8)
    ]


def gen_gnm(seed: int, n: int, m: int) -> list[tuple[int, int]]:
    """``m`` uniform ordered pairs over ``n`` vertices, no self-loops,
    drawn with replacement."""
    if n < 2:
        raise ValueError("need at least two vertices")
    rng = random.Random(seed)
    edges = []
    for _ in range(m):
        u = rng.randrange(n)
        v = rng.randrange(n - 1)
        if v >= u:
            v += 1
        edges.append((u, v))
    return edges


def rmat_edge(rng: random.Random, scale: int, probs=RMAT_GRAPH500) -> tuple[int, int]:
    """One edge from the recursive quadrant process, most significant bit
    chosen first."""
    a, b, c, _d = probs
    u = v = 0
    for _ in range(scale):
        x = rng.random()
        if x < a:
            bits = (0, 0)
        elif x < a + b:
            bits = (0, 1)
        elif x < a + b + c:
            bits = (1, 0)
        else:
            bits = (1, 1)
        u = (u << 1) | bits[0]
        v = (v << 1) | bits[1]
    return u, v


def gen_rmat(seed: int, n: int, m: int, probs=RMAT_GRAPH500) -> list[tuple[int, int]]:
    """``m`` R-MAT edges over ``n`` vertices (``n`` a power of two)."""
    if n < 2 or n & (n - 1):
        raise ValueError(f"vertex count {n} must be a power of two")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise ValueError(f"quadrant probabilities {probs} do not sum to 1")
    rng = random.Random(seed)
    scale = n.bit_length() - 1
    return [rmat_edge(rng, scale, probs) for _ in range(m)]


def _per_pe_count(total: int, p: int, pe: int) -> int:
    return total // p + (1 if pe < total % p else 0)


# -- word count ---------------------------------------------------------


def default_dictionary(n_words: int) -> list[bytes]:
    return [b"w%05d" % i for i in range(n_words)]


def word_count_job(
    p: int, seed: int, *, words_per_pe: int = 10_000, dict_words: int = 1000
) -> Job:
    """One Map/Reduce step: split lines on ASCII whitespace, sum counts."""
    dictionary = default_dictionary(dict_words)

    def source(pe: int) -> list[Record]:
        return gen_text(mix_seed(seed, pe), words_per_pe, dictionary)

    def map_fn(rec: Record) -> list[Record]:
        one = U64.pack(1)
        return [Record(word, one) for word in rec.value.split()]

    def reduce_fn(key: bytes, values: list[bytes]) -> list[Record]:
        total = sum(U64.unpack(v)[0] for v in values)
        return [Record(key, U64.pack(total))]

    driver = ListDriver([StepSpec("wordcount", map_fn, reduce_fn)])
    return Job(RecordSource(source), driver)


# -- R-MAT deduplication ------------------------------------------------


def edge_key(u: int, v: int) -> bytes:
    """Orientation-free grouping key of an undirected edge."""
    return PAIR.pack(min(u, v), max(u, v))


class _RmatDedupDriver:
    """Rerun the dedup step until a round finds zero duplicates."""

    def __init__(self, make_spec, max_rounds: int = 100):
        self.make_spec = make_spec
        self.max_rounds = max_rounds

    def next_step(self, index, prev_aggregate):
        if index > 1 and prev_aggregate == 0:
            return None
        if index > self.max_rounds:
            raise RuntimeError(
                f"dedup failed to converge within {self.max_rounds} rounds"
            )
        return self.make_spec(index)


def rmat_dedup_job(
    p: int,
    seed: int,
    *,
    n_vertices: int,
    avg_degree: float = DEFAULT_DEGREES["rmat"],
    probs=RMAT_GRAPH500,
) -> Job:
    """Group edges by unordered endpoint pair; keep one copy per pair and
    redraw a fresh R-MAT edge for every duplicate, until no duplicates
    remain.  Output: one record per distinct pair, cardinality equal to
    the requested edge count."""
    n = n_vertices
    if n < 2 or n & (n - 1):
        raise ValueError(f"vertex count {n} must be a power of two")
    m = round(avg_degree * n / 2)
    distinct_pairs = n * (n + 1) // 2
    if m > distinct_pairs:
        raise ValueError(
            f"{m} edges cannot be distinct over {distinct_pairs} vertex pairs"
        )
    scale = n.bit_length() - 1

    def source(pe: int) -> list[Record]:
        edges = gen_rmat(mix_seed(seed, pe), n, _per_pe_count(m, p, pe), probs)
        return [Record(edge_key(u, v), PAIR.pack(u, v)) for (u, v) in edges]

    def map_fn(rec: Record) -> list[Record]:
        return [rec]

    def make_spec(step: int) -> StepSpec:
        def reduce_fn(key: bytes, values: list[bytes]) -> list[Record]:
            out = [Record(key, min(values))]
            for j in range(len(values) - 1):
                rng = random.Random(mix_seed(seed, 0xED6E, step, hash_key(key), j))
                u, v = rmat_edge(rng, scale, probs)
                out.append(Record(edge_key(u, v), PAIR.pack(u, v)))
            return out

        def counter_fn(key: bytes, values: list[bytes]) -> int:
            return len(values) - 1

        return StepSpec(f"dedup-{step}", map_fn, reduce_fn, counter_fn)

    return Job(RecordSource(source), _RmatDedupDriver(make_spec))


# -- connected components ----------------------------------------------

_MARKER = b""


def _neighbors(values: list[bytes]) -> tuple[list[int], bool]:
    """Distinct decoded neighbor ids (sorted) and a had-marker flag."""
    nbrs = set()
    marker = False
    for v in values:
        if v == _MARKER:
            marker = True
        else:
            nbrs.add(U64.unpack(v)[0])
    return sorted(nbrs), marker


def _cc_large_spec() -> StepSpec:
    def map_fn(rec: Record) -> list[Record]:
        if rec.value == _MARKER:
            return [rec]
        (u,) = U64.unpack(rec.key)
        (v,) = U64.unpack(rec.value)
        return [Record(rec.key, rec.value), Record(rec.value, rec.key)]

    def reduce_fn(key: bytes, values: list[bytes]) -> list[Record]:
        (u,) = U64.unpack(key)
        nbrs, marker = _neighbors(values)
        ell = min(nbrs + [u])
        out = [Record(U64.pack(ell), U64.pack(v)) for v in nbrs if v > u]
        if marker:
            out.append(Record(key, _MARKER))
        return out

    def counter_fn(key: bytes, values: list[bytes]) -> int:
        (u,) = U64.unpack(key)
        nbrs, _ = _neighbors(values)
        if not nbrs or min(nbrs + [u]) == u:
            return 0
        return sum(1 for v in nbrs if v > u)

    return StepSpec("cc-large-star", map_fn, reduce_fn, counter_fn)


def _cc_small_spec() -> StepSpec:
    def map_fn(rec: Record) -> list[Record]:
        if rec.value == _MARKER:
            return [rec]
        (u,) = U64.unpack(rec.key)
        (v,) = U64.unpack(rec.value)
        hi, lo = (u, v) if u > v else (v, u)
        return [Record(U64.pack(hi), U64.pack(lo))]

    def reduce_fn(key: bytes, values: list[bytes]) -> list[Record]:
        (u,) = U64.unpack(key)
        nbrs, marker = _neighbors(values)
        out = []
        if nbrs:
            ell = min(nbrs)
            for v in sorted(set(nbrs + [u]) - {ell}):
                out.append(Record(U64.pack(ell), U64.pack(v)))
        if marker:
            out.append(Record(key, _MARKER))
        return out

    def counter_fn(key: bytes, values: list[bytes]) -> int:
        nbrs, _ = _neighbors(values)
        if not nbrs:
            return 0
        return len(set(nbrs) - {min(nbrs)})

    return StepSpec("cc-small-star", map_fn, reduce_fn, counter_fn)


def _cc_extract_spec() -> StepSpec:
    def map_fn(rec: Record) -> list[Record]:
        if rec.value == _MARKER:
            return [Record(rec.key, rec.key)]
        return [Record(rec.value, rec.key), Record(rec.key, rec.key)]

    def reduce_fn(key: bytes, values: list[bytes]) -> list[Record]:
        rep = min(U64.unpack(v)[0] for v in values)
        return [Record(key, U64.pack(rep))]

    return StepSpec("cc-extract", map_fn, reduce_fn)


class _CcDriver:
    """Alternate large-star and small-star until one full round changes
    nothing, then run one extraction step mapping every vertex to its
    component minimum."""

    def __init__(self, max_rounds: int = 100):
        self.max_rounds = max_rounds
        self.last: str | None = None
        self.large_changes = 0
        self.rounds = 0

    def next_step(self, index, prev_aggregate):
        if self.last == "extract":
            return None
        if self.last == "large":
            self.large_changes = prev_aggregate
            self.last = "small"
            return _cc_small_spec()
        if self.last == "small" and self.large_changes + prev_aggregate == 0:
            self.last = "extract"
            return _cc_extract_spec()
        self.rounds += 1
        if self.rounds > self.max_rounds:
            raise RuntimeError(
                f"components failed to converge within {self.max_rounds} rounds"
            )
        self.last = "large"
        return _cc_large_spec()


def connected_components_job(
    p: int,
    seed: int,
    *,
    n_vertices: int,
    avg_degree: float = DEFAULT_DEGREES["cc"],
) -> Job:
    """Undirected components; output one (vertex, representative) record
    per vertex, the representative being the component's minimum id.
    Isolated vertices ride along as marker records so they still report
    themselves."""
    n = n_vertices
    m = round(avg_degree * n / 2)

    def source(pe: int) -> list[Record]:
        lo = pe * n // p
        hi = (pe + 1) * n // p
        records = [Record(U64.pack(v), _MARKER) for v in range(lo, hi)]
        for u, v in gen_gnm(mix_seed(seed, pe), n, _per_pe_count(m, p, pe)):
            records.append(Record(U64.pack(u), U64.pack(v)))
        return records

    return Job(RecordSource(source), _CcDriver())


# -- PageRank -----------------------------------------------------------

_TAG_COMBINED = b"c"
_TAG_SCORE = b"s"
_TAG_DANGLING = b"d"
_TAG_ADJ = b"a"


@lru_cache(maxsize=32)
def _pagerank_adjacency(seed: int, n: int, m: int) -> tuple[tuple[int, ...], ...]:
    """Out-adjacency of the seeded digraph, parallel edges preserved."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in gen_gnm(mix_seed(seed, 0x96A9), n, m):
        adj[u].append(v)
    return tuple(tuple(sorted(out)) for out in adj)


def pagerank_job(
    p: int,
    seed: int,
    *,
    n_vertices: int,
    avg_degree: float = DEFAULT_DEGREES["pagerank"],
    iterations: int = 100,
    damping: float = PAGERANK_DAMPING,
) -> Job:
    """Power iteration with damping 0.85; a dangling vertex fans its mass
    out uniformly so the scores keep summing to one."""
    n = n_vertices
    m = round(avg_degree * n / 2)

    def source(pe: int) -> list[Record]:
        adj = _pagerank_adjacency(seed, n, m)
        lo = pe * n // p
        hi = (pe + 1) * n // p
        init = F64.pack(1.0 / n)
        return [
            Record(
                U64.pack(v),
                _TAG_COMBINED + init + b"".join(U64.pack(w) for w in adj[v]),
            )
            for v in range(lo, hi)
        ]

    def map_fn(rec: Record) -> list[Record]:
        body = rec.value
        if body[:1] != _TAG_COMBINED:
            raise ValueError("pagerank map expects combined score+adjacency records")
        (score,) = F64.unpack(body[1:9])
        adj_bytes = body[9:]
        out = [Record(rec.key, _TAG_ADJ + adj_bytes)]
        if adj_bytes:
            outdeg = len(adj_bytes) // 8
            share = F64.pack(score / outdeg)
            for i in range(outdeg):
                out.append(Record(adj_bytes[i * 8 : (i + 1) * 8], _TAG_SCORE + share))
        else:
            share = F64.pack(score / n)
            for w in range(n):
                out.append(Record(U64.pack(w), _TAG_DANGLING + share))
        return out

    def reduce_fn(key: bytes, values: list[bytes]) -> list[Record]:
        total = 0.0
        adj_bytes = None
        for val in values:
            tag = val[:1]
            if tag == _TAG_ADJ:
                if adj_bytes is not None:
                    raise ValueError(f"duplicate adjacency for vertex key {key!r}")
                adj_bytes = val[1:]
            else:
                total += F64.unpack(val[1:9])[0]
        if adj_bytes is None:
            raise ValueError(f"no adjacency arrived for vertex key {key!r}")
        score = (1.0 - damping) / n + damping * total
        return [Record(key, _TAG_COMBINED + F64.pack(score) + adj_bytes)]

    spec = StepSpec("pagerank", map_fn, reduce_fn)
    driver = ListDriver([spec] * iterations)
    return Job(RecordSource(source), driver)


def pagerank_scores(outputs: dict[int, list[Record]]) -> dict[int, float]:
    """Decode per-vertex scores from a finished PageRank run."""
    scores = {}
    for records in outputs.values():
        for rec in records:
            (v,) = U64.unpack(rec.key)
            (score,) = F64.unpack(rec.value[1:9])
            scores[v] = score
    return scores


# -- synthetic uniform workload (overhead measurements) -----------------


def uniform_job(p: int, seed: int, *, total_records: int) -> Job:
    """Single pass-through step over uniformly random 8-byte keys; used to
    measure backup traffic against shuffle traffic."""

    def source(pe: int) -> list[Record]:
        rng = random.Random(mix_seed(seed, pe))
        return [
            Record(rng.getrandbits(64).to_bytes(8, "little"),
                   rng.getrandbits(64).to_bytes(8, "little"))
            for _ in range(_per_pe_count(total_records, p, pe))
        ]

    def map_fn(rec: Record) -> list[Record]:
        return [rec]

    def reduce_fn(key: bytes, values: list[bytes]) -> list[Record]:
        return [Record(key, v) for v in values]

    return Job(RecordSource(source), ListDriver([StepSpec("uniform", map_fn, reduce_fn)]))


# -- dispatch -----------------------------------------------------------

BENCHMARKS = ("wordcount", "rmat", "cc", "pagerank")


def make_job(
    benchmark: str,
    p: int,
    seed: int,
    *,
    iterations: int = 100,
    vertices_per_pe: int = DEFAULT_VERTICES_PER_PE,
    avg_degree: float | None = None,
    words_per_pe: int = 10_000,
    dict_words: int = 1000,
) -> Job:
    """Build a benchmark job from scale parameters."""
    n = vertices_per_pe * p
    if benchmark == "wordcount":
        return word_count_job(p, seed, words_per_pe=words_per_pe, dict_words=dict_words)
    if benchmark == "rmat":
        return rmat_dedup_job(
            p, seed, n_vertices=n, avg_degree=avg_degree or DEFAULT_DEGREES["rmat"]
        )
    if benchmark == "cc":
        return connected_components_job(
            p, seed, n_vertices=n, avg_degree=avg_degree or DEFAULT_DEGREES["cc"]
        )
    if benchmark == "pagerank":
        return pagerank_job(
            p,
            seed,
            n_vertices=n,
            avg_degree=avg_degree or DEFAULT_DEGREES["pagerank"],
            iterations=iterations,
        )
    raise ValueError(f"unknown benchmark {benchmark!r}; pick one of {BENCHMARKS}")
