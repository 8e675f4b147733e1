"""Conflict-free access scheduling for groups of sparse spectral kernels.

Parallel kernels read a shared input-tile buffer that holds ``r`` replicas,
so one cycle can serve at most ``r`` distinct addresses (C2) and at most one
entry per kernel (C1). A schedule partitions the full (kernel, index) edge
set into cycles obeying both constraints; fewer cycles means higher PE
utilization. Finding the minimum-length schedule is an exact-cover problem,
so the production scheduler is a greedy heuristic; an exhaustive
branch-and-bound oracle exists for desk-scale instances.

Schedulers are pure functions of their inputs. Kernels are numbered by
their position in the group (the ``out_ch`` order of the kernel set).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from random import Random

import numpy as np

from .netmodel import SparseKernel, SparseKernelSet


class InstanceTooLarge(ValueError):
    """Brute-force oracle refused an instance beyond its search guard."""


@dataclass(frozen=True)
class AccessGraph:
    """Bipartite access pattern: one edge per kernel nonzero entry."""

    kernel_indices: tuple
    n_indices: int

    def __post_init__(self):
        for k, idxs in enumerate(self.kernel_indices):
            if len(set(idxs)) != len(idxs):
                raise ValueError(f"kernel {k} has duplicate indices")
            if idxs and (min(idxs) < 0 or max(idxs) >= self.n_indices):
                raise ValueError(f"kernel {k} has indices outside [0, {self.n_indices})")

    @property
    def n_kernels(self):
        return len(self.kernel_indices)

    @property
    def n_edges(self):
        return sum(len(idxs) for idxs in self.kernel_indices)

    def edges(self):
        """All (kernel, index) pairs, kernel-major."""
        return [(k, i) for k, idxs in enumerate(self.kernel_indices) for i in idxs]

    def degree(self, index):
        """Number of kernels holding an edge to this index node."""
        return sum(1 for idxs in self.kernel_indices if index in idxs)


def build_graph(kernels, n_indices=None):
    """Build the bipartite access graph for one kernel group.

    Accepts a SparseKernelSet (single input channel), a sequence of
    SparseKernel objects sharing one input channel, or raw index iterables.
    """
    if isinstance(kernels, SparseKernelSet):
        if kernels.n_channels != 1:
            raise ValueError("pass kernels for exactly one input channel")
        seq = kernels.channel(0)
        n_indices = n_indices or kernels.fft_size * kernels.fft_size
    else:
        seq = list(kernels)
    if seq and isinstance(seq[0], SparseKernel):
        chans = {kr.in_ch for kr in seq}
        if len(chans) > 1:
            raise ValueError(f"kernels span input channels {sorted(chans)}")
        rows = tuple(tuple(kr.indices.tolist()) for kr in seq)
    else:
        rows = tuple(tuple(sorted(set(map(int, row)))) for row in seq)
    if n_indices is None:
        n_indices = 1 + max((max(row) for row in rows if row), default=0)
    return AccessGraph(rows, n_indices)


@dataclass(frozen=True)
class ScheduleCycle:
    """One cycle: served (kernel, index) pairs with distinct kernels (C1)
    and at most r distinct indices (C2)."""

    pairs: tuple

    @property
    def distinct_indices(self):
        return tuple(sorted({i for _, i in self.pairs}))

    @property
    def kernels(self):
        return tuple(k for k, _ in self.pairs)


@dataclass(frozen=True)
class Schedule:
    """Ordered cycles forming an exact cover of the access graph."""

    cycles: tuple
    n_par: int
    replicas: int
    source: str = ""

    @property
    def n_cycles(self):
        return len(self.cycles)

    @property
    def n_pairs(self):
        return sum(len(c.pairs) for c in self.cycles)

    def validate(self, graph):
        """Raise unless this is an exact cover obeying C1 and C2."""
        seen = set()
        for t, cyc in enumerate(self.cycles):
            kernels = [k for k, _ in cyc.pairs]
            if len(set(kernels)) != len(kernels):
                raise ValueError(f"cycle {t}: duplicate kernel (C1 violated)")
            if len(set(i for _, i in cyc.pairs)) > self.replicas:
                raise ValueError(f"cycle {t}: more than {self.replicas} indices (C2 violated)")
            for pair in cyc.pairs:
                if pair in seen:
                    raise ValueError(f"edge {pair} scheduled twice")
                seen.add(pair)
        expect = set(graph.edges())
        if seen != expect:
            missing = sorted(expect - seen)[:4]
            extra = sorted(seen - expect)[:4]
            raise ValueError(f"not an exact cover (missing {missing}, extra {extra})")

    def to_dict(self):
        return {
            "n_par": self.n_par,
            "replicas": self.replicas,
            "source": self.source,
            "cycles": [[list(p) for p in c.pairs] for c in self.cycles],
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        cycles = tuple(
            ScheduleCycle(tuple((int(k), int(i)) for k, i in pairs)) for pairs in d["cycles"]
        )
        return cls(cycles, int(d["n_par"]), int(d["replicas"]), d.get("source", ""))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_bytes(self):
        """Flat little-endian layout: magic, n_par u16, r u16, n_cycles u32,
        then per cycle a u16 pair count followed by u16 kernel/index pairs."""
        out = [b"SKSC", struct.pack("<HHI", self.n_par, self.replicas, self.n_cycles)]
        for cyc in self.cycles:
            out.append(struct.pack("<H", len(cyc.pairs)))
            for k, i in cyc.pairs:
                out.append(struct.pack("<HH", k, i))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob):
        if blob[:4] != b"SKSC":
            raise ValueError("bad schedule magic")
        n_par, replicas, n_cycles = struct.unpack_from("<HHI", blob, 4)
        off = 12
        cycles = []
        for _ in range(n_cycles):
            (count,) = struct.unpack_from("<H", blob, off)
            off += 2
            pairs = []
            for _ in range(count):
                k, i = struct.unpack_from("<HH", blob, off)
                off += 4
                pairs.append((k, i))
            cycles.append(ScheduleCycle(tuple(pairs)))
        return cls(tuple(cycles), n_par, replicas)


class _State:
    """Mutable remaining-edge state shared by the schedulers."""

    def __init__(self, graph):
        self.n_kernels = graph.n_kernels
        self.n_indices = graph.n_indices
        # Bitmask of kernels still holding an edge to each index.
        self.idx_kern = [0] * graph.n_indices
        # Sorted remaining index list per kernel.
        self.kern_idx = [set(idxs) for idxs in graph.kernel_indices]
        for k, idxs in enumerate(graph.kernel_indices):
            for i in idxs:
                self.idx_kern[i] |= 1 << k
        self.edges_left = graph.n_edges

    def active_mask(self):
        mask = 0
        for k, rem in enumerate(self.kern_idx):
            if rem:
                mask |= 1 << k
        return mask

    def remove(self, pairs):
        for k, i in pairs:
            self.kern_idx[k].discard(i)
            self.idx_kern[i] &= ~(1 << k)
        self.edges_left -= len(pairs)


def _assign_pairs(state, chosen):
    """Assign each covered kernel one edge into the chosen index set.

    Kernels covered by several chosen indices take the one with the lowest
    remaining degree (ties to the lowest index), sparing high-degree index
    nodes for later cycles.
    """
    by_degree = sorted(chosen, key=lambda j: (state.idx_kern[j].bit_count(), j))
    pairs = []
    taken = 0
    for j in by_degree:
        avail = state.idx_kern[j] & ~taken
        k = 0
        while avail:
            if avail & 1:
                pairs.append((k, j))
                taken |= 1 << k
            avail >>= 1
            k += 1
    pairs.sort()
    return tuple(pairs)


def schedule_greedy(graph, r, n_par):
    """Exact-cover style greedy scheduler.

    Each cycle builds one candidate index set per remaining index (seeded in
    descending degree order, extended by up to r - 1 more indices that
    maximize newly covered kernels). If some candidate covers every kernel
    that still has edges, the full-coverage candidate whose indices have the
    smallest total remaining degree wins (high-degree index nodes are left
    for later cycles); otherwise the candidate covering the most kernels
    wins. Deterministic: ties break on lowest index, then lowest kernel id.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    state = _State(graph)
    cycles = []
    while state.edges_left:
        active = state.active_mask()
        live = [j for j in range(state.n_indices) if state.idx_kern[j]]
        degree = {j: state.idx_kern[j].bit_count() for j in live}
        seeds = sorted(live, key=lambda j: (-degree[j], j))
        candidates = []
        seen_sets = set()
        for seed in seeds:
            chosen = [seed]
            covered = state.idx_kern[seed]
            while len(chosen) < r and covered != active:
                best_j, best_gain = None, 0
                inv = ~covered
                for j in live:
                    if j in chosen:
                        continue
                    gain = (state.idx_kern[j] & inv).bit_count()
                    if gain > best_gain:
                        best_j, best_gain = j, gain
                if best_j is None:
                    break
                chosen.append(best_j)
                covered |= state.idx_kern[best_j]
            key = frozenset(chosen)
            if key in seen_sets:
                continue
            seen_sets.add(key)
            candidates.append((tuple(sorted(chosen)), covered))
        full = [c for c in candidates if c[1] == active]
        if full:
            chosen, _ = min(full, key=lambda c: (sum(degree[j] for j in c[0]), c[0]))
        else:
            chosen, _ = min(
                candidates,
                key=lambda c: (-c[1].bit_count(), sum(degree[j] for j in c[0]), c[0]),
            )
        pairs = _assign_pairs(state, chosen)
        state.remove(pairs)
        cycles.append(ScheduleCycle(pairs))
    return Schedule(tuple(cycles), n_par, r, source="greedy")


def schedule_lowest_index(graph, r, n_par):
    """Baseline: every kernel proposes its lowest unprocessed index; accept
    proposals in increasing index order until r distinct indices are in
    flight. Kernels whose proposal was already accepted join for free."""
    if r < 1:
        raise ValueError("r must be >= 1")
    state = _State(graph)
    cycles = []
    while state.edges_left:
        proposals = {k: min(rem) for k, rem in enumerate(state.kern_idx) if rem}
        accepted = sorted(set(proposals.values()))[:r]
        accepted_set = set(accepted)
        pairs = tuple(
            (k, i) for k, i in sorted(proposals.items()) if i in accepted_set
        )
        state.remove(pairs)
        cycles.append(ScheduleCycle(pairs))
    return Schedule(tuple(cycles), n_par, r, source="lowest-index")


def schedule_random(graph, r, n_par, seed):
    """Baseline: random (kernel, index) picks join the cycle while they fit;
    the first pick that would exceed r distinct indices ends the cycle."""
    if r < 1:
        raise ValueError("r must be >= 1")
    rng = Random(seed)
    state = _State(graph)
    cycles = []
    while state.edges_left:
        pairs = []
        used = set()
        idxset = set()
        while True:
            avail = [k for k, rem in enumerate(state.kern_idx) if rem and k not in used]
            if not avail:
                break
            k = rng.choice(avail)
            i = rng.choice(sorted(state.kern_idx[k]))
            if i not in idxset and len(idxset) >= r:
                break
            pairs.append((k, i))
            used.add(k)
            idxset.add(i)
        pairs = tuple(sorted(pairs))
        state.remove(pairs)
        cycles.append(ScheduleCycle(pairs))
    return Schedule(tuple(cycles), n_par, r, source=f"random-{seed}")


def utilization(schedule, n_par, p_par=1):
    """Fraction of PE-cycles doing useful work.

    Each cycle's pair set is broadcast to all parallel input tiles, so the
    tile parallelism cancels out of the ratio.
    """
    if schedule.n_cycles == 0:
        return 1.0
    return schedule.n_pairs * p_par / (schedule.n_cycles * n_par * p_par)


_BRUTE_FORCE_EDGE_GUARD = 24


def _feasible_sets_with_pivot(remaining_by_kernel, pivot, r):
    """All maximal C1/C2-feasible pair sets containing the pivot edge.

    Maximality is safe for minimum partition search: any optimal partition
    can be rearranged so the cycle holding the pivot is maximal, because
    C1/C2 feasibility is closed under taking subsets.
    """
    pivot_k, pivot_i = pivot
    kernel_ids = [k for k, rem in remaining_by_kernel.items() if rem and k != pivot_k]
    results = []

    def extend(pos, idxset, pairs):
        if pos == len(kernel_ids):
            results.append((frozenset(pairs), frozenset(idxset)))
            return
        k = kernel_ids[pos]
        for i in sorted(remaining_by_kernel[k]):
            if i in idxset:
                extend(pos + 1, idxset, pairs + [(k, i)])
            elif len(idxset) < r:
                extend(pos + 1, idxset | {i}, pairs + [(k, i)])
        # Also leave k out: a later kernel may need the replica budget, and
        # the maximality filter below drops sets where k could still fit.
        extend(pos + 1, idxset, pairs)

    extend(0, {pivot_i}, [(pivot_k, pivot_i)])
    # Keep only maximal sets: no unused kernel may still fit.
    maximal = []
    for pairs, idxset in results:
        used = {k for k, _ in pairs}
        ok = True
        for k, rem in remaining_by_kernel.items():
            if k in used or not rem:
                continue
            if any(i in idxset for i in rem) or len(idxset) < r:
                ok = False
                break
        if ok:
            maximal.append(pairs)
    # Deduplicate while keeping deterministic order.
    maximal = sorted(set(maximal), key=lambda s: sorted(s))
    return maximal


def schedule_bruteforce(graph, r, n_par):
    """Optimality oracle: exhaustive branch-and-bound over cycle partitions.

    Returns (minimum cycle count, one minimum-length schedule). Guarded to
    at most 24 edges; raises InstanceTooLarge beyond that.
    """
    if graph.n_edges > _BRUTE_FORCE_EDGE_GUARD:
        raise InstanceTooLarge(
            f"{graph.n_edges} edges exceed the {_BRUTE_FORCE_EDGE_GUARD}-edge guard"
        )
    seed_schedule = schedule_greedy(graph, r, n_par)
    best = {"count": seed_schedule.n_cycles, "cycles": [c.pairs for c in seed_schedule.cycles]}
    visited = {}

    def lower_bound(by_kernel):
        return max((len(rem) for rem in by_kernel.values()), default=0)

    def search(by_kernel, edges_left, depth, path):
        if edges_left == 0:
            if depth < best["count"]:
                best["count"] = depth
                best["cycles"] = list(path)
            return
        if depth + lower_bound(by_kernel) >= best["count"]:
            return
        key = frozenset((k, i) for k, rem in by_kernel.items() for i in rem)
        prev = visited.get(key)
        if prev is not None and prev <= depth:
            return
        visited[key] = depth
        pivot = min(key)
        for pairs in _feasible_sets_with_pivot(by_kernel, pivot, r):
            nxt = {k: set(rem) for k, rem in by_kernel.items()}
            for k, i in pairs:
                nxt[k].discard(i)
            search(nxt, edges_left - len(pairs), depth + 1, path + [tuple(sorted(pairs))])

    by_kernel = {k: set(idxs) for k, idxs in enumerate(graph.kernel_indices)}
    search(by_kernel, graph.n_edges, 0, [])
    cycles = tuple(ScheduleCycle(tuple(sorted(p))) for p in best["cycles"])
    sched = Schedule(cycles, n_par, r, source="bruteforce")
    sched.validate(graph)
    return best["count"], sched


@dataclass(frozen=True)
class IndexValueTables:
    """Hardware table pair: per-cycle replica addresses plus per-lane
    (value, sel, valid) records.

    ``index_table`` holds up to r tile-buffer addresses per cycle (-1 marks
    an unused slot); each valid lane's ``sel`` points at the slot serving
    its scheduled index. sel needs ceil(log2 r) bits, valid one bit.
    """

    index_table: np.ndarray
    values: np.ndarray
    sel: np.ndarray
    valid: np.ndarray

    @property
    def n_cycles(self):
        return self.index_table.shape[0]

    @property
    def replicas(self):
        return self.index_table.shape[1]

    @property
    def n_lanes(self):
        return self.values.shape[1]

    def replay(self):
        """Reconstruct the scheduled (kernel, index, value) multiset."""
        out = []
        for t in range(self.n_cycles):
            for lane in range(self.n_lanes):
                if self.valid[t, lane]:
                    idx = int(self.index_table[t, self.sel[t, lane]])
                    out.append((lane, idx, complex(self.values[t, lane])))
        out.sort(key=lambda e: (e[0], e[1]))
        return out

    def to_dict(self):
        return {
            "index_table": self.index_table.tolist(),
            "values": [[[v.real, v.imag] for v in row] for row in self.values],
            "sel": self.sel.tolist(),
            "valid": self.valid.tolist(),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def to_bytes(self):
        """Little-endian per-cycle records: r index slots (u16, 0xFFFF for
        unused) then per lane valid u8, sel u8, value as two f64."""
        t, r = self.index_table.shape
        lanes = self.values.shape[1]
        out = [b"SKTB", struct.pack("<IHH", t, r, lanes)]
        for ti in range(t):
            for slot in self.index_table[ti]:
                out.append(struct.pack("<H", 0xFFFF if slot < 0 else int(slot)))
            for lane in range(lanes):
                v = self.values[ti, lane]
                out.append(
                    struct.pack(
                        "<BBdd", int(self.valid[ti, lane]), int(self.sel[ti, lane]),
                        v.real, v.imag,
                    )
                )
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob):
        if blob[:4] != b"SKTB":
            raise ValueError("bad table magic")
        t, r, lanes = struct.unpack_from("<IHH", blob, 4)
        off = 12
        index_table = np.full((t, r), -1, dtype=np.int32)
        values = np.zeros((t, lanes), dtype=np.complex128)
        sel = np.zeros((t, lanes), dtype=np.uint8)
        valid = np.zeros((t, lanes), dtype=bool)
        for ti in range(t):
            for slot in range(r):
                (raw,) = struct.unpack_from("<H", blob, off)
                off += 2
                index_table[ti, slot] = -1 if raw == 0xFFFF else raw
            for lane in range(lanes):
                v, s, re, im = struct.unpack_from("<BBdd", blob, off)
                off += 18
                valid[ti, lane] = bool(v)
                sel[ti, lane] = s
                values[ti, lane] = complex(re, im)
        return cls(index_table, values, sel, valid)


def emit_tables(schedule, kernels):
    """Split a schedule into the INDEX and VALUE hardware tables.

    ``kernels`` supplies the complex value for each scheduled (kernel,
    index) pair; the schedule must cover exactly the kernels' entries.
    """
    if isinstance(kernels, SparseKernelSet):
        if kernels.n_channels != 1:
            raise ValueError("pass kernels for exactly one input channel")
        seq = kernels.channel(0)
    else:
        seq = list(kernels)
    lookup = {}
    for lane, kr in enumerate(seq):
        for idx, val in zip(kr.indices.tolist(), kr.values.tolist()):
            lookup[(lane, idx)] = val
    if schedule.n_pairs != len(lookup):
        raise ValueError(
            f"schedule covers {schedule.n_pairs} pairs, kernels hold {len(lookup)}"
        )
    t, r, lanes = schedule.n_cycles, schedule.replicas, schedule.n_par
    index_table = np.full((t, r), -1, dtype=np.int32)
    values = np.zeros((t, lanes), dtype=np.complex128)
    sel = np.zeros((t, lanes), dtype=np.uint8)
    valid = np.zeros((t, lanes), dtype=bool)
    for ti, cyc in enumerate(schedule.cycles):
        slots = {idx: s for s, idx in enumerate(cyc.distinct_indices)}
        for idx, s in slots.items():
            index_table[ti, s] = idx
        for k, idx in cyc.pairs:
            if (k, idx) not in lookup:
                raise ValueError(f"scheduled pair ({k}, {idx}) is not a kernel entry")
            if k >= lanes:
                raise ValueError(f"kernel id {k} exceeds the {lanes} lanes")
            values[ti, k] = lookup[(k, idx)]
            sel[ti, k] = slots[idx]
            valid[ti, k] = True
    return IndexValueTables(index_table, values, sel, valid)
