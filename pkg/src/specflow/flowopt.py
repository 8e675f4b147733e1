"""Heuristic search over architecture and streaming parameters.

The optimizer scans (p_par, n_par) architecture candidates; for each layer it
scans streaming parameters (ps, ns), gates every candidate by its BRAM
requirement against the device budget, keeps the feasible candidate with the
lowest bandwidth, and finally returns the architecture minimizing the
worst-layer bandwidth. The three fixed flows are evaluated as candidates
alongside the flexible flow; the flexible flow contains flows 1 and 2 as
extreme streaming settings, so it dominates wherever its buffers fit.

Ties break deterministically: smaller n_par, then smaller p_par, then
smaller ns, then smaller ps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import ceil

from . import complexity
from .complexity import ArchParams, StreamParams
from .netmodel import tile_grid


class InfeasibleError(RuntimeError):
    """No parameter choice fits the BRAM budget for some layer."""

    def __init__(self, layer, budget):
        self.layer = layer
        self.budget = budget
        super().__init__(f"layer {layer!r}: no flow fits within {budget} BRAMs")


@dataclass(frozen=True)
class SearchSpace:
    """Candidate architecture and streaming parameters plus device limits.

    ``ps_candidates``/``ns_candidates`` may pin explicit per-layer candidate
    lists (layer name to list); by default every multiple of the parallelism
    degree up to the layer's padded tile/kernel count is tried.
    """

    p_par_candidates: tuple
    n_par_candidates: tuple
    bram_budget: int
    tau_total: float
    replicas: int = 1
    ps_candidates: dict | None = None
    ns_candidates: dict | None = None

    def __post_init__(self):
        if not self.p_par_candidates or not self.n_par_candidates:
            raise ValueError("candidate lists must be nonempty")
        if self.bram_budget < 1:
            raise ValueError("bram_budget must be positive")

    def layer_ps(self, layer, spectral, p_par):
        if self.ps_candidates and layer.name in self.ps_candidates:
            return [ps for ps in self.ps_candidates[layer.name] if ps % p_par == 0]
        _, _, p = tile_grid(layer, spectral)
        top = ceil(p / p_par) * p_par
        return list(range(p_par, top + 1, p_par))

    def layer_ns(self, layer, n_par):
        if self.ns_candidates and layer.name in self.ns_candidates:
            return [ns for ns in self.ns_candidates[layer.name] if ns % n_par == 0]
        top = ceil(layer.out_channels / n_par) * n_par
        return list(range(n_par, top + 1, n_par))


def default_search_space(bram_budget, tau_total, replicas=10):
    """The stock search space: it covers the interesting region for small
    FFT windows while keeping the scan to a few seconds."""
    return SearchSpace(
        p_par_candidates=(4, 8, 9, 16),
        n_par_candidates=(16, 32, 64, 128),
        bram_budget=bram_budget,
        tau_total=tau_total,
        replicas=replicas,
    )


@dataclass(frozen=True)
class FlowChoice:
    """The flow selected for one layer: id, streaming params, cost."""

    layer: str
    flow: str
    stream: StreamParams | None
    n_bram: int
    bw: float
    report: complexity.CostReport

    def to_dict(self):
        return {
            "layer": self.layer,
            "flow": self.flow,
            "ps": self.stream.ps if self.stream else None,
            "ns": self.stream.ns if self.stream else None,
            "n_bram": self.n_bram,
            "bw_gbps": self.bw / 1e9,
            "transfers_in": self.report.transfers_in,
            "transfers_kernel": self.report.transfers_kernel,
            "transfers_out": self.report.transfers_out,
            "tau_s": self.report.tau_s,
            "word_bits": self.report.word_bits,
        }


@dataclass(frozen=True)
class OptResult:
    """Optimizer output: architecture, per-layer choices, worst bandwidth."""

    arch: ArchParams
    per_layer: tuple
    bw_max: float

    @property
    def total_transfer_elements(self):
        return sum(
            c.report.transfers_in + c.report.transfers_kernel + c.report.transfers_out
            for c in self.per_layer
        )

    def choice(self, layer_name):
        for c in self.per_layer:
            if c.layer == layer_name:
                return c
        raise KeyError(layer_name)

    def to_dict(self):
        return {
            "arch": {
                "p_par": self.arch.p_par,
                "n_par": self.arch.n_par,
                "m_par": self.arch.m_par,
                "replicas": self.arch.replicas,
            },
            "bw_max_gbps": self.bw_max / 1e9,
            "per_layer": [c.to_dict() for c in self.per_layer],
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        arch = ArchParams(**d["arch"])
        choices = []
        for c in d["per_layer"]:
            stream = None
            if c["ps"] is not None:
                stream = StreamParams(ps=c["ps"], ns=c["ns"])
            rep = complexity.CostReport(
                layer=c["layer"],
                flow=c["flow"],
                n_bram=c["n_bram"],
                transfers_in=c["transfers_in"],
                transfers_kernel=c["transfers_kernel"],
                transfers_out=c["transfers_out"],
                tau_s=c["tau_s"],
                word_bits=c.get("word_bits", 16),
                out_words=2 if c["flow"] == "flow3" else 1,
            )
            choices.append(
                FlowChoice(c["layer"], c["flow"], stream, c["n_bram"],
                           c["bw_gbps"] * 1e9, rep)
            )
        return cls(arch, tuple(choices), d["bw_max_gbps"] * 1e9)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def csv_rows(self):
        """Table-shaped rows: one line per layer with its streaming params."""
        yield "layer,ps,ns,flow,n_bram,bw_gbps"
        for c in self.per_layer:
            ps = c.stream.ps if c.stream else ""
            ns = c.stream.ns if c.stream else ""
            yield f"{c.layer},{ps},{ns},{c.flow},{c.n_bram},{c.bw / 1e9:.6g}"


def best_layer_choice(layer, spectral, space, arch, tau_i):
    """Minimum-bandwidth feasible candidate for one layer, or None."""
    best = None
    for ns in space.layer_ns(layer, arch.n_par):
        for ps in space.layer_ps(layer, spectral, arch.p_par):
            stream = StreamParams(ps=ps, ns=ns)
            n_bram = complexity.bram_flexible(layer, spectral, arch, stream)
            if n_bram >= space.bram_budget:
                continue
            rep = complexity.bandwidth_flexible(layer, spectral, arch, stream, tau_i)
            if best is None or rep.bw_bytes_per_s < best.bw:
                best = FlowChoice(layer.name, "flexible", stream, n_bram,
                                  rep.bw_bytes_per_s, rep)
    for flow in complexity.FLOW_IDS:
        n_bram = complexity.bram_count(layer, spectral, arch, flow)
        if n_bram >= space.bram_budget:
            continue
        rep = complexity.bandwidth(layer, spectral, arch, flow, tau_i)
        if best is None or rep.bw_bytes_per_s < best.bw:
            best = FlowChoice(layer.name, flow, None, n_bram, rep.bw_bytes_per_s, rep)
    return best


def optimize(model, space):
    """Scan architectures and streaming parameters, minimize worst-layer bw.

    Layers flagged skip_opt are excluded. Raises InfeasibleError naming the
    first layer that fits no candidate at any architecture.
    """
    layers = model.optimized_layers()
    if not layers:
        raise ValueError("model has no optimizable layers")
    latency = complexity.latency_budget(model, space.tau_total)
    best_result = None
    blocked_layer = None
    for n_par in sorted(space.n_par_candidates):
        for p_par in sorted(space.p_par_candidates):
            arch = ArchParams(p_par=p_par, n_par=n_par, replicas=space.replicas)
            choices = []
            for layer in layers:
                choice = best_layer_choice(
                    layer, model.spectral, space, arch, latency.tau(layer.name)
                )
                if choice is None:
                    blocked_layer = layer.name
                    choices = None
                    break
                choices.append(choice)
            if choices is None:
                continue
            bw_max = max(c.bw for c in choices)
            if best_result is None or bw_max < best_result.bw_max:
                best_result = OptResult(arch, tuple(choices), bw_max)
    if best_result is None:
        raise InfeasibleError(blocked_layer, space.bram_budget)
    return best_result


def evaluate_fixed_flows(model, arch, tau_total, include_skipped=False):
    """Per-layer CostReport triplet (flow 1, 2, 3) for comparison plots."""
    latency = complexity.latency_budget(model, tau_total)
    layers = model.layers if include_skipped else model.optimized_layers()
    out = {}
    for layer in layers:
        out[layer.name] = tuple(
            complexity.bandwidth(layer, model.spectral, arch, flow, latency.tau(layer.name))
            for flow in complexity.FLOW_IDS
        )
    return out
