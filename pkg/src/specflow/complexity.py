"""Closed-form on-chip storage (BRAM) and off-chip bandwidth models.

Three fixed reuse strategies are modeled, plus the flexible flow that
interpolates between them via two streaming parameters:

* flow 1  reuse kernels and partial sums, stream input tiles
* flow 2  reuse input tiles and partial sums, stream kernels
* flow 3  reuse input tiles and kernels, stream partial sums
* flexible  process ``ns`` kernels before flushing input tiles and ``ps``
  input tiles before flushing kernels

Transfer accounting: counts are scalar *elements* per class. Spatial-domain
inputs and outputs crossing the off-chip boundary cost one word each (the
FFT/IFFT stages sit on chip); spectral-domain data (kernel entries, streamed
partial sums) are complex and cost two words each. Reload factors are whole
passes (ceilings of the group ratios), matching the event-level simulator;
for grids and groups that divide evenly they equal the ideal ratios.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

from .netmodel import tile_grid

BRAM_DEPTH = 1024  # words per BRAM block (36 Kb devices)

FLOW_IDS = ("flow1", "flow2", "flow3")


@dataclass(frozen=True)
class ArchParams:
    """Architecture parallelism: input tiles, kernels, channels, replicas.

    The shipped architecture serializes input channels (m_par is 1), and
    keeps ``replicas`` copies of each input tile so that up to that many
    distinct addresses can be read per cycle.
    """

    p_par: int
    n_par: int
    m_par: int = 1
    replicas: int = 1

    def __post_init__(self):
        for fname in ("p_par", "n_par", "m_par", "replicas"):
            if getattr(self, fname) < 1:
                raise ValueError(f"{fname} must be >= 1")


@dataclass(frozen=True)
class StreamParams:
    """Streaming parameters: ``ps`` input tiles are processed before the
    kernel buffer is flushed, ``ns`` kernels before the tile buffer is.

    Both must be multiples of the corresponding parallelism degree. Values
    may round the layer's tile/kernel count up to a whole group (a ragged
    final group behaves as one full pass).
    """

    ps: int
    ns: int

    def __post_init__(self):
        if self.ps < 1 or self.ns < 1:
            raise ValueError("ps and ns must be >= 1")

    def validate_for(self, arch, layer=None, spectral=None):
        if self.ps % arch.p_par:
            raise ValueError(f"ps={self.ps} not a multiple of p_par={arch.p_par}")
        if self.ns % arch.n_par:
            raise ValueError(f"ns={self.ns} not a multiple of n_par={arch.n_par}")
        if layer is not None and spectral is not None:
            _, _, p = tile_grid(layer, spectral)
            if self.ps > ceil(p / arch.p_par) * arch.p_par:
                raise ValueError(f"ps={self.ps} exceeds the padded tile grid ({p} tiles)")
            if self.ns > ceil(layer.out_channels / arch.n_par) * arch.n_par:
                raise ValueError(f"ns={self.ns} exceeds the kernel count {layer.out_channels}")


@dataclass(frozen=True)
class CostReport:
    """Per-layer cost of one flow: BRAM count plus transfer terms.

    ``transfers_*`` are scalar-element counts per class. ``kernel_words``
    and ``out_words`` carry the per-element word weight (2 for complex
    classes). Bandwidth follows from the word weights, the word width and
    the layer latency.
    """

    layer: str
    flow: str
    n_bram: int
    transfers_in: int
    transfers_kernel: int
    transfers_out: int
    tau_s: float
    word_bits: int = 16
    in_words: int = 1
    kernel_words: int = 2
    out_words: int = 1

    @property
    def words_total(self):
        return (
            self.transfers_in * self.in_words
            + self.transfers_kernel * self.kernel_words
            + self.transfers_out * self.out_words
        )

    @property
    def bytes_total(self):
        return self.words_total * self.word_bits / 8.0

    @property
    def bw_bytes_per_s(self):
        return self.bytes_total / self.tau_s

    @property
    def bw_gbps(self):
        return self.bw_bytes_per_s / 1e9

    CSV_HEADER = "layer,flow,n_bram,transfers_in,transfers_kernel,transfers_out,bw_gbps"

    def csv_row(self):
        return (
            f"{self.layer},{self.flow},{self.n_bram},{self.transfers_in},"
            f"{self.transfers_kernel},{self.transfers_out},{self.bw_gbps:.6g}"
        )


@dataclass(frozen=True)
class LatencyBudget:
    """Per-layer latency shares proportional to spectral compute work."""

    tau_total: float
    tau_per_layer: dict
    cmp_per_layer: dict

    def tau(self, layer_name):
        return self.tau_per_layer[layer_name]


def _spectral_input_elems(layer, spectral, use_tile_grid):
    """Spectral elements of the whole input plane per channel.

    The tile-grid form counts whole (zero-padded) tiles; the spatial form
    follows the storage expression verbatim with the raw pixel count. They
    agree whenever the tile side divides the image side; the tile-grid form
    is authoritative for ragged grids.
    """
    k2 = spectral.fft_size * spectral.fft_size
    if use_tile_grid:
        _, _, p = tile_grid(layer, spectral)
        return p * k2
    return layer.h_in * layer.w_in * k2 / (spectral.h_tile * spectral.w_tile)


def bram_count(layer, spectral, arch, flow, use_tile_grid=True, bram_depth=BRAM_DEPTH):
    """BRAM blocks needed by one fixed flow (flow in {1, 2, 3} or name).

    Flow 3 may either buffer the whole spectral input or all kernels while
    partial sums stream; the cheaper branch is returned.
    """
    flow = _flow_name(flow)
    k2 = spectral.fft_size * spectral.fft_size
    r, pp, np_, mp = arch.replicas, arch.p_par, arch.n_par, arch.m_par
    inputs = r * mp * pp
    kernels = mp * np_
    if flow == "flow1":
        # Partial sums for all tiles of one kernel group stay resident.
        num = _spectral_input_elems(layer, spectral, use_tile_grid)
        psums = np_ * pp * ceil(num / (pp * bram_depth))
        return inputs + kernels + psums
    if flow == "flow2":
        psums = mp * pp * ceil(layer.out_channels * k2 / (np_ * bram_depth))
        return inputs + kernels + psums
    if flow == "flow3":
        num = _spectral_input_elems(layer, spectral, use_tile_grid)
        buffer_tiles = r * mp * pp * ceil(num / (pp * bram_depth)) + mp * np_ + mp * pp
        buffer_kernels = (
            r * mp * pp
            + mp * np_ * ceil(layer.out_channels * k2 / (spectral.alpha * np_ * bram_depth))
            + mp * pp
        )
        return min(buffer_tiles, buffer_kernels)
    raise ValueError(f"unknown flow {flow!r}")


def bram_flexible(layer, spectral, arch, stream, bram_depth=BRAM_DEPTH):
    """BRAM blocks needed by the flexible flow at (ps, ns)."""
    stream.validate_for(arch)
    k2 = spectral.fft_size * spectral.fft_size
    inputs = arch.replicas * arch.p_par
    kernels = arch.n_par * ceil(stream.ns * k2 / (spectral.alpha * arch.n_par * bram_depth))
    psums = (
        arch.n_par
        * arch.p_par
        * ceil(stream.ns * stream.ps * k2 / (arch.n_par * arch.p_par * bram_depth))
    )
    return inputs + kernels + psums


def _flow_name(flow):
    if flow in FLOW_IDS or flow == "flexible":
        return flow
    if flow in (1, 2, 3):
        return f"flow{flow}"
    raise ValueError(f"unknown flow {flow!r}")


def transfer_terms(layer, spectral, arch, flow, stream=None):
    """Per-class transfer element counts (inputs, kernels, outputs).

    Inputs and outputs are spatial scalars; kernel entries and streamed
    partial sums are complex scalars. Flow 3's output term is the partial
    sum write/read traffic (factor 2 * m / m_par).
    """
    flow = _flow_name(flow)
    m, n = layer.in_channels, layer.out_channels
    hw_in = layer.h_in * layer.w_in
    hw_out = layer.h_out * layer.w_out
    k2 = spectral.fft_size * spectral.fft_size
    kernel_entries = n * m * k2 // spectral.alpha
    _, _, p = tile_grid(layer, spectral)
    if flow == "flow1":
        return m * hw_in * ceil(n / arch.n_par), kernel_entries, n * hw_out
    if flow == "flow2":
        return m * hw_in, kernel_entries * ceil(p / arch.p_par), n * hw_out
    if flow == "flow3":
        return m * hw_in, kernel_entries, n * hw_out * 2 * ceil(m / arch.m_par)
    if flow == "flexible":
        if stream is None:
            raise ValueError("flexible flow needs stream parameters")
        return (
            m * hw_in * ceil(n / stream.ns),
            kernel_entries * ceil(p / stream.ps),
            n * hw_out,
        )
    raise AssertionError(flow)


def bandwidth(layer, spectral, arch, flow, tau_s):
    """Bandwidth requirement of one fixed flow at per-layer latency tau_s."""
    if tau_s <= 0:
        raise ValueError("tau_s must be positive")
    flow = _flow_name(flow)
    t_in, t_k, t_out = transfer_terms(layer, spectral, arch, flow)
    return CostReport(
        layer=layer.name,
        flow=flow,
        n_bram=bram_count(layer, spectral, arch, flow),
        transfers_in=t_in,
        transfers_kernel=t_k,
        transfers_out=t_out,
        tau_s=tau_s,
        word_bits=spectral.word_bits,
        out_words=2 if flow == "flow3" else 1,
    )


def bandwidth_flexible(layer, spectral, arch, stream, tau_s):
    """Bandwidth requirement of the flexible flow at (ps, ns)."""
    if tau_s <= 0:
        raise ValueError("tau_s must be positive")
    t_in, t_k, t_out = transfer_terms(layer, spectral, arch, "flexible", stream)
    return CostReport(
        layer=layer.name,
        flow="flexible",
        n_bram=bram_flexible(layer, spectral, arch, stream),
        transfers_in=t_in,
        transfers_kernel=t_k,
        transfers_out=t_out,
        tau_s=tau_s,
        word_bits=spectral.word_bits,
    )


def spectral_macs(layer, spectral):
    """Complex multiply-accumulates the spectral engine performs for one
    layer: every tile, input channel, kernel and window position."""
    _, _, p = tile_grid(layer, spectral)
    k2 = spectral.fft_size * spectral.fft_size
    return p * layer.in_channels * layer.out_channels * k2


def latency_budget(model, tau_total):
    """Split a total latency across layers proportionally to compute work.

    Every layer receives a share (including layers flagged skip_opt; those
    are only excluded from optimizer objectives). Shares sum to tau_total
    exactly up to floating-point rounding.
    """
    if tau_total <= 0:
        raise ValueError("tau_total must be positive")
    cmps = {lyr.name: spectral_macs(lyr, model.spectral) for lyr in model.layers}
    total = sum(cmps.values())
    taus = {name: tau_total * c / total for name, c in cmps.items()}
    return LatencyBudget(tau_total, taus, cmps)
