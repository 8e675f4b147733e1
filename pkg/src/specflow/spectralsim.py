"""Functional spectral convolution and an event-level streaming simulator.

The numeric pipeline mirrors the modeled hardware: inputs are cut into
tiles, zero-padded into a K x K window, transformed with a radix-2 FFT,
multiplied elementwise with (sparse) spectral kernels, accumulated over
input channels, inverse-transformed and reassembled by overlap-and-add. A
direct spatial convolution and a direct DFT summation serve as independent
oracles.

The event-level simulator walks the streaming-controller state machine over
a whole layer, counting every off-chip element movement by class and every
Hadamard compute cycle; its totals match the closed-form flexible-flow
model exactly whenever tile grid and streaming groups divide evenly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .netmodel import SparseKernelSet, tile_grid


# ----------------------------------------------------------------------
# FFT kernels


def _bit_reverse_permutation(n):
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.intp)
    for i in range(n):
        b, x = 0, i
        for _ in range(bits):
            b = (b << 1) | (x & 1)
            x >>= 1
        rev[i] = b
    return rev


def _fft_last_axis(a, inverse):
    """Iterative radix-2 FFT along the last axis (length power of two)."""
    n = a.shape[-1]
    out = np.ascontiguousarray(a, dtype=np.complex128)[..., _bit_reverse_permutation(n)]
    sign = 2j if inverse else -2j
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * np.pi * np.arange(half) / size)
        view = out.reshape(*out.shape[:-1], n // size, size)
        odd = view[..., half:] * tw
        even = view[..., :half].copy()
        view[..., :half] = even + odd
        view[..., half:] = even - odd
        size *= 2
    return out


def fft2(tile, inverse=False):
    """2-D DFT of a K x K tile via separable radix-2 passes.

    The inverse applies the full 1/K^2 normalization, so
    ``fft2(fft2(x), inverse=True)`` returns x.
    """
    a = np.asarray(tile)
    n1, n2 = a.shape[-2], a.shape[-1]
    if n1 < 1 or n2 < 1 or n1 & (n1 - 1) or n2 & (n2 - 1):
        raise ValueError("fft2 needs power-of-two sides")
    out = _fft_last_axis(a, inverse)
    out = _fft_last_axis(np.swapaxes(out, -1, -2), inverse)
    out = np.swapaxes(out, -1, -2)
    if inverse:
        out = out / (n1 * n2)
    return out


def ifft2(spectrum):
    return fft2(spectrum, inverse=True)


def dft2_direct(tile, inverse=False):
    """O(K^4) direct DFT summation, the test oracle for fft2."""
    a = np.asarray(tile, dtype=np.complex128)
    h, w = a.shape
    out = np.empty_like(a)
    sign = 2j if inverse else -2j
    ys, xs = np.meshgrid(np.arange(w), np.arange(h))
    for u in range(h):
        for v in range(w):
            phase = np.exp(sign * np.pi * (u * xs / h + v * ys / w))
            out[u, v] = np.sum(a * phase)
    if inverse:
        out /= h * w
    return out


# ----------------------------------------------------------------------
# Spatial reference and spectral convolution


def as_chw(x):
    """Coerce a spatial tensor to (channels, h, w); batch must be 1."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 4:
        if a.shape[0] != 1:
            raise ValueError("the simulator works on single images (batch 1)")
        a = a[0]
    if a.ndim != 3:
        raise ValueError(f"expected (c, h, w) or (1, c, h, w), got shape {a.shape}")
    if min(a.shape) < 1:
        raise ValueError("dims must be positive")
    return a


def spatial_conv_reference(x, spatial_kernels, padding="same"):
    """Direct sliding-window convolution, stride 1, zero padding.

    x: (c_in, h, w); spatial_kernels: (c_out, c_in, k, k). Returns
    (c_out, h, w). This is the independent oracle for the spectral path.
    """
    if padding != "same":
        raise ValueError("only 'same' padding is modeled")
    x = as_chw(x)
    w = np.asarray(spatial_kernels, dtype=np.float64)
    if w.ndim != 4 or w.shape[1] != x.shape[0]:
        raise ValueError(f"kernel shape {w.shape} does not match input {x.shape}")
    c_out, c_in, k, k2 = w.shape
    if k != k2 or k % 2 == 0:
        raise ValueError("kernels must be square with odd side")
    pad = (k - 1) // 2
    h, wid = x.shape[1], x.shape[2]
    xp = np.zeros((c_in, h + 2 * pad, wid + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wid] = x
    out = np.zeros((c_out, h, wid))
    for n in range(c_out):
        for m in range(c_in):
            for u in range(k):
                for v in range(k):
                    out[n] += xp[m, u:u + h, v:v + wid] * w[n, m, u, v]
    return out


def spectralize_kernel(spatial_kernel, fft_size):
    """Spectral form of one k x k spatial kernel for the tiled pipeline.

    The kernel is rotated 180 degrees and zero-padded into the window, so
    that the elementwise product implements the sliding-window convolution
    that spatial_conv_reference computes.
    """
    w = np.asarray(spatial_kernel, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("expected a square k x k kernel")
    k = w.shape[0]
    if k > fft_size:
        raise ValueError(f"kernel side {k} exceeds the window {fft_size}")
    padded = np.zeros((fft_size, fft_size))
    padded[:k, :k] = w[::-1, ::-1]
    return fft2(padded)


def overlap_add(tiles, h_tile, w_tile, h_out, w_out, crop_offset=0):
    """Reassemble output tiles placed at tile stride, summing the overlaps.

    tiles: (tiles_h, tiles_w, K, K). Adjacent tiles overlap by K - tile
    side, and the overlapped borders add. The canvas is cropped to
    (h_out, w_out) starting at crop_offset.
    """
    tiles = np.asarray(tiles)
    th, tw, kh, kw = tiles.shape
    canvas = np.zeros(
        (th * h_tile + (kh - h_tile), tw * w_tile + (kw - w_tile)), dtype=tiles.dtype
    )
    for t in range(th):
        for s in range(tw):
            canvas[t * h_tile:t * h_tile + kh, s * w_tile:s * w_tile + kw] += tiles[t, s]
    if crop_offset + h_out > canvas.shape[0] or crop_offset + w_out > canvas.shape[1]:
        raise ValueError("crop exceeds the assembled canvas")
    return canvas[crop_offset:crop_offset + h_out, crop_offset:crop_offset + w_out]


def _extract_tile(x, t, s, h_tile, w_tile, fft_size):
    """One zero-padded K x K spatial tile for every channel."""
    c = x.shape[0]
    tile = np.zeros((c, fft_size, fft_size))
    ys, ye = t * h_tile, min((t + 1) * h_tile, x.shape[1])
    xs, xe = s * w_tile, min((s + 1) * w_tile, x.shape[2])
    tile[:, :ye - ys, :xe - xs] = x[:, ys:ye, xs:xe]
    return tile


def spectral_conv(x, kernels, cfg, tables=None):
    """Tiled spectral convolution: FFT, Hadamard-accumulate, IFFT, OaA.

    ``kernels`` is either a SparseKernelSet (spectral sparse) or a dense
    complex array (c_out, c_in, K, K) of spectral kernels. When ``tables``
    maps input channels to IndexValueTables, the per-index products are
    executed in scheduled table order instead; the result is bit-identical
    because each (kernel, index) is touched exactly once per channel and
    channels accumulate in a fixed order either way.
    """
    x = as_chw(x)
    K = cfg.fft_size
    h_tile, w_tile = cfg.h_tile, cfg.w_tile
    k = cfg.kernel_side
    if isinstance(kernels, SparseKernelSet):
        c_out, c_in = kernels.n_kernels, kernels.n_channels
        dense = None
    else:
        dense = np.asarray(kernels, dtype=np.complex128)
        if dense.ndim != 4 or dense.shape[2:] != (K, K):
            raise ValueError(f"dense spectral kernels must be (n, m, {K}, {K})")
        c_out, c_in = dense.shape[0], dense.shape[1]
    if c_in != x.shape[0]:
        raise ValueError(f"kernels expect {c_in} input channels, tensor has {x.shape[0]}")
    h, w = x.shape[1], x.shape[2]
    th = ceil(h / h_tile)
    tw = ceil(w / w_tile)
    pad = (k - 1) // 2
    out_tiles = np.zeros((th, tw, c_out, K, K))
    for t in range(th):
        for s in range(tw):
            spatial = _extract_tile(x, t, s, h_tile, w_tile, K)
            acc = np.zeros((c_out, K, K), dtype=np.complex128)
            for m in range(c_in):
                xm = fft2(spatial[m]).reshape(-1)
                if tables is not None:
                    tab = tables[m]
                    for ti in range(tab.n_cycles):
                        for lane in range(tab.n_lanes):
                            if tab.valid[ti, lane]:
                                idx = int(tab.index_table[ti, tab.sel[ti, lane]])
                                acc.reshape(c_out, -1)[lane, idx] += (
                                    xm[idx] * tab.values[ti, lane]
                                )
                elif dense is None:
                    # Scalar per-entry ops, matching the table-replay path
                    # bit for bit (vectorized complex multiplies may round
                    # differently through SIMD code paths).
                    flat = acc.reshape(c_out, -1)
                    for n in range(c_out):
                        kr = kernels.kernel(n, m)
                        for idx, val in zip(kr.indices.tolist(), kr.values.tolist()):
                            flat[n, idx] += xm[idx] * val
                else:
                    acc += xm.reshape(K, K) * dense[:, m]
            for n in range(c_out):
                out_tiles[t, s, n] = ifft2(acc[n]).real
    out = np.empty((c_out, h, w))
    for n in range(c_out):
        out[n] = overlap_add(out_tiles[:, :, n], h_tile, w_tile, h, w, crop_offset=pad)
    return out


# ----------------------------------------------------------------------
# Tensor file formats

_DTYPE_TAGS = {0: np.float64, 1: np.complex128}


def save_tensor(path, arr):
    """Flat binary tensor: magic, dtype tag, ndim, dims, LE payload."""
    a = np.asarray(arr)
    if a.dtype.kind == "c":
        tag, a = 1, a.astype("<c16")
    else:
        tag, a = 0, a.astype("<f8")
    with open(path, "wb") as fh:
        fh.write(b"SFTN")
        fh.write(struct.pack("<BB", tag, a.ndim))
        fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
        fh.write(a.tobytes())


def load_tensor(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != b"SFTN":
        raise ValueError("bad tensor magic")
    tag, ndim = struct.unpack_from("<BB", blob, 4)
    dims = struct.unpack_from(f"<{ndim}I", blob, 6)
    dtype = _DTYPE_TAGS[tag]
    payload = np.frombuffer(blob, dtype="<c16" if tag else "<f8", offset=6 + 4 * ndim)
    return payload.reshape(dims).astype(dtype)


def save_tensor_text(path, arr):
    """Readable fixture format: a dims header then one value per line."""
    a = np.asarray(arr)
    with open(path, "w", encoding="utf-8") as fh:
        kind = "c16" if a.dtype.kind == "c" else "f8"
        fh.write(f"# specflow-tensor {kind} " + " ".join(map(str, a.shape)) + "\n")
        for v in a.reshape(-1):
            if kind == "c16":
                fh.write(f"{float(v.real)!r} {float(v.imag)!r}\n")
            else:
                fh.write(f"{float(v)!r}\n")


def load_tensor_text(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:2] != ["#", "specflow-tensor"]:
            raise ValueError("bad tensor text header")
        kind = header[2]
        dims = tuple(int(d) for d in header[3:])
        vals = []
        for line in fh:
            parts = line.split()
            if kind == "c16":
                vals.append(complex(float(parts[0]), float(parts[1])))
            else:
                vals.append(float(parts[0]))
    dtype = np.complex128 if kind == "c16" else np.float64
    return np.array(vals, dtype=dtype).reshape(dims)


# ----------------------------------------------------------------------
# Event-level streaming simulator

FSM_STATES = ("READ_KERNEL", "READ_TILES", "CONV", "PROC_IFFT", "WRITE_OUT", "DONE")

_LEGAL_TRANSITIONS = {
    ("READ_KERNEL", "READ_TILES"),
    ("READ_TILES", "CONV"),
    ("CONV", "READ_TILES"),   # next tile batch, kernels stay resident
    ("CONV", "READ_KERNEL"),  # next input channel, flush tiles and kernels
    ("CONV", "PROC_IFFT"),    # all channels accumulated
    ("PROC_IFFT", "WRITE_OUT"),
    ("WRITE_OUT", "READ_KERNEL"),  # next (tile group, kernel group) block
    ("WRITE_OUT", "DONE"),
}


@dataclass
class SimTrace:
    """Transfer counts (scalar elements), compute cycles, FSM state log."""

    inputs_read: int = 0
    kernels_read: int = 0
    outputs_written: int = 0
    psums_written: int = 0
    psums_read: int = 0
    compute_cycles: int = 0
    state_log: list = field(default_factory=list)

    def log(self, state, enabled):
        if enabled:
            self.state_log.append(state)

    def validate_log(self):
        for prev, cur in zip(self.state_log, self.state_log[1:]):
            if (prev, cur) not in _LEGAL_TRANSITIONS:
                raise ValueError(f"illegal FSM transition {prev} -> {cur}")
        if self.state_log and self.state_log[-1] != "DONE":
            raise ValueError("FSM did not finish in DONE")

    def to_dict(self):
        return {
            "inputs_read": self.inputs_read,
            "kernels_read": self.kernels_read,
            "outputs_written": self.outputs_written,
            "psums_written": self.psums_written,
            "psums_read": self.psums_read,
            "compute_cycles": self.compute_cycles,
            "state_log": list(self.state_log),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _chunks(total, size):
    """Group sizes covering ``total`` in blocks of at most ``size``."""
    out = []
    left = total
    while left > 0:
        out.append(min(size, left))
        left -= size
    return out


def dataflow_simulate(layer, spectral, arch, stream, schedule_provider=None,
                      log_states=False):
    """Walk the streaming-controller FSM over one layer and count traffic.

    Loop structure: for every group of ``ps`` tiles, for every group of
    ``ns`` kernels, input channels iterate serially; each channel loads its
    kernel group and streams its tiles in batches of ``p_par``. When all
    channels of a block are accumulated the output tiles leave through
    IFFT + write-out. Partial sums never leave the chip (channels always
    run to completion before a flush), so the psum classes stay zero.

    ``schedule_provider(lane_group, channel) -> cycle count`` supplies the
    Hadamard schedule length for each group of ``n_par`` kernels; by default
    a dense-equivalent length (nonzeros per kernel) is assumed. Compute
    cycles total: schedule lengths summed over lane groups and channels,
    times the number of tile batches.

    Transfer accounting is per whole zero-padded tile (tile side squared
    spatial elements) and per sparse kernel entry (complex elements); the
    totals equal the closed-form flexible-flow terms exactly when the tile
    grid and the streaming groups divide evenly.
    """
    stream.validate_for(arch, layer, spectral)
    _, _, p = tile_grid(layer, spectral)
    n, m = layer.out_channels, layer.in_channels
    nnz = spectral.nnz
    tile_elems = spectral.h_tile * spectral.w_tile
    if schedule_provider is None:
        schedule_provider = lambda lane_group, channel: nnz

    trace = SimTrace()
    tile_groups = _chunks(p, stream.ps)
    kernel_groups = _chunks(n, stream.ns)
    for tiles_here in tile_groups:
        lane_base = 0
        for kernels_here in kernel_groups:
            lane_groups = len(_chunks(kernels_here, arch.n_par))
            tile_batches = _chunks(tiles_here, arch.p_par)
            for channel in range(m):
                trace.log("READ_KERNEL", log_states)
                trace.kernels_read += kernels_here * nnz
                for batch_tiles in tile_batches:
                    trace.log("READ_TILES", log_states)
                    trace.inputs_read += batch_tiles * tile_elems
                    trace.log("CONV", log_states)
                    for lg in range(lane_groups):
                        trace.compute_cycles += schedule_provider(lane_base + lg, channel)
            trace.log("PROC_IFFT", log_states)
            trace.log("WRITE_OUT", log_states)
            trace.outputs_written += kernels_here * tiles_here * tile_elems
            lane_base += lane_groups
    trace.log("DONE", log_states)
    return trace
