#!/usr/bin/env python3
"""Numerical walk-through of the tiled spectral convolution pipeline.

Starts from the FFT building block, verifies it against a direct DFT
summation, then runs a full tiled convolution (FFT per tile, sparse
Hadamard accumulation, IFFT, overlap-and-add) and checks the result
against a plain sliding-window convolution.
"""

import numpy as np

import specflow as sf

rng = np.random.default_rng(0)

# The FFT building block against the O(K^4) direct summation.
tile = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
err = np.max(np.abs(sf.fft2(tile) - sf.dft2_direct(tile)))
print(f"radix-2 FFT vs direct DFT: max abs err {err:.2e}")
print(f"inverse round trip: {np.max(np.abs(sf.ifft2(sf.fft2(tile)) - tile)):.2e}")

# Overlap-and-add of two all-ones tiles: the shared border adds up.
tiles = np.ones((1, 2, 8, 8))
merged = sf.overlap_add(tiles, 6, 6, 6, 12)
print(f"overlap-and-add border column values: {merged[0, 6]:.0f} (interior 1)")

# A dense end-to-end convolution against the spatial oracle.
cfg = sf.SpectralConfig.for_kernel(8, 3, 4)
x = rng.standard_normal((2, 18, 18))
w = rng.standard_normal((3, 2, 3, 3))
dense = np.stack(
    [np.stack([sf.spectralize_kernel(w[n, m], 8) for m in range(2)]) for n in range(3)]
)
got = sf.spectral_conv(x, dense, cfg)
want = sf.spatial_conv_reference(x, w)
print(f"tiled spectral conv vs sliding window: max abs err "
      f"{np.max(np.abs(got - want)):.2e}")

# Sparse kernels processed in scheduled-table order give bit-identical
# output, because each index is touched once per channel and channels
# accumulate in a fixed order.
kset = sf.gen_sparse_kernels(1, "clustered", 4, 2, cfg)
tables = {}
for m in range(2):
    chan = kset.channel(m)
    sched = sf.schedule_greedy(sf.build_graph(chan), r=4, n_par=4)
    tables[m] = sf.emit_tables(sched, chan)
plain = sf.spectral_conv(x, kset, cfg)
replayed = sf.spectral_conv(x, kset, cfg, tables=tables)
print(f"scheduled replay bit-identical: {np.array_equal(plain, replayed)}")
