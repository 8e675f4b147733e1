#!/usr/bin/env python3
"""Walk through the closed-form storage and bandwidth models on VGG16.

Prints, for every optimized layer, the BRAM count and transfer volume of
the three fixed reuse strategies side by side, making the tradeoff
visible: streaming input tiles (flow 1) moves the least data but buffers
enormous partial sums, streaming kernels (flow 2) is cheap to buffer but
re-reads every kernel once per tile group, and streaming partial sums
(flow 3) loses on both axes.
"""

import specflow as sf
from specflow import complexity

model = sf.vgg16_k8()
arch = sf.ArchParams(p_par=9, n_par=64, replicas=10)
budget = complexity.latency_budget(model, 20e-3)

print(f"{'layer':10s} {'flow':7s} {'BRAMs':>7s} {'Mwords':>8s} {'GB/s':>7s}")
for layer in model.optimized_layers():
    tau_i = budget.tau(layer.name)
    for flow in complexity.FLOW_IDS:
        rep = complexity.bandwidth(layer, model.spectral, arch, flow, tau_i)
        print(
            f"{layer.name:10s} {flow:7s} {rep.n_bram:7d} "
            f"{rep.words_total / 1e6:8.2f} {rep.bw_gbps:7.2f}"
        )
    print()

print("Latency shares (ms) by compute weight:")
for name, tau_i in budget.tau_per_layer.items():
    print(f"  {name:10s} {tau_i * 1e3:6.3f}")
