#!/usr/bin/env python3
"""Run the dataflow optimizer on VGG16 and compare against fixed flows.

The optimizer scans architecture parameters (parallel tiles and kernels)
and per-layer streaming parameters, keeping the feasible choice with the
lowest bandwidth per layer and the architecture with the lowest worst-layer
bandwidth. The printout shows the chosen streaming table and the total
data-transfer reduction against the best single fixed flow.
"""

import specflow as sf
from specflow import complexity, flowopt

model = sf.vgg16_k8()
space = flowopt.default_search_space(bram_budget=2160, tau_total=20e-3, replicas=10)
result = flowopt.optimize(model, space)

print(f"chosen architecture: {result.arch.p_par} parallel tiles x "
      f"{result.arch.n_par} parallel kernels, r={result.arch.replicas}")
print(f"worst-layer bandwidth: {result.bw_max / 1e9:.2f} GB/s\n")
print(f"{'layer':10s} {'ps':>5s} {'ns':>4s} {'BRAMs':>6s} {'GB/s':>6s}")
for choice in result.per_layer:
    print(f"{choice.layer:10s} {choice.stream.ps:5d} {choice.stream.ns:4d} "
          f"{choice.n_bram:6d} {choice.bw / 1e9:6.2f}")

# Compare total element traffic with each fixed flow at its own best
# feasible architecture from the same candidate space.
opt_total = result.total_transfer_elements
print(f"\noptimized flow total: {opt_total / 1e6:.1f} M elements")
for flow in complexity.FLOW_IDS:
    best = None
    for p_par in space.p_par_candidates:
        for n_par in space.n_par_candidates:
            arch = sf.ArchParams(p_par=p_par, n_par=n_par, replicas=10)
            total = 0
            for lyr in model.optimized_layers():
                if complexity.bram_count(lyr, model.spectral, arch, flow) >= 2160:
                    total = None
                    break
                total += sum(complexity.transfer_terms(lyr, model.spectral, arch, flow))
            if total is not None and (best is None or total < best):
                best = total
    if best is None:
        print(f"{flow}: no feasible architecture within 2160 BRAMs")
    else:
        print(f"{flow}: best {best / 1e6:.1f} M elements "
              f"(optimized saves {1 - opt_total / best:.1%})")
