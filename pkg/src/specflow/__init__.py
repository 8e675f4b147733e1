"""Design-space exploration toolkit for sparse spectral-CNN accelerators."""

__version__ = "0.1.0"

from .complexity import (
    ArchParams,
    CostReport,
    LatencyBudget,
    StreamParams,
    bandwidth,
    bandwidth_flexible,
    bram_count,
    bram_flexible,
    latency_budget,
)
from .flowopt import (
    FlowChoice,
    InfeasibleError,
    OptResult,
    SearchSpace,
    default_search_space,
    evaluate_fixed_flows,
    optimize,
)
from .netmodel import (
    ConfigError,
    LayerConfig,
    ModelConfig,
    SparseKernel,
    SparseKernelSet,
    SpectralConfig,
    gen_sparse_kernels,
    load_model,
    loads_model,
    tile_grid,
    vgg16_k8,
)
from .scheduler import (
    AccessGraph,
    IndexValueTables,
    InstanceTooLarge,
    Schedule,
    ScheduleCycle,
    build_graph,
    emit_tables,
    schedule_bruteforce,
    schedule_greedy,
    schedule_lowest_index,
    schedule_random,
    utilization,
)
from .spectralsim import (
    SimTrace,
    dataflow_simulate,
    dft2_direct,
    fft2,
    ifft2,
    overlap_add,
    spatial_conv_reference,
    spectral_conv,
    spectralize_kernel,
)
