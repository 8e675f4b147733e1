"""Command-line front end.

Subcommands: analyze (per-layer cost reports for every flow), optimize
(architecture and streaming parameter search), schedule (PE-utilization
sweeps over replica counts and scheduling methods), simulate (event-level
streaming simulation of one layer) and verify (the built-in oracle suites).

Every output artifact embeds a run manifest (command, config, seeds,
version, timestamp) for reproducibility. Exit codes: 0 success, 2 config
error, 3 infeasible, 4 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, complexity, flowopt, netmodel, scheduler, spectralsim

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_VERIFY = 4

CSV_SCHEMA_VERSION = "v1"


@dataclass(frozen=True)
class RunManifest:
    """Provenance block recorded verbatim in every output artifact."""

    command: str
    config: str
    seeds: tuple
    out_dir: str
    version: str
    timestamp: str

    def to_dict(self):
        return dataclasses.asdict(self)

    def csv_lines(self, schema):
        yield f"# specflow-csv-schema: {schema}.{CSV_SCHEMA_VERSION}"
        yield "# manifest: " + json.dumps(self.to_dict(), sort_keys=True)


def _manifest(args, command, seeds=()):
    return RunManifest(
        command=command,
        config=args.config or args.builtin,
        seeds=tuple(seeds),
        out_dir=str(args.out),
        version=__version__,
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    )


def _load_model(args):
    model = netmodel.load_model(args.config or args.builtin)
    if args.word_bits != model.spectral.word_bits:
        spectral = dataclasses.replace(model.spectral, word_bits=args.word_bits)
        model = dataclasses.replace(model, spectral=spectral)
    return model


def _write_csv(path, manifest, schema, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for line in manifest.csv_lines(schema):
            fh.write(line + "\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _write_json(path, manifest, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"manifest": manifest.to_dict(), **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def cmd_analyze(args):
    """Per-layer cost reports for the three fixed flows plus the flexible
    flow at its best feasible streaming parameters."""
    model = _load_model(args)
    manifest = _manifest(args, "analyze")
    arch = complexity.ArchParams(p_par=args.p_par, n_par=args.n_par, replicas=args.replicas)
    tau = args.tau_ms / 1e3
    budget = complexity.latency_budget(model, tau)
    space = flowopt.default_search_space(args.bram_budget, tau, replicas=args.replicas)
    layers = model.optimized_layers()
    if not layers:
        print("error: model has no optimizable layers", file=sys.stderr)
        return EXIT_CONFIG
    reports = []
    for layer in layers:
        tau_i = budget.tau(layer.name)
        for flow in complexity.FLOW_IDS:
            reports.append(complexity.bandwidth(layer, model.spectral, arch, flow, tau_i))
        choice = flowopt.best_layer_choice(layer, model.spectral, space, arch, tau_i)
        if choice is not None:
            reports.append(choice.report)
    out = Path(args.out)
    _write_csv(
        out / "analyze.csv", manifest, "analyze",
        complexity.CostReport.CSV_HEADER, (r.csv_row() for r in reports),
    )
    _write_json(
        out / "analyze.json", manifest,
        {
            "reports": [
                {
                    "layer": r.layer,
                    "flow": r.flow,
                    "n_bram": r.n_bram,
                    "transfers_in": r.transfers_in,
                    "transfers_kernel": r.transfers_kernel,
                    "transfers_out": r.transfers_out,
                    "bw_gbps": r.bw_gbps,
                }
                for r in reports
            ]
        },
    )
    print(f"analyze: wrote {len(reports)} cost rows to {out}")
    return EXIT_OK


def cmd_optimize(args):
    """Run the dataflow optimizer and emit the parameter table."""
    model = _load_model(args)
    manifest = _manifest(args, "optimize")
    space = flowopt.SearchSpace(
        p_par_candidates=tuple(args.p_par_candidates),
        n_par_candidates=tuple(args.n_par_candidates),
        bram_budget=args.bram_budget,
        tau_total=args.tau_ms / 1e3,
        replicas=args.replicas,
    )
    try:
        result = flowopt.optimize(model, space)
    except flowopt.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    out = Path(args.out)
    rows = list(result.csv_rows())
    _write_csv(out / "optimize.csv", manifest, "optimize", rows[0], rows[1:])
    _write_json(out / "optimize.json", manifest, {"result": result.to_dict()})
    print(
        f"optimize: p_par={result.arch.p_par} n_par={result.arch.n_par} "
        f"bw_max={result.bw_max / 1e9:.3g} GB/s -> {out}"
    )
    return EXIT_OK


def _parse_r_range(spec_str):
    if ":" in spec_str:
        lo, hi = spec_str.split(":")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in spec_str.split(",")]


def cmd_schedule(args):
    """Sweep replica counts and scheduling methods over the model layers.

    Each (layer, seed) samples one kernel group per input pattern; layer
    utilizations are averaged weighted by each layer's compute share.
    """
    model = _load_model(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    manifest = _manifest(args, "schedule", seeds=seeds)
    r_values = _parse_r_range(args.r)
    methods = args.methods.split(",")
    for mth in methods:
        if mth not in ("greedy", "random", "lowest-index"):
            print(f"error: unknown method {mth!r}", file=sys.stderr)
            return EXIT_CONFIG
    if args.pattern not in ("uniform-random", "clustered"):
        print(f"error: unknown pattern {args.pattern!r}", file=sys.stderr)
        return EXIT_CONFIG
    spectral = model.spectral
    if args.alpha and args.alpha != spectral.alpha:
        spectral = dataclasses.replace(spectral, alpha=args.alpha)
    layers = model.optimized_layers()
    budget = complexity.latency_budget(model, 1.0)
    weights = {lyr.name: budget.cmp_per_layer[lyr.name] for lyr in layers}
    total_weight = sum(weights.values())

    rows = []
    first_tables = None
    for method in methods:
        for r in r_values:
            per_seed_avgs = []
            for seed in seeds:
                weighted = 0.0
                for li, layer in enumerate(layers):
                    kset = netmodel.gen_sparse_kernels(
                        seed * 10_000 + li, args.pattern, args.n_kernels, 1, spectral
                    )
                    graph = scheduler.build_graph(kset)
                    if method == "greedy":
                        sched = scheduler.schedule_greedy(graph, r, args.n_kernels)
                    elif method == "lowest-index":
                        sched = scheduler.schedule_lowest_index(graph, r, args.n_kernels)
                    else:
                        sched = scheduler.schedule_random(graph, r, args.n_kernels, seed)
                    mu = scheduler.utilization(sched, args.n_kernels)
                    weighted += weights[layer.name] * mu
                    rows.append(f"{method},{r},{seed},{layer.name},{mu:.6f}")
                    if first_tables is None:
                        first_tables = scheduler.emit_tables(sched, kset)
                avg = weighted / total_weight
                per_seed_avgs.append(avg)
                rows.append(f"{method},{r},{seed},ALL,{avg:.6f}")
    out = Path(args.out)
    _write_csv(out / "schedule.csv", manifest, "schedule", "method,r,seed,layer,mu", rows)
    if first_tables is not None:
        (out / "schedule_tables.bin").write_bytes(first_tables.to_bytes())
        _write_json(out / "schedule_tables.json", manifest,
                    {"tables": first_tables.to_dict()})
    print(f"schedule: wrote {len(rows)} rows to {out}")
    return EXIT_OK


def cmd_simulate(args):
    """Event-level simulation of one layer, with model cross-check."""
    model = _load_model(args)
    manifest = _manifest(args, "simulate")
    try:
        layer = model.layer(args.layer)
    except KeyError:
        print(f"error: no layer named {args.layer!r}", file=sys.stderr)
        return EXIT_CONFIG
    arch = complexity.ArchParams(p_par=args.p_par, n_par=args.n_par, replicas=args.replicas)
    stream = complexity.StreamParams(ps=args.ps, ns=args.ns)
    try:
        trace = spectralsim.dataflow_simulate(
            layer, model.spectral, arch, stream, log_states=args.log_states
        )
    except ValueError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    t_in, t_k, t_out = complexity.transfer_terms(
        layer, model.spectral, arch, "flexible", stream
    )
    agreement = {
        "inputs": {"simulated": trace.inputs_read, "model": t_in},
        "kernels": {"simulated": trace.kernels_read, "model": t_k},
        "outputs": {"simulated": trace.outputs_written, "model": t_out},
    }
    out = Path(args.out)
    _write_json(out / "simulate.json", manifest,
                {"trace": trace.to_dict(), "model_agreement": agreement})
    print(f"simulate: {layer.name} cycles={trace.compute_cycles} -> {out}")
    return EXIT_OK


# ----------------------------------------------------------------------
# verify: built-in oracle suites

_VERIFY_SIZES = {
    "tiny": {"conv_cases": 2, "fft_cases": 10, "sched_cases": 4, "oracle_cases": 8,
             "sim_cases": 3, "max_spatial": 14},
    "default": {"conv_cases": 6, "fft_cases": 40, "sched_cases": 10, "oracle_cases": 20,
                "sim_cases": 6, "max_spatial": 24},
}


def _verify_conv(rng, sizes):
    worst = 0.0
    for _ in range(sizes["conv_cases"]):
        c_in = int(rng.integers(1, 4))
        c_out = int(rng.integers(1, 4))
        h = int(rng.integers(12, sizes["max_spatial"] + 1))
        x = rng.standard_normal((c_in, h, h))
        w = rng.standard_normal((c_out, c_in, 3, 3))
        cfg = netmodel.SpectralConfig.for_kernel(8, 3, 4)
        dense = np.stack(
            [
                np.stack([spectralsim.spectralize_kernel(w[n, m], 8) for m in range(c_in)])
                for n in range(c_out)
            ]
        )
        got = spectralsim.spectral_conv(x, dense, cfg)
        want = spectralsim.spatial_conv_reference(x, w)
        worst = max(worst, float(np.max(np.abs(got - want))))
    return worst


def _verify_fft(rng, sizes):
    worst = 0.0
    for _ in range(sizes["fft_cases"]):
        tile = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        got = spectralsim.fft2(tile)
        want = spectralsim.dft2_direct(tile)
        worst = max(worst, float(np.max(np.abs(got - want)) / np.max(np.abs(want))))
    return worst


def _verify_schedules(rng, sizes):
    failures = 0
    for _ in range(sizes["sched_cases"]):
        n_k = int(rng.choice([4, 8, 16]))
        alpha = int(rng.choice([2, 4, 8]))
        r = int(rng.choice([1, 4, 10]))
        cfg = netmodel.SpectralConfig.for_kernel(8, 3, alpha)
        kset = netmodel.gen_sparse_kernels(int(rng.integers(0, 2**31)), "uniform-random",
                                           n_k, 1, cfg)
        graph = scheduler.build_graph(kset)
        for sched in (
            scheduler.schedule_greedy(graph, r, n_k),
            scheduler.schedule_lowest_index(graph, r, n_k),
            scheduler.schedule_random(graph, r, n_k, 1),
        ):
            try:
                sched.validate(graph)
                tables = scheduler.emit_tables(sched, kset)
                replayed = tables.replay()
                expect = sorted(
                    (lane, int(i), complex(v))
                    for lane, kr in enumerate(kset.channel(0))
                    for i, v in zip(kr.indices, kr.values)
                )
                if replayed != expect:
                    failures += 1
            except ValueError:
                failures += 1
    return failures


def _verify_oracle_gap(rng, sizes):
    worst_ratio = 1.0
    for _ in range(sizes["oracle_cases"]):
        n_k = int(rng.integers(2, 5))
        rows = []
        for _ in range(n_k):
            nnz = int(rng.integers(1, 4))
            rows.append(sorted(rng.choice(9, size=nnz, replace=False).tolist()))
        graph = scheduler.build_graph(rows, n_indices=9)
        r = int(rng.integers(1, 3))
        greedy = scheduler.schedule_greedy(graph, r, n_k)
        opt, _ = scheduler.schedule_bruteforce(graph, r, n_k)
        worst_ratio = max(worst_ratio, greedy.n_cycles / opt)
    return worst_ratio


def _verify_simulator(rng, sizes):
    mismatches = 0
    for _ in range(sizes["sim_cases"]):
        h = int(rng.choice([12, 18, 24]))
        m = int(rng.choice([2, 4]))
        n = int(rng.choice([8, 16]))
        cfg = netmodel.SpectralConfig.for_kernel(8, 3, 4)
        layer = netmodel.LayerConfig("probe", m, n, h, h, 3)
        _, _, p = netmodel.tile_grid(layer, cfg)
        arch = complexity.ArchParams(p_par=1, n_par=4, replicas=4)
        stream = complexity.StreamParams(ps=p, ns=n)
        trace = spectralsim.dataflow_simulate(layer, cfg, arch, stream)
        t_in, t_k, t_out = complexity.transfer_terms(layer, cfg, arch, "flexible", stream)
        if (trace.inputs_read, trace.kernels_read, trace.outputs_written) != (t_in, t_k, t_out):
            mismatches += 1
    return mismatches


def cmd_verify(args):
    """Run the oracle suites and report each property with measured error."""
    sizes = _VERIFY_SIZES[args.sizes]
    manifest = _manifest(args, "verify", seeds=(args.seed,))
    rng = np.random.Generator(np.random.PCG64(args.seed))
    checks = []
    err = _verify_conv(rng, sizes)
    checks.append(("spectral-vs-spatial-conv", err, args.conv_tol, err < args.conv_tol))
    err = _verify_fft(rng, sizes)
    checks.append(("fft-vs-direct-dft", err, args.fft_tol, err < args.fft_tol))
    fails = _verify_schedules(rng, sizes)
    checks.append(("schedule-validity-and-replay", fails, 0, fails == 0))
    ratio = _verify_oracle_gap(rng, sizes)
    checks.append(("greedy-vs-bruteforce-ratio", ratio, 1.5, ratio <= 1.5))
    mism = _verify_simulator(rng, sizes)
    checks.append(("simulator-vs-model", mism, 0, mism == 0))

    all_ok = all(ok for _, _, _, ok in checks)
    for name, measured, limit, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: measured={measured!r} limit={limit!r}")
    out = Path(args.out)
    _write_json(
        out / "verify.json", manifest,
        {
            "checks": [
                {"name": n, "measured": float(m), "limit": float(l), "pass": bool(ok)}
                for n, m, l, ok in checks
            ],
            "pass": all_ok,
        },
    )
    return EXIT_OK if all_ok else EXIT_VERIFY


def _add_common(parser):
    parser.add_argument("--config", help="model config file path")
    parser.add_argument("--builtin", default="vgg16-k8",
                        help="builtin model name (default vgg16-k8)")
    parser.add_argument("--out", default="specflow-out", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tau-ms", type=float, default=20.0,
                        help="total latency budget in ms")
    parser.add_argument("--bram-budget", type=int, default=2160)
    parser.add_argument("--word-bits", type=int, default=16)
    parser.add_argument("--replicas", type=int, default=10)


def _int_list(text):
    return [int(v) for v in text.split(",")]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="specflow",
        description="Sparse spectral-CNN accelerator design-space explorer",
    )
    parser.add_argument("--version", action="version", version=f"specflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-layer storage and bandwidth for every flow")
    _add_common(p)
    p.add_argument("--p-par", type=int, default=9)
    p.add_argument("--n-par", type=int, default=64)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("optimize", help="search architecture and streaming parameters")
    _add_common(p)
    p.add_argument("--p-par-candidates", type=_int_list, default=[4, 8, 9, 16])
    p.add_argument("--n-par-candidates", type=_int_list, default=[16, 32, 64, 128])
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("schedule", help="PE-utilization sweep over replicas and methods")
    _add_common(p)
    p.add_argument("--pattern", default="clustered")
    p.add_argument("--n-kernels", type=int, default=64)
    p.add_argument("--alpha", type=int, default=0, help="override the model alpha")
    p.add_argument("--r", default="4:20", help="replica sweep, lo:hi or comma list")
    p.add_argument("--seeds", default="0", help="comma list of seeds")
    p.add_argument("--methods", default="greedy,random,lowest-index")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("simulate", help="event-level streaming simulation of one layer")
    _add_common(p)
    p.add_argument("--layer", required=True)
    p.add_argument("--p-par", type=int, default=9)
    p.add_argument("--n-par", type=int, default=64)
    p.add_argument("--ps", type=int, required=True)
    p.add_argument("--ns", type=int, required=True)
    p.add_argument("--log-states", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the built-in oracle suites")
    _add_common(p)
    p.add_argument("--sizes", choices=sorted(_VERIFY_SIZES), default="default")
    p.add_argument("--conv-tol", type=float, default=1e-6)
    p.add_argument("--fft-tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except netmodel.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
