"""Deterministic design-space sweeps emitted as plot-ready CSV tables.

Each study pins one architectural axis, samples the remaining grid
dimensions, evaluates every sampled machine on a small benchmark, and
reports the best throughput and best energy-delay product found at
each axis value. No GUI: the artifacts are CSV files plus a JSON meta
sidecar naming the seed and inputs.
"""
from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import constants as C
from .analytic import evaluate
from .cost_model import ComponentDb
from .design_space import (GRANULARITIES, INTEGRATIONS, DesignSpace, GridSpec,
                           yield_report_of)
from .errors import InputError, WaferDseError
from .workload import load_benchmark
from .yield_model import YieldParams

CASE_STUDIES = ("CoreGranularity", "ReticleGranularity", "IntegrationStyle",
                "InferenceBandwidth", "Heterogeneity")

_DESK_CAPS = dict(core_rows_max=4, core_cols_max=4,
                  reticle_rows_max=3, reticle_cols_max=3)


def _desk_grid(**over) -> GridSpec:
    base = dict(
        mac_nums=(64, 128, 256),
        buffer_sizes=(64, 128),
        buffer_bws=(256, 512),
        noc_bws=(256, 512),
        inter_reticle_bw_ratios=(0.25, 0.5, 1.0),
        stacking_bw_densities=(0.5, 1.0, 2.0),
        redundancy_cols=(0, 1),
        n_network_ifaces=(2, 4),
        n_mem_controllers=(2, 4),
        granularities=("None",),
        n_wafers=(1,),
        **_DESK_CAPS,
    )
    base.update(over)
    return GridSpec(**base)


def _edp(rep) -> float:
    t = rep.latency_cycles / C.CLOCK_HZ
    return rep.avg_power_w * t * t


def _best_over_samples(model, grid: GridSpec, db, seed, samples):
    """(best throughput, best EDP, feasible count) across sampled points."""
    space = DesignSpace(grid, db)
    rng = np.random.default_rng([seed, 0xCA5E])
    best_thr, best_edp, n_ok = 0.0, float("inf"), 0
    for p in space.sample(rng, samples):
        try:
            rep = evaluate(model, p, db)
        except WaferDseError:
            continue
        n_ok += 1
        best_thr = max(best_thr, rep.throughput_tokens_per_s)
        best_edp = min(best_edp, _edp(rep))
    return best_thr, best_edp, n_ok


def _write_csv(path: Path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _sweep_core_granularity(db, seed, samples, benchmark):
    model = load_benchmark(benchmark, mode="Train")
    rows = []
    for mac in (32, 64, 128, 256, 512):
        grid = _desk_grid(mac_nums=(mac,))
        thr, edp, n_ok = _best_over_samples(model, grid, db, seed, samples)
        # one MAC is a multiply plus an accumulate per cycle
        rows.append((mac, 2 * mac * C.CLOCK_HZ / 1e9, thr, edp, n_ok))
    return ("mac_num,core_gflops,best_throughput,best_edp,n_feasible"
            .split(",")), rows


def _sweep_reticle_granularity(db, seed, samples, benchmark):
    model = load_benchmark(benchmark, mode="Train")
    rows = []
    for side in (1, 2, 3, 4):
        grid = _desk_grid(core_rows_max=side, core_cols_max=side)
        space = DesignSpace(grid, db)
        rng = np.random.default_rng([seed, 0xCA5E])
        best_thr, best_edp, n_ok = 0.0, float("inf"), 0
        for p in space.sample(rng, samples):
            if p.reticle.core_rows != side or p.reticle.core_cols != side:
                p = replace(p, reticle=replace(p.reticle, core_rows=side,
                                               core_cols=side))
            try:
                rep = evaluate(model, p, db)
            except WaferDseError:
                continue
            n_ok += 1
            best_thr = max(best_thr, rep.throughput_tokens_per_s)
            best_edp = min(best_edp, _edp(rep))
        rows.append((side * side, best_thr, best_edp, n_ok))
    return ("cores_per_reticle,best_throughput,best_edp,n_feasible"
            .split(",")), rows


def _sweep_integration_style(db, seed, samples, benchmark):
    """Paired comparison: identical machines, only the bonding differs.

    Performance is identical at equal points, so the deciding metric is
    throughput weighted by wafer yield (expected good-wafer throughput).
    """
    model = load_benchmark(benchmark, mode="Train")
    grid = _desk_grid(integrations=("InfoSoW",),
                      reticle_rows_max=3, reticle_cols_max=3)
    space = DesignSpace(grid, db)
    rng = np.random.default_rng([seed, 0xCA5E])
    params = YieldParams()
    rows = []
    idx = 0
    for p in space.sample(rng, samples):
        reports = {}
        for integ in INTEGRATIONS:
            q = replace(p, wafer=replace(p.wafer, integration=integ))
            try:
                rep = evaluate(model, q, db)
            except WaferDseError:
                reports = {}
                break
            y = yield_report_of(q, db, params).wafer_yield
            reports[integ] = (y, rep)
        if not reports:
            continue
        for integ, (y, rep) in reports.items():
            thr = rep.throughput_tokens_per_s
            rows.append((idx, integ, y, thr, thr * y, _edp(rep)))
        idx += 1
    return ("sample,integration,wafer_yield,throughput,"
            "throughput_x_yield,edp".split(",")), rows


def _sweep_inference_bandwidth(db, seed, samples, benchmark):
    model = load_benchmark(benchmark, mode="Prefill",
                           batch_size=C.INFERENCE_BATCH_DEFAULT)
    rows = []
    for bw in (0.25, 0.5, 1.0, 2.0, 4.0):
        grid = _desk_grid(stacking_bw_densities=(bw,),
                          memory_styles=("StackingDram",))
        thr, edp, n_ok = _best_over_samples(model, grid, db, seed, samples)
        rows.append((bw, thr, edp, n_ok))
    return ("stacking_bw_density_tbps_per_100mm2,best_throughput,best_edp,"
            "n_feasible".split(",")), rows


def _sweep_heterogeneity(db, seed, samples, benchmark):
    model = load_benchmark(benchmark, mode="Prefill",
                           batch_size=C.INFERENCE_BATCH_DEFAULT)
    rows = []
    for gran in GRANULARITIES:
        ratios = (0.5,) if gran == "None" else (0.25, 0.5, 0.75)
        for r in ratios:
            grid = _desk_grid(granularities=(gran,), prefill_ratios=(r,))
            thr, edp, n_ok = _best_over_samples(model, grid, db, seed, samples)
            rows.append((gran, r, thr, edp, n_ok))
    return ("granularity,prefill_ratio,best_throughput,best_edp,n_feasible"
            .split(",")), rows


_SWEEPS = {
    "CoreGranularity": _sweep_core_granularity,
    "ReticleGranularity": _sweep_reticle_granularity,
    "IntegrationStyle": _sweep_integration_style,
    "InferenceBandwidth": _sweep_inference_bandwidth,
    "Heterogeneity": _sweep_heterogeneity,
}


def run_casestudy(name: str, out_dir, db: ComponentDb | None = None,
                  benchmark: str = "desk-small", seed: int = 0,
                  samples: int = 16) -> Path:
    """Run one named sweep; returns the CSV path (meta JSON sits beside it)."""
    if name not in _SWEEPS:
        raise InputError(
            f"unknown case study {name!r}; choose from {CASE_STUDIES}")
    db = db or ComponentDb.default()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header, rows = _SWEEPS[name](db, seed, samples, benchmark)
    snake = "".join("_" + c.lower() if c.isupper() else c
                    for c in name).lstrip("_")
    csv_path = out_dir / f"casestudy_{snake}.csv"
    _write_csv(csv_path, header, rows)
    meta = {"case_study": name, "benchmark": benchmark, "seed": seed,
            "samples_per_point": samples, "rows": len(rows)}
    (out_dir / f"casestudy_{snake}.meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path
