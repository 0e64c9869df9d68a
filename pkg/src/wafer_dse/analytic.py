"""Analytical performance evaluation at three levels of detail.

Tile level prices one SRAM-resident tile as the max of its compute time
(MACs through the array) and its buffer traffic time (bits through the
SRAM port); the dataflow decides which tensor stays resident.  Op level
lays tiled operators on the mapped cores and takes the critical path
through the layer graph, pricing each producer-consumer edge with hop
latency plus fair-share serialization (a link carrying f flows gives each
an equivalent bandwidth of bw/f).  Chunk level wraps the per-micro-batch
stage latency with pipeline fill/drain, tensor/data-parallel collectives
(ring all-reduce, 2(n-1)/n of the volume across the bottleneck boundary),
DRAM streaming, and the optimizer step, producing iteration latency,
throughput, an additive breakdown, and wafer-level action counts that the
cost model turns into average power.

Training prices each micro-batch at four forward-equivalents (forward,
recompute, and a double-cost backward) with six all-reduces per layer;
inference prefill is one forward with two; decode runs autoregressively
with no pipelining, one token per step against the KV cache.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import constants as C
from .cost_model import ActionCounts, ComponentDb, power_of
from .errors import InputError, UnmappableWorkload
from .mesh import WaferMesh
from .workload import (
    Chunk,
    LlmSpec,
    LogicCoreGraph,
    Mapping,
    NocTrace,
    OperatorGraph,
    ParallelStrategy,
    TilePlan,
    TraceFlow,
    build_chunk_graphs,
    chunk_regions,
    enumerate_strategies,
    partition_and_allocate,
    schedule_and_map,
    stage_layer_counts,
    tile_solve,
)

TRAIN_PASS_FACTOR = 4            # forward + recompute + double-cost backward
TRAIN_ALLREDUCES_PER_LAYER = 6   # 2 each in forward, recompute, backward
INFER_ALLREDUCES_PER_LAYER = 2


# ---------------------------------------------------------------------------
# tile level
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TileCost:
    cycles_per_tile: float
    n_tiles: int
    total_cycles: float
    mac_ops: float               # per core, all tiles
    sram_read_bits: float
    sram_write_bits: float


def tile_eval(op, plan: TilePlan, core, prec_bytes: int = C.PRECISION_BYTES) -> TileCost:
    """Cycles for one core to run its share of an operator, tile by tile.

    GEMM tiles move the two streamed tensors plus an amortized share of the
    stationary one; outputs accumulate in the array and are written once,
    except when K is split (InputStationary spills partial sums per pass).
    Elementwise tiles are pure bandwidth: read plus write of every element.
    """
    pb = prec_bytes * 8
    bw = core.buffer_bw          # bits per cycle
    if op.kind == "elementwise":
        read_bits = plan.tile_rows * pb
        write_bits = plan.tile_rows * pb
        cycles = math.ceil((read_bits + write_bits) / bw)
        total = cycles * plan.n_tiles
        return TileCost(cycles, plan.n_tiles, total, 0.0,
                        read_bits * plan.n_tiles, write_bits * plan.n_tiles)

    m_t, n_c, k = plan.tile_rows, plan.n_chunk, op.k
    n_col_tiles = plan.n_tiles // plan.n_row_tiles
    a_bits = m_t * k * pb
    b_bits = k * n_c * pb
    c_bits = m_t * n_c * pb
    k_passes = math.ceil(k / plan.k_chunk)
    df = core.dataflow
    if df == "WS":               # weights resident across row tiles
        read_bits = a_bits + b_bits / plan.n_row_tiles
        write_bits = c_bits
    elif df == "IS":             # inputs resident; partial sums spill per K pass
        read_bits = a_bits / n_col_tiles + b_bits + c_bits * max(0, k_passes - 1)
        write_bits = c_bits * k_passes
    else:                        # OS: outputs resident, operands streamed
        read_bits = a_bits + b_bits
        write_bits = c_bits
    macs = float(m_t) * n_c * k
    cycles = max(math.ceil(macs / core.mac_num),
                 math.ceil((read_bits + write_bits) / bw))
    total = cycles * plan.n_tiles
    return TileCost(cycles, plan.n_tiles, total, macs * plan.n_tiles,
                    read_bits * plan.n_tiles, write_bits * plan.n_tiles)


# ---------------------------------------------------------------------------
# op level
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkStat:
    bytes_total: float
    flits: float
    n_flows: int
    bw_flits: float
    extra_lat: int
    inter_reticle: bool


@dataclass
class OpLevelReport:
    layer_cycles: float
    chunk_cycles: float          # layer_cycles x repeated layers
    compute_cycles: float        # node-only critical path (chain: sum)
    node_cycles: dict            # op id -> per-core busy cycles
    edge_delay: dict             # (src op, dst op) -> cycles
    link_stats: dict             # (u, v) node ids -> LinkStat
    counts: ActionCounts         # one chunk, one micro-batch, forward


def op_level_analytical(lgraph: LogicCoreGraph, mesh: WaferMesh,
                        core_cfg=None) -> OpLevelReport:
    """Critical path of one layer on its mapped cores, plus link statistics."""
    if core_cfg is None:
        core_cfg = lgraph.core_cfg
    node_cycles = {}
    tile_costs = {}
    mac_total = 0.0
    rd_total = 0.0
    wr_total = 0.0
    for ln in lgraph.nodes:
        tc = tile_eval(ln.op, ln.plan, core_cfg, C.PRECISION_BYTES)
        ln.tile_cycles = tc.cycles_per_tile
        ln.compute_cycles = tc.total_cycles
        node_cycles[ln.op.op_id] = tc.total_cycles
        tile_costs[ln.op.op_id] = tc
        cores = ln.assignment.core_count
        mac_total += tc.mac_ops * cores
        rd_total += tc.sram_read_bits * cores
        wr_total += tc.sram_write_bits * cores

    routes = {}
    flow_links = {}
    for f in lgraph.flows:
        links = mesh.route(f.src_core, f.dst_core)
        flow_links[f.flow_id] = links
        for uv in links:
            routes.setdefault(uv, []).append(f)

    link_stats = {}
    hop_flits = 0.0
    inter_bits = 0.0
    for uv, fl in routes.items():
        u0, v0 = uv
        y0, x0 = mesh.node_yx(u0)
        y1, x1 = mesh.node_yx(v0)
        info = mesh.link_info(y0, x0, y1, x1)
        bytes_total = sum(f.volume for f in fl)
        flits = sum(math.ceil(f.volume / C.FLIT_BYTES) for f in fl)
        link_stats[uv] = LinkStat(bytes_total, flits, len(fl),
                                  info.bw_flits, info.extra_lat,
                                  info.inter_reticle)
        hop_flits += flits
        if info.inter_reticle:
            inter_bits += bytes_total * 8.0

    edge_delay = {}
    for e in lgraph.edges:
        worst = 0.0
        for f in lgraph.flows:
            if f.src_op != e.src or f.dst_op != e.dst:
                continue
            hop_lat = 0.0
            ser = 0.0
            vol_flits = math.ceil(f.volume / C.FLIT_BYTES)
            for uv in flow_links[f.flow_id]:
                st = link_stats[uv]
                hop_lat += C.ROUTER_PIPELINE_CYCLES + st.extra_lat
                ser = max(ser, vol_flits * st.n_flows / st.bw_flits)
            worst = max(worst, hop_lat + ser)
        edge_delay[(e.src, e.dst)] = worst

    preds = {}
    for e in lgraph.edges:
        preds.setdefault(e.dst, []).append(e.src)
    finish = {}
    for ln in lgraph.nodes:                  # nodes are in topological order
        op = ln.op.op_id
        start = 0.0
        for pr in preds.get(op, []):
            start = max(start, finish[pr] + edge_delay[(pr, op)])
        finish[op] = start + node_cycles[op]
    layer_cycles = max(finish.values())
    compute_cycles = sum(node_cycles.values())

    counts = ActionCounts(
        mac_op=mac_total,
        sram_read_bit=rd_total,
        sram_write_bit=wr_total,
        noc_hop_flit=hop_flits,
        inter_reticle_bit=inter_bits,
    )
    return OpLevelReport(
        layer_cycles=layer_cycles,
        chunk_cycles=layer_cycles * lgraph.repeat,
        compute_cycles=compute_cycles,
        node_cycles=node_cycles,
        edge_delay=edge_delay,
        link_stats=link_stats,
        counts=counts,
    )


def finalize_trace(lgraph: LogicCoreGraph, trace: NocTrace) -> NocTrace:
    """Fill packet cadence and stalls from the tile model.

    A flow's packets leave one per producer tile; the first waits for one
    tile's compute.  Gated flows additionally wait for every flow feeding
    the producer op to finish.
    """
    by_op = {ln.op.op_id: ln for ln in lgraph.nodes}
    out = []
    for f, raw in zip(trace.flows, lgraph.flows):
        ln = by_op[raw.src_op]
        out.append(TraceFlow(
            flow_id=f.flow_id, src=f.src, dst=f.dst,
            bytes_total=f.bytes_total, n_packets=f.n_packets,
            packet_bytes=f.packet_bytes,
            interval=max(1.0, ln.tile_cycles),
            start_cycle=max(1.0, ln.tile_cycles),
            gate_group=f.gate_group,
            stall_cycles=max(1.0, ln.tile_cycles),
        ))
    return NocTrace(flows=out, groups=trace.groups,
                    width=trace.width, height=trace.height, seed=trace.seed)


# ---------------------------------------------------------------------------
# chunk level
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    mode: str
    fidelity: str
    strategy: ParallelStrategy
    latency_cycles: float        # iteration (train) or request (inference)
    throughput_tokens_per_s: float
    breakdown: dict              # compute/noc/inter_reticle/dram/bubble cycles
    counts: ActionCounts         # per wafer, per iteration or request
    avg_power_w: float
    peak_power_w: float
    extras: dict = field(default_factory=dict)

    def objectives(self) -> tuple:
        return (self.throughput_tokens_per_s, self.avg_power_w)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "fidelity": self.fidelity,
            "strategy": {"tp": self.strategy.tp, "pp": self.strategy.pp,
                         "dp": self.strategy.dp,
                         "micro_batch": self.strategy.micro_batch},
            "latency_cycles": self.latency_cycles,
            "throughput_tokens_per_s": self.throughput_tokens_per_s,
            "breakdown": dict(self.breakdown),
            "avg_power_w": self.avg_power_w,
            "peak_power_w": self.peak_power_w,
            "action_counts": self.counts.as_dict(),
            "extras": dict(self.extras),
        }


def _region_boundary(a, b) -> int:
    n = 0
    bs = set(b)
    for (r, c) in a:
        for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            if (r + dr, c + dc) in bs:
                n += 1
    return n


def _ring_cycles(vol_bytes: float, n: int, bw_gbps: float) -> float:
    """Ring all-reduce: each rank moves 2(n-1)/n of the volume per boundary.

    bw in Gbps equals bits per cycle at the 1 GHz clock.
    """
    if n <= 1 or vol_bytes <= 0:
        return 0.0
    if bw_gbps <= 0:
        raise InputError("collective bandwidth must be positive")
    return 2.0 * (n - 1) / n * vol_bytes * 8.0 / bw_gbps


def _xfer_cycles(vol_bytes: float, bw_gbps: float) -> float:
    if vol_bytes <= 0:
        return 0.0
    if bw_gbps <= 0:
        raise InputError("transfer bandwidth must be positive")
    return vol_bytes * 8.0 / bw_gbps


@dataclass
class _ChunkCtx:
    """Shared per-(point, strategy) geometry and bandwidths."""

    p: object
    db: ComponentDb
    model: LlmSpec
    s: ParallelStrategy
    regions: dict
    mesh: WaferMesh
    phy_gbps: float
    ret_chunk: int
    cores_chunk: int
    dram_scale: float = 1.0

    @property
    def sram_half_bytes(self) -> float:
        return self.cores_chunk * self.p.core.buffer_size * 1024.0 / 2.0

    def dram_bytes_per_cycle(self) -> float:
        p = self.p
        if p.wafer.memory_style == "StackingDram":
            area = p.reticle.stacking_dram_bw_density  # TB/s per 100 mm^2
            from .cost_model import area_of
            rep = area_of(p, self.db)
            tbps = area * rep.reticle_mm2 / 100.0 * self.ret_chunk
            return tbps * 1e12 / C.CLOCK_HZ * self.dram_scale
        total = (p.wafer.n_mem_controllers * C.MEM_CONTROLLER_GBYTES * 1e9
                 * p.n_wafers)
        n_ret_total = p.wafer.reticle_rows * p.wafer.reticle_cols * p.n_wafers
        share = total * self.ret_chunk / n_ret_total
        return share / C.CLOCK_HZ * self.dram_scale

    def dram_hop_cycles(self) -> float:
        if self.p.wafer.memory_style == "StackingDram":
            return 0.0
        return self.mesh.width / 2.0 * C.ROUTER_PIPELINE_CYCLES

    def boundary_bw(self, cid_a, cid_b) -> float:
        """Chunk-to-chunk bandwidth in Gbps across shared reticle boundaries."""
        wa, ra = self.regions[cid_a]
        wb, rb = self.regions[cid_b]
        if wa != wb:
            n_if = self.p.wafer.n_network_ifaces
            concurrent = max(1, self.s.n_chunks // self.p.n_wafers)
            return n_if * C.INTER_WAFER_GBYTES * 8.0 / concurrent
        b = max(1, _region_boundary(ra, rb))
        return b * self.phy_gbps


def _stage_mb_terms(ctx: _ChunkCtx, stage: int, layers_st: int,
                    fwd_cycles: float) -> dict:
    """Per-micro-batch stage terms beyond compute: tp, pp, dram cycles."""
    model, s = ctx.model, ctx.s
    prec = model.precision_bytes
    rows = s.micro_batch if model.mode == "Decode" else s.micro_batch * model.seq_len
    act_bytes = rows * model.hidden_size * prec

    n_ar = (TRAIN_ALLREDUCES_PER_LAYER if model.mode == "Train"
            else INFER_ALLREDUCES_PER_LAYER)
    t_tp = 0.0
    if s.tp > 1:
        bw = min(ctx.boundary_bw((stage, 0, t), (stage, 0, (t + 1) % s.tp))
                 for t in range(s.tp))
        t_tp = n_ar * layers_st * _ring_cycles(act_bytes, s.tp, bw)

    t_pp = 0.0
    if s.pp > 1 and stage + 1 < s.pp:
        bw = ctx.boundary_bw((stage, 0, 0), (stage + 1, 0, 0))
        n_xfer = 2 if model.mode == "Train" else 1
        t_pp = n_xfer * _xfer_cycles(act_bytes / s.tp, bw)

    w_bytes = (model.params * layers_st / model.n_layers / s.tp) * prec
    stream_w = max(0.0, w_bytes - ctx.sram_half_bytes)
    dram_traffic = 0.0
    if model.mode == "Train":
        dram_traffic += stream_w * TRAIN_PASS_FACTOR
        n_ckpt = math.ceil(layers_st / C.CKPT_GRANULARITY_LAYERS)
        dram_traffic += 2.0 * n_ckpt * act_bytes / s.tp
    elif model.mode == "Prefill":
        dram_traffic += stream_w
        kv_write = 2.0 * rows * model.hidden_size * prec / s.tp * layers_st
        if model.mqa:
            kv_write /= model.n_heads
        dram_traffic += kv_write
    else:                         # Decode: stream weights + read the KV cache
        dram_traffic += stream_w
        kv_read = (2.0 * model.seq_len * s.micro_batch * model.hidden_size
                   * prec / s.tp) * layers_st
        if model.mqa:
            kv_read /= model.n_heads
        dram_traffic += kv_read
    bpc = ctx.dram_bytes_per_cycle()
    t_dram = dram_traffic / bpc + (ctx.dram_hop_cycles() if dram_traffic else 0.0)

    return {"tp": t_tp, "pp": t_pp, "dram": t_dram,
            "dram_bytes": dram_traffic, "act_bytes": act_bytes}


def _dp_terms(ctx: _ChunkCtx, layers_worst: int) -> dict:
    """Per-iteration gradient all-reduce and optimizer traffic."""
    model, s = ctx.model, ctx.s
    if model.mode != "Train":
        return {"net": 0.0, "dram": 0.0, "net_bytes": 0.0, "dram_bytes": 0.0}
    grad_bytes = (model.params * layers_worst / model.n_layers / s.tp
                  * model.precision_bytes)
    t_net = 0.0
    if s.dp > 1:
        bw = min(ctx.boundary_bw((0, d, 0), (0, (d + 1) % s.dp, 0))
                 for d in range(s.dp))
        t_net = _ring_cycles(grad_bytes, s.dp, bw)
    opt_bytes = 2.0 * 16.0 * model.params * layers_worst / model.n_layers / s.tp
    t_dram = opt_bytes / ctx.dram_bytes_per_cycle()
    net_bytes = 2.0 * (s.dp - 1) / s.dp * grad_bytes if s.dp > 1 else 0.0
    return {"net": t_net, "dram": t_dram,
            "net_bytes": net_bytes, "dram_bytes": opt_bytes}


def _make_ctx(model: LlmSpec, s: ParallelStrategy, p, db: ComponentDb,
              dram_scale: float = 1.0) -> _ChunkCtx:
    from .cost_model import phy_gbps_per_boundary
    regions = chunk_regions(p, s)
    mesh = WaferMesh(p)
    total_ret = p.wafer.reticle_rows * p.wafer.reticle_cols * p.n_wafers
    ret_chunk = total_ret // s.n_chunks
    cores_chunk = ret_chunk * p.reticle.core_rows * p.reticle.core_cols
    return _ChunkCtx(p=p, db=db, model=model, s=s, regions=regions, mesh=mesh,
                     phy_gbps=phy_gbps_per_boundary(p), ret_chunk=ret_chunk,
                     cores_chunk=cores_chunk, dram_scale=dram_scale)


def _rep_chunk_report(model: LlmSpec, s: ParallelStrategy, p, ctx: _ChunkCtx,
                      layers: int, chunk_override=None):
    """Op-level report of a representative chunk with this many layers."""
    g_all = build_chunk_graphs(model, s)
    chunk = next(c for c in g_all if c.layers == layers)
    assigns = partition_and_allocate(chunk.graph,
                                     ctx.cores_chunk, p.core,
                                     model.precision_bytes)
    wafer_idx, region = ctx.regions[chunk.chunk_id.as_tuple()]
    lgraph, mapping, trace = schedule_and_map(chunk.graph, assigns, p,
                                              region, ctx.mesh, wafer_idx)
    rep = op_level_analytical(lgraph, ctx.mesh)
    if chunk_override is not None:
        scale = chunk_override / rep.chunk_cycles if rep.chunk_cycles > 0 else 1.0
        rep.chunk_cycles = chunk_override
        rep.layer_cycles = rep.layer_cycles * scale
    return rep, lgraph, trace


def evaluate_training(model: LlmSpec, s: ParallelStrategy, p,
                      db: ComponentDb, chunk_cycles_override=None,
                      fidelity: str = "analytic") -> EvalReport:
    """One training iteration: 1F1B pipeline with recompute.

    chunk_cycles_override replaces the analytic per-chunk forward latency
    (used by the cycle-level and surrogate fidelities).
    """
    if model.mode != "Train":
        model = replace(model, mode="Train")
    ctx = _make_ctx(model, s, p, db)
    layer_counts = stage_layer_counts(model.n_layers, s.pp)
    worst = max(layer_counts)
    rep, lgraph, _ = _rep_chunk_report(model, s, p, ctx, worst,
                                       chunk_override=chunk_cycles_override)

    m = model.batch_size // s.dp // s.micro_batch
    terms = _stage_mb_terms(ctx, _worst_stage(layer_counts), worst,
                            rep.chunk_cycles)
    t_fwd = TRAIN_PASS_FACTOR * rep.chunk_cycles
    t_stage = t_fwd + terms["tp"] + terms["pp"] + terms["dram"]
    dp = _dp_terms(ctx, worst)
    t_dp = dp["net"] + dp["dram"]
    iteration = (m + s.pp - 1) * t_stage + t_dp

    comp_frac = (rep.compute_cycles / rep.layer_cycles
                 if rep.layer_cycles > 0 else 1.0)
    compute = m * t_fwd * comp_frac
    noc = m * t_fwd * (1.0 - comp_frac)
    inter = m * (terms["tp"] + terms["pp"]) + dp["net"]
    dram = m * terms["dram"] + dp["dram"]
    bubble = (s.pp - 1) * t_stage
    breakdown = {"compute": compute, "noc": noc, "inter_reticle": inter,
                 "dram": dram, "bubble": bubble}

    counts = _accumulate_counts(ctx, rep, terms, dp, m,
                                TRAIN_PASS_FACTOR, layer_counts)
    runtime_s = iteration / C.CLOCK_HZ
    pw = power_of(p, counts, runtime_s, db)

    tokens = model.batch_size * model.seq_len
    return EvalReport(
        mode="Train", fidelity=fidelity, strategy=s,
        latency_cycles=iteration,
        throughput_tokens_per_s=tokens / runtime_s,
        breakdown=breakdown, counts=counts,
        avg_power_w=pw.avg_power_w, peak_power_w=pw.peak_power_w,
        extras={"micro_batches": m, "stage_cycles": t_stage,
                "chunk_cycles": rep.chunk_cycles},
    )


def _worst_stage(layer_counts) -> int:
    worst = max(layer_counts)
    return layer_counts.index(worst)


def _accumulate_counts(ctx: _ChunkCtx, rep: OpLevelReport, terms: dict,
                       dp_terms: dict, m: int, passes: float,
                       layer_counts) -> ActionCounts:
    """Wafer-level action totals for one iteration (or one request)."""
    model, s, p = ctx.model, ctx.s, ctx.p
    n_chunks = s.n_chunks
    scale_layers = sum(layer_counts) / (max(layer_counts) * s.pp)
    per_chunk = rep.counts
    stacking = p.wafer.memory_style == "StackingDram"
    chunk_f = m * passes * n_chunks * scale_layers

    coll_bits = 0.0
    if s.tp > 1:
        n_ar = (TRAIN_ALLREDUCES_PER_LAYER if model.mode == "Train"
                else INFER_ALLREDUCES_PER_LAYER)
        coll_bits += (n_ar * sum(layer_counts) * 2.0 * (s.tp - 1) / s.tp
                      * terms["act_bytes"] * 8.0 * m * s.dp * s.tp)
    if s.pp > 1:
        n_x = 2 if model.mode == "Train" else 1
        coll_bits += (n_x * (s.pp - 1) * terms["act_bytes"] / s.tp * 8.0
                      * m * s.dp * s.tp)

    wafer_div = float(p.n_wafers)
    rs = lgraph_repeat_scale(rep)
    counts = ActionCounts(
        mac_op=per_chunk.mac_op * rs * chunk_f / wafer_div,
        sram_read_bit=per_chunk.sram_read_bit * rs * chunk_f / wafer_div,
        sram_write_bit=per_chunk.sram_write_bit * rs * chunk_f / wafer_div,
        noc_hop_flit=per_chunk.noc_hop_flit * rs * chunk_f / wafer_div,
        inter_reticle_bit=(per_chunk.inter_reticle_bit * rs * chunk_f
                           + coll_bits) / wafer_div,
        dram_access_bit_stacking=(
            (terms["dram_bytes"] * 8.0 * m * n_chunks
             + dp_terms["dram_bytes"] * 8.0 * n_chunks) / wafer_div
            if stacking else 0.0),
        dram_access_bit_offchip=(
            (terms["dram_bytes"] * 8.0 * m * n_chunks
             + dp_terms["dram_bytes"] * 8.0 * n_chunks) / wafer_div
            if not stacking else 0.0),
        inter_wafer_bit=(dp_terms["net_bytes"] * 8.0 * n_chunks / wafer_div
                         if p.n_wafers > 1 else 0.0),
    )
    return counts


def lgraph_repeat_scale(rep: OpLevelReport) -> float:
    """Per-chunk counts were tallied for one layer; scale to the stage."""
    if rep.layer_cycles <= 0:
        return 1.0
    return rep.chunk_cycles / rep.layer_cycles


def evaluate_inference_phase(model: LlmSpec, s: ParallelStrategy, p,
                             db: ComponentDb, dram_scale: float = 1.0,
                             chunk_cycles_override=None,
                             fidelity: str = "analytic") -> EvalReport:
    """One batch through prefill, or one generated batch through decode.

    Prefill pipelines micro-batches like training (single forward pass);
    decode is strictly sequential over stages and over output tokens.
    """
    if model.mode not in ("Prefill", "Decode"):
        raise InputError(f"inference phase needs Prefill or Decode, got {model.mode}")
    ctx = _make_ctx(model, s, p, db, dram_scale=dram_scale)
    layer_counts = stage_layer_counts(model.n_layers, s.pp)
    worst = max(layer_counts)
    rep, lgraph, _ = _rep_chunk_report(model, s, p, ctx, worst,
                                       chunk_override=chunk_cycles_override)
    terms = _stage_mb_terms(ctx, _worst_stage(layer_counts), worst,
                            rep.chunk_cycles)
    t_stage = rep.chunk_cycles + terms["tp"] + terms["pp"] + terms["dram"]

    if model.mode == "Prefill":
        m = 1                                 # whole batch in one pass
        latency = (m + s.pp - 1) * t_stage
        tokens = model.batch_size * model.seq_len
        out_steps = 1
    else:
        # a token visits every stage in sequence; no pipelining
        step = s.pp * t_stage
        out_steps = model.seq_len
        latency = out_steps * step
        tokens = model.batch_size * out_steps
        m = 1

    comp_frac = (rep.compute_cycles / rep.layer_cycles
                 if rep.layer_cycles > 0 else 1.0)
    per_pass = rep.chunk_cycles * (s.pp if model.mode == "Decode" else m)
    scale_steps = out_steps
    compute = per_pass * comp_frac * scale_steps
    noc = per_pass * (1.0 - comp_frac) * scale_steps
    inter = (terms["tp"] + terms["pp"]) * (s.pp if model.mode == "Decode" else m) * scale_steps
    dram = terms["dram"] * (s.pp if model.mode == "Decode" else m) * scale_steps
    bubble = max(0.0, latency - compute - noc - inter - dram)
    breakdown = {"compute": compute, "noc": noc, "inter_reticle": inter,
                 "dram": dram, "bubble": bubble}

    dpz = {"net": 0.0, "dram": 0.0, "net_bytes": 0.0, "dram_bytes": 0.0}
    eff_m = out_steps * (s.pp if model.mode == "Decode" else m)
    counts = _accumulate_counts(ctx, rep, terms, dpz, eff_m, 1.0, layer_counts)
    runtime_s = latency / C.CLOCK_HZ
    pw = power_of(p, counts, runtime_s, db)
    return EvalReport(
        mode=model.mode, fidelity=fidelity, strategy=s,
        latency_cycles=latency,
        throughput_tokens_per_s=tokens / runtime_s,
        breakdown=breakdown, counts=counts,
        avg_power_w=pw.avg_power_w, peak_power_w=pw.peak_power_w,
        extras={"stage_cycles": t_stage, "chunk_cycles": rep.chunk_cycles},
    )


# ---------------------------------------------------------------------------
# strategy search and top-level entry
# ---------------------------------------------------------------------------

def best_strategy(model: LlmSpec, p, db: ComponentDb,
                  evaluator=None, limit: int = 0) -> EvalReport:
    """Highest-throughput strategy; ties break lexicographically smallest.

    evaluator defaults to the mode-appropriate analytic one; limit > 0
    caps how many strategies are tried, taken as an even stride through
    the sorted list so tp/pp/dp extremes all get sampled.
    """
    strategies = enumerate_strategies(model, p)
    if 0 < limit < len(strategies):
        idx = [round(i * (len(strategies) - 1) / (limit - 1)) for i in range(limit)] \
            if limit > 1 else [0]
        strategies = [strategies[i] for i in sorted(set(idx))]
    best = None
    best_key = None
    errors = []
    for s in strategies:
        try:
            if evaluator is not None:
                repn = evaluator(model, s, p, db)
            elif model.mode == "Train":
                repn = evaluate_training(model, s, p, db)
            else:
                repn = evaluate_inference_phase(model, s, p, db)
        except UnmappableWorkload as e:
            errors.append(f"{s}: {e}")
            continue
        key = (-repn.throughput_tokens_per_s, s.tp, s.pp, s.dp, s.micro_batch)
        if best_key is None or key < best_key:
            best, best_key = repn, key
    if best is None:
        raise UnmappableWorkload(
            f"{model.name}: every strategy failed to map: {errors[:3]}")
    return best


def _split_counts(n: int, ratio: float) -> tuple:
    a = min(n - 1, max(1, round(ratio * n)))
    return a, n - a


def split_point(p, ratio: float):
    """Prefill/decode sub-machines per the heterogeneity granularity.

    Returns (prefill point, decode point, prefill dram scale, decode dram
    scale).  Sub-points describe logical partitions of the same physical
    wafer, so they skip re-validation.
    """
    g = p.hetero.granularity
    if g == "CoreLevel":
        if p.reticle.core_cols < 2:
            raise UnmappableWorkload("CoreLevel split needs >= 2 core columns")
        a, b = _split_counts(p.reticle.core_cols, ratio)
        pa = replace(p, reticle=replace(p.reticle, core_cols=a))
        pb = replace(p, reticle=replace(p.reticle, core_cols=b))
        return pa, pb, a / p.reticle.core_cols, b / p.reticle.core_cols
    if g == "ReticleLevel":
        if p.wafer.reticle_cols < 2:
            raise UnmappableWorkload("ReticleLevel split needs >= 2 reticle columns")
        a, b = _split_counts(p.wafer.reticle_cols, ratio)
        pa = replace(p, wafer=replace(p.wafer, reticle_cols=a))
        pb = replace(p, wafer=replace(p.wafer, reticle_cols=b))
        return pa, pb, 1.0, 1.0
    if g == "WaferLevel":
        if p.n_wafers < 2:
            raise UnmappableWorkload("WaferLevel split needs >= 2 wafers")
        a, b = _split_counts(p.n_wafers, ratio)
        return replace(p, n_wafers=a), replace(p, n_wafers=b), 1.0, 1.0
    raise InputError(f"no split for granularity {g}")


def evaluate_inference(model: LlmSpec, p, db: ComponentDb,
                       batch_size: int = C.INFERENCE_BATCH_DEFAULT,
                       fidelity: str = "analytic",
                       phase_evaluator=None) -> EvalReport:
    """End-to-end serving throughput across prefill and decode.

    With no heterogeneity the same machine runs the phases back to back
    (rate 1/(Tp+Td)); with a split, each phase gets its sub-machine and the
    steady-state rate is the slower phase's, the handoff being the KV
    transfer across the partition boundary.
    """
    m_pre = replace(model, mode="Prefill", batch_size=batch_size)
    m_dec = replace(model, mode="Decode", batch_size=batch_size)

    def run(mm, pp_, scale):
        if phase_evaluator is not None:
            return phase_evaluator(mm, pp_, db, scale)
        return best_strategy(mm, pp_, db,
                             evaluator=lambda mo, st, po, d:
                             evaluate_inference_phase(mo, st, po, d,
                                                      dram_scale=scale,
                                                      fidelity=fidelity))

    if p.hetero.granularity == "None":
        rep_p = run(m_pre, p, 1.0)
        rep_d = run(m_dec, p, 1.0)
        total = rep_p.latency_cycles + rep_d.latency_cycles
        rate = C.CLOCK_HZ / total
        kv_cycles = 0.0
    else:
        pa, pb, sa, sb = split_point(p, p.hetero.prefill_ratio)
        rep_p = run(m_pre, pa, sa)
        rep_d = run(m_dec, pb, sb)
        kv_bytes = (2.0 * model.seq_len * batch_size * model.hidden_size
                    * model.precision_bytes * model.n_layers)
        if model.mqa:
            kv_bytes /= model.n_heads
        from .cost_model import phy_gbps_per_boundary
        bw = phy_gbps_per_boundary(p) * max(1, min(p.reticle.core_rows,
                                                   p.wafer.reticle_rows))
        kv_cycles = kv_bytes * 8.0 / bw
        bottleneck = max(rep_p.latency_cycles, rep_d.latency_cycles, kv_cycles)
        rate = C.CLOCK_HZ / bottleneck
        total = rep_p.latency_cycles + rep_d.latency_cycles

    out_tokens = batch_size * model.seq_len
    breakdown = {k: rep_p.breakdown[k] + rep_d.breakdown[k]
                 for k in rep_p.breakdown}
    counts = rep_p.counts.add(rep_d.counts)
    runtime_s = total / C.CLOCK_HZ
    pw = power_of(p, counts, runtime_s, db)
    return EvalReport(
        mode="Inference", fidelity=fidelity, strategy=rep_d.strategy,
        latency_cycles=total,
        throughput_tokens_per_s=rate * out_tokens,
        breakdown=breakdown, counts=counts,
        avg_power_w=pw.avg_power_w, peak_power_w=pw.peak_power_w,
        extras={"prefill": rep_p.to_json(), "decode": rep_d.to_json(),
                "kv_handoff_cycles": kv_cycles},
    )


def evaluate(model: LlmSpec, p, db: ComponentDb,
             fidelity: str = "analytic") -> EvalReport:
    """Mode dispatch: training iterations or serving throughput."""
    if model.mode == "Train":
        return best_strategy(model, p, db)
    return evaluate_inference(model, p, db, batch_size=model.batch_size,
                              fidelity=fidelity)
