"""LLM workload compiler: strategy enumeration through mapped NoC traces.

Compilation follows four steps.  (1) The model is cut into chunks, one per
(pipeline stage, data-parallel rank, tensor-parallel rank) cell; each chunk
gets an operator graph for one transformer layer (layers inside a stage are
identical, so one layer is built and repeated).  (2) The graph is
partitioned across the chunk's cores proportionally to per-op work.
(3) Operators are tiled so each core's working set fits its SRAM buffer,
fixing the packet cadence.  (4) Logic cores are placed row-major inside the
chunk's reticle region, defects are skipped via spare-column shift, and
every producer-consumer flow is routed X-then-Y, yielding the NoC trace.

Tensor parallelism follows the standard column/row-parallel transformer
split at head granularity: two all-reduces per layer (attention output and
MLP output), both sized micro_batch x seq x hidden x precision bytes.
"""

from __future__ import annotations

import math

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from . import constants as C
from .errors import InputError, TileTooLarge, UnmappableWorkload
from .mesh import WaferMesh

MODES = ("Train", "Prefill", "Decode")


# ---------------------------------------------------------------------------
# model spec and benchmark loading
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LlmSpec:
    name: str
    n_layers: int
    hidden_size: int
    n_heads: int
    n_params_b: float
    batch_size: int
    seq_len: int = C.SEQ_LEN_DEFAULT
    mode: str = "Train"
    precision_bytes: int = C.PRECISION_BYTES
    mqa: bool = False
    n_gpus: int = 0          # reference cluster size for area-matched sizing

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode}")
        if self.hidden_size % self.n_heads != 0:
            raise InputError(
                f"hidden_size {self.hidden_size} not divisible by n_heads {self.n_heads}")
        if min(self.n_layers, self.hidden_size, self.n_heads, self.batch_size,
               self.seq_len, self.precision_bytes) < 1:
            raise InputError("model dimensions must be positive")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.n_heads

    @property
    def params(self) -> float:
        return self.n_params_b * 1e9


def _load_toml_resource(fname: str) -> dict:
    ref = resources.files("wafer_dse").joinpath(f"data/{fname}")
    with ref.open("rb") as fh:
        return tomllib.load(fh)


def list_benchmarks() -> list:
    names = list(_load_toml_resource("benchmarks.toml"))
    names += list(_load_toml_resource("benchmarks_desk.toml"))
    return names


def load_benchmark(name_or_path: str, **overrides) -> LlmSpec:
    """A shipped benchmark by name, or any TOML file with the same fields.

    Overrides (mode, batch_size, ...) replace the stored values, so one
    shape serves training and both inference phases.
    """
    tables = {}
    tables.update(_load_toml_resource("benchmarks.toml"))
    tables.update(_load_toml_resource("benchmarks_desk.toml"))
    if name_or_path in tables:
        data = dict(tables[name_or_path])
        data["name"] = name_or_path
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise InputError(
                f"unknown benchmark {name_or_path!r}; shipped: {sorted(tables)}")
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        if len(raw) == 1 and isinstance(next(iter(raw.values())), dict):
            name, data = next(iter(raw.items()))
            data = dict(data)
            data["name"] = name
        else:
            data = dict(raw)
            data.setdefault("name", path.stem)
    data.update(overrides)
    try:
        return LlmSpec(**data)
    except TypeError as e:
        raise InputError(f"bad benchmark fields: {e}") from None


def wafers_for(model: LlmSpec, wafer_mm2: float, gpu_die_mm2: float = 826.0) -> int:
    """Wafer count matching the reference cluster's total silicon area."""
    if model.n_gpus <= 0:
        return 1
    return max(1, round(model.n_gpus * gpu_die_mm2 / wafer_mm2))


# ---------------------------------------------------------------------------
# parallel strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class ParallelStrategy:
    tp: int
    pp: int
    dp: int
    micro_batch: int

    def __post_init__(self):
        if min(self.tp, self.pp, self.dp, self.micro_batch) < 1:
            raise InputError("strategy components must be >= 1")

    @property
    def n_chunks(self) -> int:
        return self.tp * self.pp * self.dp


def stage_layer_counts(n_layers: int, pp: int) -> list:
    """Contiguous layer split; remainder layers go to the later stages."""
    base = n_layers // pp
    extra = n_layers % pp
    return [base + (1 if s >= pp - extra else 0) for s in range(pp)]


def _divisors(n: int) -> list:
    out = [d for d in range(1, n + 1) if n % d == 0]
    return out


def chunk_capacity_bytes(p, strategy: ParallelStrategy) -> float:
    """SRAM plus this chunk's DRAM share, in bytes."""
    total_reticles = p.wafer.reticle_rows * p.wafer.reticle_cols * p.n_wafers
    ret_chunk = total_reticles // strategy.n_chunks
    cores_chunk = ret_chunk * p.reticle.core_rows * p.reticle.core_cols
    sram = cores_chunk * p.core.buffer_size * 1024.0
    share = ret_chunk / total_reticles
    if p.wafer.memory_style == "StackingDram":
        dram = p.reticle.stacking_dram_capacity * 1e9 * p.n_wafers * share
    else:
        dram = (p.wafer.n_mem_controllers * C.MEM_CONTROLLER_CAPACITY_GB
                * 1e9 * p.n_wafers * share)
    return sram + dram


def chunk_footprint_bytes(model: LlmSpec, s: ParallelStrategy,
                          stage_layers: int) -> float:
    """Worst-stage memory footprint of one chunk, in bytes.

    Training: 16 bytes/param (fp16 weights+grads, fp32 optimizer pair) plus
    checkpointed boundary activations for the in-flight micro-batches and a
    two-layer recompute working set.  Inference: weights at precision plus
    the KV cache (divided by n_heads when MQA is on).
    """
    params_stage = model.params * stage_layers / model.n_layers / s.tp
    mb_tokens = s.micro_batch * model.seq_len
    act_slab = mb_tokens * model.hidden_size * model.precision_bytes / s.tp
    if model.mode == "Train":
        m = model.batch_size // s.dp // s.micro_batch
        n_ckpt = math.ceil(stage_layers / C.CKPT_GRANULARITY_LAYERS)
        acts = n_ckpt * act_slab * min(m, s.pp) + 2 * act_slab
        return 16.0 * params_stage + acts
    batch_chunk = model.batch_size / s.dp
    kv = (stage_layers * 2.0 * model.seq_len * batch_chunk
          * model.hidden_size * model.precision_bytes / s.tp)
    if model.mqa:
        kv /= model.n_heads
    return model.precision_bytes * params_stage + kv


def enumerate_strategies(model: LlmSpec, p) -> list:
    """All (tp, pp, dp, micro_batch) mapping the model onto the point.

    Filters: the chunk count tp*pp*dp divides the total reticle count and
    is a multiple of n_wafers (chunks never straddle wafers); tp respects
    head granularity; pp at most the layer count; dp divides the batch;
    micro_batch divides the per-rank batch; the worst-stage chunk footprint
    fits the chunk's SRAM + DRAM share.
    """
    total_reticles = p.wafer.reticle_rows * p.wafer.reticle_cols * p.n_wafers
    out = []
    for tp in _divisors(total_reticles):
        if tp > model.n_heads:
            continue
        for pp in _divisors(total_reticles // tp):
            if pp > model.n_layers:
                continue
            worst_stage = max(stage_layer_counts(model.n_layers, pp))
            for dp in _divisors(total_reticles // (tp * pp)):
                if dp > model.batch_size or model.batch_size % dp != 0:
                    continue
                if (tp * pp * dp) % p.n_wafers != 0:
                    continue
                per_rank = model.batch_size // dp
                mb_options = _divisors(per_rank) if model.mode == "Train" else [per_rank]
                for mb in mb_options:
                    s = ParallelStrategy(tp, pp, dp, mb)
                    if chunk_footprint_bytes(model, s, worst_stage) <= chunk_capacity_bytes(p, s):
                        out.append(s)
    if not out:
        raise UnmappableWorkload(
            f"{model.name}: no parallel strategy fits "
            f"{total_reticles} reticles with the available memory")
    return sorted(out)


# ---------------------------------------------------------------------------
# operator graphs
# ---------------------------------------------------------------------------

@dataclass
class OpNode:
    op_id: int
    name: str
    kind: str                # gemm | elementwise
    m: int
    n: int
    k: int
    out_bytes: int
    flops: float
    weight_bytes: int = 0    # parameters this op streams from memory

    @property
    def moved_bytes(self) -> int:
        return self.out_bytes


@dataclass(frozen=True)
class OpEdge:
    src: int
    dst: int
    volume: int              # bytes per micro-batch


@dataclass(frozen=True)
class InterChunkEdge:
    kind: str                # TpCollective | PpActivation | DpGradient | KvTransfer
    src_chunk: tuple
    dst_chunk: tuple
    bytes_each: float        # per occurrence
    per_microbatch: int      # occurrences per micro-batch (0: per iteration)


@dataclass
class OperatorGraph:
    """One transformer layer's ops for a single chunk, plus a repeat count."""

    nodes: list
    edges: list
    repeat: int = 1          # identical layers executed sequentially

    def layer_flops(self) -> float:
        return sum(n.flops for n in self.nodes)

    def total_flops(self) -> float:
        return self.layer_flops() * self.repeat

    def check_acyclic(self):
        indeg = {n.op_id: 0 for n in self.nodes}
        for e in self.edges:
            indeg[e.dst] += 1
        ready = [i for i, d in indeg.items() if d == 0]
        seen = 0
        adj = {n.op_id: [] for n in self.nodes}
        for e in self.edges:
            adj[e.src].append(e.dst)
        while ready:
            u = ready.pop()
            seen += 1
            for v in adj[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
        if seen != len(self.nodes):
            raise InputError("operator graph has a cycle")


def build_layer_graph(model: LlmSpec, s: ParallelStrategy) -> OperatorGraph:
    """Megatron-pattern ops of one layer for one tensor-parallel shard.

    Training and prefill process micro_batch x seq_len token rows; decode
    processes one token per sequence (micro_batch rows) against a KV cache
    of seq_len entries.
    """
    h = model.hidden_size
    prec = model.precision_bytes
    heads_shard = max(1, model.n_heads // s.tp)
    dh = model.head_dim
    if model.mode == "Decode":
        rows = s.micro_batch                   # one new token per sequence
        kv_len = model.seq_len
    else:
        rows = s.micro_batch * model.seq_len
        kv_len = model.seq_len

    nodes = []
    edges = []

    def gemm(name, m, n, k, weight_elems=0):
        nid = len(nodes)
        nodes.append(OpNode(
            op_id=nid, name=name, kind="gemm", m=m, n=n, k=k,
            out_bytes=m * n * prec, flops=2.0 * m * n * k,
            weight_bytes=weight_elems * prec,
        ))
        return nid

    def ew(name, elems):
        nid = len(nodes)
        nodes.append(OpNode(
            op_id=nid, name=name, kind="elementwise", m=elems, n=1, k=1,
            out_bytes=elems * prec, flops=0.0,
        ))
        return nid

    qkv = gemm("qkv", rows, 3 * h // s.tp, h, weight_elems=3 * h * h // s.tp)
    scores = gemm("scores", rows * heads_shard if model.mode == "Decode"
                  else s.micro_batch * heads_shard * model.seq_len,
                  kv_len, dh)
    sm = ew("softmax", nodes[scores].m * kv_len)
    ctx = gemm("context", nodes[scores].m, dh, kv_len)
    proj = gemm("proj", rows, h, h // s.tp, weight_elems=h * h // s.tp)
    up = gemm("mlp_up", rows, 4 * h // s.tp, h, weight_elems=4 * h * h // s.tp)
    act = ew("gelu", rows * 4 * h // s.tp)
    down = gemm("mlp_down", rows, h, 4 * h // s.tp, weight_elems=4 * h * h // s.tp)

    chain = [qkv, scores, sm, ctx, proj, up, act, down]
    for a, b in zip(chain, chain[1:]):
        edges.append(OpEdge(a, b, nodes[a].out_bytes))

    g = OperatorGraph(nodes=nodes, edges=edges)
    g.check_acyclic()
    return g


@dataclass(frozen=True)
class ChunkId:
    stage: int
    dp_idx: int
    tp_idx: int

    def as_tuple(self):
        return (self.stage, self.dp_idx, self.tp_idx)


@dataclass
class Chunk:
    chunk_id: ChunkId
    layers: int
    graph: OperatorGraph
    inter_edges: list


def build_chunk_graphs(model: LlmSpec, s: ParallelStrategy) -> list:
    """All tp*pp*dp chunks with their layer graphs and inter-chunk edges.

    Chunks of the same stage share one graph object (identical structure);
    inter-chunk edges carry exact per-occurrence byte volumes.
    """
    if s.tp > model.n_heads:
        raise UnmappableWorkload(
            f"tp={s.tp} exceeds head count {model.n_heads} (head-granularity TP)")
    layer_counts = stage_layer_counts(model.n_layers, s.pp)
    prec = model.precision_bytes
    rows = s.micro_batch if model.mode == "Decode" else s.micro_batch * model.seq_len
    act_bytes = rows * model.hidden_size * prec

    stage_graphs = []
    for st in range(s.pp):
        g = build_layer_graph(model, s)
        g.repeat = layer_counts[st]
        stage_graphs.append(g)

    chunks = []
    for dp_i in range(s.dp):
        for st in range(s.pp):
            for tp_i in range(s.tp):
                cid = ChunkId(st, dp_i, tp_i)
                edges = []
                if s.tp > 1:
                    for peer in range(s.tp):
                        if peer == tp_i:
                            continue
                        edges.append(InterChunkEdge(
                            "TpCollective", cid.as_tuple(), (st, dp_i, peer),
                            bytes_each=act_bytes,
                            per_microbatch=2 * layer_counts[st]))
                if st + 1 < s.pp:
                    edges.append(InterChunkEdge(
                        "PpActivation", cid.as_tuple(), (st + 1, dp_i, tp_i),
                        bytes_each=act_bytes / s.tp, per_microbatch=1))
                if s.dp > 1 and model.mode == "Train":
                    grad_bytes = model.params * layer_counts[st] / model.n_layers / s.tp * prec
                    for peer in range(s.dp):
                        if peer == dp_i:
                            continue
                        edges.append(InterChunkEdge(
                            "DpGradient", cid.as_tuple(), (st, peer, tp_i),
                            bytes_each=grad_bytes, per_microbatch=0))
                if model.mode == "Prefill":
                    kv = (2.0 * model.seq_len * (model.batch_size / s.dp)
                          * model.hidden_size * prec / s.tp) * layer_counts[st]
                    if model.mqa:
                        kv /= model.n_heads
                    edges.append(InterChunkEdge(
                        "KvTransfer", cid.as_tuple(), cid.as_tuple(),
                        bytes_each=kv, per_microbatch=0))
                chunks.append(Chunk(cid, layer_counts[st], stage_graphs[st], edges))
    return chunks


# ---------------------------------------------------------------------------
# partition and allocation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TilePlan:
    rows_per_core: int       # output rows this core owns
    tile_rows: int           # rows per tile
    k_chunk: int             # K elements resident per pass
    n_chunk: int             # output columns per tile
    n_row_tiles: int
    n_tiles: int             # row tiles x column tiles
    working_bits: int


def tile_solve(rows_per_core: int, n: int, k: int, core_cfg,
               prec_bytes: int) -> TilePlan:
    """Largest tile whose working set fits half the SRAM buffer.

    Working set per tile: A slab (tile_rows x k_chunk), B slab
    (k_chunk x n_chunk), C slab (tile_rows x n_chunk), all at precision.
    Half the buffer is reserved for double buffering.  The larger of K and
    N is halved until the B slab plus one A row and one C row fit, then
    rows fill the remainder.
    """
    cap_bits = core_cfg.buffer_size * 1024 * 8 // 2
    pb = prec_bytes * 8

    k_chunk = max(1, k)
    n_chunk = max(1, n)

    def slab_bits(kc, nc):
        return (kc * nc + kc + nc) * pb

    while slab_bits(k_chunk, n_chunk) > cap_bits and (k_chunk > 1 or n_chunk > 1):
        if k_chunk >= n_chunk and k_chunk > 1:
            k_chunk //= 2
        else:
            n_chunk //= 2
    if slab_bits(k_chunk, n_chunk) > cap_bits:
        raise TileTooLarge(
            f"minimal 1x1x1 tile needs {slab_bits(1, 1)} bits, "
            f"buffer half is {cap_bits} bits")
    tile_rows = (cap_bits - k_chunk * n_chunk * pb) // ((k_chunk + n_chunk) * pb)
    tile_rows = min(max(int(tile_rows), 1), rows_per_core)
    n_row_tiles = math.ceil(rows_per_core / tile_rows)
    n_col_tiles = math.ceil(n / n_chunk)
    working = (tile_rows * k_chunk + k_chunk * n_chunk + tile_rows * n_chunk) * pb
    return TilePlan(rows_per_core, tile_rows, k_chunk, n_chunk,
                    n_row_tiles, n_row_tiles * n_col_tiles, working)


@dataclass(frozen=True)
class OpAssignment:
    op_id: int
    core_start: int          # logic core index
    core_count: int


def partition_and_allocate(g: OperatorGraph, cores: int, core_cfg,
                           prec_bytes: int = C.PRECISION_BYTES) -> list:
    """Largest-remainder FLOP-proportional core allocation, one group per op.

    Bandwidth-bound ops (zero FLOPs) weigh in by bytes moved.  Every op
    gets at least one core; groups tile the [0, cores) range contiguously.
    Raises TileTooLarge when any op cannot tile into its group's buffers.
    """
    if cores < 1:
        raise InputError("need at least one core")
    weights = []
    for nd in g.nodes:
        w = nd.flops if nd.flops > 0 else float(nd.out_bytes)
        weights.append(max(w, 1.0))
    total = sum(weights)
    quota = [w / total * cores for w in weights]
    counts = [int(q) for q in quota]
    remainder = cores - sum(counts)
    order = sorted(range(len(quota)), key=lambda i: (-(quota[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    # every op needs a core: steal from the largest groups
    for i, c in enumerate(counts):
        if c == 0:
            donor = max(range(len(counts)), key=lambda j: counts[j])
            if counts[donor] <= 1:
                raise UnmappableWorkload(
                    f"{len(g.nodes)} ops cannot share {cores} core(s)")
            counts[donor] -= 1
            counts[i] = 1
    out = []
    start = 0
    for nd, c in zip(g.nodes, counts):
        out.append(OpAssignment(nd.op_id, start, c))
        rows = math.ceil(nd.m / c)
        tile_solve(rows, nd.n, nd.k, core_cfg, prec_bytes)  # raises if unfit
        start += c
    return out


# ---------------------------------------------------------------------------
# scheduling, mapping, trace generation
# ---------------------------------------------------------------------------

@dataclass
class LogicNode:
    op: OpNode
    assignment: OpAssignment
    plan: TilePlan
    compute_cycles: float = 0.0      # filled by the evaluator (tile model)
    tile_cycles: float = 0.0


@dataclass(frozen=True)
class Flow:
    flow_id: int
    src_op: int
    dst_op: int
    src_core: int            # physical node id
    dst_core: int
    volume: int              # bytes


@dataclass
class LogicCoreGraph:
    nodes: list              # LogicNode per op
    edges: list              # OpEdge (graph structure)
    flows: list              # Flow per core-pair
    n_logic_cores: int
    repeat: int
    core_cfg: object = None


@dataclass
class Mapping:
    """logic core index -> physical mesh node, one wafer."""

    wafer_idx: int
    logic_to_phys: list
    region: list             # reticle (row, col) list

    def phys(self, logic_idx: int) -> int:
        return self.logic_to_phys[logic_idx]


def chunk_regions(p, s: ParallelStrategy) -> dict:
    """ChunkId tuple -> (wafer index, reticle coordinate list).

    Reticles are linearized wafer-major in boustrophedon (snake) row order;
    chunks take consecutive runs.  Chunk order interleaves tp fastest so
    tensor-parallel peers sit adjacent, then pipeline stages, then dp.
    """
    rr, rc = p.wafer.reticle_rows, p.wafer.reticle_cols
    per_wafer = rr * rc
    total = per_wafer * p.n_wafers
    n_chunks = s.n_chunks
    if total % n_chunks != 0:
        raise UnmappableWorkload(
            f"{n_chunks} chunks do not divide {total} reticles")
    k = total // n_chunks

    snake = []
    for w in range(p.n_wafers):
        for row in range(rr):
            cols = range(rc) if row % 2 == 0 else range(rc - 1, -1, -1)
            for col in cols:
                snake.append((w, (row, col)))

    regions = {}
    for dp_i in range(s.dp):
        for st in range(s.pp):
            for tp_i in range(s.tp):
                lin = (dp_i * s.pp + st) * s.tp + tp_i
                chunk_slice = snake[lin * k:(lin + 1) * k]
                wafers = {w for w, _ in chunk_slice}
                if len(wafers) != 1:
                    raise UnmappableWorkload(
                        f"chunk {lin} straddles wafers {sorted(wafers)}")
                regions[(st, dp_i, tp_i)] = (chunk_slice[0][0],
                                             [coord for _, coord in chunk_slice])
    return regions


@dataclass(frozen=True)
class TraceFlow:
    flow_id: int
    src: int
    dst: int
    bytes_total: int
    n_packets: int
    packet_bytes: int
    interval: float          # cycles between packet injections
    start_cycle: float
    gate_group: int          # -1: none; else op id whose inputs gate injection
    stall_cycles: float


@dataclass
class NocTrace:
    """Cycle-simulator input: flows plus flow-completion gating groups."""

    flows: list
    groups: dict             # op id -> flow ids that must finish first
    width: int
    height: int
    seed: int = 0


class RegionTooSmall(UnmappableWorkload):
    pass


def schedule_and_map(g: OperatorGraph, assignments: list, p,
                     region: list, mesh: WaferMesh,
                     wafer_idx: int = 0) -> tuple:
    """Steps 3-4: tiling cadence, placement, routing, trace emission.

    Returns (LogicCoreGraph, Mapping, NocTrace).  Logic cores fill the
    region's reticles row-major; flows align producer and consumer groups
    index-proportionally, so volumes split evenly and conserve bytes.
    Compute cycles on the logic nodes are left to the evaluator's tile
    model; the trace's intervals are filled there too (the trace here
    carries structure and volumes with interval placeholders of 1).
    """
    rows, cols = p.reticle.core_rows, p.reticle.core_cols
    cores_per_reticle = rows * cols
    n_logic = len(region) * cores_per_reticle
    needed = max(a.core_start + a.core_count for a in assignments)
    if needed > n_logic:
        raise RegionTooSmall(f"need {needed} logic cores, region has {n_logic}")

    logic_to_phys = []
    for (ret_row, ret_col) in region:
        for r in range(rows):
            for c in range(cols):
                y, x = mesh.physical_of_logical(ret_row, ret_col, r, c)
                logic_to_phys.append(mesh.node_id(y, x))
    mapping = Mapping(wafer_idx, logic_to_phys, list(region))

    by_op = {a.op_id: a for a in assignments}
    lnodes = []
    for nd in g.nodes:
        a = by_op[nd.op_id]
        plan = tile_solve(math.ceil(nd.m / a.core_count), nd.n, nd.k,
                          p.core, C.PRECISION_BYTES)
        lnodes.append(LogicNode(nd, a, plan))

    flows = []
    fid = 0
    for e in g.edges:
        sa, da = by_op[e.src], by_op[e.dst]
        m = max(sa.core_count, da.core_count)
        vol, spread = divmod(e.volume, m)
        for i in range(m):
            s_core = mapping.phys(sa.core_start + i * sa.core_count // m)
            d_core = mapping.phys(da.core_start + i * da.core_count // m)
            if s_core == d_core:
                continue
            flows.append(Flow(fid, e.src, e.dst, s_core, d_core,
                              vol + (1 if i < spread else 0)))
            fid += 1

    lgraph = LogicCoreGraph(nodes=lnodes, edges=list(g.edges), flows=flows,
                            n_logic_cores=n_logic, repeat=g.repeat,
                            core_cfg=p.core)

    groups = {}
    for e in g.edges:
        groups.setdefault(e.dst, [])
    for f in flows:
        groups.setdefault(f.dst_op, []).append(f.flow_id)

    tflows = []
    for f in flows:
        ln = lnodes[f.src_op]
        n_packets = max(1, ln.plan.n_tiles)
        pkt = math.ceil(f.volume / n_packets)
        while pkt > C.MAX_PACKET_FLITS * C.FLIT_BYTES:
            n_packets *= 2
            pkt = math.ceil(f.volume / n_packets)
        has_inputs = bool(groups.get(f.src_op))
        tflows.append(TraceFlow(
            flow_id=f.flow_id, src=f.src_core, dst=f.dst_core,
            bytes_total=f.volume, n_packets=n_packets, packet_bytes=pkt,
            interval=1.0, start_cycle=0.0,
            gate_group=f.src_op if has_inputs else -1,
            stall_cycles=0.0,
        ))
    trace = NocTrace(flows=tflows, groups=groups,
                     width=mesh.width, height=mesh.height)
    return lgraph, mapping, trace
