"""Cycle-level 2D-mesh NoC simulation: wormhole, VCs, credits, X-Y routing.

The simulator is event-driven at flit granularity.  Every directed mesh
link is a server: a packet is granted the link as a whole (output-port
allocation at packet granularity, oldest-ready-first among waiters), holds
one of the 8 virtual channels at the downstream input port from grant
until its tail leaves the downstream router, and streams flits spaced by
the link's serialization interval (1/bandwidth cycles).  A flit advances
only when it has arrived from the previous hop and a credit is available
(4-flit buffer per VC, credit return costs one cycle).  Each link crossing
adds the router pipeline latency (2 cycles) plus the inter-reticle penalty
on reticle-boundary links.  Injection and ejection are free, so an
isolated packet of k flits over h unit-bandwidth hops arrives head at
h*r and tail at h*r + (k-1) exactly.

Cores are trace-driven injectors: a flow's packets appear one per
producer tile (fixed interval), and a flow gated on an operator waits for
every flow feeding that operator to finish, plus the producer's tile
stall.  Per-link average waiting time (actual departure minus the
zero-contention departure) is recorded for every link; it is the
regression target of the surrogate dataset.

Everything is deterministic for fixed inputs; the seed is carried through
to output metadata and drives only dataset sampling.
"""

from __future__ import annotations

import heapq
import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import constants as C
from .errors import InputError, SimDeadlock
from .mesh import WaferMesh
from .workload import NocTrace, TraceFlow

TRACE_MAGIC = b"WDTR"
TRACE_VERSION = 1

_NO_PROGRESS_LIMIT = 1_000_000.0   # simulated cycles without a flit crossing


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkResult:
    flits: int
    packets: int
    wait_sum: float              # head-flit queueing beyond zero-load
    busy_cycles: float

    @property
    def avg_wait(self) -> float:
        """Mean per-packet channel waiting time (the regression target)."""
        return self.wait_sum / self.packets if self.packets else 0.0


@dataclass(frozen=True)
class SimResult:
    makespan: float              # last tail ejection, cycles
    total_cycles: float
    flits_injected: int
    flits_ejected: int
    flit_hops: int
    flow_finish: dict            # flow id -> tail ejection cycle
    link_results: dict           # (u, v) -> LinkResult
    n_events: int
    seed: int

    def link_waits(self) -> dict:
        return {uv: lr.avg_wait for uv, lr in self.link_results.items()}

    def to_json(self) -> dict:
        return {
            "makespan": self.makespan,
            "total_cycles": self.total_cycles,
            "flits_injected": self.flits_injected,
            "flits_ejected": self.flits_ejected,
            "flit_hops": self.flit_hops,
            "n_events": self.n_events,
            "seed": self.seed,
            "flow_finish": {str(k): v for k, v in sorted(self.flow_finish.items())},
            "links": {f"{u}->{v}": {"flits": lr.flits, "avg_wait": lr.avg_wait}
                      for (u, v), lr in sorted(self.link_results.items())},
        }


# ---------------------------------------------------------------------------
# simulator internals
# ---------------------------------------------------------------------------

class _Link:
    __slots__ = ("uid", "rate", "delay", "inter", "current", "next_slot",
                 "waiting", "vc_used", "vc_releases", "flits", "packets",
                 "wait_sum", "busy", "pending")

    def __init__(self, uid, rate, delay, inter):
        if rate <= 0:
            raise InputError(f"link {uid} has nonpositive bandwidth")
        self.uid = uid
        self.rate = rate             # flits per cycle
        self.delay = delay           # pipeline + inter-reticle cycles
        self.inter = inter
        self.current = None          # packet being streamed
        self.next_slot = 0.0         # earliest next serialization start
        self.waiting = []            # heap of (ready, seq, packet)
        self.vc_used = 0             # busy VCs at the downstream input port
        self.vc_releases = []        # heap of pending release times
        self.flits = 0
        self.packets = 0
        self.wait_sum = 0.0
        self.busy = 0.0
        self.pending = set()         # wake times already in the event heap


class _Packet:
    __slots__ = ("pid", "flow", "k", "route", "links", "avail0", "hop_of",
                 "cross")

    def __init__(self, pid, flow, k, route, links, avail0):
        self.pid = pid
        self.flow = flow
        self.k = k                   # flits
        self.route = route           # list of link uids
        self.links = links           # list of _Link
        self.avail0 = avail0         # every flit ready at the source
        self.hop_of = {uid: i for i, uid in enumerate(route)}
        self.cross = [[] for _ in route]


class _FlowState:
    __slots__ = ("spec", "n_route_links", "packets_done", "finish", "base")

    def __init__(self, spec):
        self.spec = spec
        self.packets_done = 0
        self.finish = None
        self.base = None             # injection base cycle once gating clears


def simulate(trace: NocTrace, mesh: WaferMesh, seed: int = 0,
             max_cycles: float = 0.0) -> SimResult:
    """Run the trace to completion and collect per-link waiting statistics."""
    links = {}

    def link_for(u, v):
        lk = links.get((u, v))
        if lk is None:
            y0, x0 = mesh.node_yx(u)
            y1, x1 = mesh.node_yx(v)
            info = mesh.link_info(y0, x0, y1, x1)
            lk = _Link((u, v), info.bw_flits,
                       C.ROUTER_PIPELINE_CYCLES + info.extra_lat,
                       info.inter_reticle)
            links[(u, v)] = lk
        return lk

    flows = {f.flow_id: _FlowState(f) for f in trace.flows}
    group_pending = {}
    waiters_on_group = {}
    for f in trace.flows:
        if f.gate_group >= 0:
            members = trace.groups.get(f.gate_group, [])
            members = [m for m in members if m in flows]
            if members:
                waiters_on_group.setdefault(f.gate_group, []).append(f.flow_id)
                group_pending.setdefault(f.gate_group,
                                         {"left": len(members), "latest": 0.0,
                                          "members": set(members)})

    heap = []
    seq = 0

    def wake(t, lk):
        # a link is re-examined once per distinct time; duplicates are noise
        nonlocal seq
        if t in lk.pending:
            return
        lk.pending.add(t)
        heapq.heappush(heap, (t, seq, lk.uid))
        seq += 1

    packets = []
    total_flits = 0

    def launch_flow(fid, base):
        nonlocal seq, total_flits
        st = flows[fid]
        st.base = base
        sp = st.spec
        if sp.src == sp.dst or sp.n_packets == 0:
            _finish_flow(fid, base)
            return
        route_pairs = mesh.route(sp.src, sp.dst)
        lks = [link_for(u, v) for u, v in route_pairs]
        k = max(1, math.ceil(sp.packet_bytes / C.FLIT_BYTES))
        for pi in range(sp.n_packets):
            ready = base + pi * sp.interval
            pk = _Packet(len(packets), fid, k,
                         [l.uid for l in lks], lks, ready)
            packets.append(pk)
            total_flits += k
            heapq.heappush(lks[0].waiting, (ready, seq, pk))
            seq += 1
            wake(ready, lks[0])

    ejected = 0
    flit_hops = 0
    finished_flows = 0

    def _finish_flow(fid, t):
        nonlocal finished_flows
        st = flows[fid]
        st.finish = t
        finished_flows += 1
        for gid, info in group_pending.items():
            if fid in info["members"]:
                info["left"] -= 1
                info["latest"] = max(info["latest"], t)
                if info["left"] == 0:
                    for wid in waiters_on_group.get(gid, []):
                        wsp = flows[wid].spec
                        launch_flow(wid, info["latest"] + wsp.stall_cycles)

    # ungated flows start immediately at their start cycle
    for f in trace.flows:
        gated = (f.gate_group >= 0 and f.gate_group in group_pending
                 and flows[f.flow_id].base is None
                 and f.flow_id in waiters_on_group.get(f.gate_group, []))
        if not gated:
            launch_flow(f.flow_id, f.start_cycle)

    makespan = 0.0
    n_events = 0
    last_progress_t = 0.0

    def packet_tail_ejected(pk, t):
        nonlocal ejected, makespan
        ejected += pk.k
        makespan = max(makespan, t)
        st = flows[pk.flow]
        st.packets_done += 1
        if st.packets_done == st.spec.n_packets:
            _finish_flow(pk.flow, t)

    def try_serve(lk, now):
        nonlocal seq, flit_hops, last_progress_t
        while lk.vc_releases and lk.vc_releases[0] <= now:
            heapq.heappop(lk.vc_releases)
            lk.vc_used -= 1
        while True:
            if lk.current is None:
                if not lk.waiting:
                    return
                ready, _, pk = lk.waiting[0]
                if ready > now:
                    wake(ready, lk)
                    return
                if lk.vc_used >= C.NOC_VCS:
                    if lk.vc_releases:
                        wake(lk.vc_releases[0], lk)
                    return
                heapq.heappop(lk.waiting)
                lk.current = pk
                lk.vc_used += 1
            pk = lk.current
            i = pk.hop_of[lk.uid]
            sent = pk.cross[i]
            j = len(sent)
            if j >= pk.k:
                lk.current = None
                continue
            # arrival of flit j at this router
            if i == 0:
                avail = pk.avail0
            else:
                prev = pk.cross[i - 1]
                if len(prev) <= j:
                    return               # upstream will wake us
                avail = prev[j] + pk.links[i - 1].delay
            # credit for the downstream buffer: the slot vacated by flit
            # j - depth must be free when flit j ARRIVES, so the wire delay
            # drops out of the loop and an isolated packet is never throttled
            credit = 0.0
            if j >= C.NOC_VC_BUFFER_FLITS:
                jj = j - C.NOC_VC_BUFFER_FLITS
                if i + 1 < len(pk.route):
                    nxt = pk.cross[i + 1]
                    if len(nxt) <= jj:
                        return           # downstream send will wake us
                    credit = nxt[jj] + 1.0 - lk.delay
                else:
                    # destination ejects on arrival; slot reuse needs the
                    # one-cycle credit signal only
                    credit = sent[jj] + 1.0
            ideal = max(avail, lk.next_slot)
            te = max(ideal, credit)
            if te > now:
                wake(te, lk)
                return
            # send flit j at te
            sent.append(te)
            lk.flits += 1
            if j == 0:
                lk.packets += 1
                lk.wait_sum += te - avail    # queueing beyond zero-load
            lk.busy += 1.0 / lk.rate
            lk.next_slot = te + 1.0 / lk.rate
            flit_hops += 1
            last_progress_t = max(last_progress_t, te)
            if i + 1 < len(pk.route):
                nxt_lk = pk.links[i + 1]
                if j == 0:
                    heapq.heappush(nxt_lk.waiting, (te + lk.delay, seq, pk))
                    seq += 1
                wake(te + lk.delay, nxt_lk)
            if i > 0:
                # a freed buffer slot unblocks upstream flit j + buffer depth
                wake(te + 1.0, pk.links[i - 1])
            if j + 1 == pk.k:
                # tail: free this link, release the upstream VC
                lk.current = None
                wake(lk.next_slot, lk)
                if i > 0:
                    up = pk.links[i - 1]
                    up.vc_used -= 1
                    wake(te, up)
                if i + 1 == len(pk.route):
                    # tail ejects at the destination; VC frees then
                    heapq.heappush(lk.vc_releases, te + lk.delay)
                    packet_tail_ejected(pk, te + lk.delay)
                    wake(te + lk.delay, lk)

    stall_guard = _NO_PROGRESS_LIMIT
    while heap:
        t, _, uid = heapq.heappop(heap)
        n_events += 1
        if max_cycles and t > max_cycles:
            raise SimDeadlock(t, _pending_dump(flows),
                              f"exceeded max_cycles={max_cycles}")
        if t - last_progress_t > stall_guard:
            raise SimDeadlock(t, _pending_dump(flows),
                              "no flit progress within the deadlock window")
        lk = links[uid]
        lk.pending.discard(t)
        try_serve(lk, t)

    if ejected != total_flits or finished_flows != len(flows):
        raise SimDeadlock(last_progress_t, _pending_dump(flows),
                          f"event queue drained with {total_flits - ejected} "
                          f"flits in flight")

    link_results = {uv: LinkResult(lk.flits, lk.packets, lk.wait_sum, lk.busy)
                    for uv, lk in links.items()}
    return SimResult(
        makespan=makespan,
        total_cycles=makespan,
        flits_injected=total_flits,
        flits_ejected=ejected,
        flit_hops=flit_hops,
        flow_finish={fid: st.finish for fid, st in flows.items()},
        link_results=link_results,
        n_events=n_events,
        seed=seed,
    )


def _pending_dump(flows) -> str:
    stuck = [f"flow {fid}: {st.packets_done}/{st.spec.n_packets} packets"
             for fid, st in flows.items()
             if st.finish is None]
    return "; ".join(stuck[:8]) + (" ..." if len(stuck) > 8 else "")


# ---------------------------------------------------------------------------
# trace binary format
# ---------------------------------------------------------------------------

def save_trace(path, trace: NocTrace):
    """Versioned little-endian binary: header, flows, gating groups."""
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(struct.pack("<HHII", TRACE_VERSION, 0,
                             trace.width, trace.height))
        fh.write(struct.pack("<IIq", len(trace.flows), len(trace.groups),
                             trace.seed))
        rec = struct.Struct("<IIIQIIddid")
        for f in trace.flows:
            fh.write(rec.pack(f.flow_id, f.src, f.dst, f.bytes_total,
                              f.n_packets, f.packet_bytes, f.interval,
                              f.start_cycle, f.gate_group, f.stall_cycles))
        for gid in sorted(trace.groups):
            members = trace.groups[gid]
            fh.write(struct.pack(f"<iI{len(members)}I", gid,
                                 len(members), *members))


def load_trace(path) -> NocTrace:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TRACE_MAGIC:
            raise InputError(f"{path}: not a trace file (magic {magic!r})")
        version, _, width, height = struct.unpack("<HHII", fh.read(12))
        if version != TRACE_VERSION:
            raise InputError(f"{path}: unsupported trace version {version}")
        n_flows, n_groups, seed = struct.unpack("<IIq", fh.read(16))
        flows = []
        rec = struct.Struct("<IIIQIIddid")
        for _ in range(n_flows):
            (fid, src, dst, total, npk, pkb, interval, start, gate,
             stall) = rec.unpack(fh.read(rec.size))
            flows.append(TraceFlow(fid, src, dst, total, npk, pkb,
                                   interval, start, gate, stall))
        groups = {}
        for _ in range(n_groups):
            gid, cnt = struct.unpack("<iI", fh.read(8))
            members = list(struct.unpack(f"<{cnt}I", fh.read(4 * cnt)))
            groups[gid] = members
    return NocTrace(flows=flows, groups=groups, width=width, height=height,
                    seed=seed)


def trace_cost(trace: NocTrace, mesh) -> tuple:
    """Cheap workload estimate: (total flit-hops, injection horizon).

    flit-hops bounds event count; the horizon bounds makespan from below.
    Both are exact functions of the trace, no simulation involved.
    """
    node_yx = mesh.node_yx
    flit_hops = 0
    horizon = 0.0
    for f in trace.flows:
        if f.src == f.dst:
            continue
        y0, x0 = node_yx(f.src)
        y1, x1 = node_yx(f.dst)
        hops = abs(y0 - y1) + abs(x0 - x1)
        flits = f.n_packets * -(-f.packet_bytes // C.FLIT_BYTES)
        flit_hops += flits * hops
        end = f.start_cycle + f.n_packets * f.interval
        if f.gate_group >= 0:
            end += f.stall_cycles
        horizon = max(horizon, end)
    return flit_hops, horizon


# ---------------------------------------------------------------------------
# high-fidelity evaluation
# ---------------------------------------------------------------------------

def build_rep_trace(model, s, p, db):
    """Representative worst-stage chunk: logic graph, finalized trace, mesh."""
    from .analytic import _make_ctx, _rep_chunk_report, finalize_trace
    from .workload import stage_layer_counts
    ctx = _make_ctx(model, s, p, db)
    worst = max(stage_layer_counts(model.n_layers, s.pp))
    rep, lgraph, trace = _rep_chunk_report(model, s, p, ctx, worst)
    return ctx, rep, lgraph, finalize_trace(lgraph, trace), worst


def simulate_chunk(model, s, p, db, seed: int = 0):
    """Simulated stage latency (cycles) of the worst-stage chunk.

    The NoC makespan ends at the last flit's ejection; sink operators
    (no outgoing flows) still compute after their inputs land, so their
    busy time is appended before scaling by the stage's layer count.
    """
    ctx, rep, lgraph, trace, worst = build_rep_trace(model, s, p, db)
    res = simulate(trace, ctx.mesh, seed=seed)
    srcs = {e.src for e in lgraph.edges}
    sink_drain = max((ln.compute_cycles for ln in lgraph.nodes
                      if ln.op.op_id not in srcs), default=0.0)
    if res.makespan > 0:
        stage_cycles = (res.makespan + sink_drain) * lgraph.repeat
    else:
        stage_cycles = rep.chunk_cycles
    return stage_cycles, rep, res


def high_fidelity_eval(model, p, db, strategy=None, seed: int = 0):
    """EvalReport with chunk latencies from cycle simulation.

    The strategy defaults to the analytic winner; only that strategy is
    simulated (the chunk-level composition is unchanged).
    """
    from .analytic import (best_strategy, evaluate_inference,
                           evaluate_inference_phase, evaluate_training)

    if model.mode == "Train":
        if strategy is None:
            strategy = best_strategy(model, p, db, limit=64).strategy
        stage_cycles, _, res = simulate_chunk(model, strategy, p, db, seed)
        rep = evaluate_training(model, strategy, p, db,
                                chunk_cycles_override=stage_cycles,
                                fidelity="cycle")
        rep.extras["sim"] = {"makespan": res.makespan,
                             "flit_hops": res.flit_hops,
                             "n_events": res.n_events, "seed": seed}
        return rep

    def phase_eval(mm, pp_, d, scale):
        st = best_strategy(mm, pp_, d,
                           evaluator=lambda mo, s2, po, dd:
                           evaluate_inference_phase(mo, s2, po, dd,
                                                    dram_scale=scale)).strategy
        stage_cycles, _, res = simulate_chunk(mm, st, pp_, d, seed)
        out = evaluate_inference_phase(mm, st, pp_, d, dram_scale=scale,
                                       chunk_cycles_override=stage_cycles,
                                       fidelity="cycle")
        out.extras["sim"] = {"makespan": res.makespan,
                             "flit_hops": res.flit_hops, "seed": seed}
        return out

    return evaluate_inference(model, p, db, batch_size=model.batch_size,
                              fidelity="cycle", phase_evaluator=phase_eval)


# ---------------------------------------------------------------------------
# surrogate dataset generation
# ---------------------------------------------------------------------------

DATASET_VERSION = 1


def graph_payload(trace: NocTrace, mesh: WaferMesh, meta: dict = None) -> dict:
    """Serialized topology graph with features and replay info, no targets.

    Node injection rates are normalized by the trace's injection horizon,
    which is a pure function of the trace, so the same features are
    available at prediction time without running any simulation.
    """
    edge_ids = {}
    edges = []

    def edge_id(u, v):
        if (u, v) not in edge_ids:
            y0, x0 = mesh.node_yx(u)
            y1, x1 = mesh.node_yx(v)
            info = mesh.link_info(y0, x0, y1, x1)
            edge_ids[(u, v)] = len(edges)
            edges.append({"src": u, "dst": v, "volume_bytes": 0,
                          "bw_flits": info.bw_flits,
                          "extra_lat": info.extra_lat,
                          "inter_reticle": int(info.inter_reticle)})
        return edge_ids[(u, v)]

    inj = {}
    flows_out = []
    for f in trace.flows:
        route = mesh.route(f.src, f.dst) if f.src != f.dst else []
        eids = []
        for u, v in route:
            eid = edge_id(u, v)
            edges[eid]["volume_bytes"] += f.bytes_total
            eids.append(eid)
        flits = f.n_packets * max(1, math.ceil(f.packet_bytes / C.FLIT_BYTES))
        inj[f.src] = inj.get(f.src, 0) + flits
        flows_out.append({
            "flow_id": f.flow_id, "src": f.src, "dst": f.dst,
            "bytes": f.bytes_total, "n_packets": f.n_packets,
            "packet_flits": max(1, math.ceil(f.packet_bytes / C.FLIT_BYTES)),
            "interval": f.interval, "start": f.start_cycle,
            "gate_group": f.gate_group, "stall": f.stall_cycles,
            "edges": eids,
        })

    _, horizon = trace_cost(trace, mesh)
    span = horizon if horizon > 0 else 1.0
    nodes = [{"id": n, "inj_rate": inj.get(n, 0) / span}
             for n in sorted(set([f.src for f in trace.flows]
                                 + [f.dst for f in trace.flows]
                                 + [e["src"] for e in edges]
                                 + [e["dst"] for e in edges]))]
    return {
        "version": DATASET_VERSION,
        "mesh": {"width": trace.width, "height": trace.height},
        "nodes": nodes,
        "edges": edges,
        "flows": flows_out,
        "groups": {str(k): v for k, v in sorted(trace.groups.items())},
        "meta": dict(meta or {}),
    }


def _sample_record(trace: NocTrace, mesh: WaferMesh, res: SimResult,
                   analytic_cycles: float, meta: dict) -> dict:
    """graph_payload plus the simulated per-edge waiting-time targets."""
    rec = graph_payload(trace, mesh, meta)
    waits = res.link_waits()
    rec["targets"] = [waits.get((e["src"], e["dst"]), 0.0)
                      for e in rec["edges"]]
    rec["meta"].update(analytic_cycles=analytic_cycles,
                       sim_cycles=res.makespan)
    return rec


def reconstruct_makespan(payload: dict, edge_waits) -> float:
    """Trace completion estimate from per-edge predicted waiting times.

    Per-packet latency follows t(k) = k + sum of path waits + hops * r
    (plus the fixed inter-reticle extras); a flow finishes one such
    latency after its last packet injects, and gated flows launch when
    their gating group drains, exactly as the simulator would.
    """
    edge_waits = list(edge_waits)
    if len(edge_waits) != len(payload["edges"]):
        raise InputError(
            f"expected {len(payload['edges'])} edge waits, got {len(edge_waits)}")
    extras = [e["extra_lat"] for e in payload["edges"]]
    flows = {f["flow_id"]: f for f in payload["flows"]}
    groups = {int(g): members for g, members in payload["groups"].items()}

    finish = {}

    def flow_time(f) -> float:
        t_pkt = (f["packet_flits"]
                 + sum(edge_waits[e] + extras[e] for e in f["edges"])
                 + len(f["edges"]) * C.ROUTER_PIPELINE_CYCLES)
        return max(0, f["n_packets"] - 1) * f["interval"] + t_pkt

    def resolve(fid, seen):
        if fid in finish:
            return finish[fid]
        if fid in seen:
            raise InputError(f"gating cycle through flow {fid}")
        seen.add(fid)
        f = flows[fid]
        base = f["start"]
        members = groups.get(f["gate_group"], [])
        members = [m for m in members if m in flows and m != fid]
        if f["gate_group"] >= 0 and members:
            base = max(resolve(m, seen) for m in members) + f["stall"]
        out = base + flow_time(f)
        finish[fid] = out
        return out

    return max((resolve(fid, set()) for fid in flows), default=0.0)


def _dataset_points(rng):
    """A small valid design point for dataset sampling."""
    from .design_space import (CoreConfig, DesignPoint, HeterogeneityConfig,
                               ReticleConfig, WaferConfig)
    noc_bw = int(rng.choice([128, 256, 512]))
    rows = int(rng.choice([2, 3, 4]))
    cols = int(rng.choice([2, 3, 4]))
    ret_rows = int(rng.choice([1, 2]))
    ret_cols = int(rng.choice([2, 3]))
    ratio = float(rng.choice([0.25, 0.5, 1.0]))
    return DesignPoint(
        core=CoreConfig("WS", int(rng.choice([64, 128, 256])),
                        int(rng.choice([64, 128])), 512, noc_bw),
        reticle=ReticleConfig(rows, cols, ratio, 1.0, 33.5,
                              redundancy_cols=0),
        wafer=WaferConfig(ret_rows, ret_cols, "InfoSoW", 2, 2,
                          "StackingDram"),
        hetero=HeterogeneityConfig("None"),
        n_wafers=1,
    )


def gen_dataset(out_dir, n_samples: int, seed: int = 42,
                models=None, db=None) -> dict:
    """Simulate sampled (point, workload, strategy) chunks into an archive.

    The archive is a directory:  sample_NNNN.json graphs (features, replay
    info, per-edge targets), targets.csv, and manifest.json.  Sample i is
    seeded as [seed, i], so any prefix regenerates bit-identically.
    """
    import numpy as np
    from .cost_model import ComponentDb
    from .workload import enumerate_strategies, load_benchmark

    if db is None:
        db = ComponentDb.default()
    if models is None:
        models = ["desk-nano", "desk-tiny", "desk-small",
                  "desk-wide", "desk-deep", "desk-mid"]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    rows = ["sample,edge,src,dst,y_wait"]
    i = 0
    attempts = 0
    while i < n_samples:
        rng = np.random.default_rng([seed, i, attempts])
        attempts += 1
        if attempts > 50 * n_samples + 50:
            raise InputError("dataset sampling failed to find valid cases")
        p = _dataset_points(rng)
        name = models[int(rng.integers(len(models)))]
        mode = ["Train", "Prefill", "Decode"][int(rng.integers(3))]
        model = load_benchmark(name, mode=mode)
        try:
            strategies = enumerate_strategies(model, p)
            s = strategies[int(rng.integers(len(strategies)))]
            ctx, rep, lgraph, trace, worst = build_rep_trace(model, s, p, db)
            res = simulate(trace, ctx.mesh, seed=seed)
        except Exception:
            continue
        if res.flits_injected == 0:
            continue
        recd = _sample_record(trace, ctx.mesh, res, rep.layer_cycles,
                              {"model": name, "mode": mode,
                               "strategy": [s.tp, s.pp, s.dp, s.micro_batch],
                               "sample": i, "seed": [seed, i, attempts - 1]})
        fname = f"sample_{i:04d}.json"
        with open(out / fname, "w") as fh:
            json.dump(recd, fh, sort_keys=True, separators=(",", ":"))
        files.append(fname)
        for eidx, (e, y) in enumerate(zip(recd["edges"], recd["targets"])):
            rows.append(f"{i},{eidx},{e['src']},{e['dst']},{y!r}")
        i += 1

    (out / "targets.csv").write_text("\n".join(rows) + "\n")
    manifest = {"version": DATASET_VERSION, "seed": seed,
                "n_samples": n_samples, "files": files,
                "targets": "targets.csv"}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    return manifest
