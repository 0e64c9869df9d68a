"""Area and power estimation from a component database plus action counts.

The database prices eight component kinds (SRAM macros, MAC arrays per
dataflow, NoC routers, inter-reticle PHY per Gbps, TSV blocks, memory
controllers, network interfaces, control cores).  Area composes bottom-up:

    core    = sum of macro areas x placement overhead
    reticle = core field (incl. spare columns) + PHY strip + TSV strip
    wafer   = reticle grid + edge units (controllers, network interfaces)

Power has two faces: average power integrates recorded action counts over a
runtime, peak power assumes every unit fires every cycle.  The feasibility
check uses peak (conservative; the cap is a delivery/cooling limit).

The shipped default database is a calibrated placeholder: entries are sized
so that mid-range configurations land in a plausible regime (a few kW per
wafer, cores of a few mm^2), not transcribed from any silicon measurement.
Swap in your own CSV via ``ComponentDb.load`` or the --component-db flag.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields as dc_fields
from importlib import resources
from pathlib import Path

from . import constants as C
from .errors import IncompleteDb, InputError

DB_SCHEMA_TAG = "wafer-dse-component-db v1"

ACTION_KINDS = (
    "mac_op",
    "sram_read_bit",
    "sram_write_bit",
    "noc_hop_flit",
    "inter_reticle_bit",
    "dram_access_bit_stacking",
    "dram_access_bit_offchip",
    "inter_wafer_bit",
)


def _canon_config(cfg: dict) -> str:
    return ";".join(f"{k}={cfg[k]}" for k in sorted(cfg))


@dataclass(frozen=True)
class ComponentRecord:
    kind: str
    config: str
    area_mm2: float          # per-Gbps for PHY, per-TSV for tsv_block
    static_w: float          # same per-unit semantics as area
    energy_pj: dict          # action kind -> pJ per action

    def __post_init__(self):
        if self.area_mm2 < 0 or self.static_w < 0:
            raise InputError(f"negative area/power in record {self.kind}:{self.config}")
        if any(v < 0 for v in self.energy_pj.values()):
            raise InputError(f"negative energy in record {self.kind}:{self.config}")


class ComponentDb:
    """Immutable lookup table of component records, loaded from CSV."""

    def __init__(self, records):
        self._records = {}
        for r in records:
            self._records[(r.kind, r.config)] = r

    def lookup(self, kind: str, **cfg) -> ComponentRecord:
        key = (kind, _canon_config(cfg))
        try:
            return self._records[key]
        except KeyError:
            raise IncompleteDb(kind, _canon_config(cfg)) from None

    def sram_feasible(self, size_kb: int, bw: int) -> bool:
        key = ("sram_macro", _canon_config({"size_kb": size_kb, "bw": bw}))
        return key in self._records

    def __len__(self):
        return len(self._records)

    @classmethod
    def load(cls, path) -> "ComponentDb":
        path = Path(path)
        if not path.exists():
            raise InputError(f"component db not found: {path}")
        with open(path, newline="") as fh:
            return cls._parse(fh)

    @classmethod
    def _parse(cls, fh) -> "ComponentDb":
        first = fh.readline().strip()
        if not first.startswith("#") or DB_SCHEMA_TAG not in first:
            raise InputError(
                f"component db missing schema tag {DB_SCHEMA_TAG!r} in first line"
            )
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        needed = {"kind", "config", "area_mm2", "static_w"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise InputError(f"component db header must contain {sorted(needed)}")
        records = []
        for row in reader:
            energy = {
                k: float(row[k]) for k in ACTION_KINDS if k in row and row[k] not in ("", None)
            }
            records.append(
                ComponentRecord(
                    kind=row["kind"],
                    config=row["config"],
                    area_mm2=float(row["area_mm2"]),
                    static_w=float(row["static_w"]),
                    energy_pj=energy,
                )
            )
        if not records:
            raise InputError("component db has no records")
        return cls(records)

    @classmethod
    def default(cls) -> "ComponentDb":
        ref = resources.files("wafer_dse").joinpath("data/component_db.csv")
        with ref.open("r") as fh:
            return cls._parse(fh)


@dataclass
class ActionCounts:
    """Wafer-wide action totals accumulated by an evaluator run."""

    mac_op: float = 0.0
    sram_read_bit: float = 0.0
    sram_write_bit: float = 0.0
    noc_hop_flit: float = 0.0
    inter_reticle_bit: float = 0.0
    dram_access_bit_stacking: float = 0.0
    dram_access_bit_offchip: float = 0.0
    inter_wafer_bit: float = 0.0

    def __post_init__(self):
        for f in dc_fields(self):
            if getattr(self, f.name) < 0:
                raise InputError(f"negative action count {f.name}")

    def add(self, other: "ActionCounts") -> "ActionCounts":
        for f in dc_fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}


@dataclass(frozen=True)
class AreaReport:
    core_mm2: float
    reticle_mm2: float
    wafer_mm2: float
    breakdown: dict          # wafer-level: cores / phy / tsv / edge
    reticle_w_mm: float
    reticle_h_mm: float
    tsv_count: int
    phy_gbps_per_boundary: float


@dataclass(frozen=True)
class PowerReport:
    avg_power_w: float
    peak_power_w: float
    breakdown_avg: dict
    breakdown_peak: dict


def tsv_count_for(bw_density_tbps_100mm2: float, reticle_area_mm2: float) -> int:
    """TSVs needed for a reticle's stacked-DRAM bandwidth at 1 Gbps per TSV.

    Bandwidth density is bytes-based (TB/s per 100 mm^2); TSVs carry bits,
    so the byte-to-bit factor 8 appears here and only here.
    """
    if bw_density_tbps_100mm2 < 0:
        raise InputError("bandwidth density must be >= 0")
    if reticle_area_mm2 <= 0:
        raise InputError("reticle area must be positive")
    total_tbps = bw_density_tbps_100mm2 * reticle_area_mm2 / 100.0
    gbps_bits = total_tbps * 1000.0 * 8.0
    return math.ceil(gbps_bits / C.TSV_GBPS)


def _core_components(p, db: ComponentDb):
    core = p.core
    return (
        db.lookup("mac_array", dataflow=core.dataflow, macs=core.mac_num),
        db.lookup("sram_macro", size_kb=core.buffer_size, bw=core.buffer_bw),
        db.lookup("noc_router", bw=core.noc_bw),
        db.lookup("control_core", variant="default"),
    )


def core_area_mm2(p, db: ComponentDb) -> float:
    return sum(r.area_mm2 for r in _core_components(p, db)) * C.PLACEMENT_OVERHEAD


def phy_gbps_per_boundary(p) -> float:
    # bisection of the logical core mesh at 1 GHz: bit/cycle == Gbps
    bisection_gbps = min(p.reticle.core_rows, p.reticle.core_cols) * p.core.noc_bw
    return p.reticle.inter_reticle_bw_ratio * bisection_gbps


def area_of(p, db: ComponentDb) -> AreaReport:
    """Bottom-up area accounting; see module docstring for the composition.

    The reticle is modeled as the rectangular core field (physical columns
    including spares) plus a margin strip holding the TSV drill field and
    the inter-reticle PHY.  Bandwidth-density-driven TSV counts use the
    pre-TSV area (field + PHY) so the computation stays single-pass.
    """
    core_mm2 = core_area_mm2(p, db)
    side = math.sqrt(core_mm2)
    phys_cols = p.reticle.core_cols + p.reticle.redundancy_cols
    field_w = phys_cols * side
    field_h = p.reticle.core_rows * side
    field_mm2 = field_w * field_h

    boundary_gbps = phy_gbps_per_boundary(p)
    style = "rdl" if p.wafer.integration == "InfoSoW" else "offset"
    phy_rec = db.lookup("inter_reticle_phy", style=style)
    phy_mm2 = 4.0 * boundary_gbps * phy_rec.area_mm2

    if p.wafer.memory_style == "StackingDram":
        tsv_rec = db.lookup("tsv_block", variant="default")
        n_tsv = tsv_count_for(p.reticle.stacking_dram_bw_density, field_mm2 + phy_mm2)
        tsv_mm2 = n_tsv * tsv_rec.area_mm2
    else:
        n_tsv = 0
        tsv_mm2 = 0.0

    reticle_mm2 = field_mm2 + phy_mm2 + tsv_mm2
    reticle_w = field_w
    reticle_h = field_h + (phy_mm2 + tsv_mm2) / field_w if field_w > 0 else field_h

    n_ret = p.wafer.reticle_rows * p.wafer.reticle_cols
    mc = db.lookup("mem_controller", variant="default")
    ni = db.lookup("network_iface", variant="default")
    edge_mm2 = p.wafer.n_mem_controllers * mc.area_mm2 + p.wafer.n_network_ifaces * ni.area_mm2
    breakdown = {
        "cores": n_ret * field_mm2,
        "phy": n_ret * phy_mm2,
        "tsv": n_ret * tsv_mm2,
        "edge": edge_mm2,
    }
    return AreaReport(
        core_mm2=core_mm2,
        reticle_mm2=reticle_mm2,
        wafer_mm2=sum(breakdown.values()),
        breakdown=breakdown,
        reticle_w_mm=reticle_w,
        reticle_h_mm=reticle_h,
        tsv_count=n_tsv,
        phy_gbps_per_boundary=boundary_gbps,
    )


def _unit_rates_bits_per_s(p, area: AreaReport):
    """Peak activity per wafer: bits (or ops, flits) per second per action kind."""
    r = p.reticle
    w = p.wafer
    n_ret = w.reticle_rows * w.reticle_cols
    n_cores = n_ret * r.core_rows * r.core_cols            # logical, spares dark
    flits_per_cyc = p.core.noc_bw / (C.FLIT_BYTES * 8.0)
    rates = {
        "mac_op": n_cores * p.core.mac_num * C.CLOCK_HZ,
        "sram_read_bit": n_cores * p.core.buffer_bw * C.CLOCK_HZ,
        "sram_write_bit": 0.0,                             # read path dominates the port
        "noc_hop_flit": n_cores * flits_per_cyc * C.CLOCK_HZ,
        "inter_reticle_bit": n_ret * 4.0 * area.phy_gbps_per_boundary * 1e9,
        "dram_access_bit_stacking": n_ret * area.tsv_count * C.TSV_GBPS * 1e9,
        "dram_access_bit_offchip": w.n_mem_controllers * C.MEM_CONTROLLER_GBYTES * 8e9,
        "inter_wafer_bit": w.n_network_ifaces * C.NETWORK_IFACE_GBYTES * 8e9,
    }
    return rates


def _energy_table(p, db: ComponentDb) -> dict:
    mac, sram, router, _ctl = _core_components(p, db)
    style = "rdl" if p.wafer.integration == "InfoSoW" else "offset"
    phy = db.lookup("inter_reticle_phy", style=style)
    mc = db.lookup("mem_controller", variant="default")
    ni = db.lookup("network_iface", variant="default")
    table = {
        "mac_op": mac.energy_pj.get("mac_op", 0.0),
        "sram_read_bit": sram.energy_pj.get("sram_read_bit", 0.0),
        "sram_write_bit": sram.energy_pj.get("sram_write_bit", 0.0),
        "noc_hop_flit": router.energy_pj.get("noc_hop_flit", 0.0),
        "inter_reticle_bit": phy.energy_pj.get("inter_reticle_bit", 0.0),
        "dram_access_bit_offchip": mc.energy_pj.get("dram_access_bit_offchip", 0.0),
        "inter_wafer_bit": ni.energy_pj.get("inter_wafer_bit", 0.0),
    }
    if p.wafer.memory_style == "StackingDram":
        tsv = db.lookup("tsv_block", variant="default")
        table["dram_access_bit_stacking"] = tsv.energy_pj.get("dram_access_bit_stacking", 0.0)
    else:
        table["dram_access_bit_stacking"] = 0.0
    return table


def static_power_w(p, db: ComponentDb, area: AreaReport | None = None) -> float:
    """Static power of all physical units on one wafer (spares leak too)."""
    if area is None:
        area = area_of(p, db)
    mac, sram, router, ctl = _core_components(p, db)
    per_core = mac.static_w + sram.static_w + router.static_w + ctl.static_w
    r, w = p.reticle, p.wafer
    n_ret = w.reticle_rows * w.reticle_cols
    n_phys = n_ret * r.core_rows * (r.core_cols + r.redundancy_cols)
    style = "rdl" if w.integration == "InfoSoW" else "offset"
    phy = db.lookup("inter_reticle_phy", style=style)
    mc = db.lookup("mem_controller", variant="default")
    ni = db.lookup("network_iface", variant="default")
    total = n_phys * per_core
    total += n_ret * 4.0 * area.phy_gbps_per_boundary * phy.static_w
    total += w.n_mem_controllers * mc.static_w + w.n_network_ifaces * ni.static_w
    if w.memory_style == "StackingDram":
        tsv = db.lookup("tsv_block", variant="default")
        total += n_ret * area.tsv_count * tsv.static_w
    return total


_ACTION_GROUP = {
    "mac_op": "mac",
    "sram_read_bit": "sram",
    "sram_write_bit": "sram",
    "noc_hop_flit": "noc",
    "inter_reticle_bit": "phy",
    "dram_access_bit_stacking": "dram",
    "dram_access_bit_offchip": "dram",
    "inter_wafer_bit": "edge",
}


def power_of(p, counts: ActionCounts, runtime_s: float, db: ComponentDb) -> PowerReport:
    """Average and peak wafer power.

    Average integrates the recorded action counts over runtime_s; peak prices
    every unit as busy every cycle and is what the 15 kW constraint checks.
    """
    if runtime_s <= 0:
        raise InputError(f"runtime must be positive, got {runtime_s}")
    area = area_of(p, db)
    energy = _energy_table(p, db)
    static = static_power_w(p, db, area)

    bd_avg = {"static": static, "mac": 0.0, "sram": 0.0, "noc": 0.0, "phy": 0.0,
              "dram": 0.0, "edge": 0.0}
    for kind in ACTION_KINDS:
        dyn_w = getattr(counts, kind) * energy[kind] * 1e-12 / runtime_s
        bd_avg[_ACTION_GROUP[kind]] += dyn_w

    rates = _unit_rates_bits_per_s(p, area)
    bd_peak = {"static": static, "mac": 0.0, "sram": 0.0, "noc": 0.0, "phy": 0.0,
               "dram": 0.0, "edge": 0.0}
    for kind in ACTION_KINDS:
        bd_peak[_ACTION_GROUP[kind]] += rates[kind] * energy[kind] * 1e-12

    return PowerReport(
        avg_power_w=sum(bd_avg.values()),
        peak_power_w=sum(bd_peak.values()),
        breakdown_avg=bd_avg,
        breakdown_peak=bd_peak,
    )


def peak_power_w(p, db: ComponentDb) -> float:
    zero = ActionCounts()
    return power_of(p, zero, 1.0, db).peak_power_w
