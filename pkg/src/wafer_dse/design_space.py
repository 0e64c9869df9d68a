"""Design-point schema, candidate grids, sampling, and the feasibility validator.

A design point fixes one wafer-scale configuration end to end: the core
microarchitecture (dataflow, MAC count, SRAM buffer, NoC port width), the
reticle organization (core array, inter-reticle bandwidth as a multiple of
the core-mesh bisection, stacked-DRAM bandwidth density, spare columns),
wafer assembly (reticle grid, integration style, edge units, memory style),
and an optional prefill/decode heterogeneous split.

The candidate grid uses power-of-two steps for the core parameters and
small curated lists elsewhere, which keeps the full space finite (it still
exceeds 10^14 points, checked by exact counting, never materialized).

The validator applies five hard checks in a fixed order: reticle area and
wafer fit, peak power, wafer yield with redundancy, SRAM feasibility, and
TSV stress.  Every violated check is reported with a signed margin
(positive margins mean headroom), so callers see all failures at once.
"""

from __future__ import annotations

import json
import math

try:
    import tomllib
except ModuleNotFoundError:          # Python 3.10
    import tomli as tomllib

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import constants as C
from .cost_model import ComponentDb, area_of, core_area_mm2, peak_power_w
from .errors import ConstraintViolation, EmptySpace, InputError
from .yield_model import (
    ReticleLayout,
    YieldParams,
    YieldReport,
    core_yield,
    row_redundant_yield,
    wafer_yield,
)

DATAFLOWS = ("WS", "IS", "OS")
INTEGRATIONS = ("DieStitching", "InfoSoW")
MEMORY_STYLES = ("OffChipDram", "StackingDram")
GRANULARITIES = ("None", "CoreLevel", "ReticleLevel", "WaferLevel")

MAC_GRID = tuple(2 ** k for k in range(3, 13))          # 8 .. 4096
BUFFER_SIZE_GRID = tuple(2 ** k for k in range(5, 12))  # 32 .. 2048 KB
BUFFER_BW_GRID = tuple(2 ** k for k in range(5, 13))    # 32 .. 4096 bit/cyc
NOC_BW_GRID = tuple(2 ** k for k in range(5, 13))
RATIO_GRID = (0.2, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0)
STACK_BW_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)
EDGE_COUNT_GRID = (1, 2, 4, 8, 16, 32)
SPARE_GRID = (0, 1, 2, 3, 4)
PREFILL_RATIO_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))

TSV_STANDOFF_MM = 0.5      # keep-out gap between core field and TSV strip


def stacking_capacity_gb(bw_density: float) -> float:
    """Linear capacity/bandwidth trade for stacked DRAM, GB per wafer."""
    return C.STACK_CAP_BASE_GB - C.STACK_CAP_SLOPE * bw_density


# ---------------------------------------------------------------------------
# configuration value objects
# ---------------------------------------------------------------------------

def _require(cond: bool, msg: str):
    if not cond:
        raise InputError(msg)


@dataclass(frozen=True)
class CoreConfig:
    dataflow: str
    mac_num: int
    buffer_size: int      # KB
    buffer_bw: int        # bit/cycle
    noc_bw: int           # bit/cycle

    def __post_init__(self):
        _require(self.dataflow in DATAFLOWS, f"dataflow must be one of {DATAFLOWS}")
        for name, v, grid in (
            ("mac_num", self.mac_num, MAC_GRID),
            ("buffer_size", self.buffer_size, BUFFER_SIZE_GRID),
            ("buffer_bw", self.buffer_bw, BUFFER_BW_GRID),
            ("noc_bw", self.noc_bw, NOC_BW_GRID),
        ):
            _require(grid[0] <= v <= grid[-1], f"{name}={v} outside [{grid[0]}, {grid[-1]}]")
            _require(v & (v - 1) == 0, f"{name}={v} must be a power of two")


@dataclass(frozen=True)
class ReticleConfig:
    core_rows: int
    core_cols: int
    inter_reticle_bw_ratio: float
    stacking_dram_bw_density: float   # TB/s per 100 mm^2
    stacking_dram_capacity: float     # GB per wafer
    redundancy_cols: int = 0          # 0 lets the validator auto-size spares

    def __post_init__(self):
        _require(self.core_rows >= 1 and self.core_cols >= 1, "core array dims must be >= 1")
        _require(0.2 <= self.inter_reticle_bw_ratio <= 2.0,
                 f"inter_reticle_bw_ratio={self.inter_reticle_bw_ratio} outside [0.2, 2.0]")
        _require(0.25 <= self.stacking_dram_bw_density <= 4.0,
                 f"stacking bw density {self.stacking_dram_bw_density} outside [0.25, 4]")
        _require(8.0 - 1e-9 <= self.stacking_dram_capacity <= 40.0 + 1e-9,
                 f"stacking capacity {self.stacking_dram_capacity} outside [8, 40] GB")
        _require(self.redundancy_cols >= 0, "redundancy_cols must be >= 0")


@dataclass(frozen=True)
class WaferConfig:
    reticle_rows: int
    reticle_cols: int
    integration: str
    n_network_ifaces: int
    n_mem_controllers: int
    memory_style: str

    def __post_init__(self):
        _require(self.reticle_rows >= 1 and self.reticle_cols >= 1, "reticle grid dims must be >= 1")
        _require(self.integration in INTEGRATIONS, f"integration must be one of {INTEGRATIONS}")
        _require(self.memory_style in MEMORY_STYLES, f"memory_style must be one of {MEMORY_STYLES}")
        _require(self.n_network_ifaces >= 1, "need at least one network interface")
        _require(self.n_mem_controllers >= 0, "n_mem_controllers must be >= 0")


@dataclass(frozen=True)
class HeterogeneityConfig:
    granularity: str = "None"
    prefill_ratio: float = 0.5

    def __post_init__(self):
        _require(self.granularity in GRANULARITIES,
                 f"granularity must be one of {GRANULARITIES}")
        if self.granularity == "None":
            # ratio is meaningless without a split; normalize for stable equality
            object.__setattr__(self, "prefill_ratio", 0.5)
        else:
            _require(0.0 < self.prefill_ratio < 1.0,
                     f"prefill_ratio={self.prefill_ratio} outside (0,1)")


@dataclass(frozen=True)
class DesignPoint:
    core: CoreConfig
    reticle: ReticleConfig
    wafer: WaferConfig
    hetero: HeterogeneityConfig = HeterogeneityConfig()
    n_wafers: int = 1

    def __post_init__(self):
        _require(self.n_wafers >= 1, "n_wafers must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        if self.hetero.granularity == "None":
            d["hetero"].pop("prefill_ratio")
        return d

    def canonical_json(self) -> str:
        """Stable string form used for hashing, archives, and memo keys."""
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, d: dict) -> "DesignPoint":
        try:
            return cls(
                core=CoreConfig(**d["core"]),
                reticle=ReticleConfig(**d["reticle"]),
                wafer=WaferConfig(**d["wafer"]),
                hetero=HeterogeneityConfig(**d.get("hetero", {})),
                n_wafers=d.get("n_wafers", 1),
            )
        except (KeyError, TypeError) as e:
            raise InputError(f"malformed design point JSON: {e}") from None


@dataclass(frozen=True)
class Violation:
    constraint: str     # Area | Power | Yield | Sram | Stress
    detail: str
    margin: float       # signed; negative means violated by that fraction

    def to_json(self):
        return {"constraint": self.constraint, "detail": self.detail, "margin": self.margin}


@dataclass(frozen=True)
class ConstraintReport:
    passed: bool
    violations: tuple
    margins: dict                 # constraint -> signed margin (all five)
    yield_report: YieldReport
    reticle_mm2: float
    wafer_mm2: float
    peak_power_w: float
    spare_columns: int

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "violations": [v.to_json() for v in self.violations],
            "margins": self.margins,
            "yield": self.yield_report.to_json(),
            "reticle_mm2": self.reticle_mm2,
            "wafer_mm2": self.wafer_mm2,
            "peak_power_w": self.peak_power_w,
            "spare_columns": self.spare_columns,
        }


# ---------------------------------------------------------------------------
# candidate grid
# ---------------------------------------------------------------------------

def _check_grid_values(name, values, grid):
    vals = tuple(values)
    if not vals:
        raise EmptySpace(f"grid dimension {name} is empty")
    for v in vals:
        if v not in grid:
            raise EmptySpace(f"{name}={v} is not a candidate value (grid: {grid})")
    return vals


@dataclass(frozen=True)
class GridSpec:
    """Candidate values per dimension; defaults cover the full table."""

    dataflows: tuple = DATAFLOWS
    mac_nums: tuple = MAC_GRID
    buffer_sizes: tuple = BUFFER_SIZE_GRID
    buffer_bws: tuple = BUFFER_BW_GRID
    noc_bws: tuple = NOC_BW_GRID
    inter_reticle_bw_ratios: tuple = RATIO_GRID
    stacking_bw_densities: tuple = STACK_BW_GRID
    redundancy_cols: tuple = SPARE_GRID
    integrations: tuple = INTEGRATIONS
    memory_styles: tuple = MEMORY_STYLES
    n_network_ifaces: tuple = EDGE_COUNT_GRID
    n_mem_controllers: tuple = EDGE_COUNT_GRID
    granularities: tuple = GRANULARITIES
    prefill_ratios: tuple = PREFILL_RATIO_GRID
    n_wafers: tuple = (1,)
    core_rows_max: int = 0        # 0: derive from the area limit per config
    core_cols_max: int = 0
    reticle_rows_max: int = 0     # 0: derive from wafer fit per config
    reticle_cols_max: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dataflows", _check_grid_values("dataflow", self.dataflows, DATAFLOWS))
        object.__setattr__(self, "mac_nums", _check_grid_values("mac_num", self.mac_nums, MAC_GRID))
        object.__setattr__(self, "buffer_sizes", _check_grid_values("buffer_size", self.buffer_sizes, BUFFER_SIZE_GRID))
        object.__setattr__(self, "buffer_bws", _check_grid_values("buffer_bw", self.buffer_bws, BUFFER_BW_GRID))
        object.__setattr__(self, "noc_bws", _check_grid_values("noc_bw", self.noc_bws, NOC_BW_GRID))
        object.__setattr__(self, "inter_reticle_bw_ratios", _check_grid_values("inter_reticle_bw_ratio", self.inter_reticle_bw_ratios, RATIO_GRID))
        object.__setattr__(self, "stacking_bw_densities", _check_grid_values("stacking_bw_density", self.stacking_bw_densities, STACK_BW_GRID))
        object.__setattr__(self, "redundancy_cols", _check_grid_values("redundancy_cols", self.redundancy_cols, SPARE_GRID))
        object.__setattr__(self, "integrations", _check_grid_values("integration", self.integrations, INTEGRATIONS))
        object.__setattr__(self, "memory_styles", _check_grid_values("memory_style", self.memory_styles, MEMORY_STYLES))
        object.__setattr__(self, "n_network_ifaces", _check_grid_values("n_network_ifaces", self.n_network_ifaces, EDGE_COUNT_GRID))
        object.__setattr__(self, "n_mem_controllers", _check_grid_values("n_mem_controllers", self.n_mem_controllers, EDGE_COUNT_GRID))
        object.__setattr__(self, "granularities", _check_grid_values("granularity", self.granularities, GRANULARITIES))
        object.__setattr__(self, "prefill_ratios", _check_grid_values("prefill_ratio", self.prefill_ratios, PREFILL_RATIO_GRID))
        if not self.n_wafers or any(int(w) < 1 for w in self.n_wafers):
            raise EmptySpace("n_wafers values must be >= 1")
        object.__setattr__(self, "n_wafers", tuple(int(w) for w in self.n_wafers))

    @classmethod
    def from_file(cls, path) -> "GridSpec":
        path = Path(path)
        if not path.exists():
            raise InputError(f"grid spec file not found: {path}")
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        elif path.suffix == ".json":
            data = json.loads(path.read_text())
        else:
            raise InputError(f"grid spec must be .toml or .json, got {path.suffix}")
        known = set(cls.__dataclass_fields__)
        bad = set(data) - known
        if bad:
            raise InputError(f"unknown grid spec keys: {sorted(bad)}")
        data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**data)

    def hetero_combo_count(self) -> int:
        n = 0
        for g in self.granularities:
            n += 1 if g == "None" else len(self.prefill_ratios)
        return n


# ---------------------------------------------------------------------------
# the design space: grid x component db
# ---------------------------------------------------------------------------

class DesignSpace:
    """Binds a candidate grid to a component database.

    Array dimensions (core rows/cols, reticle rows/cols) have data-dependent
    upper bounds: core arrays are capped by the reticle area limit, reticle
    grids by wafer fit.  Those caps need component areas, hence the binding.
    """

    def __init__(self, grid: GridSpec | None = None, db: ComponentDb | None = None):
        self.grid = grid or GridSpec()
        self.db = db or ComponentDb.default()
        self._card = None

    # -- geometry caps ------------------------------------------------------

    def _core_mm2(self, dataflow, mac, size, bw, noc) -> float:
        p_core = CoreConfig(dataflow, mac, size, bw, noc)
        probe = DesignPoint(
            core=p_core,
            reticle=ReticleConfig(1, 1, 1.0, 0.25, stacking_capacity_gb(0.25)),
            wafer=WaferConfig(1, 1, "InfoSoW", 1, 1, "OffChipDram"),
        )
        return core_area_mm2(probe, self.db)

    def max_core_rows(self, core_mm2: float) -> int:
        cap = int(C.RETICLE_LIMIT_MM2 // core_mm2)
        cap = max(cap, 1)
        if self.grid.core_rows_max:
            cap = min(cap, self.grid.core_rows_max)
        return cap

    def max_core_cols(self, core_mm2: float, rows: int) -> int:
        cap = int(C.RETICLE_LIMIT_MM2 // (core_mm2 * rows))
        cap = max(cap, 1)
        if self.grid.core_cols_max:
            cap = min(cap, self.grid.core_cols_max)
        return cap

    def max_reticle_dims(self, reticle_w: float, reticle_h: float):
        rmax = max(int(C.WAFER_SIDE_MM // max(reticle_h, 1e-9)), 1)
        cmax = max(int(C.WAFER_SIDE_MM // max(reticle_w, 1e-9)), 1)
        if self.grid.reticle_rows_max:
            rmax = min(rmax, self.grid.reticle_rows_max)
        if self.grid.reticle_cols_max:
            cmax = min(cmax, self.grid.reticle_cols_max)
        return rmax, cmax

    # -- enumeration / counting ---------------------------------------------

    def enumerate(self):
        """Lazy stream over the full Cartesian product (nested loop order).

        Only sensible for narrow grids; the default grid is astronomically
        large (see cardinality).
        """
        g = self.grid
        for df in g.dataflows:
            for mac in g.mac_nums:
                for size in g.buffer_sizes:
                    for bw in g.buffer_bws:
                        if not self.db.sram_feasible(size, bw):
                            continue
                        for noc in g.noc_bws:
                            core_mm2 = self._core_mm2(df, mac, size, bw, noc)
                            core = CoreConfig(df, mac, size, bw, noc)
                            yield from self._enum_geometry(core, core_mm2)

    def _enum_geometry(self, core, core_mm2):
        g = self.grid
        side = math.sqrt(core_mm2)
        for rows in range(1, self.max_core_rows(core_mm2) + 1):
            for cols in range(1, self.max_core_cols(core_mm2, rows) + 1):
                rmax, cmax = self.max_reticle_dims(cols * side, rows * side)
                for ratio in g.inter_reticle_bw_ratios:
                    for style in g.memory_styles:
                        stack_opts = g.stacking_bw_densities if style == "StackingDram" \
                            else (g.stacking_bw_densities[0],)
                        for sbw in stack_opts:
                            for spares in g.redundancy_cols:
                                ret = ReticleConfig(rows, cols, ratio, sbw,
                                                    stacking_capacity_gb(sbw), spares)
                                for rr in range(1, rmax + 1):
                                    for rc in range(1, cmax + 1):
                                        yield from self._enum_wafer(core, ret, rr, rc, style)

    def _enum_wafer(self, core, ret, rr, rc, style):
        g = self.grid
        for integ in g.integrations:
            for ni in g.n_network_ifaces:
                for mc in g.n_mem_controllers:
                    wafer = WaferConfig(rr, rc, integ, ni, mc, style)
                    for gran in g.granularities:
                        ratios = (0.5,) if gran == "None" else g.prefill_ratios
                        for pr in ratios:
                            het = HeterogeneityConfig(gran, pr)
                            for nw in g.n_wafers:
                                yield DesignPoint(core, ret, wafer, het, nw)

    def cardinality(self) -> int:
        """Exact grid size by counting, never materializing.

        Geometry pairs are counted per core configuration with the area and
        wafer-fit caps applied; the remaining dimensions multiply through.
        Spare columns are counted as a free dimension (the validator, not
        the grid, owns their area effect).
        """
        if self._card is not None:
            return self._card
        g = self.grid
        geo_total = 0
        for df in g.dataflows:
            for mac in g.mac_nums:
                for size in g.buffer_sizes:
                    for bw in g.buffer_bws:
                        if not self.db.sram_feasible(size, bw):
                            continue
                        for noc in g.noc_bws:
                            a = self._core_mm2(df, mac, size, bw, noc)
                            geo_total += self._geometry_pairs(a)
        styles = 0
        for style in g.memory_styles:
            styles += len(g.stacking_bw_densities) if style == "StackingDram" else 1
        mult = (
            len(g.inter_reticle_bw_ratios)
            * styles
            * len(g.redundancy_cols)
            * len(g.integrations)
            * len(g.n_network_ifaces)
            * len(g.n_mem_controllers)
            * g.hetero_combo_count()
            * len(g.n_wafers)
        )
        self._card = geo_total * mult
        return self._card

    def _geometry_pairs(self, core_mm2: float) -> int:
        """Sum over (core rows, cols, reticle rows, cols) quadruples."""
        side = math.sqrt(core_mm2)
        rmax = self.max_core_rows(core_mm2)
        rows = np.arange(1, rmax + 1)
        maxc = np.minimum(
            (C.RETICLE_LIMIT_MM2 / (core_mm2 * rows)).astype(np.int64),
            self.grid.core_cols_max or np.iinfo(np.int64).max,
        )
        maxc = np.maximum(maxc, 1)
        # wafer-fit reticle counts per core-array dimension
        biggest = max(int(maxc.max()), rmax)
        dims = np.arange(1, biggest + 1)
        fit = np.maximum((C.WAFER_SIDE_MM / (dims * side)).astype(np.int64), 1)
        if self.grid.reticle_rows_max:
            fit_r = np.minimum(fit, self.grid.reticle_rows_max)
        else:
            fit_r = fit
        if self.grid.reticle_cols_max:
            fit_c = np.minimum(fit, self.grid.reticle_cols_max)
        else:
            fit_c = fit
        prefix_c = np.concatenate(([0], np.cumsum(fit_c)))
        total = 0
        for r, mc in zip(rows, maxc):
            total += int(fit_r[r - 1]) * int(prefix_c[min(mc, biggest)])
        return total

    # -- sampling -----------------------------------------------------------

    def sample(self, rng: np.random.Generator, n: int) -> list:
        """n independent uniform draws from the grid (pre-validation)."""
        out = []
        g = self.grid
        for _ in range(n):
            df = g.dataflows[rng.integers(len(g.dataflows))]
            mac = int(g.mac_nums[rng.integers(len(g.mac_nums))])
            pairs = [(s, b) for s in g.buffer_sizes for b in g.buffer_bws
                     if self.db.sram_feasible(s, b)]
            size, bw = pairs[rng.integers(len(pairs))]
            noc = int(g.noc_bws[rng.integers(len(g.noc_bws))])
            a = self._core_mm2(df, mac, size, bw, noc)
            rows = int(rng.integers(1, self.max_core_rows(a) + 1))
            cols = int(rng.integers(1, self.max_core_cols(a, rows) + 1))
            side = math.sqrt(a)
            rmax, cmax = self.max_reticle_dims(cols * side, rows * side)
            style = g.memory_styles[rng.integers(len(g.memory_styles))]
            sbw = float(g.stacking_bw_densities[rng.integers(len(g.stacking_bw_densities))])
            gran = g.granularities[rng.integers(len(g.granularities))]
            pr = float(g.prefill_ratios[rng.integers(len(g.prefill_ratios))])
            out.append(DesignPoint(
                core=CoreConfig(df, mac, size, bw, noc),
                reticle=ReticleConfig(
                    rows, cols,
                    float(g.inter_reticle_bw_ratios[rng.integers(len(g.inter_reticle_bw_ratios))]),
                    sbw, stacking_capacity_gb(sbw),
                    int(g.redundancy_cols[rng.integers(len(g.redundancy_cols))]),
                ),
                wafer=WaferConfig(
                    int(rng.integers(1, rmax + 1)), int(rng.integers(1, cmax + 1)),
                    g.integrations[rng.integers(len(g.integrations))],
                    int(g.n_network_ifaces[rng.integers(len(g.n_network_ifaces))]),
                    int(g.n_mem_controllers[rng.integers(len(g.n_mem_controllers))]),
                    style,
                ),
                hetero=HeterogeneityConfig(gran, pr),
                n_wafers=int(g.n_wafers[rng.integers(len(g.n_wafers))]),
            ))
        return out

    # -- encoding for the optimizer ------------------------------------------

    DIM_NAMES = (
        "dataflow", "mac_num", "buffer_size", "buffer_bw", "noc_bw",
        "core_rows", "core_cols", "inter_reticle_bw_ratio", "stacking_bw_density",
        "redundancy_cols", "reticle_rows", "reticle_cols", "integration",
        "memory_style", "n_network_ifaces", "n_mem_controllers",
        "granularity", "prefill_ratio", "n_wafers",
    )

    def to_vector(self, p: DesignPoint) -> np.ndarray:
        """Raw value-space vector (enums become indices)."""
        g = self.grid
        return np.array([
            DATAFLOWS.index(p.core.dataflow),
            p.core.mac_num,
            p.core.buffer_size,
            p.core.buffer_bw,
            p.core.noc_bw,
            p.reticle.core_rows,
            p.reticle.core_cols,
            p.reticle.inter_reticle_bw_ratio,
            p.reticle.stacking_dram_bw_density,
            p.reticle.redundancy_cols,
            p.wafer.reticle_rows,
            p.wafer.reticle_cols,
            INTEGRATIONS.index(p.wafer.integration),
            MEMORY_STYLES.index(p.wafer.memory_style),
            p.wafer.n_network_ifaces,
            p.wafer.n_mem_controllers,
            GRANULARITIES.index(p.hetero.granularity),
            p.hetero.prefill_ratio,
            p.n_wafers,
        ], dtype=float)

    def encode(self, p: DesignPoint) -> np.ndarray:
        """Normalized [0,1] embedding used by the GP surrogate."""
        g = self.grid
        v = self.to_vector(p)

        def lin(x, lo, hi):
            return 0.0 if hi == lo else (x - lo) / (hi - lo)

        def idx(val, options):
            return lin(options.index(val), 0, len(options) - 1)

        a = self._core_mm2(p.core.dataflow, p.core.mac_num, p.core.buffer_size,
                           p.core.buffer_bw, p.core.noc_bw)
        side = math.sqrt(a)
        rmax, cmax = self.max_reticle_dims(p.reticle.core_cols * side,
                                           p.reticle.core_rows * side)
        return np.array([
            lin(v[0], 0, len(DATAFLOWS) - 1),
            lin(math.log2(p.core.mac_num), math.log2(MAC_GRID[0]), math.log2(MAC_GRID[-1])),
            lin(math.log2(p.core.buffer_size), math.log2(BUFFER_SIZE_GRID[0]), math.log2(BUFFER_SIZE_GRID[-1])),
            lin(math.log2(p.core.buffer_bw), math.log2(BUFFER_BW_GRID[0]), math.log2(BUFFER_BW_GRID[-1])),
            lin(math.log2(p.core.noc_bw), math.log2(NOC_BW_GRID[0]), math.log2(NOC_BW_GRID[-1])),
            lin(p.reticle.core_rows, 1, self.max_core_rows(a)),
            lin(p.reticle.core_cols, 1, self.max_core_cols(a, p.reticle.core_rows)),
            idx(p.reticle.inter_reticle_bw_ratio, list(RATIO_GRID)),
            idx(p.reticle.stacking_dram_bw_density, list(STACK_BW_GRID)),
            lin(p.reticle.redundancy_cols, SPARE_GRID[0], SPARE_GRID[-1]),
            lin(p.wafer.reticle_rows, 1, rmax),
            lin(p.wafer.reticle_cols, 1, cmax),
            lin(v[12], 0, len(INTEGRATIONS) - 1),
            lin(v[13], 0, len(MEMORY_STYLES) - 1),
            idx(p.wafer.n_network_ifaces, list(EDGE_COUNT_GRID)),
            idx(p.wafer.n_mem_controllers, list(EDGE_COUNT_GRID)),
            lin(v[16], 0, len(GRANULARITIES) - 1),
            p.hetero.prefill_ratio,
            lin(v[18], self.grid.n_wafers[0], self.grid.n_wafers[-1]),
        ], dtype=float)

    def snap_to_grid(self, raw) -> DesignPoint:
        """Map a raw value-space vector onto the nearest grid point.

        Power-of-two dimensions snap by log distance with ties toward the
        smaller value; list dimensions snap to the nearest listed value;
        count dimensions round half-down; everything clamps to its range.
        Idempotent on grid points.
        """
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (len(self.DIM_NAMES),):
            raise InputError(f"expected vector of {len(self.DIM_NAMES)} dims, got {raw.shape}")
        g = self.grid

        def near_log(x, options):
            x = min(max(x, options[0]), options[-1])
            lx = math.log2(x) if x > 0 else math.log2(options[0])
            best, bd = options[0], float("inf")
            for o in options:
                d = abs(lx - math.log2(o))
                if d < bd - 1e-12:
                    best, bd = o, d
            return best

        def near_list(x, options):
            best, bd = options[0], float("inf")
            for o in options:
                d = abs(x - o)
                if d < bd - 1e-12:
                    best, bd = o, d
            return best

        def near_int(x, lo, hi):
            # round half toward the smaller integer, then clamp
            return int(min(max(math.ceil(x - 0.5), lo), hi))

        def near_enum(x, options):
            return options[near_int(x, 0, len(options) - 1)]

        df = near_enum(raw[0], g.dataflows)
        mac = near_log(raw[1], sorted(g.mac_nums))
        pairs = [(s, b) for s in g.buffer_sizes for b in g.buffer_bws
                 if self.db.sram_feasible(s, b)]
        size = near_log(raw[2], sorted(g.buffer_sizes))
        feas_bws = sorted(b for s, b in pairs if s == size)
        if not feas_bws:
            raise EmptySpace(f"no feasible buffer_bw for buffer_size={size}")
        bw = near_log(raw[3], feas_bws)
        noc = near_log(raw[4], sorted(g.noc_bws))
        a = self._core_mm2(df, mac, size, bw, noc)
        rows = near_int(raw[5], 1, self.max_core_rows(a))
        cols = near_int(raw[6], 1, self.max_core_cols(a, rows))
        ratio = near_list(raw[7], sorted(g.inter_reticle_bw_ratios))
        sbw = near_list(raw[8], sorted(g.stacking_bw_densities))
        spares = near_list(raw[9], sorted(g.redundancy_cols))
        side = math.sqrt(a)
        rmax, cmax = self.max_reticle_dims(cols * side, rows * side)
        rr = near_int(raw[10], 1, rmax)
        rc = near_int(raw[11], 1, cmax)
        integ = near_enum(raw[12], g.integrations)
        style = near_enum(raw[13], g.memory_styles)
        ni = near_list(raw[14], sorted(g.n_network_ifaces))
        mc = near_list(raw[15], sorted(g.n_mem_controllers))
        gran = near_enum(raw[16], g.granularities)
        pr = near_list(raw[17], sorted(g.prefill_ratios)) if gran != "None" else 0.5
        nw = near_list(raw[18], sorted(g.n_wafers))
        return DesignPoint(
            core=CoreConfig(df, int(mac), int(size), int(bw), int(noc)),
            reticle=ReticleConfig(rows, cols, float(ratio), float(sbw),
                                  stacking_capacity_gb(float(sbw)), int(spares)),
            wafer=WaferConfig(rr, rc, integ, int(ni), int(mc), style),
            hetero=HeterogeneityConfig(gran, float(pr)),
            n_wafers=int(nw),
        )


def enumerate_candidates(grid: GridSpec, db: ComponentDb | None = None):
    return DesignSpace(grid, db).enumerate()


def snap_to_grid(raw, grid: GridSpec | None = None, db: ComponentDb | None = None) -> DesignPoint:
    return DesignSpace(grid, db).snap_to_grid(raw)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def build_layout(p: DesignPoint, db: ComponentDb) -> ReticleLayout:
    """Reticle geometry for yield evaluation: core field, TSV strip, corners."""
    area = area_of(p, db)
    side = math.sqrt(area.core_mm2)
    phys_cols = p.reticle.core_cols + p.reticle.redundancy_cols
    field_h = p.reticle.core_rows * side
    blocks = ()
    if area.tsv_count > 0:
        tsv_mm2 = area.breakdown["tsv"] / (p.wafer.reticle_rows * p.wafer.reticle_cols)
        strip_h = tsv_mm2 / area.reticle_w_mm
        blocks = ((0.0, field_h + TSV_STANDOFF_MM, area.reticle_w_mm, strip_h),)
    return ReticleLayout(
        reticle_w_mm=area.reticle_w_mm,
        reticle_h_mm=max(area.reticle_h_mm, field_h + TSV_STANDOFF_MM + (blocks[0][3] if blocks else 0.0)),
        core_w_mm=side,
        core_h_mm=side,
        rows=p.reticle.core_rows,
        cols=phys_cols,
        tsv_count=area.tsv_count,
        tsv_blocks=blocks,
    )


def yield_report_of(p: DesignPoint, db: ComponentDb, params: YieldParams) -> YieldReport:
    """Per-core yields, row-redundant reticle yield, and wafer yield for p."""
    layout = build_layout(p, db)
    ys = {}
    for r in range(layout.rows):
        for c in range(layout.cols):
            ys[(r, c)] = core_yield((r, c), layout, params)
    rows = [[ys[(r, c)] for c in range(layout.cols)] for r in range(layout.rows)]
    quotas = [p.reticle.core_cols] * layout.rows
    est = row_redundant_yield(rows, quotas, method="exact")
    n_ret = p.wafer.reticle_rows * p.wafer.reticle_cols
    wy = wafer_yield(est.value, n_ret, p.wafer.integration) if est.value > 0 else 0.0
    spares = p.reticle.redundancy_cols
    total_cols = p.reticle.core_cols + spares
    return YieldReport(
        core_yields=ys,
        reticle_yield=est.value,
        wafer_yield=wy,
        redundancy_overhead=spares / total_cols,
        spare_columns=spares,
    )


def auto_spare_columns(p: DesignPoint, db: ComponentDb, params: YieldParams,
                       max_spares: int | None = None) -> tuple[DesignPoint, YieldReport]:
    """Smallest spare-column count whose wafer yield reaches the target.

    Returns the point re-equipped with that count plus its yield report.
    If even the maximum falls short, returns the best-effort maximum so the
    caller can report the violation with a concrete margin.
    """
    cap = max_spares if max_spares is not None else min(p.reticle.core_cols, 8)
    best = None
    for s in range(0, cap + 1):
        cand = replace(p, reticle=replace(p.reticle, redundancy_cols=s))
        rep = yield_report_of(cand, db, params)
        best = (cand, rep)
        if rep.wafer_yield >= params.yield_target:
            return best
    return best


def validate(p: DesignPoint, db: ComponentDb, params: YieldParams | None = None,
             *, power_mode: str = "peak") -> ConstraintReport:
    """Five feasibility checks, all evaluated, each with a signed margin.

    Check order: Area (reticle limit + wafer fit), Power (peak by default;
    power_mode="static" relaxes to static-only for what-if runs), Yield
    (with spare columns auto-sized when the point leaves redundancy_cols at
    0), Sram (feasibility-table membership), Stress (TSV drilled-hole area
    share).  A missing database entry raises IncompleteDb rather than
    producing a violation: the design is unpriceable, not infeasible.
    """
    params = params or YieldParams()
    if power_mode not in ("peak", "static"):
        raise InputError(f"power_mode must be 'peak' or 'static', got {power_mode}")

    if p.reticle.redundancy_cols == 0:
        p_eff, yrep = auto_spare_columns(p, db, params)
    else:
        p_eff, yrep = p, yield_report_of(p, db, params)

    area = area_of(p_eff, db)
    violations = []
    margins = {}

    # (1) Area: reticle limit and wafer fit
    m_ret = (C.RETICLE_LIMIT_MM2 - area.reticle_mm2) / C.RETICLE_LIMIT_MM2
    used_h = p_eff.wafer.reticle_rows * area.reticle_h_mm
    used_w = p_eff.wafer.reticle_cols * area.reticle_w_mm
    m_fit = min((C.WAFER_SIDE_MM - used_h) / C.WAFER_SIDE_MM,
                (C.WAFER_SIDE_MM - used_w) / C.WAFER_SIDE_MM)
    margins["Area"] = min(m_ret, m_fit)
    if m_ret < 0:
        violations.append(Violation(
            "Area", f"reticle {area.reticle_mm2:.1f} mm^2 exceeds {C.RETICLE_LIMIT_MM2:.0f} mm^2 limit", m_ret))
    if m_fit < 0:
        violations.append(Violation(
            "Area", f"reticle grid {used_w:.0f}x{used_h:.0f} mm exceeds "
                    f"{C.WAFER_SIDE_MM:.0f} mm wafer side", m_fit))

    # (2) Power
    if power_mode == "peak":
        pw = peak_power_w(p_eff, db)
    else:
        from .cost_model import static_power_w
        pw = static_power_w(p_eff, db, area)
    margins["Power"] = (C.POWER_CAP_W - pw) / C.POWER_CAP_W
    if margins["Power"] < 0:
        violations.append(Violation(
            "Power", f"{power_mode} power {pw:.0f} W exceeds {C.POWER_CAP_W:.0f} W cap",
            margins["Power"]))

    # (3) Yield with redundancy
    margins["Yield"] = (yrep.wafer_yield - params.yield_target) / params.yield_target
    if margins["Yield"] < 0:
        violations.append(Violation(
            "Yield", f"wafer yield {yrep.wafer_yield:.4f} below target {params.yield_target} "
                     f"even with {yrep.spare_columns} spare column(s)", margins["Yield"]))

    # (4) SRAM feasibility
    feasible = db.sram_feasible(p.core.buffer_size, p.core.buffer_bw)
    margins["Sram"] = 0.0 if feasible else -1.0
    if not feasible:
        violations.append(Violation(
            "Sram", f"(buffer_size={p.core.buffer_size} KB, buffer_bw={p.core.buffer_bw}) "
                    f"absent from the SRAM feasibility table", -1.0))

    # (5) TSV stress: drilled-hole area share of the reticle
    hole_mm2 = area.tsv_count * (C.TSV_SIZE_UM * 1e-3) ** 2
    frac = hole_mm2 / area.reticle_mm2
    margins["Stress"] = (C.TSV_STRESS_AREA_FRAC_MAX - frac) / C.TSV_STRESS_AREA_FRAC_MAX
    if margins["Stress"] < 0:
        violations.append(Violation(
            "Stress", f"TSV hole area {frac * 100:.2f}% of reticle exceeds "
                      f"{C.TSV_STRESS_AREA_FRAC_MAX * 100:.1f}% cap", margins["Stress"]))

    return ConstraintReport(
        passed=not violations,
        violations=tuple(violations),
        margins=margins,
        yield_report=yrep,
        reticle_mm2=area.reticle_mm2,
        wafer_mm2=area.wafer_mm2,
        peak_power_w=pw if power_mode == "peak" else peak_power_w(p_eff, db),
        spare_columns=yrep.spare_columns,
    )


def require_valid(p: DesignPoint, db: ComponentDb, params: YieldParams | None = None) -> ConstraintReport:
    rep = validate(p, db, params)
    if not rep.passed:
        raise ConstraintViolation([v.detail for v in rep.violations])
    return rep
