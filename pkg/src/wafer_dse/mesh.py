"""Physical core mesh of one wafer: geometry, link bandwidths, X-Y routing.

The wafer is a single 2D mesh of cores spanning all reticles.  Links inside
a reticle run at the core NoC bandwidth; links that cross a reticle boundary
share that boundary's configured inter-reticle bandwidth (a ratio of the
reticle bisection bandwidth) and carry an extra fixed crossing latency.
Spare columns make the physical mesh wider than the logical one; defective
cores are skipped by shifting logical columns rightward within their row
segment (routers of defective cores still forward traffic).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import constants as C
from .errors import InputError, UnmappableWorkload


@dataclass(frozen=True)
class LinkInfo:
    bw_flits: float       # flits per cycle
    extra_lat: int        # added cycles on top of the router pipeline
    inter_reticle: bool


class WaferMesh:
    """Core-level mesh of one wafer with per-link bandwidth and routing."""

    def __init__(self, p, defects: frozenset = frozenset()):
        r, w = p.reticle, p.wafer
        self.point = p
        self.ret_rows = w.reticle_rows
        self.ret_cols = w.reticle_cols
        self.core_rows = r.core_rows
        self.phys_cols = r.core_cols + r.redundancy_cols
        self.logic_cols = r.core_cols
        self.height = self.ret_rows * self.core_rows
        self.width = self.ret_cols * self.phys_cols
        self.defects = frozenset(defects)
        for (y, x) in self.defects:
            if not (0 <= y < self.height and 0 <= x < self.width):
                raise InputError(f"defect at ({y},{x}) outside {self.height}x{self.width} mesh")

        flit_bits = C.FLIT_BYTES * 8.0
        self.intra_bw_flits = p.core.noc_bw / flit_bits
        # one boundary's total bandwidth, spread over the rows (or columns)
        # of physical links that cross it
        boundary_gbps = p.reticle.inter_reticle_bw_ratio * \
            min(r.core_rows, r.core_cols) * p.core.noc_bw       # Gbit/s == bit/cycle
        self.boundary_bytes_per_cycle = boundary_gbps / 8.0
        per_v_link = boundary_gbps / self.core_rows             # vertical boundary: rows cross
        per_h_link = boundary_gbps / self.phys_cols             # horizontal boundary: cols cross
        self.inter_v_bw_flits = per_v_link / flit_bits
        self.inter_h_bw_flits = per_h_link / flit_bits

    # -- node helpers ---------------------------------------------------------

    def node_id(self, y: int, x: int) -> int:
        return y * self.width + x

    def node_yx(self, nid: int):
        return divmod(nid, self.width)

    def functional(self, y: int, x: int) -> bool:
        return (y, x) not in self.defects

    # -- links ---------------------------------------------------------------

    def link_info(self, y0: int, x0: int, y1: int, x1: int) -> LinkInfo:
        if abs(y1 - y0) + abs(x1 - x0) != 1:
            raise InputError("links connect mesh neighbors only")
        if y0 == y1:  # horizontal hop: may cross a vertical reticle boundary
            if (min(x0, x1) + 1) % self.phys_cols == 0:
                return LinkInfo(self.inter_v_bw_flits, C.INTER_RETICLE_EXTRA_CYCLES, True)
            return LinkInfo(self.intra_bw_flits, 0, False)
        if (min(y0, y1) + 1) % self.core_rows == 0:
            return LinkInfo(self.inter_h_bw_flits, C.INTER_RETICLE_EXTRA_CYCLES, True)
        return LinkInfo(self.intra_bw_flits, 0, False)

    def route(self, src: int, dst: int) -> list:
        """Dimension-ordered X-then-Y path as a list of (from, to) node pairs."""
        y0, x0 = self.node_yx(src)
        y1, x1 = self.node_yx(dst)
        path = []
        x, y = x0, y0
        step = 1 if x1 > x else -1
        while x != x1:
            path.append((self.node_id(y, x), self.node_id(y, x + step)))
            x += step
        step = 1 if y1 > y else -1
        while y != y1:
            path.append((self.node_id(y, x), self.node_id(y + step, x)))
            y += step
        return path

    # -- logical-to-physical mapping ------------------------------------------

    def physical_of_logical(self, ret_row: int, ret_col: int, row: int, col: int):
        """Physical (y, x) of a reticle-local logical core with spare shift.

        Within one reticle row, defective cores are skipped left to right;
        the logical column lands on the (col+1)-th functional core of that
        row segment.  Raises when the row has too few functional cores.
        """
        y = ret_row * self.core_rows + row
        base = ret_col * self.phys_cols
        seen = 0
        for px in range(base, base + self.phys_cols):
            if self.functional(y, px):
                if seen == col:
                    return (y, px)
                seen += 1
        raise UnmappableWorkload(
            f"reticle ({ret_row},{ret_col}) row {row}: fewer than {col + 1} functional cores"
        )

    def reticle_of(self, y: int, x: int):
        return (y // self.core_rows, x // self.phys_cols)
