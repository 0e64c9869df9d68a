"""Die, reticle, and wafer yield models.

Three effects combine multiplicatively at the core level: random defects
(Murphy's classical area/defect-density formula), mechanical stress from
packaging screw holes placed at reticle corner intersections, and stress
from TSV drill fields used by stacked DRAM.  Redundant spare cores lift
reticle yield through a binomial survival model; integration style decides
how reticle yield composes into wafer yield (known-good-die selection keeps
the reticle yield, monolithic stitching takes the product).

All functions are pure.  The Monte Carlo path takes an explicit seed and
reports its standard error, so estimates are reproducible and their
uncertainty is visible to callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .constants import (
    DEFECT_DENSITY_PER_CM2,
    STRESS_RADIUS_MM,
    STRESS_YIELD_LOSS,
    WAFER_YIELD_TARGET,
)
from .errors import InputError

_SERIES_CUTOFF = 1e-8
_DEFAULT_MC_SAMPLES = 100_000


@dataclass(frozen=True)
class YieldParams:
    """Defect and stress parameters, all overridable from the config file."""

    defect_density_d0: float = DEFECT_DENSITY_PER_CM2  # defects per cm^2
    stress_loss: float = STRESS_YIELD_LOSS             # loss at distance 0
    stress_radius_mm: float = STRESS_RADIUS_MM         # influence radius
    tsv_loss: float = 0.1                              # TSV analog of stress_loss
    tsv_radius_mm: float = 1.0                         # TSV influence radius
    yield_target: float = WAFER_YIELD_TARGET
    mc_samples: int = _DEFAULT_MC_SAMPLES

    def __post_init__(self):
        for name in ("stress_loss", "tsv_loss", "yield_target"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name} must be in [0,1], got {v}")
        if self.stress_radius_mm <= 0 or self.tsv_radius_mm <= 0:
            raise InputError("stress/tsv radii must be positive")
        if self.defect_density_d0 < 0:
            raise InputError("defect density must be >= 0")


@dataclass(frozen=True)
class ReticleLayout:
    """Geometry needed to evaluate per-core yield inside one reticle.

    Cores tile the reticle from the bottom-left corner on a uniform grid;
    screw holes sit at the four reticle corners (the intersections shared
    with neighboring reticles); TSV drill fields are rectangles that live
    in the non-core margin.
    """

    reticle_w_mm: float
    reticle_h_mm: float
    core_w_mm: float
    core_h_mm: float
    rows: int                        # physical core rows
    cols: int                        # physical core columns incl. spares
    tsv_count: int = 0
    tsv_blocks: tuple = ()           # (x, y, w, h) rectangles in mm
    screw_holes: tuple = field(default=None)  # (x, y) points in mm

    def __post_init__(self):
        if self.screw_holes is None:
            corners = (
                (0.0, 0.0),
                (self.reticle_w_mm, 0.0),
                (0.0, self.reticle_h_mm),
                (self.reticle_w_mm, self.reticle_h_mm),
            )
            object.__setattr__(self, "screw_holes", corners)
        if self.rows * self.core_h_mm > self.reticle_h_mm + 1e-9:
            raise InputError("core rows do not fit reticle height")
        if self.cols * self.core_w_mm > self.reticle_w_mm + 1e-9:
            raise InputError("core columns do not fit reticle width")
        for (x, y, w, h) in self.tsv_blocks:
            if x < self.cols * self.core_w_mm and y < self.rows * self.core_h_mm:
                # block origin inside the core field: only legal if it starts
                # past the core grid in at least one axis
                raise InputError("TSV block overlaps core area")

    def core_vertices(self, row: int, col: int):
        x0 = col * self.core_w_mm
        y0 = row * self.core_h_mm
        return (
            (x0, y0),
            (x0 + self.core_w_mm, y0),
            (x0, y0 + self.core_h_mm),
            (x0 + self.core_w_mm, y0 + self.core_h_mm),
        )

    @property
    def core_area_cm2(self) -> float:
        return self.core_w_mm * self.core_h_mm / 100.0


@dataclass(frozen=True)
class RedundancyEstimate:
    """Result of a redundant-reticle yield evaluation."""

    value: float
    method: str                  # "closed_form" or "monte_carlo"
    n_samples: int | None = None
    seed: int | None = None
    stderr: float = 0.0


@dataclass(frozen=True)
class YieldReport:
    """Yield summary attached to constraint and evaluation reports."""

    core_yields: dict            # (row, col) -> fraction
    reticle_yield: float
    wafer_yield: float
    redundancy_overhead: float   # spare fraction of core area, n/(p+n)
    spare_columns: int = 0
    mc_seed: int | None = None
    mc_samples: int | None = None

    def to_json(self) -> dict:
        return {
            "reticle_yield": self.reticle_yield,
            "wafer_yield": self.wafer_yield,
            "redundancy_overhead": self.redundancy_overhead,
            "spare_columns": self.spare_columns,
            "core_yield_min": min(self.core_yields.values()) if self.core_yields else None,
            "core_yield_max": max(self.core_yields.values()) if self.core_yields else None,
            "mc_seed": self.mc_seed,
            "mc_samples": self.mc_samples,
        }


def murphy_yield(area_cm2: float, d0_per_cm2: float) -> float:
    """Murphy die yield [(1 - e^(-A*D0)) / (A*D0)]^2.

    Below A*D0 = 1e-8 the closed form degenerates to 0/0; the series limit
    1 - A*D0 keeps the function continuous there.
    """
    if area_cm2 <= 0:
        raise InputError(f"area must be positive, got {area_cm2}")
    if d0_per_cm2 < 0:
        raise InputError(f"defect density must be >= 0, got {d0_per_cm2}")
    x = area_cm2 * d0_per_cm2
    if x < _SERIES_CUTOFF:
        return 1.0 - x
    return ((1.0 - math.exp(-x)) / x) ** 2


def proximity_yield(d_mm: float, loss: float, d_max_mm: float) -> float:
    """Linear stress-proximity yield: (loss/d_max)*d + 1 - loss, capped at 1."""
    if not 0.0 <= loss <= 1.0:
        raise InputError(f"loss must be in [0,1], got {loss}")
    if d_mm < 0:
        raise InputError(f"distance must be >= 0, got {d_mm}")
    if d_max_mm <= 0:
        raise InputError(f"d_max must be positive, got {d_max_mm}")
    if d_mm >= d_max_mm:
        return 1.0
    return min(1.0, (loss / d_max_mm) * d_mm + 1.0 - loss)


def _point_dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _rect_dist(p, rect) -> float:
    # distance from point to axis-aligned rectangle (0 inside)
    x, y = p
    rx, ry, rw, rh = rect
    dx = max(rx - x, 0.0, x - (rx + rw))
    dy = max(ry - y, 0.0, y - (ry + rh))
    return math.hypot(dx, dy)


def core_yield(core_pos, layout: ReticleLayout, params: YieldParams) -> float:
    """Combined yield of one core: Murphy x stress factors x TSV factors.

    Each screw hole / TSV block contributes one proximity factor computed
    at the nearest core vertex; factors from distinct holes multiply
    (independence assumption).  Holes beyond their radius contribute 1.
    """
    row, col = core_pos
    if not (0 <= row < layout.rows and 0 <= col < layout.cols):
        raise InputError(f"core position {core_pos} outside {layout.rows}x{layout.cols} grid")
    verts = layout.core_vertices(row, col)
    y = murphy_yield(layout.core_area_cm2, params.defect_density_d0)
    for hole in layout.screw_holes:
        d = min(_point_dist(v, hole) for v in verts)
        y *= proximity_yield(d, params.stress_loss, params.stress_radius_mm)
    for block in layout.tsv_blocks:
        d = min(_rect_dist(v, block) for v in verts)
        y *= proximity_yield(d, params.tsv_loss, params.tsv_radius_mm)
    return y


def reticle_yield_redundant(
    p: int,
    n: int,
    core_yields: Sequence[float],
    *,
    seed: int = 0,
    n_samples: int = _DEFAULT_MC_SAMPLES,
) -> RedundancyEstimate:
    """Yield of a reticle with p working slots and n spares (Eq.-style binomial).

    The reticle survives when at least p of its p+n cores are defect-free.
    Uniform per-core yields admit the exact binomial tail; heterogeneous
    yields (stress makes edge cores weaker) fall back to seeded Monte Carlo
    with a reported standard error.
    """
    if p < 1 or n < 0:
        raise InputError(f"need p >= 1 and n >= 0, got p={p} n={n}")
    ys = list(core_yields)
    if len(ys) != p + n:
        raise InputError(f"expected {p + n} core yields, got {len(ys)}")
    if any(not (0.0 < y <= 1.0) for y in ys):
        raise InputError("per-core yields must be in (0, 1]")

    if max(ys) - min(ys) <= 1e-12:
        val = float(stats.binom.sf(p - 1, p + n, ys[0]))
        return RedundancyEstimate(value=val, method="closed_form")

    rng = np.random.default_rng(seed)
    arr = np.asarray(ys)
    alive = (rng.random((n_samples, p + n)) < arr).sum(axis=1)
    hits = float(np.mean(alive >= p))
    stderr = math.sqrt(max(hits * (1.0 - hits), 1e-300) / n_samples)
    return RedundancyEstimate(
        value=hits, method="monte_carlo", n_samples=n_samples, seed=seed, stderr=stderr
    )


def poisson_binomial_tail(ys: Sequence[float], k: int) -> float:
    """P(at least k of the independent Bernoulli(ys) succeed), exact DP.

    O(len(ys)^2) convolution; used as the exact counterpart of the Monte
    Carlo path and by the row-structured survival rule below.
    """
    ys = np.asarray(list(ys), dtype=float)
    m = len(ys)
    if k <= 0:
        return 1.0
    if k > m:
        return 0.0
    dist = np.zeros(m + 1)
    dist[0] = 1.0
    for y in ys:
        dist[1:] = dist[1:] * (1.0 - y) + dist[:-1] * y
        dist[0] *= 1.0 - y
    return float(dist[k:].sum())


def row_redundant_yield(
    row_yields: Sequence[Sequence[float]],
    working_per_row: Sequence[int],
    *,
    method: str = "exact",
    seed: int = 0,
    n_samples: int = _DEFAULT_MC_SAMPLES,
) -> RedundancyEstimate:
    """Row-structured survival: every row independently keeps >= its quota.

    Spare cores are wired per row, so a dead core can only be replaced by a
    spare in the same row.  The reticle survives iff each row r has at least
    working_per_row[r] alive cores.  Rows are independent, so the exact
    answer is the product of per-row Poisson binomial tails.
    """
    rows = [list(r) for r in row_yields]
    quotas = list(working_per_row)
    if len(rows) != len(quotas):
        raise InputError("one quota per row required")
    for r, q in zip(rows, quotas):
        if q < 0 or q > len(r):
            raise InputError(f"row quota {q} out of range for row of {len(r)} cores")

    if method == "exact":
        val = 1.0
        for r, q in zip(rows, quotas):
            val *= poisson_binomial_tail(r, q)
        return RedundancyEstimate(value=val, method="closed_form")
    if method != "monte_carlo":
        raise InputError(f"unknown method {method!r}")

    rng = np.random.default_rng(seed)
    ok = np.ones(n_samples, dtype=bool)
    for r, q in zip(rows, quotas):
        alive = (rng.random((n_samples, len(r))) < np.asarray(r)).sum(axis=1)
        ok &= alive >= q
    hits = float(np.mean(ok))
    stderr = math.sqrt(max(hits * (1.0 - hits), 1e-300) / n_samples)
    return RedundancyEstimate(
        value=hits, method="monte_carlo", n_samples=n_samples, seed=seed, stderr=stderr
    )


def wafer_yield(reticle_yield: float, n_reticles: int, integration: str) -> float:
    """Wafer yield under the chosen integration style.

    Known-good-die assembly ("InfoSoW") tests reticles before mounting, so
    the wafer-level yield equals the reticle yield.  Monolithic stitching
    ("DieStitching") needs every reticle on the wafer good simultaneously.
    """
    if not 0.0 < reticle_yield <= 1.0:
        raise InputError(f"reticle yield must be in (0,1], got {reticle_yield}")
    if n_reticles < 1:
        raise InputError(f"need at least one reticle, got {n_reticles}")
    if integration == "InfoSoW":
        return reticle_yield
    if integration == "DieStitching":
        return reticle_yield ** n_reticles
    raise InputError(f"unknown integration style {integration!r}")
