"""Technology and platform constants shared across models.

Values mirror a contemporary wafer-scale integration setup: a full-field
stepper reticle, a 215 mm square usable wafer region, and deep-trench TSV
stacking for on-wafer DRAM.  Anything marked "default" can be overridden
through the relevant dataclass fields; the module constants are the single
source for the defaults.
"""

from __future__ import annotations

# -- lithography / wafer geometry ------------------------------------------
RETICLE_LIMIT_MM2 = 26.0 * 33.0   # 858 mm^2 full-field exposure limit
WAFER_SIDE_MM = 215.0             # usable square region on a 300 mm wafer

# -- clocking / power --------------------------------------------------------
CLOCK_HZ = 1.0e9                  # all cycle counts convert to time at 1 GHz
POWER_CAP_W = 15_000.0            # per-wafer delivery + cooling budget

# -- defect / stress model defaults -----------------------------------------
DEFECT_DENSITY_PER_CM2 = 0.1      # Murphy defect density D0
STRESS_YIELD_LOSS = 0.1           # max proximity yield loss at zero distance
STRESS_RADIUS_MM = 1.0            # proximity influence radius d_max
WAFER_YIELD_TARGET = 0.9          # redundancy is sized to reach this

# -- network-on-chip ---------------------------------------------------------
FLIT_BYTES = 32
NOC_VCS = 8                       # virtual channels per physical link
NOC_VC_BUFFER_FLITS = 4           # private buffer depth per VC
ROUTER_PIPELINE_CYCLES = 2        # per-hop latency r
INTER_RETICLE_EXTRA_CYCLES = 10   # added per reticle-boundary crossing
MAX_PACKET_FLITS = 256            # larger transfers split into packets

# -- inter-reticle wiring (area per unit bandwidth) --------------------------
RDL_UM2_PER_GBPS = 3900.0         # redistribution-layer fan-out links
OFFSET_UM2_PER_GBPS = 1300.0      # stitched-exposure direct wires

# -- TSV stacking -------------------------------------------------------------
TSV_SIZE_UM = 5.0                 # drilled hole edge (stress-relevant)
TSV_PITCH_UM = 15.0               # placement pitch (area-relevant)
TSV_GBPS = 1.0                    # bandwidth per TSV
TSV_STRESS_AREA_FRAC_MAX = 0.015  # drilled-hole area cap per reticle

# -- wafer edge units ---------------------------------------------------------
NETWORK_IFACE_GBYTES = 100.0      # per network interface, off-wafer
MEM_CONTROLLER_GBYTES = 160.0     # per off-wafer DRAM controller
MEM_CONTROLLER_CAPACITY_GB = 64.0 # DRAM capacity behind one controller
INTER_WAFER_GBYTES = 100.0        # wafer-to-wafer link for KV handoff

# -- stacked DRAM trade curve -------------------------------------------------
# capacity_gb = STACK_CAP_BASE_GB - STACK_CAP_SLOPE * bw_density
# with bw_density in TB/s per 100 mm^2; corners: 0.25 -> ~40 GB, 4 -> 8 GB.
STACK_CAP_BASE_GB = 42.0
STACK_CAP_SLOPE = 8.5

# -- workload defaults --------------------------------------------------------
SEQ_LEN_DEFAULT = 2048
PRECISION_BYTES = 2               # fp16 compute
CKPT_GRANULARITY_LAYERS = 2       # activation checkpointing interval
INFERENCE_BATCH_DEFAULT = 32

# -- core-level placement overhead -------------------------------------------
PLACEMENT_OVERHEAD = 1.15         # wiring + whitespace multiplier on core area
