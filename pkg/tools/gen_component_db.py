"""Regenerate the default component database CSV.

The numbers are calibrated placeholders: scaling rules chosen so that
mid-range cores land around 2-4 mm^2 and mid-range wafers around 5-11 kW
peak, with high stacking-DRAM bandwidth or maxed-out arrays pushing past
the 15 kW cap.  Nothing here is measured silicon.  The CSV is committed as
package data; rerun this script only when changing the calibration.
"""

import csv
import sys
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "wafer_dse" / "data" / "component_db.csv"

MAC_GRID = [2 ** k for k in range(3, 13)]        # 8 .. 4096
SIZE_GRID = [2 ** k for k in range(5, 12)]       # 32 .. 2048 KB
BW_GRID = [2 ** k for k in range(5, 13)]         # 32 .. 4096 bit/cycle

DATAFLOWS = {"WS": (1.00, 0.80), "IS": (1.05, 0.85), "OS": (1.10, 0.90)}

ACTIONS = [
    "mac_op", "sram_read_bit", "sram_write_bit", "noc_hop_flit",
    "inter_reticle_bit", "dram_access_bit_stacking",
    "dram_access_bit_offchip", "inter_wafer_bit",
]


def rows():
    for df, (af, ef) in sorted(DATAFLOWS.items()):
        for m in MAC_GRID:
            yield {
                "kind": "mac_array",
                "config": f"dataflow={df};macs={m}",
                "area_mm2": round(0.002 * m * af, 6),
                "static_w": round(5e-5 * m, 6),
                "mac_op": ef,
            }
    for kb in SIZE_GRID:
        for bw in BW_GRID:
            if bw > 16 * kb:       # feasibility rule: wide ports need capacity
                continue
            yield {
                "kind": "sram_macro",
                "config": f"bw={bw};size_kb={kb}",
                "area_mm2": round(0.008 * kb + 0.0004 * bw, 6),
                "static_w": round(1e-4 * kb + 2e-5 * bw, 6),
                "sram_read_bit": 0.005,
                "sram_write_bit": 0.006,
            }
    for bw in BW_GRID:
        yield {
            "kind": "noc_router",
            "config": f"bw={bw}",
            "area_mm2": round(0.05 + 6e-4 * bw, 6),
            "static_w": round(0.02 + 4e-5 * bw, 6),
            "noc_hop_flit": 12.8,            # 0.05 pJ/bit x 256-bit flit
        }
    yield {
        "kind": "inter_reticle_phy", "config": "style=rdl",
        "area_mm2": 3900e-6, "static_w": 5e-4, "inter_reticle_bit": 1.0,
    }
    yield {
        "kind": "inter_reticle_phy", "config": "style=offset",
        "area_mm2": 1300e-6, "static_w": 2e-4, "inter_reticle_bit": 0.25,
    }
    yield {
        "kind": "tsv_block", "config": "variant=default",
        "area_mm2": 2.25e-4,                 # 15 um pitch footprint per TSV
        "static_w": 0.0, "dram_access_bit_stacking": 2.0,
    }
    yield {
        "kind": "mem_controller", "config": "variant=default",
        "area_mm2": 3.0, "static_w": 1.0, "dram_access_bit_offchip": 6.0,
    }
    yield {
        "kind": "network_iface", "config": "variant=default",
        "area_mm2": 2.0, "static_w": 0.5, "inter_wafer_bit": 5.0,
    }
    yield {
        "kind": "control_core", "config": "variant=default",
        "area_mm2": 0.2, "static_w": 0.05,
    }


def main():
    OUT.parent.mkdir(parents=True, exist_ok=True)
    cols = ["kind", "config", "area_mm2", "static_w"] + ACTIONS
    with open(OUT, "w", newline="") as fh:
        fh.write("# wafer-dse-component-db v1 -- calibrated placeholder, see tools/gen_component_db.py\n")
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        n = 0
        for r in rows():
            w.writerow({c: r.get(c, "") for c in cols})
            n += 1
    print(f"wrote {n} records to {OUT}", file=sys.stderr)


if __name__ == "__main__":
    main()
