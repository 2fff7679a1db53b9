"""
Running a bundled scenario from Python
======================================

Equivalent to ``isopde run <config> --out-dir demo-out``. Writes the JSON
record, the CSV table and the SVG plots, then prints the assertions.
"""

import sys

from isopde.harness import run, validate_config
from isopde.harness.cli import bundled_configs

path = next(p for p in bundled_configs() if p.endswith("gaussian_slab.toml"))
with open(path) as fh:
    cfg = validate_config(fh.read())

out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo-out"
record = run(cfg, out_dir)
for a in record.assertions:
    print("PASS" if a["passed"] else "FAIL", a["name"], a["detail"])
print(record.status, "->", out_dir, record.summary.get("plots"))
