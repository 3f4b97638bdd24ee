"""A five-point H4 scan with chained warm starts, written to report files.

Equivalent CLI call: savqe run demos/scan_h4.json --out /tmp/h4_scan
Run: python demos/05_scan_driver.py [output_dir]
"""

# %%
import sys
from pathlib import Path

from savqe.harness import emit_reports, format_metrics, load_scan_config, run_scan

config = load_scan_config(Path(__file__).with_name("scan_h4.json"))
if len(sys.argv) > 1:
    config.output_dir = sys.argv[1]
print("methods:", [m.name for m in config.methods], "points:", [p.label for p in config.scan_points])

# %%
report = run_scan(config)
print(format_metrics(report.metrics))

# %%
files = emit_reports(report, config.output_dir)
print(f"wrote {len(files)} files to {config.output_dir}:")
for path in files:
    print("  ", path.name)
