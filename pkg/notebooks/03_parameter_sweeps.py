"""
Scenario sweeps and plot data
=============================

Scenario files under ``scenarios/`` drive the command line. This script
runs the same sweeps through the Python API, then writes gnuplot input for
E* against SNR with one series per antenna count.
"""

# %%
import tempfile
from pathlib import Path

from semantic_jscc import scenario as sc
from semantic_jscc.cli import main

root = Path(__file__).resolve().parents[1] / "scenarios"
out = Path(tempfile.mkdtemp())

# %%
csvs = []
for n in (2, 3, 4):
    cfg = sc.load_config(root / f"sweep_snr_n{n}.toml")
    records = sc.run_scenario(cfg)
    path = out / f"snr_n{n}.csv"
    path.write_text(sc.records_to_csv(records, sc.csv_stamp(cfg)))
    csvs.append(str(path))
    print(f"n={n}: " + ", ".join(f"SNR {r.axis_value} dB -> E* {r.E_star:.4f}"
                                 for r in records))

# %% [markdown]
# ``plot-data`` accepts several result files and writes ``PREFIX.dat`` plus
# ``PREFIX.gp``; run ``gnuplot PREFIX.gp`` to render the figure.

# %%
code = main(["plot-data", *csvs, "--out", str(out / "snr")])
print(code, (out / "snr.gp").read_text())
