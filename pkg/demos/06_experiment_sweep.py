"""
The experiment driver: config in, CSVs + certificate + manifest out
===================================================================

The `duca` command line wraps everything above: it reads one structured
config (graph, problem, settings, run, oracle sections), validates the
assumptions, solves the reference problem, runs every (variant, alpha)
setting, and writes one CSV per setting plus the reference certificate and
a manifest pinning the config hash and seeds.  Identical configs produce
byte-identical outputs.

This script drives the shipped benchmark config at reduced round count
(pass --full for the complete 1000-round sweep) and prints a comparison
table, including the equal-communication view: single-exchange families
send half as many reals per round, so at equal communication volume they
get twice the rounds.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from duca import csv_to_rows

CONFIG = Path(__file__).resolve().parent / "configs" / "experiment.yaml"
ROUNDS = [] if "--full" in sys.argv else ["--rounds", "200"]

out = Path(tempfile.mkdtemp(prefix="duca_sweep_"))

# ----------------------------------------------------------------------
# 1. validate without running anything
print("$ duca validate --config", CONFIG.name, flush=True)
subprocess.run([sys.executable, "-m", "duca.cli", "validate",
                "--config", str(CONFIG)], check=True)

# 2. the sweep itself (--strict: abort on any invariant breach)
print(f"\n$ duca run --config {CONFIG.name} --out {out} --strict", flush=True)
subprocess.run([sys.executable, "-m", "duca.cli", "run",
                "--config", str(CONFIG), "--out", str(out), "--strict",
                *ROUNDS], check=True)

manifest = json.loads((out / "manifest.json").read_text())
print(f"\nmanifest: config sha256 {manifest['config_sha256'][:16]}..., "
      f"seeds {manifest['seeds']}, rounds {manifest['rounds']}")

# ----------------------------------------------------------------------
# 3. read the CSVs back and compare the families
runs = {}
for csv_path in sorted(out.glob("*.csv")):
    runs[csv_path.stem] = csv_to_rows(csv_path.read_text())

print(f"\n{'setting':16s} {'feas@end':>10s} {'|obj err|@end':>14s} "
      f"{'reals sent':>11s} {'min bound slack':>16s}")
for name, rows in runs.items():
    last = rows[-1]
    print(f"{name:16s} {last.ergodic_feasibility:10.5f} "
          f"{abs(last.ergodic_objective_error):14.5f} {last.comm_total:11d} "
          f"{min(r.bound_fe_slack for r in rows):16.5f}")

# equal-communication comparison: evaluate every run at the largest volume
# all of them reached
budget = min(rows[-1].comm_total for rows in runs.values())
print(f"\nobjective error at equal communication ({budget} reals):")
for name, rows in runs.items():
    at = next(r for r in rows if r.comm_total >= budget)
    print(f"  {name:16s} {abs(at.ergodic_objective_error):9.5f}   "
          f"(round {at.k})")

# 4. evaluate the closed-form bounds without running: the bounds command
print("\n$ duca bounds --config", CONFIG.name, "--k 10,100,1000", flush=True)
subprocess.run([sys.executable, "-m", "duca.cli", "bounds",
                "--config", str(CONFIG), "--k", "10,100,1000"], check=True)
