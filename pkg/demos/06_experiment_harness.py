"""
Running experiments from configs
================================

Every experiment is a JSON config. The runner writes a metrics table whose
rows each state lhs <= rhs + tol, so a verdict can be rechecked from the table
alone. The same runs are available on the command line as `mflab run`.
"""

import json
import os
import tempfile

from mflab.harness import EXPERIMENTS, default_config, parse_config, run_experiment, verdicts_from_metrics

print("experiments:", ", ".join(EXPERIMENTS))

###############################################################################
# A reduced Dobrushin run: 5 random pairs of 32-atom measures. Fields left
# out of the config take the experiment defaults.

raw = {"schema": 1, "experiment": "dobrushin", "n_list": [32], "trials": 5, "t_end": 0.5, "dt": 1e-2}
cfg = parse_config(raw)
print("defaults used for the potential:", default_config("dobrushin")["potential"])

out = tempfile.mkdtemp(prefix="mflab-demo-")
report = run_experiment(cfg, out)
for check, (n, bad) in sorted(report.verdicts().items()):
    print(f"{'PASS' if bad == 0 else 'FAIL'} {check}: {n - bad}/{n}")

###############################################################################
# The written artifacts, and a verdict recomputed from metrics.csv.

print("\nartifacts:", sorted(os.listdir(out)))
v = verdicts_from_metrics(os.path.join(out, "metrics.csv"))
print(f"recomputed verdict: {'PASS' if v['passed'] else 'FAIL'}, consistent with stored flags: {v['consistent']}")
with open(os.path.join(out, "plots", "plots.json")) as fh:
    print("figures:", [fig["name"] for fig in json.load(fh)["figures"]])

###############################################################################
# The equivalent command line:
#
#   echo '{"schema": 1, "experiment": "dobrushin", "trials": 5}' > dob.json
#   mflab run dob.json --out results/dob --jobs 2
