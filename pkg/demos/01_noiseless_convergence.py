"""Three agents and one static anchor, no noise.

Each agent keeps distances to the spots where it met other nodes and
updates its estimate whenever three of those spots enclose it.  The
normalized error should decay to below 0.01 within a few thousand steps.
"""

from dataclasses import replace

import numpy as np

from vhull.sim import preset, run_trial

cfg = replace(preset("fig7_n3"), seed=4, max_steps=3000)
trial = run_trial(cfg)
errors = trial.trace.errors

# error at a few checkpoints
for k in (0, 250, 500, 1000, 2000, 3000):
    print(f"k={k:5d}  error={errors[k]:.5f}")

hits = np.flatnonzero(errors < 0.01)
print("first step below 0.01:", int(hits[0]) if len(hits) else None)
print("updates:", len(trial.trace.events))

# one update in detail: who was used and with which weights
ev = trial.trace.events[0]
print(f"first update at k={ev.k}: agent {ev.agent} used nodes {ev.nodes}")
print("  weights", np.round(ev.weights, 4), "self weight", ev.self_weight)
