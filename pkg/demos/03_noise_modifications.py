"""Ten agents with 10% ranging noise and 1% motion noise.

The modifications add an agent-weight floor, a relative tolerance on the
inclusion test and an exact-sum weight construction.  This script runs a
few seeds with and without them and compares the late-run error.
"""

from dataclasses import replace

import numpy as np

from vhull.sim import preset, run_trial, tail_median

STEPS = 5000  # the acceptance runs use 20000

for mods in (True, False):
    meds = []
    for seed in range(3):
        cfg = replace(preset("fig11_noise"), seed=seed, max_steps=STEPS).with_modifications(mods)
        meds.append(tail_median(run_trial(cfg).trace.errors))
    print(f"modifications {'on ' if mods else 'off'}: tail medians {np.round(meds, 4)}")
