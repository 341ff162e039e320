"""The sequence of update matrices split into slices.

A slice starts at the first matrix with a row sum below one and ends once
every row of the running product has lost mass.  Each completed slice
therefore has infinity norm below one, which is what drives the error
to zero when slices keep completing.
"""

import math
from dataclasses import replace

from vhull import ltv
from vhull.sim import preset, run_trial

cfg = replace(preset("fig7_n3"), seed=1, max_steps=3000)
trial = run_trial(cfg)
stream = list(ltv.event_stream(trial.trace.events, cfg.n_agents, cfg.n_anchors))
report = ltv.decompose_slices(stream)

print("matrices:", report.n_matrices, "completed slices:", len(report.slices))
for s in report.slices[:8]:
    print(f"  chain {s.start:6d} .. {s.close:6d}  length {s.length:5d}  norm {s.norm:.4f}")

# slice lengths against the growth bound with constant scale (gamma1 = 0);
# gamma2 just inside its validity limit -log(1 - anchor_min)
gamma2 = -0.99 * math.log(1 - cfg.anchor_min)
p = ltv.GrowthBoundParams.from_weights(cfg.self_floor, cfg.anchor_min, 0.0, gamma2)
check = ltv.check_growth_bound(report, p)
# with these weights the admitted length is about one position, far below
# what random meetings produce; the bound is sufficient, not necessary
print(f"bound {ltv.growth_bound(1, p):.3f}, fraction of slices within it: {check.fraction_ok}")

dev = ltv.verify_error_dynamics(stream, trial.trace.estimates, trial.trace.truths)
print("largest deviation from e(k+1) = P(k) e(k):", dev)
