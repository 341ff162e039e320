"""Without an anchor the estimates still agree with each other, but nothing
ties them to the true frame.

Every update matrix is then row-stochastic, the product of the matrices
keeps infinity norm one, and the error stops moving at a nonzero level.
"""

from dataclasses import replace

import numpy as np

from vhull import ltv
from vhull.sim import preset, run_trial

cfg = replace(preset("fig9_noanchor"), seed=2)
trial = run_trial(cfg)
errors = trial.trace.errors

for k in (0, 500, 1000, 2500, len(errors) - 1):
    print(f"k={k:5d}  error={errors[k]:.5f}")

tail = errors[int(0.8 * (len(errors) - 1)):]
print("spread over the last 20%:", tail.max() - tail.min())

stream = ltv.event_stream(trial.trace.events, cfg.n_agents, cfg.n_anchors)
_, norms, _ = ltv.product_norm(stream, cfg.n_agents)
print("product norm range:", norms.min(), norms.max())

# the estimates have collapsed to a common offset from the truth
offset = trial.trace.truths[-1] - trial.trace.estimates[-1]
print("final truth - estimate per agent:")
print(np.round(offset, 4))
