import math

import numpy as np

from vhull.agent import AgentState
from vhull.motion import MotionCommand, Pose, Region, apply_motion


def dead_reckoning_errors(seed, steps=1000, n_spots=3, region=Region()):
    """Drive one agent randomly and compare its tracked lengths with coordinates.

    Returns (largest single-step growth of the distance error, final
    distance error, final pairwise error), all absolute.
    """
    rng = np.random.default_rng(seed)
    x, y = region.sample(rng)
    pose = Pose(float(x), float(y), float(rng.uniform(0, 2 * math.pi)))
    ag = AgentState(0, pose, np.zeros(2), rng)
    spots = {}
    contact_at = set(rng.choice(steps // 2, n_spots, replace=False).tolist())
    prev = np.zeros(0)
    step_err = 0.0
    for k in range(steps):
        scan = 0.0
        if k in contact_at:
            sx, sy = region.sample(rng)
            j = len(spots)
            spots[j] = (float(sx), float(sy))
            bearing = math.atan2(sy - pose.y, sx - pose.x) - pose.heading
            ag.on_contact(j, math.dist((pose.x, pose.y), spots[j]), (0.0, 0.0), k, bearing)
            scan = bearing % (2 * math.pi)
            prev = np.append(prev, 0.0)
        cmd = MotionCommand(rng.uniform(0, 5), rng.uniform(0, 2 * math.pi), scan)
        new, cmd = apply_motion(pose, cmd, region, rng)
        ag.pose = new
        ag.on_move(cmd, (new.x - pose.x, new.y - pose.y))
        pose = new
        errs = np.array([abs(ag.visited[j].distance - math.dist((pose.x, pose.y), s)) for j, s in spots.items()])
        if len(errs):
            step_err = max(step_err, float(np.max(errs - prev)))
            prev = errs
    final = float(prev.max()) if len(prev) else 0.0
    pair = 0.0
    ids = sorted(spots)
    for a in ids:
        for b in ids:
            if a < b:
                got = ag.pairwise_virtual_distance(ag.visited[a], ag.visited[b])
                pair = max(pair, abs(got - math.dist(spots[a], spots[b])))
    return step_err, final, pair


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
