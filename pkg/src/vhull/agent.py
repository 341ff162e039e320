"""Per-agent localization protocol.

An agent remembers, for every node it has met, the estimate that node
reported and a running distance/bearing to the spot where the meeting took
place.  Whenever three such spots enclose the agent it moves its estimate
toward their barycentric combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .geometry import (
    MIN_HULL_AREA,
    MIN_HULL_QUALITY,
    TRI_TOL,
    WEIGHT_ROUNDING_TOL,
    Barycentrics,
    HullDistances,
    NotInterior,
    fold_angle,
    indirect_distance,
    residual_weights,
    step_distance,
    triangle_quality,
    area_or_invalid,
    area_rounding_error,
    wrap_angle,
)
from .motion import MotionCommand, Pose


@dataclass
class VisitedRecord:
    node_id: int
    contact_k: int
    distance: float
    estimate: tuple[float, float]
    bearing: float  # direction to the contact spot, relative to own heading
    is_anchor: bool = False
    anchor_touched: bool = False


@dataclass(frozen=True)
class UpdateWeights:
    """Self-weight and the minimum contributions that gate an update.

    Floors apply to the matrix entries ``(1 - self_weight) * a``.
    ``agent_min = 0`` disables the agent floor.
    """

    self_weight: float = 0.2
    anchor_min: float = 0.1
    agent_min: float = 0.0
    self_floor: float = 0.2
    exact_anchor_hull: bool = False

    def __post_init__(self):
        if not 0 < self.self_floor <= self.self_weight < 1:
            raise ValueError("need 0 < self_floor <= self_weight < 1")
        if not 0 < self.anchor_min < 1:
            raise ValueError("anchor_min must lie in (0, 1)")
        if not 0 <= self.agent_min < 1 / 3:
            raise ValueError("agent_min must lie in [0, 1/3)")


@dataclass
class TriangulationSet:
    nodes: tuple[int, int, int]
    distances: HullDistances
    weights: Barycentrics
    rel_error: float
    self_weight: float


@dataclass
class UpdateEvent:
    """Everything needed to rebuild the system-matrix row of one update."""

    k: int
    agent: int
    nodes: tuple[int, int, int]
    is_anchor: tuple[bool, bool, bool]
    contact_k: tuple[int, int, int]
    weights: tuple[float, float, float]
    self_weight: float
    estimates: tuple[tuple[float, float], ...]
    rel_error: float
    anchor_touched: bool
    residual: int | None = None


@dataclass
class AgentState:
    id: int
    pose: Pose
    estimate: np.ndarray
    rng: np.random.Generator
    visited: dict[int, VisitedRecord] = field(default_factory=dict)
    anchor_touched: bool = False
    # lengths between contact spots, fixed when the later contact is made
    pair_distance: dict[tuple[int, int], float] = field(default_factory=dict)
    _layout: tuple | None = field(default=None, repr=False)

    # -- bookkeeping -----------------------------------------------------

    def on_contact(
        self,
        other_id: int,
        measured_d: float,
        other_estimate,
        k: int,
        bearing: float = 0.0,
        is_anchor: bool = False,
        anchor_touched: bool = False,
    ) -> VisitedRecord:
        """Record a meeting; a revisit replaces the earlier record."""
        self._forget(other_id)
        rec = VisitedRecord(
            other_id,
            k,
            float(measured_d),
            (float(other_estimate[0]), float(other_estimate[1])),
            wrap_angle(bearing),
            is_anchor,
            is_anchor or anchor_touched,
        )
        for old in self.visited.values():
            self.pair_distance[_key(other_id, old.node_id)] = self.pairwise_virtual_distance(rec, old)
        self.visited[other_id] = rec
        self._layout = None
        return rec

    def _forget(self, node_id: int) -> None:
        if self.visited.pop(node_id, None) is None:
            return
        for other in self.visited:
            self.pair_distance.pop(_key(node_id, other), None)
        self._layout = None

    def on_move(self, cmd: MotionCommand, measured_delta) -> None:
        """Advance the estimate and carry every record through the move.

        ``self.pose`` must already hold the post-move pose; its heading
        fixes the direction of ``measured_delta`` relative to the agent.
        """
        dx, dy = float(measured_delta[0]), float(measured_delta[1])
        self.estimate = np.array([self.estimate[0] + dx, self.estimate[1] + dy])
        turn = cmd.total_turn
        m = math.hypot(dx, dy)
        offset = math.atan2(dy, dx) - self.pose.heading if m > 0 else 0.0
        for rec in self.visited.values():
            phi = rec.bearing - turn - offset
            d = rec.distance
            d_new = step_distance(d, m, phi)
            rel = _bearing_after_step(d, m, phi, d_new)
            rec.distance = d_new
            rec.bearing = wrap_angle(rel + offset)

    def pairwise_virtual_distance(self, rec_a: VisitedRecord, rec_b: VisitedRecord) -> float:
        if rec_a is rec_b:
            return 0.0
        return indirect_distance(rec_a.distance, rec_b.distance, fold_angle(rec_a.bearing - rec_b.bearing))

    # -- hull search and update -----------------------------------------

    def _ordered(self):
        """Records oldest first and every candidate hull with its area."""
        if self._layout is None:
            recs = sorted(self.visited.values(), key=lambda r: r.contact_k)
            pd = self.pair_distance
            hulls = []
            for q in combinations(range(len(recs)), 3):
                j, l, n = (recs[x].node_id for x in q)
                jl, jn, ln = pd[_key(j, l)], pd[_key(j, n)], pd[_key(l, n)]
                area = area_or_invalid(jl, ln, jn)
                hulls.append((q, jl, jn, ln, area, triangle_quality(area, jl, jn, ln)))
            self._layout = (recs, hulls)
        return self._layout

    def find_triangulation(
        self,
        weights: UpdateWeights,
        eps: float = 0.0,
        k: int | None = None,
        m3: bool = True,
        tol: float = TRI_TOL,
        min_hull_area: float = MIN_HULL_AREA,
        min_quality: float = MIN_HULL_QUALITY,
        weight_rounding_tol: float = WEIGHT_ROUNDING_TOL,
    ) -> TriangulationSet | None:
        """First qualifying virtual hull, scanning oldest contacts first.

        ``eps`` is the admissible relative inclusion error; ``m3`` fills one
        randomly chosen weight as the complement of the other two.  Hulls
        below ``min_hull_area`` or shape quality ``min_quality`` are skipped, as
        are hulls whose computed weights would move the estimate by more
        than ``weight_rounding_tol`` through rounding alone.
        """
        if len(self.visited) < 3:
            return None
        recs, hulls = self._ordered()
        d = [r.distance for r in recs]
        gate = eps + tol
        for q, jl, jn, ln, hull, quality in hulls:
            if hull < min_hull_area or quality < min_quality:
                continue
            ij, il, in_ = d[q[0]], d[q[1]], d[q[2]]
            # i replacing j, l, n in turn
            a_j = area_or_invalid(il, ln, in_, tol)
            a_l = area_or_invalid(ij, in_, jn, tol)
            a_n = area_or_invalid(jl, il, ij, tol)
            if a_j < 0 or a_l < 0 or a_n < 0:
                continue
            excess = ((a_j + a_l) + a_n - hull) / hull
            if abs(excess) > gate:
                continue
            vs = [recs[x] for x in q]
            alpha = weights.self_weight
            if weights.exact_anchor_hull and all(r.is_anchor for r in vs):
                alpha = 0.0
            ratios = (a_j / hull, a_l / hull, a_n / hull)
            res = int(self.rng.integers(3)) if m3 else -1
            # a needle sub-triangle gives a weight dominated by rounding
            # unless it is the residual one
            sides = ((il, ln, in_), (ij, in_, jn), (jl, il, ij))
            span = max(jl, jn, ln) / hull
            if any(
                v != res and area_rounding_error(*sides[v], sub) * span > weight_rounding_tol
                for v, sub in enumerate((a_j, a_l, a_n))
            ):
                continue
            if m3:
                try:
                    bary = residual_weights(ratios, res)
                except NotInterior:
                    continue
            else:
                bary = Barycentrics(*ratios, residual=-1)
            if not _floors_ok(vs, bary.as_tuple(), 1.0 - alpha, weights):
                continue
            h = HullDistances(ij, il, in_, jl, jn, ln)
            return TriangulationSet(tuple(r.node_id for r in vs), h, bary, abs(excess), alpha)
        return None

    def apply_update(self, ts: TriangulationSet, k: int = -1) -> UpdateEvent:
        """Move the estimate toward the hull's barycentric combination and
        drop the three consumed records."""
        vs = [self.visited[q] for q in ts.nodes]
        w = ts.weights.as_tuple()
        alpha = ts.self_weight
        cx = w[0] * vs[0].estimate[0] + w[1] * vs[1].estimate[0] + w[2] * vs[2].estimate[0]
        cy = w[0] * vs[0].estimate[1] + w[1] * vs[1].estimate[1] + w[2] * vs[2].estimate[1]
        self.estimate = np.array(
            [alpha * self.estimate[0] + (1.0 - alpha) * cx, alpha * self.estimate[1] + (1.0 - alpha) * cy]
        )
        touched = any(r.anchor_touched for r in vs)
        self.anchor_touched = self.anchor_touched or touched
        for q in ts.nodes:
            self._forget(q)
        return UpdateEvent(
            k=k,
            agent=self.id,
            nodes=ts.nodes,
            is_anchor=tuple(r.is_anchor for r in vs),
            contact_k=tuple(r.contact_k for r in vs),
            weights=w,
            self_weight=alpha,
            estimates=tuple(r.estimate for r in vs),
            rel_error=ts.rel_error,
            anchor_touched=touched,
            residual=ts.weights.residual if ts.weights.residual >= 0 else None,
        )


def _bearing_after_step(d: float, m: float, phi: float, d_new: float) -> float:
    """Direction to the contact spot after the step, relative to the step.

    Solved from the two known sides and their included angle.  Recovering
    the angle from all three sides instead loses precision when the step is
    short compared with the distance.
    """
    if m == 0.0:
        return phi
    if d_new == 0.0:
        return 0.0
    return math.atan2(d * math.sin(phi), d * math.cos(phi) - m)


def _key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _floors_ok(vs, w, scale: float, weights: UpdateWeights) -> bool:
    for rec, a in zip(vs, w):
        floor = weights.anchor_min if rec.is_anchor else weights.agent_min
        if floor > 0 and scale * a < floor:
            return False
    return True
