"""Linear time-varying view of a localization run.

Each agent turn contributes one system matrix ``P`` that is the identity
except (when the agent updates) in that agent's row, plus an input matrix
``B`` carrying the anchor weights.  This module rebuilds those matrices from
update events, checks the error recursion against a simulated trace, splits
the matrix chain into slices and evaluates the slice-length growth bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

ROW_SUM_TOL = 1e-12


class MalformedEvent(ValueError):
    pass


class InvalidParams(ValueError):
    pass


@dataclass
class StepMatrices:
    """System/input matrices of one position ``k`` in the chain.

    Only the deviating row is stored; ``P`` and ``B`` materialise the dense
    matrices on demand.
    """

    k: int
    n: int
    m: int
    agent: int | None = None
    p_row: np.ndarray | None = None
    b_row: np.ndarray | None = None
    u: np.ndarray | None = None
    step: int | None = None
    # per column: the global step whose state the stored estimate reflects
    sources: dict[int, int] = field(default_factory=dict)

    @property
    def is_identity(self) -> bool:
        return self.agent is None

    @property
    def P(self) -> np.ndarray:
        P = np.eye(self.n)
        if self.agent is not None:
            P[self.agent] = self.p_row
        return P

    @property
    def B(self) -> np.ndarray:
        B = np.zeros((self.n, self.m))
        if self.agent is not None and self.b_row is not None:
            B[self.agent] = self.b_row
        return B

    def row_sum(self) -> float:
        return 1.0 if self.agent is None else float(self.p_row.sum())

    def strictly_substochastic(self) -> bool:
        return self.row_sum() < 1.0 - ROW_SUM_TOL


def capture_step(
    event,
    n: int,
    m: int,
    k: int | None = None,
    anchor_min: float | None = None,
    agent_min: float | None = None,
    self_floor: float | None = None,
) -> StepMatrices:
    """Materialise the matrices of one turn from an update event (or None).

    Floors, when given, are checked on the matrix entries and a violation
    raises :class:`MalformedEvent`.
    """
    if event is None:
        return StepMatrices(k if k is not None else 0, n, m)
    i = event.agent
    if not 0 <= i < n:
        raise MalformedEvent(f"agent {i} outside 0..{n - 1}")
    alpha = event.self_weight
    p_row = np.zeros(n)
    p_row[i] = alpha
    b_row = np.zeros(m)
    u = np.zeros((m, 2))
    sources = {}
    for node, w, anc, est, ck in zip(event.nodes, event.weights, event.is_anchor, event.estimates, event.contact_k):
        entry = (1.0 - alpha) * w
        if entry < 0:
            raise MalformedEvent(f"negative weight {entry} on node {node}")
        if anc:
            col = node - n
            if not 0 <= col < m:
                raise MalformedEvent(f"anchor id {node} outside {n}..{n + m - 1}")
            if anchor_min is not None and entry < anchor_min:
                raise MalformedEvent(f"anchor weight {entry:.6g} below floor {anchor_min}")
            b_row[col] += entry
            u[col] = est
        else:
            if node == i or not 0 <= node < n:
                raise MalformedEvent(f"bad agent column {node}")
            if agent_min is not None and agent_min > 0 and entry < agent_min:
                raise MalformedEvent(f"agent weight {entry:.6g} below floor {agent_min}")
            p_row[node] += entry
            # a lower id has already taken its turn when the contact is made
            sources[node] = ck + 1 if node < i else ck
    if self_floor is not None and alpha < self_floor:
        raise MalformedEvent(f"self weight {alpha} below floor {self_floor}")
    if k is None:
        k = event.k * n + i
    return StepMatrices(k, n, m, i, p_row, b_row, u, event.k, sources)


def event_stream(events, n: int, m: int, **floors) -> Iterator[StepMatrices]:
    """Non-identity chain entries of a run, indexed by agent turn."""
    for ev in events:
        yield capture_step(ev, n, m, **floors)


def _dense_stream(stream: Iterable[StepMatrices]) -> Iterator[StepMatrices]:
    """Fill index gaps with identities (only for small analytical chains)."""
    expect = None
    for sm in stream:
        if expect is not None:
            for k in range(expect, sm.k):
                yield StepMatrices(k, sm.n, sm.m)
        yield sm
        expect = sm.k + 1


def _apply(S: np.ndarray, sm: StepMatrices) -> None:
    """In place ``S <- P_k S``."""
    if sm.agent is not None:
        S[sm.agent] = sm.p_row @ S


def verify_error_dynamics(steps: Iterable[StepMatrices], estimates, truths, delayed: bool = True) -> float:
    """Largest deviation between the simulated errors and ``e+ = P e``.

    ``estimates`` and ``truths`` have shape (K+1, N, 2), one slice per
    global step.  An agent that updates at step k uses estimates its
    neighbours reported when it met them; with ``delayed`` the recursion
    reads those neighbours' errors at the contact step (exact for noiseless
    runs), otherwise their errors at step k.
    """
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    err = tru - est
    K = err.shape[0] - 1
    if K <= 0:
        return 0.0
    expected = err[:-1].copy()
    for sm in steps:
        if sm.agent is None:
            continue
        k, i = sm.step, sm.agent
        if k is None or k >= K:
            continue
        row = sm.p_row
        acc = row[i] * err[k, i]
        for j in np.flatnonzero(row):
            if j == i:
                continue
            src = sm.sources.get(int(j), k) if delayed else k
            acc = acc + row[j] * err[src, j]
        expected[k, i] = acc
    return float(np.max(np.abs(err[1:] - expected))) if K else 0.0


@dataclass
class Slice:
    start: int
    close: int
    end: int
    length: int
    norm: float
    product: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"start": self.start, "close": self.close, "end": self.end, "length": self.length, "norm": self.norm}


@dataclass
class SliceReport:
    """Completed slices plus the matrices before the first and after the last.

    A slice opens on a strictly sub-stochastic matrix and closes once every
    row sum of the accumulated product is below one; ``length`` counts the
    chain positions from open to close.  Identity/stochastic matrices
    between a close and the next open are absorbed into the earlier slice's
    ``product`` so that the slices tile the chain.
    """

    n: int
    slices: list[Slice]
    lead: np.ndarray
    lead_end: int | None
    tail: np.ndarray | None
    tail_start: int | None
    n_matrices: int

    def full_product(self) -> np.ndarray:
        out = self.lead.copy()
        for s in self.slices:
            out = s.product @ out
        if self.tail is not None:
            out = self.tail @ out
        return out

    @property
    def lengths(self) -> list[int]:
        return [s.length for s in self.slices]

    def stats(self) -> dict:
        lengths = self.lengths
        norms = [s.norm for s in self.slices]
        return {
            "completed": len(self.slices),
            "open_tail": self.tail is not None,
            "length_mean": float(np.mean(lengths)) if lengths else None,
            "length_max": int(max(lengths)) if lengths else None,
            "norm_max": float(max(norms)) if norms else None,
        }

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_matrices": self.n_matrices,
            "lead_end": self.lead_end,
            "tail_start": self.tail_start,
            "slices": [s.to_dict() for s in self.slices],
            "stats": self.stats(),
        }


def decompose_slices(stream: Iterable[StepMatrices], n: int | None = None) -> SliceReport:
    """Split a matrix chain (in ``k`` order, gaps = identity) into slices."""
    slices: list[Slice] = []
    lead = None
    cur = None  # product of the open slice
    prev = None  # product of the last closed slice, still absorbing
    start = lead_end = None
    count = 0
    for sm in stream:
        if lead is None:
            n = sm.n
            lead = np.eye(n)
        count += 1
        if cur is None and sm.strictly_substochastic():
            cur = np.eye(n)
            start = sm.k
            if prev is not None:
                prev = None
            elif lead_end is None:
                lead_end = sm.k - 1
        if cur is not None:
            _apply(cur, sm)
            if np.all(cur.sum(axis=1) < 1.0 - ROW_SUM_TOL):
                s = Slice(start, sm.k, sm.k, sm.k - start + 1, float(np.abs(cur).sum(axis=1).max()), cur)
                slices.append(s)
                prev, cur = s, None
        elif prev is not None:
            _apply(prev.product, sm)
            prev.end = sm.k
        else:
            _apply(lead, sm)
    if lead is None:
        lead = np.eye(n or 0)
    return SliceReport(
        n or 0, slices, lead, lead_end, cur, start if cur is not None else None, count
    )


@dataclass(frozen=True)
class GrowthBoundParams:
    beta1: float
    beta2: float
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not 0 < self.beta1 <= 1:
            raise InvalidParams("beta1 must lie in (0, 1]")
        if not 0 <= self.beta2 < 1:
            raise InvalidParams("beta2 must lie in [0, 1)")
        if not 0 <= self.gamma1 <= 1:
            raise InvalidParams("gamma1 must lie in [0, 1]")
        if not self.gamma2 > 0:
            raise InvalidParams("gamma2 must be > 0")

    @classmethod
    def from_weights(cls, self_floor: float, anchor_min: float, gamma1: float, gamma2: float):
        return cls(self_floor, 1.0 - anchor_min, gamma1, gamma2)


def growth_bound(i: int, params: GrowthBoundParams, check: bool = True) -> float:
    """Largest slice length admitted for slice index ``i`` (1-based).

    ``1 - exp(-x)`` and ``log(1 - beta2)`` go through expm1/log1p to keep
    precision when the exponent is small.
    """
    x = params.gamma2 * float(i) ** (-params.gamma1)
    if check and not params.beta2 < math.exp(-x):
        raise InvalidParams(
            f"beta2={params.beta2} >= exp(-gamma2 i^-gamma1)={math.exp(-x):.6g} at i={i}"
        )
    log_ratio = math.log(-math.expm1(-x)) - math.log1p(-params.beta2)
    if params.beta1 == 1.0:
        return math.inf
    return log_ratio / math.log(params.beta1) + 1.0


@dataclass
class GrowthCheck:
    bounds: list[float]
    ok: list[bool]
    prefix_ok: list[bool]

    @property
    def fraction_ok(self) -> float:
        return sum(self.ok) / len(self.ok) if self.ok else 1.0

    @property
    def all_prefixes(self) -> bool:
        return all(self.prefix_ok)

    def to_dict(self) -> dict:
        return {
            "bounds": self.bounds,
            "ok": self.ok,
            "fraction_ok": self.fraction_ok,
            "all_prefixes": self.all_prefixes,
        }


def check_growth_bound(report: SliceReport | Iterable[int], params: GrowthBoundParams) -> GrowthCheck:
    """Per-slice verdict ``length <= bound(i)``.

    Which slices belong to the admissible subset is not decided here;
    ``prefix_ok[i]`` says whether some slice up to ``i`` meets its bound.
    """
    lengths = report.lengths if isinstance(report, SliceReport) else list(report)
    bounds = [growth_bound(i, params) for i in range(1, len(lengths) + 1)]
    ok = [ln <= b for ln, b in zip(lengths, bounds)]
    prefix, seen = [], False
    for flag in ok:
        seen = seen or flag
        prefix.append(seen)
    return GrowthCheck(bounds, ok, prefix)


def product_norm(stream: Iterable[StepMatrices], n: int | None = None):
    """Running infinity norm of ``P_k ... P_0``.

    Returns ``(ks, norms, product)`` with one norm per supplied matrix.
    """
    prod = None if n is None else np.eye(n)
    ks, norms = [], []
    for sm in stream:
        if prod is None:
            prod = np.eye(sm.n)
        _apply(prod, sm)
        ks.append(sm.k)
        norms.append(float(np.abs(prod).sum(axis=1).max()))
    if prod is None:
        prod = np.eye(0)
    return np.array(ks, dtype=int), np.array(norms), prod
