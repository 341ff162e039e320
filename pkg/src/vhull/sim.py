"""Trial orchestration, error metric, Monte Carlo batches and presets."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import ltv
from .agent import AgentState, UpdateEvent, UpdateWeights
from .geometry import MIN_HULL_QUALITY
from .motion import (
    NoiseConfig,
    Pose,
    Region,
    apply_motion,
    draw_motion,
    noisy_motion,
    noisy_range,
)

STABLE_STEPS = 50


class ConfigError(ValueError):
    pass


class UnknownPreset(ConfigError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_agents: int = 3
    n_anchors: int = 1
    region: Region = field(default_factory=Region)
    radius: float = 2.0
    d_max: float = 5.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    self_weight: float = 0.2
    anchor_min: float = 0.1
    agent_min: float = 0.05
    self_floor: float = 0.2
    eps: float = 0.05
    min_hull_quality: float = MIN_HULL_QUALITY
    # noise modifications: agent floor, inclusion-error gate, residual weight
    m1: bool = False
    m2: bool = False
    m3: bool = True
    exact_anchor_hull: bool = False
    mobile_anchors: bool = False
    seed: int = 0
    max_steps: int = 5000
    tolerance: float = 0.01
    early_stop: bool = False
    trials: int = 1

    def validate(self) -> None:
        if self.n_agents < 1:
            raise ConfigError("n_agents must be >= 1")
        if self.n_anchors < 0:
            raise ConfigError("n_anchors must be >= 0")
        if self.radius <= 0 or self.d_max < 0:
            raise ConfigError("radius must be > 0 and d_max >= 0")
        if self.max_steps < 0 or self.trials < 1:
            raise ConfigError("max_steps must be >= 0 and trials >= 1")
        if not 0 <= self.eps:
            raise ConfigError("eps must be >= 0")
        if not 0 <= self.min_hull_quality < 1:
            raise ConfigError("min_hull_quality must lie in [0, 1)")
        try:
            self.weights()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def weights(self) -> UpdateWeights:
        return UpdateWeights(
            self_weight=self.self_weight,
            anchor_min=self.anchor_min,
            agent_min=self.agent_min if self.m1 else 0.0,
            self_floor=self.self_floor,
            exact_anchor_hull=self.exact_anchor_hull,
        )

    def with_modifications(self, on: bool) -> "SimConfig":
        return replace(self, m1=on, m2=on, m3=on)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if isinstance(data.get("region"), dict):
                data["region"] = Region(**data["region"])
            if isinstance(data.get("noise"), dict):
                data["noise"] = NoiseConfig(**data["noise"])
            cfg = cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg


def error_norm(estimates, truths, region: Region) -> float:
    """Network error normalised by the region size; 1/sqrt(2) for a single
    agent misplaced by the full width and height."""
    diff = np.asarray(estimates, dtype=float) - np.asarray(truths, dtype=float)
    ex = diff[..., 0] / region.width
    ey = diff[..., 1] / region.height
    return 0.5 * math.sqrt(float(np.sum(ex * ex) + np.sum(ey * ey)))


@dataclass
class StepRecord:
    k: int
    truths: np.ndarray
    estimates: np.ndarray
    events: list[UpdateEvent]
    error: float


@dataclass
class Trace:
    truths: np.ndarray  # (K+1, N, 2)
    estimates: np.ndarray  # (K+1, N, 2)
    errors: np.ndarray  # (K+1,)
    anchors: np.ndarray  # (K+1, M, 2)
    events: list[UpdateEvent]

    @property
    def steps(self) -> int:
        return len(self.errors) - 1

    def records(self):
        by_k: dict[int, list[UpdateEvent]] = {}
        for ev in self.events:
            by_k.setdefault(ev.k, []).append(ev)
        for k in range(len(self.errors)):
            yield StepRecord(k, self.truths[k], self.estimates[k], by_k.get(k, []), float(self.errors[k]))


@dataclass
class TrialSummary:
    seed: int
    initial_error: float
    final_error: float
    steps: int
    first_below: int | None
    update_counts: list[int]
    anchor_updates: int
    slices: dict

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trial:
    config: SimConfig
    trace: Trace
    summary: TrialSummary


def _init_world(cfg: SimConfig):
    root = np.random.SeedSequence(cfg.seed)
    world_ss, *node_ss = root.spawn(1 + cfg.n_agents + cfg.n_anchors)
    world = np.random.default_rng(world_ss)
    n, m = cfg.n_agents, cfg.n_anchors
    pos = cfg.region.sample(world, n + m)
    headings = world.uniform(0.0, 2 * math.pi, n + m)
    guesses = cfg.region.sample(world, n)
    rngs = [np.random.default_rng(s) for s in node_ss]
    agents = [
        AgentState(i, Pose(float(pos[i, 0]), float(pos[i, 1]), float(headings[i])), guesses[i].copy(), rngs[i])
        for i in range(n)
    ]
    anchor_poses = [Pose(float(pos[n + a, 0]), float(pos[n + a, 1]), float(headings[n + a])) for a in range(m)]
    return agents, anchor_poses, rngs[n:], pos


def run_trial(cfg: SimConfig) -> Trial:
    """Run one seeded trial.

    Each global step gives every agent, in id order, one turn: meet the
    nearest node in range, look for a qualifying virtual hull and update,
    then move.  Anchors (if mobile) move after all agents.
    """
    cfg.validate()
    n, m = cfg.n_agents, cfg.n_anchors
    agents, anchor_poses, anchor_rngs, pos = _init_world(cfg)
    weights = cfg.weights()
    eps = cfg.eps if cfg.m2 else 0.0
    r2 = cfg.radius * cfg.radius
    K = cfg.max_steps

    truths = np.empty((K + 1, n, 2))
    ests = np.empty((K + 1, n, 2))
    anchors = np.empty((K + 1, m, 2))
    errors = np.empty(K + 1)
    events: list[UpdateEvent] = []

    def snapshot(k):
        truths[k] = pos[:n]
        ests[k] = [a.estimate for a in agents]
        anchors[k] = pos[n:]
        errors[k] = error_norm(ests[k], truths[k], cfg.region)

    snapshot(0)
    below = 1 if errors[0] < cfg.tolerance else 0
    last = 0
    for k in range(K):
        for i, ag in enumerate(agents):
            px, py = ag.pose.x, ag.pose.y
            d2 = (pos[:, 0] - px) ** 2 + (pos[:, 1] - py) ** 2
            d2[i] = np.inf
            j = int(np.argmin(d2))
            scan = 0.0
            if d2[j] <= r2:
                true_d = math.sqrt(d2[j])
                bearing = math.atan2(pos[j, 1] - py, pos[j, 0] - px) - ag.pose.heading
                scan = bearing % (2 * math.pi)
                if j < n:
                    other = agents[j]
                    ag.on_contact(
                        j, noisy_range(true_d, cfg.noise, ag.rng), other.estimate, k,
                        bearing, False, other.anchor_touched,
                    )
                else:
                    ag.on_contact(j, noisy_range(true_d, cfg.noise, ag.rng), pos[j], k, bearing, True, True)
            ts = ag.find_triangulation(weights, eps, k, m3=cfg.m3, min_quality=cfg.min_hull_quality)
            if ts is not None:
                events.append(ag.apply_update(ts, k))
            cmd = draw_motion(ag.rng, cfg.d_max, scan)
            new_pose, cmd = apply_motion(ag.pose, cmd, cfg.region, ag.rng)
            true_delta = (new_pose.x - px, new_pose.y - py)
            ag.pose = new_pose
            ag.on_move(cmd, noisy_motion(true_delta, cfg.noise, ag.rng))
            pos[i, 0], pos[i, 1] = new_pose.x, new_pose.y
        if cfg.mobile_anchors:
            for a, rng in enumerate(anchor_rngs):
                p, _ = apply_motion(anchor_poses[a], draw_motion(rng, cfg.d_max), cfg.region, rng)
                anchor_poses[a] = p
                pos[n + a, 0], pos[n + a, 1] = p.x, p.y
        snapshot(k + 1)
        last = k + 1
        below = below + 1 if errors[k + 1] < cfg.tolerance else 0
        if cfg.early_stop and below >= STABLE_STEPS:
            break

    trace = Trace(truths[: last + 1], ests[: last + 1], errors[: last + 1], anchors[: last + 1], events)
    return Trial(cfg, trace, summarize(cfg, trace))


def summarize(cfg: SimConfig, trace: Trace) -> TrialSummary:
    hits = np.flatnonzero(trace.errors < cfg.tolerance)
    counts = [0] * cfg.n_agents
    anchor_updates = 0
    for ev in trace.events:
        counts[ev.agent] += 1
        anchor_updates += any(ev.is_anchor)
    report = ltv.decompose_slices(ltv.event_stream(trace.events, cfg.n_agents, cfg.n_anchors))
    return TrialSummary(
        seed=cfg.seed,
        initial_error=float(trace.errors[0]),
        final_error=float(trace.errors[-1]),
        steps=trace.steps,
        first_below=int(hits[0]) if len(hits) else None,
        update_counts=counts,
        anchor_updates=anchor_updates,
        slices=report.stats(),
    )


@dataclass
class MonteCarloResult:
    summaries: list[TrialSummary]
    curves: np.ndarray  # (trials, steps + 1), early-stopped runs held at their last value
    aggregate: dict
    trials: list[Trial] = field(default_factory=list)


def run_monte_carlo(cfg: SimConfig, trials: int | None = None, keep: bool = False, on_trial=None) -> MonteCarloResult:
    """Seeds ``cfg.seed + t`` for ``t < trials``.

    Full traces are kept only with ``keep``; ``on_trial(t, trial)`` sees
    each one as it finishes.
    """
    trials = cfg.trials if trials is None else trials
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    runs, summaries, errs = [], [], []
    for t in range(trials):
        trial = run_trial(replace(cfg, seed=cfg.seed + t, trials=1))
        if on_trial is not None:
            on_trial(t, trial)
        summaries.append(trial.summary)
        errs.append(trial.trace.errors)
        if keep:
            runs.append(trial)
    curves = error_curves(errs)
    return MonteCarloResult(summaries, curves, aggregate(summaries, curves), runs)


def error_curves(errors: list[np.ndarray]) -> np.ndarray:
    length = max(len(e) for e in errors)
    out = np.empty((len(errors), length))
    for t, e in enumerate(errors):
        out[t, : len(e)] = e
        out[t, len(e):] = e[-1]
    return out


def aggregate(summaries: list[TrialSummary], curves: np.ndarray) -> dict:
    finals = np.array([s.final_error for s in summaries])
    return {
        "trials": len(summaries),
        "seeds": [s.seed for s in summaries],
        "final_error_mean": float(finals.mean()),
        "final_error_median": float(np.median(finals)),
        "final_error_q10": float(np.quantile(finals, 0.1)),
        "final_error_q90": float(np.quantile(finals, 0.9)),
        "converged": int(sum(s.first_below is not None for s in summaries)),
        "median_curve": np.median(curves, axis=0).tolist(),
    }


def tail_median(errors, fraction: float = 0.2) -> float:
    """Median error over the last ``fraction`` of the steps."""
    e = np.asarray(errors, dtype=float)
    start = int(math.floor((1.0 - fraction) * (len(e) - 1)))
    return float(np.median(e[start:]))


_BASE = dict(region=Region(-5.0, 15.0, -5.0, 15.0), radius=2.0, d_max=5.0, self_weight=0.2, anchor_min=0.1)
_NOISY = NoiseConfig(motion_noise_frac=0.01, range_noise_frac=0.10)

PRESETS = {
    "fig7_n3": dict(n_agents=3, n_anchors=1, max_steps=5000),
    "fig8_n10": dict(n_agents=10, n_anchors=1, max_steps=20000),
    "fig8_n100": dict(n_agents=100, n_anchors=1, max_steps=2000),
    "fig9_noanchor": dict(n_agents=4, n_anchors=0, max_steps=5000),
    "fig11_noise": dict(n_agents=10, n_anchors=1, noise=_NOISY, m1=True, m2=True, m3=True, max_steps=20000),
    "fig12_mc": dict(n_agents=10, n_anchors=1, noise=_NOISY, m1=True, m2=True, m3=True, max_steps=20000, trials=20),
}


def preset(name: str) -> SimConfig:
    try:
        extra = PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return SimConfig(**{**_BASE, **extra})
