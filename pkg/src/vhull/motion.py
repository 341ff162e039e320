"""Random-waypoint style motion and the two measurement noise models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
MAX_HEADING_DRAWS = 1000


@dataclass(frozen=True)
class Region:
    x_min: float = -5.0
    x_max: float = 15.0
    y_min: float = -5.0
    y_max: float = 15.0

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"empty region {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        size = None if n is None else (n,)
        x = rng.uniform(self.x_min, self.x_max, size)
        y = rng.uniform(self.y_min, self.y_max, size)
        return np.stack([x, y], axis=-1)


@dataclass(frozen=True)
class MotionCommand:
    step_length: float
    turn_angle: float
    scan_angle: float = 0.0

    @property
    def total_turn(self) -> float:
        return self.scan_angle + self.turn_angle


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float


@dataclass(frozen=True)
class NoiseConfig:
    motion_noise_frac: float = 0.0
    range_noise_frac: float = 0.0
    distribution: str = "uniform"  # or "gaussian": frac is then one sigma

    def __post_init__(self):
        if self.motion_noise_frac < 0 or self.range_noise_frac < 0:
            raise ValueError("noise fractions must be >= 0")
        if self.distribution not in ("uniform", "gaussian"):
            raise ValueError(f"unknown noise distribution {self.distribution!r}")

    @property
    def noiseless(self) -> bool:
        return self.motion_noise_frac == 0 and self.range_noise_frac == 0


def draw_motion(rng: np.random.Generator, d_max: float, scan_angle: float = 0.0) -> MotionCommand:
    """Step length ~ U[0, d_max], turn ~ U[0, 2 pi)."""
    d = rng.uniform(0.0, d_max) if d_max > 0 else 0.0
    return MotionCommand(d, rng.uniform(0.0, TWO_PI), scan_angle)


def apply_motion(
    pose: Pose, cmd: MotionCommand, region: Region, rng: np.random.Generator | None = None
) -> tuple[Pose, MotionCommand]:
    """Turn by scan + turn angle, then advance.

    If the endpoint would leave ``region`` the turn angle is redrawn from
    ``rng`` until it does not.  Returns the new pose and the command that
    was actually executed.
    """
    for _ in range(MAX_HEADING_DRAWS):
        heading = (pose.heading + cmd.total_turn) % TWO_PI
        x = pose.x + cmd.step_length * math.cos(heading)
        y = pose.y + cmd.step_length * math.sin(heading)
        if region.contains(x, y):
            return Pose(x, y, heading), cmd
        if rng is None:
            break
        cmd = MotionCommand(cmd.step_length, rng.uniform(0.0, TWO_PI), cmd.scan_angle)
    # region too small for this step: turn in place
    cmd = MotionCommand(0.0, cmd.turn_angle, cmd.scan_angle)
    return Pose(pose.x, pose.y, (pose.heading + cmd.total_turn) % TWO_PI), cmd


def _unit_noise(rng: np.random.Generator, cfg: NoiseConfig, size=None):
    if cfg.distribution == "gaussian":
        return rng.standard_normal(size)
    return rng.uniform(-1.0, 1.0, size)


def noisy_motion(true_delta, cfg: NoiseConfig, rng: np.random.Generator) -> np.ndarray:
    """Accelerometer reading: each component perturbed by up to
    ``motion_noise_frac`` times the true step magnitude."""
    delta = np.asarray(true_delta, dtype=float)
    f = cfg.motion_noise_frac
    if f == 0:
        return delta.copy()
    mag = math.hypot(delta[0], delta[1])
    return delta + f * mag * _unit_noise(rng, cfg, 2)


def noisy_range(true_d: float, cfg: NoiseConfig, rng: np.random.Generator) -> float:
    """Range reading with multiplicative error of at most ``range_noise_frac``."""
    f = cfg.range_noise_frac
    if f == 0:
        return float(true_d)
    return max(0.0, true_d * (1.0 + f * float(_unit_noise(rng, cfg))))
