"""Random-walk-with-reflection mobility on a circular cell.

Stations move in straight legs at a constant speed, pause for a fixed
dwell, then redraw speed, direction, and leg duration. A station crossing
the cell boundary is reflected like a light ray off a mirror: the
velocity mirrors about the boundary tangent at the crossing point and the
remaining distance is travelled inside, iterated if the reflected path
exits again within the same step. Straight-leg motion with mirror
reflection preserves the uniform distribution on the disk, so a
uniformly deployed population stays uniform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeds import substream

__all__ = [
    "MobilityConfig",
    "StationState",
    "MobileEnsemble",
    "init_positions",
    "step",
    "write_trace",
]

_EPS = 1e-12


@dataclass(frozen=True)
class MobilityConfig:
    v_min: float = 1.0
    v_max: float = 2.0
    t_min: float = 2.0
    t_max: float = 5.0
    dwell: float = 1.0
    cell_radius: float = 100.0

    def __post_init__(self) -> None:
        if not 0.0 < self.v_min <= self.v_max:
            raise ValueError("need 0 < v_min <= v_max")
        if not 0.0 < self.t_min <= self.t_max:
            raise ValueError("need 0 < t_min <= t_max")
        if self.dwell < 0.0:
            raise ValueError("dwell must be nonnegative")
        if self.cell_radius <= 0.0:
            raise ValueError("cell_radius must be positive")


@dataclass
class StationState:
    position: np.ndarray
    velocity: np.ndarray
    leg_remaining: float
    dwelling: bool = False


def _rng_of(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else substream(seed, "mobility")


def init_positions(n: int, cell_radius: float, seed=0) -> np.ndarray:
    """n i.i.d. points uniform on the disk of the given radius."""
    if n < 1:
        raise ValueError("need at least one station")
    rng = _rng_of(seed)
    radii = cell_radius * np.sqrt(rng.random(n))
    theta = rng.random(n) * 2 * np.pi
    return np.column_stack([radii * np.cos(theta), radii * np.sin(theta)])


def _draw_legs(rng: np.random.Generator, cfg: MobilityConfig, n: int):
    speed = rng.uniform(cfg.v_min, cfg.v_max, n)
    angle = rng.uniform(0.0, 2 * np.pi, n)
    duration = rng.uniform(cfg.t_min, cfg.t_max, n)
    velocity = np.column_stack([speed * np.cos(angle), speed * np.sin(angle)])
    return velocity, duration


def _advance_with_reflection(
    pos: np.ndarray, vel: np.ndarray, tau: np.ndarray, radius: float
) -> None:
    """Move each row for its own time budget, reflecting at the circle.

    Mutates pos and vel in place. The exit time solves
    |p + v t| = radius; at the crossing point the velocity mirrors about
    the tangent (v -> v - 2 (v.n) n with n the outward normal).
    """
    tau = np.array(tau, dtype=float, copy=True)
    for _ in range(256):
        speed2 = np.einsum("ij,ij->i", vel, vel)
        active = (tau > _EPS) & (speed2 > 0.0)
        if not active.any():
            break
        p, v, t = pos[active], vel[active], tau[active]
        a = speed2[active]
        b = np.einsum("ij,ij->i", p, v)
        c = np.einsum("ij,ij->i", p, p) - radius * radius
        disc = np.sqrt(np.maximum(b * b - a * c, 0.0))
        t_hit = (-b + disc) / a
        hit = t_hit < t
        p_new, v_new = p.copy(), v.copy()
        p_new[~hit] += v[~hit] * t[~hit, None]
        t_left = np.zeros_like(t)
        if hit.any():
            q = p[hit] + v[hit] * t_hit[hit, None]
            q *= radius / np.linalg.norm(q, axis=1, keepdims=True)
            normal = q / radius
            vn = np.einsum("ij,ij->i", v[hit], normal)
            v_new[hit] = v[hit] - 2.0 * vn[:, None] * normal
            p_new[hit] = q
            t_left[hit] = t[hit] - t_hit[hit]
        pos[active], vel[active] = p_new, v_new
        tau[active] = t_left
    # Float-noise guard: pin any stray point back onto the boundary.
    norms = np.linalg.norm(pos, axis=1)
    outside = norms > radius
    if outside.any():
        pos[outside] *= (radius / norms[outside])[:, None]


class MobileEnsemble:
    """All stations of a cell walking together, vectorized.

    Deterministic for a given seed; stations are mutually independent.
    """

    def __init__(self, n: int, cfg: MobilityConfig | None = None, seed=0, positions=None):
        self.cfg = cfg or MobilityConfig()
        self._rng = _rng_of(seed)
        if positions is None:
            positions = init_positions(n, self.cfg.cell_radius, self._rng)
        self.pos = np.array(positions, dtype=float).reshape(n, 2)
        self.vel, self.remaining = _draw_legs(self._rng, self.cfg, n)
        self.dwelling = np.zeros(n, dtype=bool)

    @property
    def positions(self) -> np.ndarray:
        return self.pos.copy()

    def advance(self, dt: float) -> None:
        """Run every station forward by dt seconds of walk/dwell cycles."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        cfg = self.cfg
        budget = np.full(self.pos.shape[0], float(dt))
        for _ in range(10_000):
            live = budget > _EPS
            if not live.any():
                return
            use = np.where(live, np.minimum(budget, self.remaining), 0.0)
            moving = live & ~self.dwelling
            if moving.any():
                p, v = self.pos[moving].copy(), self.vel[moving].copy()
                _advance_with_reflection(p, v, use[moving], cfg.cell_radius)
                self.pos[moving] = p
                self.vel[moving] = v
            budget = budget - use
            self.remaining = self.remaining - use
            expired = live & (self.remaining <= _EPS)
            to_dwell = expired & ~self.dwelling
            if cfg.dwell > 0.0:
                self.dwelling[to_dwell] = True
                self.remaining[to_dwell] = cfg.dwell
                to_redraw = expired & ~to_dwell
            else:
                to_redraw = expired
            if to_redraw.any():
                k = int(to_redraw.sum())
                vel, dur = _draw_legs(self._rng, cfg, k)
                self.vel[to_redraw] = vel
                self.remaining[to_redraw] = dur
                self.dwelling[to_redraw] = False
        raise RuntimeError("advance failed to consume its time budget")


def step(state: StationState, dt: float, cfg: MobilityConfig, rng) -> StationState:
    """One station's walk over dt seconds: travel, reflect, dwell, redraw."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    rng = _rng_of(rng)
    pos = np.array(state.position, dtype=float).reshape(1, 2)
    vel = np.array(state.velocity, dtype=float).reshape(1, 2)
    remaining = float(state.leg_remaining)
    dwelling = bool(state.dwelling)
    budget = float(dt)
    while budget > _EPS:
        use = min(budget, remaining)
        if not dwelling:
            _advance_with_reflection(pos, vel, np.array([use]), cfg.cell_radius)
        budget -= use
        remaining -= use
        if remaining <= _EPS:
            if not dwelling and cfg.dwell > 0.0:
                dwelling = True
                remaining = cfg.dwell
            else:
                new_vel, dur = _draw_legs(rng, cfg, 1)
                vel = new_vel
                remaining = float(dur[0])
                dwelling = False
    return StationState(
        position=pos[0], velocity=vel[0], leg_remaining=remaining, dwelling=dwelling
    )


def write_trace(path, ensemble: MobileEnsemble, duration: float, dt: float = 1.0) -> int:
    """Step the ensemble and record every station's (t, x, y); returns rows."""
    steps = int(round(duration / dt))
    rows = 0
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "station", "x", "y"])
        for k in range(steps + 1):
            if k:
                ensemble.advance(dt)
            t = k * dt
            for i, (x, y) in enumerate(ensemble.pos):
                writer.writerow([f"{t:.3f}", i, f"{x:.3f}", f"{y:.3f}"])
                rows += 1
    return rows
