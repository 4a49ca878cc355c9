"""Seeded random scenarios and the JSON file formats for scenarios and trajectories.

Random numbers come from the Philox4x64-10 counter-based generator keyed by
the scenario seed. Uniform doubles are formed from the top 53 bits of each
raw 64-bit output, so a seed maps to the same scenario on every platform and
numpy version.

Scenario file (UTF-8 JSON, lengths in meters)::

    {"version": 1, "model": "point-mass-2d" | "quadrotor-3d", "seed": int,
     "bounds": {"min": [...], "max": [...]}, "epsilon": float,
     "obstacles": [{"center": [x, y], "radius": r}, ...],
     "x_initial": [...], "x_final": [...]}

Obstacle centres are drawn uniformly over the x-y footprint of ``bounds``;
in 3-D an obstacle is a cylinder spanning the full height.

Trajectory file::

    {"version": 1, "model": ..., "n": N, "t_f": seconds,
     "states": [[...] x (N+1)], "inputs": [[...] x N]}

Floats are written with ``repr`` precision and round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .transcription import Obstacle, Trajectory

SCHEMA_VERSION = 1
MODEL_KINDS = ("point-mass-2d", "quadrotor-3d")
DEFAULT_RADIUS_RANGE = (0.1, 0.2)
DEFAULT_EPSILON = 0.2
MAX_REDRAWS = 10_000


class ScenarioError(Exception):
    """Base class for scenario and trajectory file problems."""


class MalformedFileError(ScenarioError):
    pass


class SchemaVersionError(ScenarioError):
    pass


class InvariantError(ScenarioError):
    pass


class GenerationError(ScenarioError):
    """Raised when obstacles cannot be placed within the redraw budget."""


def default_bounds(model: str):
    if model == "point-mass-2d":
        return (0.0, 0.0), (10.0, 10.0)
    return (0.0, 0.0, 0.0), (10.0, 10.0, 10.0)


def default_boundary_states(model: str):
    if model == "point-mass-2d":
        return np.array([0.0, 0.0, 0.0, 0.0]), np.array([10.0, 10.0, 0.0, 0.0])
    hover = np.zeros(13)
    hover[3] = 1.0
    x0 = hover.copy()
    x0[0:3] = (0.0, 0.0, 5.0)
    xf = hover.copy()
    xf[0:3] = (10.0, 10.0, 5.0)
    return x0, xf


def normalize_model_kind(model: str) -> str:
    aliases = {"point-mass": "point-mass-2d", "quadrotor": "quadrotor-3d"}
    model = aliases.get(model, model)
    if model not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model!r}")
    return model


@dataclass(eq=False)
class Scenario:
    model: str
    bounds_min: tuple
    bounds_max: tuple
    obstacles: list
    x_initial: np.ndarray
    x_final: np.ndarray
    seed: int = 0
    epsilon: float = DEFAULT_EPSILON
    version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.model = normalize_model_kind(self.model)
        self.bounds_min = tuple(float(v) for v in self.bounds_min)
        self.bounds_max = tuple(float(v) for v in self.bounds_max)
        self.x_initial = np.asarray(self.x_initial, dtype=float)
        self.x_final = np.asarray(self.x_final, dtype=float)
        self.obstacles = list(self.obstacles)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return scenario_to_dict(self) == scenario_to_dict(other)

    @property
    def n_obs(self) -> int:
        return len(self.obstacles)

    def validate(self) -> None:
        """Raise :class:`InvariantError` if any scenario invariant fails."""
        dim = 2 if self.model == "point-mass-2d" else 3
        nx = 4 if self.model == "point-mass-2d" else 13
        lo = np.array(self.bounds_min)
        hi = np.array(self.bounds_max)
        if lo.shape != (dim,) or hi.shape != (dim,) or np.any(hi <= lo):
            raise InvariantError(f"bounds must be {dim}-D with max > min")
        for name, x in (("x_initial", self.x_initial), ("x_final", self.x_final)):
            if x.shape != (nx,):
                raise InvariantError(f"{name} must have {nx} components for {self.model}")
            if not np.all(np.isfinite(x)):
                raise InvariantError(f"{name} must be finite")
            p = x[:dim]
            if np.any(p < lo) or np.any(p > hi):
                raise InvariantError(f"{name} position lies outside the environment bounds")
        if not self.obstacles:
            return
        C = np.array([o.center for o in self.obstacles], dtype=float)
        R = np.array([o.radius for o in self.obstacles], dtype=float)
        outside = np.flatnonzero(np.any((C < lo[:2]) | (C > hi[:2]), axis=1))
        if outside.size:
            raise InvariantError(f"obstacle {outside[0]} centre lies outside the environment bounds")
        for name, x in (("x_initial", self.x_initial), ("x_final", self.x_final)):
            dist = np.hypot(C[:, 0] - x[0], C[:, 1] - x[1])
            bad = np.flatnonzero(dist <= R + self.epsilon)
            if bad.size:
                j = int(bad[0])
                raise InvariantError(
                    f"obstacle {j} (r={R[j]:.4f}) covers {name}: distance {dist[j]:.4f} "
                    f"<= r + epsilon"
                )

    def digest(self) -> str:
        """Short content hash, stable across runs."""
        return hashlib.sha256(scenario_to_json(self).encode("utf-8")).hexdigest()[:16]


# --------------------------------------------------------------------------
# random generation


class _UniformStream:
    """Uniform doubles on [0, 1) from raw Philox4x64-10 output."""

    def __init__(self, seed: int):
        self._bits = np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF)

    def uniform(self, lo: float, hi: float) -> float:
        raw = int(self._bits.random_raw())
        return lo + (hi - lo) * ((raw >> 11) * (1.0 / 9007199254740992.0))


def generate_scenario(
    seed: int,
    model: str = "point-mass-2d",
    n_obs: int = 0,
    bounds=None,
    radius_range=DEFAULT_RADIUS_RANGE,
    epsilon: float = DEFAULT_EPSILON,
    clearance_slack: float = 1e-3,
) -> Scenario:
    """Draw ``n_obs`` circular obstacles i.i.d. for a fixed start/goal pair.

    Centre coordinates and radius are drawn (x, y, r) per obstacle. A draw
    that sits within ``r + epsilon + clearance_slack`` of either boundary
    state is discarded and redrawn; overlapping obstacles are allowed.
    """
    model = normalize_model_kind(model)
    if n_obs < 0:
        raise ValueError("n_obs must be non-negative")
    lo, hi = default_bounds(model) if bounds is None else bounds
    lo = tuple(float(v) for v in lo)
    hi = tuple(float(v) for v in hi)
    r_lo, r_hi = (float(v) for v in radius_range)
    extent = min(hi[0] - lo[0], hi[1] - lo[1])
    if not (0 < r_lo <= r_hi < extent):
        raise ValueError("radius range must lie within (0, smallest footprint extent)")
    x0, xf = default_boundary_states(model)
    stream = _UniformStream(seed)
    ends = [(float(x[0]), float(x[1])) for x in (x0, xf)]
    obstacles = []
    redraws = 0
    while len(obstacles) < n_obs:
        cx = stream.uniform(lo[0], hi[0])
        cy = stream.uniform(lo[1], hi[1])
        r = stream.uniform(r_lo, r_hi)
        pad = r + epsilon + clearance_slack
        if any(math.hypot(ex - cx, ey - cy) <= pad for ex, ey in ends):
            redraws += 1
            if redraws > MAX_REDRAWS:
                raise GenerationError(
                    f"could not place {n_obs} obstacles clear of the boundary states "
                    f"within {MAX_REDRAWS} redraws"
                )
            continue
        obstacles.append(Obstacle((cx, cy), r))
    scenario = Scenario(
        model=model,
        bounds_min=lo,
        bounds_max=hi,
        obstacles=obstacles,
        x_initial=x0,
        x_final=xf,
        seed=int(seed),
        epsilon=float(epsilon),
    )
    scenario.validate()
    return scenario


# --------------------------------------------------------------------------
# serialization


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "version": s.version,
        "model": s.model,
        "seed": s.seed,
        "bounds": {"min": list(s.bounds_min), "max": list(s.bounds_max)},
        "epsilon": s.epsilon,
        "obstacles": [{"center": list(o.center), "radius": o.radius} for o in s.obstacles],
        "x_initial": s.x_initial.tolist(),
        "x_final": s.x_final.tolist(),
    }


def scenario_to_json(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


def scenario_from_dict(data) -> Scenario:
    if not isinstance(data, dict):
        raise MalformedFileError("scenario file must contain a JSON object")
    if "version" not in data:
        raise MalformedFileError("missing 'version' field")
    if data["version"] != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported scenario schema version {data['version']!r} (expected {SCHEMA_VERSION})"
        )
    try:
        obstacles = [Obstacle(tuple(o["center"]), float(o["radius"])) for o in data["obstacles"]]
        s = Scenario(
            model=data["model"],
            bounds_min=tuple(data["bounds"]["min"]),
            bounds_max=tuple(data["bounds"]["max"]),
            obstacles=obstacles,
            x_initial=np.array(data["x_initial"], dtype=float),
            x_final=np.array(data["x_final"], dtype=float),
            seed=int(data["seed"]),
            epsilon=float(data["epsilon"]),
        )
    except (KeyError, TypeError) as exc:
        raise MalformedFileError(f"malformed scenario: {exc!r}") from exc
    except ValueError as exc:
        raise InvariantError(str(exc)) from exc
    s.validate()
    return s


def _read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedFileError(f"{path}: not UTF-8 text") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: invalid JSON ({exc.msg})") from exc


def save_scenario(s: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(scenario_to_json(s), encoding="utf-8")
    return path


def load_scenario(path) -> Scenario:
    return scenario_from_dict(_read_json(path))


def trajectory_to_dict(t: Trajectory, model: str) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "model": normalize_model_kind(model),
        "n": t.n,
        "t_f": t.t_f,
        "states": t.states.tolist(),
        "inputs": t.inputs.tolist(),
    }


def save_trajectory(t: Trajectory, path, model: str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(trajectory_to_dict(t, model)) + "\n", encoding="utf-8")
    return path


def trajectory_from_dict(data):
    """Return ``(trajectory, model_kind)``."""
    if not isinstance(data, dict):
        raise MalformedFileError("trajectory file must contain a JSON object")
    if "version" not in data:
        raise MalformedFileError("missing 'version' field")
    if data["version"] != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported trajectory schema version {data['version']!r}")
    try:
        model = normalize_model_kind(data["model"])
        n = int(data["n"])
        states = np.array(data["states"], dtype=float)
        inputs = np.array(data["inputs"], dtype=float)
        t_f = float(data["t_f"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFileError(f"malformed trajectory: {exc!r}") from exc
    nx, nu = (4, 2) if model == "point-mass-2d" else (13, 4)
    if inputs.shape != (n, nu) or states.shape != (n + 1, nx):
        raise InvariantError(
            f"trajectory arrays do not match n={n}: states {states.shape}, inputs {inputs.shape}"
        )
    try:
        traj = Trajectory(states, inputs, t_f)
    except ValueError as exc:
        raise InvariantError(str(exc)) from exc
    return traj, model


def load_trajectory(path):
    """Load a trajectory file; returns ``(trajectory, model_kind)``."""
    return trajectory_from_dict(_read_json(path))
