"""2D household world model: occupancy grid, SE(2) kinematics, noise streams.

Random streams are counter-based (numpy Philox) keyed through
``numpy.random.SeedSequence(entropy=seed, spawn_key=(trial_index,))`` so a
trial replays bit-identically on any platform given (seed, trial_index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import StartPoseInvalid

_SEED_MASK = (1 << 64) - 1


def derive_stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator (Philox4x64) derived from seed and a key path."""
    ss = np.random.SeedSequence(entropy=int(seed) & _SEED_MASK,
                                spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def trial_stream(seed: int, trial_index: int = 0) -> np.random.Generator:
    """Per-trial stream; replays bit-identically for (seed, trial_index)."""
    return derive_stream(seed, trial_index)


def wrap_deg(theta: float) -> float:
    """Normalize an angle in degrees to (-180, 180]."""
    t = math.fmod(theta, 360.0)
    if t <= -180.0:
        t += 360.0
    elif t > 180.0:
        t -= 360.0
    return t


@dataclass(frozen=True)
class Pose2:
    """Planar pose; theta in degrees, always normalized to (-180, 180]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_deg(self.theta))

    def heading_vec(self) -> tuple[float, float]:
        r = math.radians(self.theta)
        return math.cos(r), math.sin(r)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


@dataclass(frozen=True)
class Command:
    """Low-level command: step(distance), rotate(degrees), halt, under_maneuver."""

    kind: str  # "step" | "rotate" | "halt" | "under_maneuver"
    distance_m: float = 0.0
    degrees: float = 0.0
    retract: bool = False

    @staticmethod
    def step(distance_m: float) -> "Command":
        return Command("step", distance_m=distance_m)

    @staticmethod
    def rotate(degrees: float) -> "Command":
        return Command("rotate", degrees=degrees)

    @staticmethod
    def halt() -> "Command":
        return Command("halt")

    @staticmethod
    def under_maneuver(advance_m: float, retract: bool = False) -> "Command":
        return Command("under_maneuver", distance_m=advance_m, retract=retract)


@dataclass(frozen=True)
class NoiseModel:
    """Per-step actuation noise (all standard deviations, >= 0)."""

    sigma_long_m: float = 0.0
    sigma_lat_m: float = 0.0
    sigma_turn_deg: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma_long_m, self.sigma_lat_m, self.sigma_turn_deg) < 0:
            raise ValueError("noise sigmas must be non-negative")

    @staticmethod
    def zero(seed: int = 0) -> "NoiseModel":
        return NoiseModel(0.0, 0.0, 0.0, seed)

    @staticmethod
    def calibrated(seed: int = 0) -> "NoiseModel":
        """Default batch-evaluation noise: 5 mm slip per step, 1 deg per turn."""
        return NoiseModel(0.005, 0.005, 1.0, seed)

    @property
    def is_zero(self) -> bool:
        return self.sigma_long_m == 0.0 and self.sigma_lat_m == 0.0 and self.sigma_turn_deg == 0.0


def apply_command(pose: Pose2, cmd: Command, noise: NoiseModel, rng: np.random.Generator) -> Pose2:
    """Advance the kinematic model by one command.

    step(d):  x += (d+e_long)*cos(theta) - e_lat*sin(theta)
              y += (d+e_long)*sin(theta) + e_lat*cos(theta)
    rotate(a): theta += a + e_turn
    halt: identity. under_maneuver: same displacement model as step.

    Noise draws always consume the stream in a fixed order (long, lat for
    translations; turn for rotations); with sigma 0 the draw contributes 0.0.
    """
    if cmd.kind in ("step", "under_maneuver"):
        e_long = noise.sigma_long_m * rng.standard_normal()
        e_lat = noise.sigma_lat_m * rng.standard_normal()
        c, s = pose.heading_vec()
        d = cmd.distance_m + e_long
        return Pose2(pose.x + d * c - e_lat * s, pose.y + d * s + e_lat * c, pose.theta)
    if cmd.kind == "rotate":
        e_turn = noise.sigma_turn_deg * rng.standard_normal()
        return Pose2(pose.x, pose.y, pose.theta + cmd.degrees + e_turn)
    if cmd.kind == "halt":
        return pose
    raise ValueError(f"unknown command kind {cmd.kind!r}")


class SceneGrid:
    """Occupancy grid with an optional under-clearance layer.

    occupancy[iy, ix] is True for cells a ground robot cannot enter at floor
    level unless the cell carries a clearance annotation tall enough for the
    platform. clearance maps (ix, iy) -> free height in meters and may only
    annotate occupied cells. Immutable by convention after construction.
    """

    def __init__(
        self,
        resolution_m: float,
        occupancy: np.ndarray,
        clearance: dict[tuple[int, int], float] | None = None,
        scale=None,
        start_pose: Pose2 = Pose2(0.0, 0.0, 0.0),
        scene_image_ref: str | None = None,
        scene_id: str | None = None,
    ):
        if not (0.01 <= resolution_m <= 0.25):
            raise ValueError(f"resolution_m must be in [0.01, 0.25], got {resolution_m}")
        occ = np.asarray(occupancy, dtype=bool)
        if occ.ndim != 2:
            raise ValueError("occupancy must be a 2D array")
        self.resolution_m = float(resolution_m)
        self.occupancy = occ
        self.occupancy.setflags(write=False)
        self.clearance = dict(clearance or {})
        for (ix, iy), h in self.clearance.items():
            if not self.in_bounds_cell(ix, iy):
                raise ValueError(f"clearance cell ({ix},{iy}) outside grid")
            if not occ[iy, ix]:
                raise ValueError(f"clearance annotation on free cell ({ix},{iy})")
            if h <= 0:
                raise ValueError("clearance heights must be positive")
        self.scale = scale
        self.start_pose = start_pose
        self.scene_image_ref = scene_image_ref
        self.scene_id = scene_id

    # --- dimensions ---------------------------------------------------------

    @property
    def ny(self) -> int:
        return self.occupancy.shape[0]

    @property
    def nx(self) -> int:
        return self.occupancy.shape[1]

    @property
    def width_m(self) -> float:
        return self.nx * self.resolution_m

    @property
    def height_m(self) -> float:
        return self.ny * self.resolution_m

    # --- lookups ---------------------------------------------------------------

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(x / self.resolution_m)), int(math.floor(y / self.resolution_m))

    def in_bounds_cell(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.nx and 0 <= iy < self.ny

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.width_m and 0.0 <= y < self.height_m

    def occupied_cell(self, ix: int, iy: int) -> bool:
        """Out-of-bounds counts as occupied."""
        if not self.in_bounds_cell(ix, iy):
            return True
        return bool(self.occupancy[iy, ix])

    def clearance_at(self, ix: int, iy: int) -> float | None:
        return self.clearance.get((ix, iy))

    def traversable_under(self, ix: int, iy: int, h_clearance: float) -> bool:
        h = self.clearance.get((ix, iy))
        return h is not None and h >= h_clearance

    # --- footprint -----------------------------------------------------------

    def footprint_cells(self, x: float, y: float, radius_m: float) -> list[tuple[int, int]]:
        """Cells whose center lies within radius of (x, y), row-major order.

        The cell containing the center is always included. Cells outside the
        grid are reported as (-1, -1) markers so callers can treat the border
        as occupied.
        """
        offsets = _disc_offsets(radius_m, self.resolution_m)
        cix, ciy = self.cell_of(x, y)
        out: list[tuple[int, int]] = []
        half = self.resolution_m / 2.0
        for dx, dy in offsets:
            ix, iy = cix + dx, ciy + dy
            cx, cy = (ix + 0.5) * self.resolution_m, (iy + 0.5) * self.resolution_m
            if (cx - x) ** 2 + (cy - y) ** 2 <= (radius_m + 1e-12) ** 2 or (dx == 0 and dy == 0):
                if self.in_bounds_cell(ix, iy):
                    out.append((ix, iy))
                else:
                    out.append((-1, -1))
        return out

    def footprint_blocked(self, x: float, y: float, radius_m: float, h_clearance: float | None = None) -> bool:
        """True if the disc footprint overlaps a non-traversable occupied cell.

        With h_clearance given, occupied cells annotated with at least that
        much under-clearance do not block (the robot may pass beneath).
        """
        for ix, iy in self.footprint_cells(x, y, radius_m):
            if ix < 0:
                return True
            if self.occupancy[iy, ix]:
                if h_clearance is not None and self.traversable_under(ix, iy, h_clearance):
                    continue
                return True
        return False

    def validate_start_pose(self, pose: Pose2, footprint_radius_m: float) -> None:
        if not self.in_bounds(pose.x, pose.y):
            raise StartPoseInvalid(f"start pose ({pose.x}, {pose.y}) outside scene bounds")
        if self.footprint_blocked(pose.x, pose.y, footprint_radius_m):
            raise StartPoseInvalid("start pose footprint overlaps occupied space")

    # --- construction helpers ---------------------------------------------------

    @staticmethod
    def empty(width_m: float, height_m: float, resolution_m: float = 0.05, **kwargs) -> "SceneGrid":
        nx = int(round(width_m / resolution_m))
        ny = int(round(height_m / resolution_m))
        return SceneGrid(resolution_m, np.zeros((ny, nx), dtype=bool), **kwargs)

    def with_rect(self, x0: float, y0: float, x1: float, y1: float, clearance_m: float | None = None) -> "SceneGrid":
        """New grid with an axis-aligned rectangle of occupied cells added."""
        occ = self.occupancy.copy()
        ix0 = max(0, int(math.floor(x0 / self.resolution_m)))
        iy0 = max(0, int(math.floor(y0 / self.resolution_m)))
        ix1 = min(self.nx, int(math.ceil(x1 / self.resolution_m)))
        iy1 = min(self.ny, int(math.ceil(y1 / self.resolution_m)))
        occ[iy0:iy1, ix0:ix1] = True
        clear = dict(self.clearance)
        if clearance_m is not None:
            for iy in range(iy0, iy1):
                for ix in range(ix0, ix1):
                    clear[(ix, iy)] = clearance_m
        return SceneGrid(
            self.resolution_m, occ, clear, self.scale, self.start_pose,
            self.scene_image_ref, self.scene_id,
        )

    def connected_component(self, ix: int, iy: int) -> list[tuple[int, int]]:
        """4-connected occupied component containing (ix, iy), sorted."""
        if not self.occupied_cell(ix, iy) or not self.in_bounds_cell(ix, iy):
            return []
        seen = {(ix, iy)}
        stack = [(ix, iy)]
        while stack:
            cx, cy = stack.pop()
            for nx_, ny_ in ((cx + 1, cy), (cx - 1, cy), (cx, cy + 1), (cx, cy - 1)):
                if (nx_, ny_) not in seen and self.in_bounds_cell(nx_, ny_) and self.occupancy[ny_, nx_]:
                    seen.add((nx_, ny_))
                    stack.append((nx_, ny_))
        return sorted(seen)


_DISC_CACHE: dict[tuple[float, float], list[tuple[int, int]]] = {}


def _disc_offsets(radius_m: float, resolution_m: float) -> list[tuple[int, int]]:
    key = (round(radius_m, 9), round(resolution_m, 9))
    got = _DISC_CACHE.get(key)
    if got is None:
        n = int(math.ceil(radius_m / resolution_m)) + 1
        got = [(dx, dy) for dy in range(-n, n + 1) for dx in range(-n, n + 1)]
        _DISC_CACHE[key] = got
    return got
