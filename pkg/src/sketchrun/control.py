"""Control parameters and the safety formulas that constrain them.

Defaults mirror the runtime loop's standard configuration:
segment cap 0.5 m, corner threshold 30 deg (5 deg hysteresis), step
0.05 m, obstacle horizon 0.30 m, under-clearance threshold 1.00 m.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import NonPositiveBrake


def stopping_distance(v: float, a_brake: float, t_latency: float, delta_sensor: float) -> float:
    """Conservative stopping distance: braking + latency travel + sensor slack.

    d = v^2 / (2 a) + v * t_latency + delta_sensor
    """
    if a_brake <= 0:
        raise NonPositiveBrake(f"a_brake must be positive, got {a_brake}")
    return v * v / (2.0 * a_brake) + v * t_latency + delta_sensor


def required_clearance(h_tool: float, epsilon: float) -> float:
    """Minimum under-obstacle clearance for a tool envelope plus margin."""
    if h_tool < 0 or epsilon < 0:
        raise ValueError("h_tool and epsilon must be non-negative")
    return h_tool + epsilon


@dataclass(frozen=True)
class PlatformProfile:
    """Embodiment facts the command translator needs."""

    footprint_radius_m: float = 0.15
    tool_width_m: float = 0.25
    tool_height_m: float = 0.85

    def __post_init__(self):
        if self.footprint_radius_m <= 0 or self.tool_width_m <= 0:
            raise ValueError("platform footprint and tool width must be positive")


@dataclass(frozen=True)
class ControlParams:
    """Full parameter set for segmentation, policy banding, and execution."""

    l_max_m: float = 0.5
    theta_turn_deg: float = 30.0
    hysteresis_deg: float = 5.0
    d_step_m: float = 0.05
    d_safety_m: float = 0.30
    h_clearance_m: float = 1.00
    kappa: float = 0.08
    merge_travel_m: float = 0.20
    v_mps: float = 0.30
    a_brake_mps2: float = 0.60
    t_latency_s: float = 0.10
    delta_sensor_m: float = 0.10
    lane_spacing_m: float = 0.25
    turn_set: tuple[float, ...] = (45.0, 90.0)

    def __post_init__(self):
        positive = [
            ("l_max_m", self.l_max_m),
            ("theta_turn_deg", self.theta_turn_deg),
            ("hysteresis_deg", self.hysteresis_deg),
            ("d_step_m", self.d_step_m),
            ("d_safety_m", self.d_safety_m),
            ("h_clearance_m", self.h_clearance_m),
            ("kappa", self.kappa),
            ("merge_travel_m", self.merge_travel_m),
            ("v_mps", self.v_mps),
            ("a_brake_mps2", self.a_brake_mps2),
            ("t_latency_s", self.t_latency_s),
            ("delta_sensor_m", self.delta_sensor_m),
            ("lane_spacing_m", self.lane_spacing_m),
        ]
        for name, value in positive:
            if value <= 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if not self.turn_set:
            raise ValueError("turn_set must be nonempty")
        ordered = tuple(sorted(float(t) for t in self.turn_set))
        if any(t <= 0 for t in ordered):
            raise ValueError("turn magnitudes must be positive")
        object.__setattr__(self, "turn_set", ordered)
        d_stop = stopping_distance(self.v_mps, self.a_brake_mps2, self.t_latency_s, self.delta_sensor_m)
        if self.d_safety_m < d_stop - 1e-12:
            raise ValueError(
                f"d_safety_m={self.d_safety_m} is below the stopping distance {d_stop:.4f}"
            )

    def with_turn_set(self, turn_set) -> "ControlParams":
        return replace(self, turn_set=tuple(turn_set))

    @property
    def min_turn_deg(self) -> float:
        return self.turn_set[0]


DEFAULT_PARAMS = ControlParams()
DEFAULT_PLATFORM = PlatformProfile()
