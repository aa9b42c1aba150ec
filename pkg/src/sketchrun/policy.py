"""Macro-action selection rules for sketch segments.

Deterministic decision rules map per-segment geometry (plus a gated live
perception snapshot) to one macro-action token. Precedence: area segments,
then obstacle handling (only while the live gate is on), then heading-change
turns, then forward. Implementations are pluggable by name; "rules" is the
default and only built-in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .control import ControlParams, DEFAULT_PARAMS
from .errors import InconsistentInput

MACRO_TOKENS = (
    "forward",
    "turn_p45",
    "turn_n45",
    "turn_p90",
    "turn_n90",
    "check_under",
    "cover_area",
)


@dataclass(frozen=True)
class MacroAction:
    token: str

    def __post_init__(self):
        if self.token not in MACRO_TOKENS:
            raise ValueError(f"unknown macro token {self.token!r}")

    @property
    def is_turn(self) -> bool:
        return self.token.startswith("turn_")

    @property
    def turn_sign(self) -> int:
        if not self.is_turn:
            return 0
        return 1 if self.token[5] == "p" else -1

    @property
    def nominal_turn_deg(self) -> float:
        """Signed nominal rotation encoded by the token (0 for non-turns)."""
        if not self.is_turn:
            return 0.0
        return self.turn_sign * float(self.token[6:])


@dataclass(frozen=True)
class PerceptionSnapshot:
    """Decision-relevant slice of live perception, gated by `eta`.

    With eta=0 consumers must ignore every other field. lateral_sign is the
    side of the detected obstacle relative to the heading ray (+1 left,
    -1 right, 0 dead ahead) and feeds the forced-turn direction.
    """

    eta: int = 0
    obs_ahead: bool = False
    obstacle_distance_m: float | None = None
    h_est_m: float | None = None
    lateral_sign: int = 0

    def __post_init__(self):
        if self.eta not in (0, 1):
            raise ValueError("eta must be 0 or 1")
        if self.obstacle_distance_m is not None and not self.obs_ahead:
            raise ValueError("obstacle_distance_m present requires obs_ahead")

    @staticmethod
    def off() -> "PerceptionSnapshot":
        return PerceptionSnapshot(eta=0)


@dataclass(frozen=True)
class PolicyInput:
    """Per-segment statistics plus perception, as consumed by a policy."""

    segment_index: int
    n_seg: int
    is_path: bool
    is_area: bool
    is_closed: bool
    length_m: float
    delta_yaw_deg: float
    mean_curvature: float = 0.0
    corner_count: int = 0
    under_table_prior: float = 0.5
    traversable_prior: float = 0.5
    perception: PerceptionSnapshot = field(default_factory=PerceptionSnapshot.off)
    params: ControlParams = DEFAULT_PARAMS

    def __post_init__(self):
        if not (0.0 <= self.under_table_prior <= 1.0 and 0.0 <= self.traversable_prior <= 1.0):
            raise ValueError("priors must lie in [0, 1]")
        if not (self.is_path or self.is_area):
            raise ValueError("segment must be a path or an area")


@dataclass(frozen=True)
class PolicyDecision:
    action: MacroAction
    confidence: float
    rule_fired: str
    # Actual rotation magnitude chosen from the allowed turn set; equals the
    # token's nominal magnitude for the default {45, 90} set.
    turn_magnitude_deg: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must lie in [0, 1]")
        if self.rule_fired not in {f"rule{i}" for i in range(1, 7)}:
            raise ValueError(f"unknown rule id {self.rule_fired!r}")

    @property
    def signed_turn_deg(self) -> float:
        if not self.action.is_turn or self.turn_magnitude_deg is None:
            return self.action.nominal_turn_deg
        return self.action.turn_sign * self.turn_magnitude_deg


def _confidence_for(token: str, magnitude: float | None) -> float:
    if token == "cover_area":
        return 0.97
    if token == "forward":
        return 0.92
    if token == "check_under":
        return 0.88
    if magnitude is not None and magnitude == 90.0:
        return 0.95
    return 0.90


def _nearest_turn(delta_yaw: float, turn_set: tuple[float, ...], forced_sign: int = 0):
    """Best turn from the allowed set for a signed heading change.

    Magnitude is the set element closest to |delta|, ties to the larger one.
    With forced_sign != 0 (obstacle avoidance) the sign is overridden.
    """
    mag = abs(delta_yaw)
    best = max(turn_set, key=lambda t: (-abs(t - mag), t))
    sign = forced_sign if forced_sign != 0 else (1 if delta_yaw > 0 else -1 if delta_yaw < 0 else 1)
    token_mag = 90 if best >= 67.5 else 45
    token = f"turn_{'p' if sign > 0 else 'n'}{token_mag}"
    return MacroAction(token), best


def classify_segment(inp: PolicyInput, strict: bool = False) -> PolicyDecision:
    """Apply the decision rules; exactly one macro-action per segment.

    Bands for the default turn set: |dpsi| >= 67.5 deg is a 90 deg turn,
    [22.5, 67.5) is a 45 deg turn, below that a path segment goes forward.
    For other turn sets the forward band is |dpsi| < min(set)/2 and the
    magnitude is the nearest allowed value (ties up).
    """
    p = inp.perception
    if strict and p.eta == 0 and (p.obs_ahead or p.obstacle_distance_m is not None or p.h_est_m is not None):
        raise InconsistentInput("perception fields populated while eta=0")

    # Rule 1: areas dominate everything.
    if inp.is_area or inp.is_closed:
        return PolicyDecision(MacroAction("cover_area"), _confidence_for("cover_area", None), "rule1")

    turn_set = inp.params.turn_set
    forward_band = turn_set[0] / 2.0

    # Rule 4: obstacle handling, only while the live gate is on.
    if p.eta == 1 and p.obs_ahead:
        if p.h_est_m is None:
            return PolicyDecision(MacroAction("check_under"), _confidence_for("check_under", None), "rule4")
        if p.h_est_m < inp.params.h_clearance_m:
            # Forward is forbidden; pick the best admissible turn. Below the
            # turn band, steer away from the obstacle side (ties go positive).
            if abs(inp.delta_yaw_deg) >= forward_band:
                action, mag = _nearest_turn(inp.delta_yaw_deg, turn_set)
            else:
                away = -p.lateral_sign if p.lateral_sign != 0 else 1
                action, mag = _nearest_turn(away * turn_set[0], turn_set, forced_sign=away)
            return PolicyDecision(action, _confidence_for(action.token, mag), "rule4", turn_magnitude_deg=mag)
        # h_est >= clearance: forward allowed, fall through to rules 2/3.

    # Rule 2: turns by |dpsi|.
    if abs(inp.delta_yaw_deg) >= forward_band:
        action, mag = _nearest_turn(inp.delta_yaw_deg, turn_set)
        return PolicyDecision(action, _confidence_for(action.token, mag), "rule2", turn_magnitude_deg=mag)

    # Rule 3: forward for path segments.
    return PolicyDecision(MacroAction("forward"), _confidence_for("forward", None), "rule3")


# ---------------------------------------------------------------------------
# pluggable policy registry
# ---------------------------------------------------------------------------

_REGISTRY: dict[str, object] = {}


def register_policy(name: str, fn) -> None:
    """Register a callable PolicyInput -> PolicyDecision under a name."""
    if not callable(fn):
        raise TypeError("policy must be callable")
    _REGISTRY[name] = fn


def get_policy(name: str):
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown policy {name!r}; registered: {sorted(_REGISTRY)}") from None


def available_policies() -> list[str]:
    return sorted(_REGISTRY)


register_policy("rules", classify_segment)
