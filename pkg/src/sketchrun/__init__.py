"""sketchrun: sketch-to-action runtime for household robot tasks.

Strokes drawn over a scene photograph are segmented into geometric
primitives, classified into discrete macro-actions by deterministic decision
rules, translated into stepped low-level commands, executed closed-loop in a
2D household simulator, and scored with a segment/task success metric suite.
"""

from .control import ControlParams, PlatformProfile, required_clearance, stopping_distance
from .errors import SketchRunError
from .executor import (
    Command,
    LowLevelCommand,
    SegmentOutcome,
    TrialResult,
    check_obstacle_ahead,
    check_under_clearance,
    generate_serpentine_plan,
    run_trial,
    serpentine_lanes,
    translate,
)
from .geometry import (
    Homography,
    Keypoint,
    PixelPoint,
    PixelProxy,
    Segment,
    Sketch,
    Stroke,
    detect_keypoints,
    estimate_homography,
    pixel_proxy_lmax,
    pixel_to_world,
    segment_sketch,
)
from .metrics import (
    JudgedTrial,
    MetricsReport,
    ToleranceProfile,
    aggregate,
    dtw,
    judge_segment,
    judge_task,
    judge_trial,
)
from .policy import (
    MacroAction,
    PerceptionSnapshot,
    PolicyDecision,
    PolicyInput,
    classify_segment,
    get_policy,
    register_policy,
)
from .scenario import ScenarioSpec, generate_scenario
from .world import NoiseModel, Pose2, SceneGrid, apply_command, trial_stream

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
