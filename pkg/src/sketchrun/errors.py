"""Exception hierarchy shared by all sketchrun modules."""


class SketchRunError(Exception):
    """Base class for every error raised by this package."""


# --- sketch / geometry ---------------------------------------------------

class EmptySketch(SketchRunError):
    pass


class DegenerateStroke(SketchRunError):
    """Stroke with fewer than two distinct points."""


class ScaleUnavailable(SketchRunError):
    """Neither a homography nor a pixel proxy was supplied."""


class DegenerateConfiguration(SketchRunError):
    """Homography correspondences are collinear or duplicated."""


class RankDeficient(SketchRunError):
    """DLT system does not determine a unique homography."""


class PointAtInfinity(SketchRunError):
    """Projective mapping sent a point to the plane at infinity."""


class NonPositiveDims(SketchRunError):
    pass


# --- policy ---------------------------------------------------------------

class InconsistentInput(SketchRunError):
    """Perception fields populated while the live gate is off (strict mode)."""


# --- executor / world ------------------------------------------------------

class UnsupportedTurn(SketchRunError):
    """Requested rotation magnitude is not in the allowed turn set."""


class StartPoseInvalid(SketchRunError):
    pass


class SceneSketchScaleMismatch(SketchRunError):
    """Scene grounding and sketch dimensions disagree."""


class NonPositiveBrake(SketchRunError):
    pass


class EmptyRegion(SketchRunError):
    pass


class DegenerateArea(SketchRunError):
    """Area polygon has (near-)zero enclosed area."""


class GenerationFailed(SketchRunError):
    """No collision-free scenario found within the retry budget."""


# --- metrics ---------------------------------------------------------------

class EmptySequence(SketchRunError):
    pass


class TraceMismatch(SketchRunError):
    """Trace slice does not match the segment outcome it is judged against."""


class NoTrials(SketchRunError):
    pass


# --- file formats ------------------------------------------------------------

class ParseError(SketchRunError):
    pass


class SchemaVersionUnknown(SketchRunError):
    pass


class ValidationFailed(SketchRunError):
    """Document failed validation; `location` names the offending field."""

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location
        self.reason = message
