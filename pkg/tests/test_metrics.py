import math
from functools import lru_cache

import numpy as np
import pytest
from conftest import area_sketch, make_scene, path_sketch, straight_sketch
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchrun.control import ControlParams
from sketchrun.errors import EmptySequence, NoTrials, TraceMismatch
from sketchrun.executor import SegmentOutcome, run_trial
from sketchrun.geometry import resample_polyline, segment_from_polyline
from sketchrun.metrics import (
    JudgedTrial,
    ToleranceProfile,
    aggregate,
    area_coverage,
    dtw,
    dtw_per_meter,
    judge_segment,
    judge_task,
    judge_trial,
    max_chord_deviation,
    polyline_distance,
)
from sketchrun.world import NoiseModel, Pose2

PARAMS = ControlParams()
TOL = ToleranceProfile()


# ---------------------------------------------------------------------------
# DTW: oracle and axioms
# ---------------------------------------------------------------------------

def oracle_dtw(a, b):
    """Exhaustive memoized recursion, independent of the DP implementation."""
    a = [tuple(p) for p in a]
    b = [tuple(p) for p in b]

    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == 0 and j == 0:
            return 0.0
        if i == 0 or j == 0:
            return math.inf
        c = math.hypot(a[i - 1][0] - b[j - 1][0], a[i - 1][1] - b[j - 1][1])
        return c + min(rec(i - 1, j), rec(i, j - 1), rec(i - 1, j - 1))

    return rec(len(a), len(b))


GRID = [(x, y) for x in range(3) for y in range(3)]


def test_dtw_identical_sequences_zero():
    seq = [(0, 0), (1, 1), (2, 0)]
    assert dtw(seq, seq) == 0.0


def test_dtw_insertion_example():
    assert dtw([(0, 0), (1, 0)], [(0, 0), (1, 0), (2, 0)]) == pytest.approx(1.0, abs=1e-12)


def test_dtw_singletons():
    assert dtw([(0, 0)], [(3, 4)]) == pytest.approx(5.0, abs=1e-12)


def test_dtw_empty_rejected():
    with pytest.raises(EmptySequence):
        dtw([], [(0, 0)])


def test_dtw_matches_oracle_exactly_on_exhaustive_short_pairs():
    seqs = [[p] for p in GRID] + [[p, q] for p in GRID for q in GRID]
    for a in seqs:
        for b in seqs:
            assert dtw(a, b) == oracle_dtw(tuple(a), tuple(b))


def test_dtw_matches_oracle_on_random_grid_pairs():
    rng = np.random.default_rng(2024)
    for _ in range(400):
        a = [GRID[i] for i in rng.integers(0, 9, size=rng.integers(1, 7))]
        b = [GRID[i] for i in rng.integers(0, 9, size=rng.integers(1, 7))]
        assert dtw(a, b) == oracle_dtw(tuple(a), tuple(b))


@given(
    st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=6),
    st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=6),
)
@settings(max_examples=300, deadline=None)
def test_dtw_axioms(a, b):
    cost = dtw(a, b)
    assert cost >= 0.0
    assert dtw(a, b) == dtw(b, a)
    if a == b:
        assert cost == 0.0


def test_dtw_per_meter():
    cost, per_m = dtw_per_meter([(0, 0), (2, 0)], [(0, 0), (1, 0), (2, 0)])
    assert per_m == pytest.approx(cost / 2.0)


# ---------------------------------------------------------------------------
# geometric helpers
# ---------------------------------------------------------------------------

def test_max_chord_deviation():
    pts = np.array([[0.0, 0.02], [0.5, -0.03], [1.0, 0.0]])
    assert max_chord_deviation(pts, (0, 0), (1, 0)) == pytest.approx(0.03)


def test_polyline_distance():
    poly = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    d = polyline_distance(np.array([[0.5, 0.3], [2.0, 1.0]]), poly)
    assert d[0] == pytest.approx(0.3)
    assert d[1] == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# judge_segment
# ---------------------------------------------------------------------------

def fake_trace(points, thetas=None):
    thetas = thetas or [0.0] * len(points)
    return [Pose2(x, y, t) for (x, y), t in zip(points, thetas)]


def forward_outcome(end, termination="completed"):
    return SegmentOutcome(0, "forward", "rule3", 0.92, termination, 0, end)


def test_judge_forward_within_tolerance():
    seg = segment_from_polyline([(0, 0), (0.4, 0)], PARAMS)
    trace = fake_trace([(0, 0.02), (0.2, -0.02), (0.4, 0.01)])
    ok, adh = judge_segment(forward_outcome(2), trace, seg, TOL)
    assert ok and adh


def test_judge_forward_deviation_beyond_tolerance():
    seg = segment_from_polyline([(0, 0), (0.4, 0)], PARAMS)
    trace = fake_trace([(0, 0.0), (0.2, 0.08), (0.4, 0.0)])
    ok, adh = judge_segment(forward_outcome(2), trace, seg, TOL)
    assert ok and not adh


def test_judge_failed_segment_has_no_adherence():
    seg = segment_from_polyline([(0, 0), (0.4, 0)], PARAMS)
    trace = fake_trace([(0, 0), (0.1, 0)])
    ok, adh = judge_segment(forward_outcome(1, "safety_halt"), trace, seg, TOL)
    assert not ok and adh is None


def test_judge_turn_by_achieved_rotation():
    seg = segment_from_polyline([(0, 0), (0, 0.3)], PARAMS)
    trace = fake_trace([(0, 0), (0, 0)], thetas=[0.0, 87.0])
    out = SegmentOutcome(0, "turn_p90", "rule2", 0.95, "completed", 0, 1,
                         commanded_turn_deg=90.0)
    ok, adh = judge_segment(out, trace, seg, TOL)
    assert ok and adh  # |87 - 90| <= 5
    trace_bad = fake_trace([(0, 0), (0, 0)], thetas=[0.0, 80.0])
    ok, adh = judge_segment(out, trace_bad, seg, TOL)
    assert ok and not adh


def test_judge_trace_mismatch():
    seg = segment_from_polyline([(0, 0), (0.4, 0)], PARAMS)
    with pytest.raises(TraceMismatch):
        judge_segment(forward_outcome(9), fake_trace([(0, 0)]), seg, TOL)


# ---------------------------------------------------------------------------
# judge_task / judge_trial on executed trials
# ---------------------------------------------------------------------------

def reference_of(sketch, spacing=0.05):
    from conftest import PROXY
    world = PROXY.to_world(sketch.strokes[0].points)
    return resample_polyline(world, spacing)


def test_zero_noise_trial_judges_clean():
    scene = make_scene(start=(0.5, 0.5, 0.0))
    sketch = path_sketch([(0.5, 0.5), (1.5, 0.5), (1.5, 1.5)])
    trial = run_trial(scene, sketch, PARAMS)
    ref = reference_of(sketch)
    ftcr, ftspar = judge_task(trial, ref, TOL, scene)
    assert ftcr and ftspar
    judged = judge_trial(trial, ref, TOL, scene)
    assert judged.successes == trial.n_seg
    assert judged.failure_third is None
    assert judged.dtw_per_m <= 2 * PARAMS.d_step_m


def test_obstructed_trial_fails_task():
    scene = make_scene(rects=[(1.3, 0.3, 1.4, 0.7)], start=(0.5, 0.5, 0.0))
    sketch = straight_sketch((0.5, 0.5), 1.0)
    trial = run_trial(scene, sketch, PARAMS)
    ref = reference_of(sketch)
    ftcr, ftspar = judge_task(trial, ref, TOL, scene)
    assert not ftcr and not ftspar
    judged = judge_trial(trial, ref, TOL, scene)
    assert judged.failure_third is not None


def test_corridor_excursion_fails_ftspar_only():
    scene = make_scene(start=(0.5, 0.5, 0.0))
    sketch = path_sketch([(0.5, 0.5), (1.5, 0.5)])
    trial = run_trial(scene, sketch, PARAMS)
    # a reference displaced by 0.3 m: completion holds, corridor does not
    ref = reference_of(sketch) + np.array([0.0, 0.30])
    ftcr, ftspar = judge_task(trial, ref, TOL, scene)
    assert ftcr and not ftspar


def test_under_maneuver_counts_as_success_and_uoms_handled():
    scene = make_scene(rects=[(1.0, 0.2, 1.4, 0.8, 1.2)], start=(0.5, 0.5, 0.0))
    sketch = straight_sketch((0.5, 0.5), 1.5)
    trial = run_trial(scene, sketch, PARAMS)
    ref = reference_of(sketch)
    judged = judge_trial(trial, ref, TOL, scene)
    assert judged.uoms_encounters >= 1
    assert judged.uoms_handled == judged.uoms_encounters
    assert judged.ftcr


def test_area_coverage_full_sweep():
    scene = make_scene(start=(1.0, 1.0, 0.0))
    trial = run_trial(scene, area_sketch(1.0, 1.0, 2.0, 2.0), PARAMS)
    cov = area_coverage(trial, trial.outcomes[0], scene)
    assert cov >= 0.95


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def judged_row(successes, n, adherent, ftcr, ftspar, third=None, scene_type="Bedroom",
               category="Short", enc=0, handled=0, thirds=(0, 0, 0)):
    return JudgedTrial(
        seed=0, trial_index=0, n_segments=n, successes=successes, adherent=adherent,
        ftcr=ftcr, ftspar=ftspar, dtw_cost=0.0, dtw_per_m=0.0,
        uoms_encounters=enc, uoms_handled=handled, failure_third=third,
        scene_type=scene_type, category=category, failure_thirds=tuple(thirds),
    )


def test_aggregate_rates():
    rows = [judged_row(8, 10, 6, True, True)]
    rep = aggregate(rows)
    assert rep.sssr == pytest.approx(80.0)
    assert rep.ssspar == pytest.approx(75.0)  # denominator = successes
    assert rep.ssspar_all_denominator == pytest.approx(60.0)
    assert rep.ftcr == 100.0


def test_aggregate_order_invariants():
    rows = [
        judged_row(5, 5, 5, True, True),
        judged_row(4, 5, 2, True, False, third=2, thirds=(0, 0, 1)),
        judged_row(3, 5, 1, False, False, third=1, thirds=(0, 1, 1)),
    ]
    rep = aggregate(rows)
    assert rep.ftspar <= rep.ftcr
    assert rep.ssspar * rep.sssr / 100.0 <= rep.sssr + 1e-9
    assert rep.failure_histogram == [0, 1, 2]


def test_aggregate_cells_absent_when_empty():
    rows = [judged_row(5, 5, 5, True, True, scene_type="Kitchen", category="Long")]
    rep = aggregate(rows)
    assert rep.cell("Kitchen", "Long") is not None
    assert rep.cell("Bedroom", "Short") is None


def test_aggregate_uoms():
    rows = [judged_row(5, 5, 5, True, True, enc=4, handled=3)]
    rep = aggregate(rows)
    assert rep.uoms == pytest.approx(75.0)
    rows = [judged_row(5, 5, 5, True, True)]
    assert aggregate(rows).uoms is None


def test_aggregate_rejects_empty():
    with pytest.raises(NoTrials):
        aggregate([])


def test_monotone_tolerance_property():
    scene = make_scene(start=(0.5, 0.5, 0.0))
    sketch = path_sketch([(0.5, 0.5), (1.5, 0.5), (1.5, 1.5)])
    noise = NoiseModel(0.004, 0.004, 1.0, seed=3)
    trial = run_trial(scene, sketch, PARAMS, noise)
    ref = reference_of(sketch)
    tight = judge_trial(trial, ref, ToleranceProfile(0.05, 0.01, 1.0), scene)
    loose = judge_trial(trial, ref, ToleranceProfile(0.5, 0.2, 20.0), scene)
    assert loose.adherent >= tight.adherent
    assert int(loose.ftspar) >= int(tight.ftspar)
