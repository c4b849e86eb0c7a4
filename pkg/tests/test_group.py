"""Grouping tests: the consistence link predicate, clockwise cycle
traversal with junction sharing, scale pairing, and single-point type
corruption. Corrupted instances are checked against an exhaustive
cycle enumeration built from the taxonomy axioms, independent of the
traversal's nearest-first ordering and backtracking."""

from __future__ import annotations

import pytest

from cadspot.grouping import group_symbols, consistence
from cadspot.primitives import Keypoint, RegionBox
from cadspot.synth import SceneSpec, generate_scene
from cadspot.taxonomy import (
    CLOCKWISE,
    DEFAULT_TABLE,
    DOWN,
    RIGHT,
    UP,
    arms_of,
    can_pass,
    can_receive,
    can_start_cycle,
    can_turn,
    clockwise_next,
)

K = Keypoint

EPS_PERP = 3.0
EPS_CLOSE = 3.0


def pos_set(symbol) -> frozenset[tuple[float, float]]:
    return frozenset((p.x, p.y) for p in symbol.keypoints)


def canon(symbol):
    return (
        symbol.symbol_class,
        tuple(sorted((p.x, p.y, p.type_id) for p in symbol.keypoints)),
    )


def canon_sorted(symbols):
    return sorted(canon(s) for s in symbols)


def bbox_of(positions) -> tuple[float, float, float, float]:
    xs = [x for x, _ in positions]
    ys = [y for _, y in positions]
    return (min(xs), min(ys), max(xs), max(ys))


def assert_rectangle_shape(symbol) -> None:
    # a closed clockwise cycle must be an axis-aligned rectangle: all
    # members on the bbox perimeter, all four bbox corners occupied
    # (integer-coordinate instances, so comparisons are exact)
    x0, y0, x1, y1 = symbol.bbox
    assert x1 > x0 and y1 > y0
    pts = {(p.x, p.y) for p in symbol.keypoints}
    for px, py in pts:
        on_v = px in (x0, x1) and y0 <= py <= y1
        on_h = py in (y0, y1) and x0 <= px <= x1
        assert on_v or on_h
    assert {(x0, y0), (x1, y0), (x1, y1), (x0, y1)} <= pts


def enumerate_closeable_cycles(points, eps_perp=EPS_PERP, eps_close=EPS_CLOSE):
    """Every point set closeable as a clockwise cycle, by exhaustive
    depth-first search over the taxonomy axioms (arms_of / can_turn /
    can_pass / can_receive). No nearest-first preference, no dead-state
    memoization, no consumed bookkeeping: a brute-force reference for
    what the traversal may legitimately emit."""
    n = len(points)
    found: set[frozenset[tuple[float, float]]] = set()

    def walk(start: int, i: int, direction, path: tuple[int, ...]) -> None:
        p = points[i]
        if direction not in arms_of(p.type_id):
            return
        turn = clockwise_next(direction)
        for j in range(n):
            if j == i:
                continue
            q = points[j]
            dx, dy = q.x - p.x, q.y - p.y
            forward = dx * direction[0] + dy * direction[1]
            perp = abs(dx * direction[1] + dy * direction[0])
            if forward <= 0 or perp > eps_perp:
                continue
            if j == start:
                if (
                    len(path) >= 4
                    and can_receive(q.type_id, direction)
                    and perp <= eps_close
                ):
                    found.add(frozenset((points[k].x, points[k].y) for k in path))
                continue
            if j in path:
                continue
            if can_turn(q.type_id, direction, turn):
                walk(start, j, turn, path + (j,))
            if can_pass(q.type_id, direction):
                walk(start, j, direction, path + (j,))

    for s in range(n):
        if can_start_cycle(points[s].type_id):
            walk(s, s, RIGHT, (s,))
    return found


# ------------------------------------------------------------- instances


def quad_points() -> list[Keypoint]:
    """Four blocks in a 2x2 arrangement sharing edges: outer corners,
    one tee per outer edge, a cross in the middle."""
    return [
        K(10, 10, 7), K(30, 10, 13), K(50, 10, 8),
        K(10, 30, 12), K(30, 30, 15), K(50, 30, 14),
        K(10, 50, 10), K(30, 50, 11), K(50, 50, 9),
    ]


QUAD_CYCLES = {
    frozenset({(10, 10), (30, 10), (30, 30), (10, 30)}),
    frozenset({(30, 10), (50, 10), (50, 30), (30, 30)}),
    frozenset({(10, 30), (30, 30), (30, 50), (10, 50)}),
    frozenset({(30, 30), (50, 30), (50, 50), (30, 50)}),
}


def nested_points() -> list[Keypoint]:
    """Outer rectangle with a tee on its top edge plus a separate
    rectangle strictly inside it. Nine points, one shared box."""
    return [
        K(10, 10, 7), K(40, 10, 13), K(70, 10, 8), K(70, 60, 9), K(10, 60, 10),
        K(25, 25, 7), K(55, 25, 8), K(55, 45, 9), K(25, 45, 10),
    ]


OUTER_IDX = range(0, 5)
INNER_IDX = range(5, 9)


def two_block_scene(seed: int):
    return generate_scene(
        SceneSpec(
            width=96,
            height=96,
            n_blocks=2,
            n_walls=0,
            n_scales=0,
            min_symbol_size=16,
            max_symbol_size=32,
            rng_seed=seed,
        )
    )


# ------------------------------------------------------------ consistence


class TestConsistence:
    def test_corner_pair_along_top_edge(self):
        assert consistence(K(0, 0, 7), K(20, 0, 8), RIGHT) is True

    def test_type_incompatible_for_direction(self):
        # SE cannot turn downward after an arrival from the left
        assert consistence(K(0, 0, 7), K(20, 0, 9), RIGHT) is False

    def test_perpendicular_offset_beyond_tolerance(self):
        assert consistence(K(0, 0, 7), K(20, 5, 8), RIGHT) is False

    def test_perpendicular_tolerance_is_inclusive(self):
        assert consistence(K(0, 0, 7), K(20, 3, 8), RIGHT) is True
        assert consistence(K(0, 0, 7), K(20, 3.0001, 8), RIGHT) is False

    def test_wider_tolerance_accepts_offset(self):
        assert consistence(K(0, 0, 7), K(20, 5, 8), RIGHT, eps_perp=10.0) is True

    def test_candidate_behind_is_rejected(self):
        assert consistence(K(0, 0, 7), K(-5, 0, 8), RIGHT) is False

    def test_zero_forward_distance_is_rejected(self):
        assert consistence(K(0, 0, 7), K(0, 2, 8), RIGHT) is False

    def test_requires_arm_in_travel_direction(self):
        # NE has arms left+down; the same link is fine downward
        assert consistence(K(0, 0, 8), K(20, 0, 9), RIGHT) is False
        assert consistence(K(0, 0, 8), K(0, 20, 9), DOWN) is True

    def test_junction_passable_on_collinear_edge(self):
        assert consistence(K(0, 0, 7), K(20, 0, 11), RIGHT) is True
        # stem pointing right has no left arm, so it cannot be crossed
        assert consistence(K(0, 0, 7), K(20, 0, 12), RIGHT) is False

    def test_junction_to_junction_turn(self):
        assert consistence(K(0, 0, 13), K(0, 20, 15), DOWN) is True

    def test_upward_closure_link(self):
        assert consistence(K(0, 20, 10), K(0, 0, 7), UP) is True

    def test_scale_endpoint_pairing(self):
        assert consistence(K(0, 0, 1), K(30, 0, 2), RIGHT) is True
        assert consistence(K(0, 0, 3), K(0, 25, 4), DOWN) is True
        # endpoints of the wrong axis never chain
        assert consistence(K(0, 0, 1), K(20, 0, 4), RIGHT) is False

    def test_scale_tick_crossing_same_axis_only(self):
        assert consistence(K(0, 0, 1), K(10, 0, 5), RIGHT) is True
        assert consistence(K(0, 0, 3), K(0, 10, 5), DOWN) is False
        assert consistence(K(0, 0, 3), K(0, 10, 6), DOWN) is True

    def test_explicit_table_argument(self):
        assert consistence(K(0, 0, 7), K(20, 0, 8), RIGHT, table=DEFAULT_TABLE) is True


class TestCompatibilityTable:
    def test_exhaustive_over_types_and_directions(self):
        for t in range(1, 16):
            for d in CLOCKWISE:
                entry = DEFAULT_TABLE.lookup(t, d)
                if d not in arms_of(t):
                    assert not entry.next_vertex_types
                    assert not entry.pass_through_types

    def test_corner_entries_have_successors(self):
        entry = DEFAULT_TABLE.lookup(7, RIGHT)
        assert 8 in entry.next_vertex_types
        assert entry.pass_through_types == frozenset({11, 13, 15})

    def test_scale_entries(self):
        entry = DEFAULT_TABLE.lookup(1, RIGHT)
        assert entry.next_vertex_types == frozenset({2})
        assert entry.pass_through_types == frozenset({5})
        entry = DEFAULT_TABLE.lookup(6, DOWN)
        assert entry.next_vertex_types == frozenset({4})
        assert entry.pass_through_types == frozenset({6})

    def test_unknown_type_rejected(self):
        with pytest.raises(ValueError, match="no compatibility entry"):
            DEFAULT_TABLE.lookup(16, RIGHT)


# --------------------------------------------------------- clean instances


class TestCleanInstances:
    def test_four_corners_one_block(self):
        pts = [K(10, 10, 7), K(40, 10, 8), K(40, 34, 9), K(10, 34, 10)]
        res = group_symbols(pts)
        assert len(res.symbols) == 1
        sym = res.symbols[0]
        assert sym.symbol_class == "block"
        # emitted in traversal order, clockwise from the start corner
        assert sym.keypoints == (pts[0], pts[1], pts[2], pts[3])
        assert res.unmatched == []

    def test_thin_rectangle_classified_as_wall(self):
        pts = [K(10, 10, 7), K(60, 10, 8), K(60, 20, 9), K(10, 20, 10)]
        res = group_symbols(pts)
        assert [s.symbol_class for s in res.symbols] == ["wall"]

    def test_two_endpoints_make_a_scale(self):
        res = group_symbols([K(10, 20, 1), K(58, 20, 2)])
        assert [s.symbol_class for s in res.symbols] == ["scale"]
        assert res.symbols[0].keypoints[0].type_id == 1
        assert res.unmatched == []

    def test_ticked_scale_consumes_ticks(self):
        pts = [K(10, 20, 1), K(26, 20, 5), K(42, 20, 5), K(58, 20, 2)]
        res = group_symbols(pts)
        assert len(res.symbols) == 1
        assert pos_set(res.symbols[0]) == {(10, 20), (58, 20)}
        assert res.unmatched == []

    def test_vertical_scale_with_tick(self):
        pts = [K(30, 5, 3), K(30, 21, 6), K(30, 50, 4)]
        res = group_symbols(pts)
        assert len(res.symbols) == 1
        assert pos_set(res.symbols[0]) == {(30, 5), (30, 50)}
        assert res.unmatched == []

    def test_axis_mismatched_endpoints_stay_unmatched(self):
        pts = [K(10, 20, 1), K(58, 20, 4)]
        res = group_symbols(pts)
        assert res.symbols == []
        assert len(res.unmatched) == 2

    def test_foreign_point_between_endpoints_is_stepped_around(self):
        pts = [K(10, 20, 1), K(30, 20, 7), K(58, 20, 2)]
        res = group_symbols(pts)
        assert len(res.symbols) == 1
        assert pos_set(res.symbols[0]) == {(10, 20), (58, 20)}
        assert [(p.x, p.y) for p in res.unmatched] == [(30, 20)]

    def test_identical_corner_types_cannot_close(self):
        pts = [K(10, 10, 7), K(40, 10, 7), K(40, 40, 7), K(10, 40, 7)]
        res = group_symbols(pts)
        assert res.symbols == []
        assert len(res.unmatched) == 4

    def test_quad_emits_four_blocks_sharing_junctions(self):
        res = group_symbols(quad_points())
        assert {pos_set(s) for s in res.symbols} == QUAD_CYCLES
        assert all(s.symbol_class == "block" for s in res.symbols)
        assert res.unmatched == []
        # the cross is a member of all four cycles
        assert all((30, 30) in pos_set(s) for s in res.symbols)

    def test_nested_rectangles_both_recovered(self):
        pts = nested_points()
        res = group_symbols(pts)
        emitted = {pos_set(s) for s in res.symbols}
        outer = frozenset((p.x, p.y) for p in pts[:5])
        inner = frozenset((p.x, p.y) for p in pts[5:])
        # outer cycle carries the collinear tee; emitted exactly once
        assert emitted == {outer, inner}
        assert res.unmatched == []

    def test_abutting_rectangles_not_merged(self):
        pts = [
            K(10, 10, 7), K(40, 10, 13), K(70, 10, 8),
            K(70, 40, 9), K(40, 40, 11), K(10, 40, 10),
        ]
        res = group_symbols(pts)
        assert {pos_set(s) for s in res.symbols} == {
            frozenset({(10, 10), (40, 10), (40, 40), (10, 40)}),
            frozenset({(40, 10), (70, 10), (70, 40), (40, 40)}),
        }
        # the union rectangle over both must not appear
        assert all(s.bbox != (10.0, 10.0, 70.0, 40.0) for s in res.symbols)

    def test_empty_input(self):
        res = group_symbols([])
        assert res.symbols == [] and res.unmatched == [] and res.stats == []


class TestTraversalStats:
    def test_step_accounting_against_bound(self):
        res = group_symbols(quad_points())
        (st,) = res.stats
        assert st.box_index == 0
        assert st.points_in_box == 9
        assert st.step_bound == 36
        assert 0 < st.max_steps_used <= st.step_bound
        assert st.total_steps >= st.max_steps_used

    def test_one_stats_row_per_box(self):
        pts = [K(10, 10, 7), K(40, 10, 8), K(40, 40, 9), K(10, 40, 10)]
        boxes = [
            RegionBox(0, 0, 50, 50, "block"),
            RegionBox(60, 60, 90, 90, "block"),
        ]
        res = group_symbols(pts, boxes)
        assert [st.box_index for st in res.stats] == [0, 1]
        assert [st.points_in_box for st in res.stats] == [4, 0]
        assert res.stats[1].step_bound == 0


# ------------------------------------------------------- generated scenes


GEN_SPECS = [
    SceneSpec(
        width=128, height=128, n_blocks=5, n_walls=2, n_scales=1,
        min_symbol_size=16, max_symbol_size=40, rng_seed=seed,
    )
    for seed in range(6)
] + [
    SceneSpec(
        width=96, height=96, n_blocks=2, n_walls=1, n_scales=2,
        min_symbol_size=14, max_symbol_size=30, rng_seed=seed,
    )
    for seed in range(6, 12)
]


class TestGeneratedScenes:
    @pytest.mark.parametrize("spec", GEN_SPECS, ids=lambda s: f"seed{s.rng_seed}")
    def test_grouping_reconstructs_ground_truth(self, spec):
        ann = generate_scene(spec)
        res = group_symbols(ann.keypoints, ann.region_boxes)
        assert canon_sorted(res.symbols) == canon_sorted(ann.symbols_gt)
        assert res.unmatched == []
        for st in res.stats:
            assert st.max_steps_used <= st.step_bound

    @pytest.mark.parametrize("spec", GEN_SPECS[:4], ids=lambda s: f"seed{s.rng_seed}")
    def test_single_box_invariants(self, spec):
        # without region boxes only soundness is promised, not GT equality
        ann = generate_scene(spec)
        res = group_symbols(ann.keypoints)
        for sym in res.symbols:
            if sym.symbol_class != "scale":
                assert_rectangle_shape(sym)
        covered = {(p.x, p.y) for s in res.symbols for p in s.keypoints}
        covered |= {(p.x, p.y) for p in res.unmatched}
        assert covered == {(p.x, p.y) for p in ann.keypoints}

    def test_repeat_call_is_deterministic(self):
        ann = generate_scene(GEN_SPECS[0])
        a = group_symbols(ann.keypoints, ann.region_boxes)
        b = group_symbols(ann.keypoints, ann.region_boxes)
        assert canon_sorted(a.symbols) == canon_sorted(b.symbols)
        assert a.unmatched == b.unmatched


# ----------------------------------------------------- corruption recovery


class TestTypeCorruption:
    @pytest.mark.parametrize("idx", range(9))
    def test_nested_instance_all_corruptions(self, idx):
        base = nested_points()
        outer_pos = frozenset((p.x, p.y) for p in base[:5])
        inner_pos = frozenset((p.x, p.y) for p in base[5:])
        for wrong in range(1, 16):
            if wrong == base[idx].type_id:
                continue
            pts = list(base)
            pts[idx] = K(pts[idx].x, pts[idx].y, wrong)
            res = group_symbols(pts)
            cycles = enumerate_closeable_cycles(pts)
            emitted = {
                pos_set(s) for s in res.symbols if s.symbol_class != "scale"
            }
            # soundness: nothing beyond the exhaustive enumeration
            assert emitted <= cycles
            unmatched = {(p.x, p.y) for p in res.unmatched}
            if idx in OUTER_IDX:
                assert inner_pos in emitted
                intact, target_bbox = outer_pos, bbox_of(outer_pos)
            else:
                assert outer_pos in emitted
                intact, target_bbox = inner_pos, bbox_of(inner_pos)
            oracle_says = any(bbox_of(c) == target_bbox for c in cycles)
            got = any(bbox_of(pos_set(s)) == target_bbox for s in res.symbols)
            assert got == oracle_says
            if not got:
                survivors = {
                    (p.x, p.y)
                    for i, p in enumerate(base)
                    if i != idx and (p.x, p.y) in intact
                }
                assert survivors <= unmatched
            for st in res.stats:
                assert st.max_steps_used <= st.step_bound

    @pytest.mark.parametrize("seed", range(5))
    def test_two_block_scene_sweep(self, seed):
        ann = two_block_scene(seed)
        gt = {canon(s) for s in ann.symbols_gt}
        assert len(ann.keypoints) == 8
        owner = {}
        for s_i, sym in enumerate(ann.symbols_gt):
            for p in sym.keypoints:
                owner[(p.x, p.y)] = s_i
        all_pos = {(p.x, p.y) for p in ann.keypoints}
        for idx, victim in enumerate(ann.keypoints):
            for wrong in range(1, 16):
                if wrong == victim.type_id:
                    continue
                pts = list(ann.keypoints)
                pts[idx] = K(victim.x, victim.y, wrong)
                res = group_symbols(pts, ann.region_boxes)
                # the untouched symbol always survives, bit for bit
                safe = ann.symbols_gt[1 - owner[(victim.x, victim.y)]]
                got = {canon(s) for s in res.symbols}
                assert canon(safe) in got
                assert len(got) == len(res.symbols)  # no duplicate emissions
                covered = {(p.x, p.y) for s in res.symbols for p in s.keypoints}
                covered |= {(p.x, p.y) for p in res.unmatched}
                assert covered == all_pos
                for sym in res.symbols:
                    assert_rectangle_shape(sym)
                for st in res.stats:
                    assert st.max_steps_used <= st.step_bound
