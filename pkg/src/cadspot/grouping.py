"""Group typed keypoints into rectangle symbols by traversing ink paths.

Within each region box, rectangle cycles are traced clockwise
(right, down, left, up) starting from the topmost-then-leftmost point
that can play the north-west role. At every step the traversal moves
to the nearest point ahead that satisfies consistence: it must lie
within EPS_PERP of the current travel line and its type must accept
the link per the compatibility table, either as a turning vertex or
as a collinear pass-through junction. Dead ends backtrack; a path
returning to its start within EPS_CLOSE after at least four points
closes and is emitted as a symbol. Scales pair a left/top endpoint
with the matching opposite endpoint along the axis, stepping over
intermediate ticks.

Outer corners and scale points are consumed by the symbol that uses
them. Tee and cross junctions exist precisely because several
rectangles meet there, so they may appear in several cycles. Points
that end up in no symbol are reported as unmatched, never dropped.

Each traversal expands a (point, direction) state at most once, so a
single traversal performs at most 4 * |points in box| expansions;
per-box statistics expose the observed maximum against that bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .primitives import Keypoint, RectangleSymbol, RegionBox, classify_rectangle
from .taxonomy import (
    CLOCKWISE,
    DOWN,
    RIGHT,
    CompatibilityTable,
    DEFAULT_TABLE,
    JUNCTION_TYPES,
    KeypointType,
    arms_of,
    can_pass,
    can_receive,
    can_start_cycle,
    can_turn,
    clockwise_next,
)

EPS_PERP = 3.0
EPS_CLOSE = 3.0
MIN_CYCLE_POINTS = 4

_FORWARD_EPS = 1e-9


@dataclass(frozen=True)
class BoxStats:
    """Traversal accounting for one region box."""

    box_index: int
    points_in_box: int
    step_bound: int          # 4 * points_in_box, per traversal
    max_steps_used: int      # worst single traversal
    total_steps: int


@dataclass
class GroupingResult:
    symbols: list[RectangleSymbol]
    unmatched: list[Keypoint]
    stats: list[BoxStats]


def consistence(
    p_i: Keypoint,
    p_j: Keypoint,
    direction: tuple[int, int],
    table: CompatibilityTable = DEFAULT_TABLE,
    eps_perp: float = EPS_PERP,
) -> bool:
    """True when ink can continue from p_i to p_j along `direction`:
    p_j sits ahead of p_i within eps_perp of the travel line, p_i has
    an arm in that direction and the table accepts p_j's type there."""
    dx = p_j.x - p_i.x
    dy = p_j.y - p_i.y
    forward = dx * direction[0] + dy * direction[1]
    perp = abs(dx * direction[1] + dy * direction[0])
    if forward <= _FORWARD_EPS or perp > eps_perp:
        return False
    if direction not in arms_of(p_i.type_id):
        return False
    return table.accepts(p_i.type_id, direction, p_j.type_id)


class _BoxGrouper:
    """Traversal state for the points of one region box."""

    def __init__(
        self,
        points: Sequence[Keypoint],
        indices: list[int],
        consumed: set[int],
        table: CompatibilityTable,
        eps_perp: float,
        eps_close: float,
    ) -> None:
        self.points = points
        self.indices = indices
        self.consumed = consumed          # shared across boxes
        self.in_cycle: set[int] = set()   # any appearance in an emitted symbol
        self.table = table
        self.eps_perp = eps_perp
        self.eps_close = eps_close
        self.step_bound = 4 * len(indices)
        self.max_steps = 0
        self.total_steps = 0
        self.emitted_keys: set[frozenset[int]] = set()

    def _usable(self, idx: int) -> bool:
        return idx not in self.consumed or self.points[idx].type_id in JUNCTION_TYPES

    def _candidates(self, i: int, direction: tuple[int, int]) -> list[int]:
        p = self.points[i]
        scored: list[tuple[float, float, float, int, int]] = []
        for j in self.indices:
            if j == i or not self._usable(j):
                continue
            q = self.points[j]
            dx = q.x - p.x
            dy = q.y - p.y
            forward = dx * direction[0] + dy * direction[1]
            perp = abs(dx * direction[1] + dy * direction[0])
            if forward <= _FORWARD_EPS or perp > self.eps_perp:
                continue
            scored.append((forward, q.y, q.x, q.type_id, j))
        scored.sort()
        return [s[-1] for s in scored]

    # -- rectangle cycles

    def run_cycles(self) -> list[RectangleSymbol]:
        out: list[RectangleSymbol] = []
        starts = sorted(
            (j for j in self.indices if self._usable(j) and can_start_cycle(self.points[j].type_id)),
            key=lambda j: (self.points[j].y, self.points[j].x),
        )
        for start in starts:
            if not self._usable(start):
                continue
            cycle = self._traverse(start)
            if cycle is None:
                continue
            key = frozenset(cycle)
            if key in self.emitted_keys:
                continue
            self.emitted_keys.add(key)
            members = tuple(self.points[j] for j in cycle)
            x0, y0, x1, y1 = RectangleSymbol("block", members).bbox
            cls = classify_rectangle(x1 - x0, y1 - y0)
            out.append(RectangleSymbol(cls, members))
            for j in cycle:
                self.in_cycle.add(j)
                if self.points[j].type_id not in JUNCTION_TYPES:
                    self.consumed.add(j)
        return out

    def _traverse(self, start: int) -> list[int] | None:
        dead: set[tuple[int, tuple[int, int]]] = set()
        steps = 0

        def search(i: int, direction: tuple[int, int], path: list[int], on_path: set[int]):
            nonlocal steps
            key = (i, direction)
            if key in dead or steps >= self.step_bound:
                return None
            steps += 1
            nxt = clockwise_next(direction)
            entry = self.table.lookup(self.points[i].type_id, direction)
            for j in self._candidates(i, direction):
                q = self.points[j]
                if j == start:
                    if (
                        len(path) >= MIN_CYCLE_POINTS
                        and can_receive(q.type_id, direction)
                        and self._within_close(path[-1], j, direction)
                    ):
                        return path
                    continue
                if j in on_path:
                    continue
                # turning has priority over passing through: the nearest
                # enclosing rectangle closes first, which keeps abutting
                # rectangles from being merged into their union
                if q.type_id in entry.next_vertex_types and can_turn(
                    q.type_id, direction, nxt
                ):
                    r = search(j, nxt, path + [j], on_path | {j})
                    if r is not None:
                        return r
                if q.type_id in entry.pass_through_types and can_pass(
                    q.type_id, direction
                ):
                    r = search(j, direction, path + [j], on_path | {j})
                    if r is not None:
                        return r
            dead.add(key)
            return None

        result = search(start, RIGHT, [start], {start})
        self.max_steps = max(self.max_steps, steps)
        self.total_steps += steps
        return result

    def _within_close(self, last: int, start: int, direction: tuple[int, int]) -> bool:
        p, q = self.points[last], self.points[start]
        perp = abs((q.x - p.x) * direction[1] + (q.y - p.y) * direction[0])
        return perp <= self.eps_close

    # -- scale pairing

    def run_scales(self) -> list[RectangleSymbol]:
        out: list[RectangleSymbol] = []
        starts = sorted(
            (
                j
                for j in self.indices
                if j not in self.consumed
                and self.points[j].type_id
                in (KeypointType.SCALE_LEFT, KeypointType.SCALE_TOP)
            ),
            key=lambda j: (self.points[j].y, self.points[j].x),
        )
        for start in starts:
            if start in self.consumed:
                continue
            direction = (
                RIGHT
                if self.points[start].type_id == KeypointType.SCALE_LEFT
                else DOWN
            )
            chain = self._walk_scale(start, direction)
            if chain is None:
                continue
            end, ticks = chain
            out.append(
                RectangleSymbol("scale", (self.points[start], self.points[end]))
            )
            self.consumed.update({start, end, *ticks})
            self.in_cycle.update({start, end, *ticks})
        return out

    def _walk_scale(self, start: int, direction: tuple[int, int]):
        current = start
        ticks: list[int] = []
        steps = 0
        bound = 4 * len(self.indices)
        while steps < bound:
            steps += 1
            found = None
            for j in self._candidates(current, direction):
                q = self.points[j]
                if j in self.consumed or j == start or j in ticks:
                    continue
                entry = self.table.lookup(self.points[current].type_id, direction)
                if q.type_id in entry.next_vertex_types:
                    found = ("end", j)
                    break
                if q.type_id in entry.pass_through_types:
                    found = ("tick", j)
                    break
            self.max_steps = max(self.max_steps, steps)
            self.total_steps += 1
            if found is None:
                return None
            kind, j = found
            if kind == "end":
                return j, ticks
            ticks.append(j)
            current = j
        return None


def group_symbols(
    points: Sequence[Keypoint],
    boxes: Sequence[RegionBox] | None = None,
    table: CompatibilityTable = DEFAULT_TABLE,
    eps_perp: float = EPS_PERP,
    eps_close: float = EPS_CLOSE,
) -> GroupingResult:
    """Group points into symbols, box by box. With boxes=None (or
    empty) a single box spanning all points is used."""
    pts = list(points)
    if not pts:
        return GroupingResult([], [], [])
    if not boxes:
        xs = [p.x for p in pts]
        ys = [p.y for p in pts]
        boxes = [RegionBox(min(xs) - 1, min(ys) - 1, max(xs) + 1, max(ys) + 1, "scene")]

    consumed: set[int] = set()
    touched: set[int] = set()
    symbols: list[RectangleSymbol] = []
    stats: list[BoxStats] = []
    for b_idx, box in enumerate(boxes):
        indices = [i for i, p in enumerate(pts) if box.contains(p.x, p.y)]
        grouper = _BoxGrouper(pts, indices, consumed, table, eps_perp, eps_close)
        symbols.extend(grouper.run_cycles())
        symbols.extend(grouper.run_scales())
        touched.update(grouper.in_cycle)
        stats.append(
            BoxStats(
                box_index=b_idx,
                points_in_box=len(indices),
                step_bound=grouper.step_bound,
                max_steps_used=grouper.max_steps,
                total_steps=grouper.total_steps,
            )
        )
    unmatched = [
        pts[i]
        for i in sorted(
            set(range(len(pts))) - touched, key=lambda i: (pts[i].y, pts[i].x)
        )
    ]
    return GroupingResult(symbols, unmatched, stats)
