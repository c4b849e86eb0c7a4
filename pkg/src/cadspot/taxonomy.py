"""The 15 keypoint types and the direction algebra behind grouping.

Every keypoint type carries an "arms" set: the axis directions in
which a stroke leaves the point. Six scale types describe segment
endpoints and intermediate ticks; nine corner types describe how
rectangle edges meet (four outer corners, four tees named by the stem
direction, one cross). All grouping compatibility rules derive from
arms, so the compatibility table below is generated rather than
hand-enumerated.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

# Axis directions as (dx, dy) with y growing downward.
RIGHT = (1, 0)
DOWN = (0, 1)
LEFT = (-1, 0)
UP = (0, -1)

# Clockwise traversal order for rectangle cycles (image coordinates).
CLOCKWISE = (RIGHT, DOWN, LEFT, UP)

OPPOSITE = {RIGHT: LEFT, LEFT: RIGHT, UP: DOWN, DOWN: UP}

DIRECTION_NAMES = {RIGHT: "right", DOWN: "down", LEFT: "left", UP: "up"}


def clockwise_next(direction: tuple[int, int]) -> tuple[int, int]:
    return CLOCKWISE[(CLOCKWISE.index(direction) + 1) % 4]


class KeypointType(IntEnum):
    SCALE_LEFT = 1       # left endpoint of a horizontal scale
    SCALE_RIGHT = 2      # right endpoint of a horizontal scale
    SCALE_TOP = 3        # top endpoint of a vertical scale
    SCALE_BOTTOM = 4     # bottom endpoint of a vertical scale
    SCALE_TICK_H = 5     # intermediate tick on a horizontal scale
    SCALE_TICK_V = 6     # intermediate tick on a vertical scale
    CORNER_NW = 7
    CORNER_NE = 8
    CORNER_SE = 9
    CORNER_SW = 10
    TEE_N = 11           # stem points up: arms left/right/up
    TEE_E = 12           # stem points right: arms up/down/right
    TEE_S = 13           # stem points down: arms left/right/down
    TEE_W = 14           # stem points left: arms up/down/left
    CROSS = 15


N_TYPES = 15

ARMS: dict[int, frozenset[tuple[int, int]]] = {
    KeypointType.SCALE_LEFT: frozenset({RIGHT}),
    KeypointType.SCALE_RIGHT: frozenset({LEFT}),
    KeypointType.SCALE_TOP: frozenset({DOWN}),
    KeypointType.SCALE_BOTTOM: frozenset({UP}),
    KeypointType.SCALE_TICK_H: frozenset({LEFT, RIGHT}),
    KeypointType.SCALE_TICK_V: frozenset({UP, DOWN}),
    KeypointType.CORNER_NW: frozenset({RIGHT, DOWN}),
    KeypointType.CORNER_NE: frozenset({LEFT, DOWN}),
    KeypointType.CORNER_SE: frozenset({LEFT, UP}),
    KeypointType.CORNER_SW: frozenset({RIGHT, UP}),
    KeypointType.TEE_N: frozenset({LEFT, RIGHT, UP}),
    KeypointType.TEE_E: frozenset({UP, DOWN, RIGHT}),
    KeypointType.TEE_S: frozenset({LEFT, RIGHT, DOWN}),
    KeypointType.TEE_W: frozenset({UP, DOWN, LEFT}),
    KeypointType.CROSS: frozenset({LEFT, RIGHT, UP, DOWN}),
}

SCALE_TYPES = frozenset(range(1, 7))
SCALE_ENDPOINT_TYPES = frozenset({1, 2, 3, 4})
SCALE_TICK_TYPES = frozenset({5, 6})
CORNER_TYPES = frozenset(range(7, 16))
JUNCTION_TYPES = frozenset({11, 12, 13, 14, 15})

# Reverse lookup used by the generator to type junction points from
# the union of incident edge directions.
CORNER_ARMS_TO_TYPE = {ARMS[t]: int(t) for t in CORNER_TYPES}


def arms_of(type_id: int) -> frozenset[tuple[int, int]]:
    try:
        return ARMS[type_id]
    except KeyError:
        raise ValueError(f"unknown keypoint type_id: {type_id}") from None


def is_junction(type_id: int) -> bool:
    return type_id in JUNCTION_TYPES


def has_arm(type_id: int, direction: tuple[int, int]) -> bool:
    return direction in arms_of(type_id)


def can_turn(type_id: int, d_in: tuple[int, int], d_out: tuple[int, int]) -> bool:
    """The point can receive a stroke arriving along d_in and emit one
    along d_out (a traversal turn)."""
    a = arms_of(type_id)
    return OPPOSITE[d_in] in a and d_out in a


def can_pass(type_id: int, direction: tuple[int, int]) -> bool:
    """The point can be crossed collinearly. Only junctions qualify:
    an outer corner never has two opposite arms."""
    a = arms_of(type_id)
    return type_id in JUNCTION_TYPES and direction in a and OPPOSITE[direction] in a


def can_receive(type_id: int, d_in: tuple[int, int]) -> bool:
    """The point has an arm pointing back at an arrival along d_in."""
    return OPPOSITE[d_in] in arms_of(type_id)


def can_start_cycle(type_id: int) -> bool:
    """NW role: the clockwise traversal leaves rightward and returns
    from below, so the start needs at least arms right and down."""
    a = arms_of(type_id)
    return type_id in CORNER_TYPES and RIGHT in a and DOWN in a


@dataclass(frozen=True)
class CompatibilityEntry:
    next_vertex_types: frozenset[int]
    pass_through_types: frozenset[int]


class CompatibilityTable:
    """Per (type_id, direction): which types may serve as the next
    traversal vertex, and which may be crossed as collinear junctions.

    Rectangle traversal is clockwise, so the next vertex after moving
    along d must accept arrival from d and emit along clockwise_next(d).
    Scale pairing is linear: the next vertex is the matching opposite
    endpoint and ticks of the same axis may be crossed.
    """

    def __init__(self) -> None:
        entries: dict[tuple[int, tuple[int, int]], CompatibilityEntry] = {}
        for t in range(1, N_TYPES + 1):
            for d in CLOCKWISE:
                if d not in arms_of(t):
                    entries[(t, d)] = CompatibilityEntry(frozenset(), frozenset())
                    continue
                if t in CORNER_TYPES:
                    nxt = frozenset(
                        u for u in CORNER_TYPES if can_turn(u, d, clockwise_next(d))
                    )
                    pas = frozenset(u for u in CORNER_TYPES if can_pass(u, d))
                else:
                    nxt = frozenset(
                        u
                        for u in SCALE_ENDPOINT_TYPES
                        if arms_of(u) == frozenset({OPPOSITE[d]})
                    )
                    # ticks are not junctions, so can_pass would reject
                    # them; collinear crossing only needs both axis arms
                    pas = frozenset(
                        u for u in SCALE_TICK_TYPES if {d, OPPOSITE[d]} <= arms_of(u)
                    )
                entries[(t, d)] = CompatibilityEntry(nxt, pas)
        self._entries = entries

    def lookup(self, type_id: int, direction: tuple[int, int]) -> CompatibilityEntry:
        key = (int(type_id), direction)
        if key not in self._entries:
            raise ValueError(
                f"no compatibility entry for type {type_id} direction {direction}"
            )
        return self._entries[key]

    def accepts(self, type_id: int, direction: tuple[int, int], other_type: int) -> bool:
        e = self.lookup(type_id, direction)
        return other_type in e.next_vertex_types or other_type in e.pass_through_types

    def items(self):
        return self._entries.items()


DEFAULT_TABLE = CompatibilityTable()
