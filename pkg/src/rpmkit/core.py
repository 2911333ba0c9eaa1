"""Domain types shared by every module: attribute vocabulary, panel layouts,
problems and their validation.

Attribute values are plain integers throughout: counts for Number, occupancy
bitmasks for Position, and fixed ordinal codebooks for Type, Size and Color.
Angle exists only as render-time rotation noise and never enters an
attribute matrix.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractViolation


class AttributeKind(str, enum.Enum):
    NUMBER = "number"
    POSITION = "position"
    TYPE = "type"
    SIZE = "size"
    COLOR = "color"
    ANGLE = "angle"  # rotation noise only, never reasoned over

    def __str__(self) -> str:
        return self.value


#: The five attribute kinds that rules are induced over.
REASONED_KINDS = (
    AttributeKind.NUMBER,
    AttributeKind.POSITION,
    AttributeKind.TYPE,
    AttributeKind.SIZE,
    AttributeKind.COLOR,
)

#: Shape codebook: ordinal -> edge count (0 means circle).
TYPE_NAMES = ("triangle", "square", "pentagon", "hexagon", "circle")
TYPE_EDGES = (3, 4, 5, 6, 0)

#: Discrete rotation noise set, degrees.
ANGLE_DEGREES = (0, 45, 90, 135, 180, 225, 270, 315)

#: Inclusive value bounds per ordinal kind (Position is a bitmask, Number
#: is additionally capped by the component's slot count).
VALUE_BOUNDS = {
    AttributeKind.NUMBER: (1, 9),
    AttributeKind.TYPE: (0, 4),
    AttributeKind.SIZE: (0, 5),
    AttributeKind.COLOR: (0, 9),
    AttributeKind.ANGLE: (0, len(ANGLE_DEGREES) - 1),
}


def popcount(mask: int) -> int:
    return int(mask).bit_count()


def encode_position(occupancy: Sequence[int | bool], slot_count: int | None = None) -> int:
    """Pack a per-slot occupancy vector into a bitmask (bit i = slot i).

    The bitmask popcount equals the number of occupied slots.
    """
    if slot_count is not None and len(occupancy) != slot_count:
        raise ContractViolation(
            f"occupancy length {len(occupancy)} does not match slot count {slot_count}"
        )
    mask = 0
    for i, occ in enumerate(occupancy):
        if occ:
            mask |= 1 << i
    return mask


def decode_position(mask: int, slot_count: int) -> list[bool]:
    """Inverse of :func:`encode_position`."""
    if mask < 0 or mask >= (1 << slot_count):
        raise ContractViolation(f"mask {mask:#b} uses bits >= slot count {slot_count}")
    return [bool(mask >> i & 1) for i in range(slot_count)]


def modal_value(values: Iterable[int]) -> int:
    """Most frequent value; ties break toward the smallest value."""
    counts = Counter(values)
    if not counts:
        raise ContractViolation("modal_value of empty sequence")
    return max(counts.items(), key=lambda kv: (kv[1], -kv[0]))[0]


class Configuration(str, enum.Enum):
    CENTER = "center"
    GRID22 = "2x2_grid"
    GRID33 = "3x3_grid"
    LEFT_RIGHT = "left_right"
    UP_DOWN = "up_down"
    OUT_IN_CENTER = "out_in_center"
    OUT_IN_GRID = "out_in_grid"

    def __str__(self) -> str:
        return self.value


#: Human-oriented display names used in report tables.
CONFIG_DISPLAY = {
    Configuration.CENTER: "Center",
    Configuration.GRID22: "2x2Grid",
    Configuration.GRID33: "3x3Grid",
    Configuration.LEFT_RIGHT: "Left-Right",
    Configuration.UP_DOWN: "Up-Down",
    Configuration.OUT_IN_CENTER: "Out-InCenter",
    Configuration.OUT_IN_GRID: "Out-InGrid",
}


@dataclass(frozen=True)
class Cell:
    """Axis-aligned slot geometry in panel coordinates (pixels, floats)."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def pixel_window(self) -> tuple[int, int, int, int]:
        """(row0, row1, col0, col1) of pixels whose centers fall in the cell."""
        r0 = math.ceil(self.y0 - 0.5)
        r1 = math.ceil(self.y1 - 0.5)
        c0 = math.ceil(self.x0 - 0.5)
        c1 = math.ceil(self.x1 - 0.5)
        return r0, r1, c0, c1


@dataclass(frozen=True)
class Component:
    """One structural component of a layout.

    ``role`` is the structural archetype used as the rule-pool key
    ("single", "grid4", "grid9"), shared across configurations so rules
    learned on one configuration transfer to structurally identical
    components elsewhere.
    """

    name: str
    role: str
    cells: tuple[Cell, ...]
    varying: tuple[AttributeKind, ...]
    grid: bool
    type_values: tuple[int, ...]
    size_values: tuple[int, ...]
    color_values: tuple[int, ...]
    radius_table: Mapping[int, float]
    clip: Cell | None = None  # window carved out of this component's area

    @property
    def slot_count(self) -> int:
        return len(self.cells)

    @property
    def number_values(self) -> tuple[int, ...]:
        if self.grid:
            return tuple(range(1, self.slot_count + 1))
        return (1,)

    def value_set(self, kind: AttributeKind) -> tuple[int, ...]:
        if kind == AttributeKind.NUMBER:
            return self.number_values
        if kind == AttributeKind.TYPE:
            return self.type_values
        if kind == AttributeKind.SIZE:
            return self.size_values
        if kind == AttributeKind.COLOR:
            return self.color_values
        raise ContractViolation(f"no enumerable value set for {kind}")

    def radius_for(self, size: int) -> float:
        return self.radius_table[size]

    def admissible_value(self, kind: AttributeKind, value: int) -> bool:
        if kind == AttributeKind.POSITION:
            if value < 0 or value >= (1 << self.slot_count):
                return False
            if self.grid:
                return popcount(value) >= 1
            return value == 1
        return value in self.value_set(kind)

    def slot_of(self, x: float, y: float) -> int | None:
        for i, cell in enumerate(self.cells):
            if cell.contains(x, y):
                return i
        return None


@dataclass(frozen=True)
class Layout:
    config: Configuration
    panel_px: int
    components: tuple[Component, ...]

    def component(self, name: str) -> Component:
        for comp in self.components:
            if comp.name == name:
                return comp
        raise ContractViolation(f"layout {self.config} has no component {name!r}")


SIZE_FACTORS = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

_ALL_TYPES = (0, 1, 2, 3, 4)
_NO_TRIANGLE = (1, 2, 3, 4)
_ALL_SIZES = (0, 1, 2, 3, 4, 5)
_ALL_COLORS = tuple(range(10))
_TSC = (AttributeKind.TYPE, AttributeKind.SIZE, AttributeKind.COLOR)
_GRID_VARYING = (AttributeKind.NUMBER, AttributeKind.POSITION) + _TSC


def _scaled_table(values: Sequence[float], scale: float) -> dict[int, float]:
    return {i: v * scale for i, v in enumerate(values)}


def _factor_table(half_extent: float, pad: float = 2.0) -> dict[int, float]:
    return {i: f * (half_extent - pad) for i, f in enumerate(SIZE_FACTORS)}


def _grid_cells(x0: float, y0: float, x1: float, y1: float, rows: int, cols: int) -> tuple[Cell, ...]:
    cells = []
    w = (x1 - x0) / cols
    h = (y1 - y0) / rows
    for r in range(rows):
        for c in range(cols):
            cells.append(Cell(x0 + c * w, y0 + r * h, x0 + (c + 1) * w, y0 + (r + 1) * h))
    return tuple(cells)


@lru_cache(maxsize=None)
def get_layout(config: Configuration, panel_px: int = 80) -> Layout:
    """Slot geometry and attribute ranges for a configuration.

    Geometry scales linearly with ``panel_px`` (default 80, minimum 64).
    """
    config = Configuration(config)
    if panel_px < 64:
        raise ContractViolation(f"panel size {panel_px} below the 64 px minimum")
    s = panel_px / 80.0
    px = float(panel_px)
    full = Cell(0.0, 0.0, px, px)
    # Central window shared by the two Out-In configurations.  The outer
    # entity is clipped out of this window so the nested component stays
    # pixel-disjoint; outer radii below keep every rotation of the outer
    # shape strictly around the window.
    win = Cell(28 * s, 28 * s, 52 * s, 52 * s)
    out_radii = _scaled_table((27.0, 28.8, 30.6, 32.4, 34.2, 36.0), s)

    def single(name: str, cell: Cell, *, types=_ALL_TYPES, radii=None, clip=None) -> Component:
        return Component(
            name=name,
            role="single",
            cells=(cell,),
            varying=_TSC,
            grid=False,
            type_values=types,
            size_values=_ALL_SIZES,
            color_values=_ALL_COLORS,
            radius_table=radii if radii is not None else _factor_table(min(cell.width, cell.height) / 2.0),
            clip=clip,
        )

    if config == Configuration.CENTER:
        comps = (single("center", full),)
    elif config == Configuration.GRID22:
        comps = (
            Component(
                name="grid",
                role="grid4",
                cells=_grid_cells(0, 0, px, px, 2, 2),
                varying=_GRID_VARYING,
                grid=True,
                type_values=_ALL_TYPES,
                size_values=_ALL_SIZES,
                color_values=_ALL_COLORS,
                radius_table=_factor_table(px / 4.0),
            ),
        )
    elif config == Configuration.GRID33:
        comps = (
            Component(
                name="grid",
                role="grid9",
                cells=_grid_cells(0, 0, px, px, 3, 3),
                varying=_GRID_VARYING,
                grid=True,
                type_values=_ALL_TYPES,
                size_values=_ALL_SIZES,
                color_values=_ALL_COLORS,
                radius_table=_factor_table(px / 6.0),
            ),
        )
    elif config == Configuration.LEFT_RIGHT:
        comps = (
            single("left", Cell(0, 0, px / 2, px)),
            single("right", Cell(px / 2, 0, px, px)),
        )
    elif config == Configuration.UP_DOWN:
        comps = (
            single("up", Cell(0, 0, px, px / 2)),
            single("down", Cell(0, px / 2, px, px)),
        )
    elif config == Configuration.OUT_IN_CENTER:
        comps = (
            single("out", full, types=_NO_TRIANGLE, radii=out_radii, clip=win),
            single("in", win),
        )
    elif config == Configuration.OUT_IN_GRID:
        # Inner grid cells are 12x12 px at the default panel size; a single
        # fixed entity size keeps the template bank unambiguous there.
        comps = (
            single("out", full, types=_NO_TRIANGLE, radii=out_radii, clip=win),
            Component(
                name="in_grid",
                role="grid4",
                cells=_grid_cells(win.x0, win.y0, win.x1, win.y1, 2, 2),
                varying=(AttributeKind.NUMBER, AttributeKind.POSITION, AttributeKind.TYPE, AttributeKind.COLOR),
                grid=True,
                type_values=_NO_TRIANGLE,
                size_values=(2,),
                color_values=_ALL_COLORS,
                radius_table={2: 4.6 * s},
            ),
        )
    else:  # pragma: no cover - enum is exhaustive
        raise ContractViolation(f"unknown configuration {config}")
    return Layout(config=config, panel_px=panel_px, components=comps)


ALL_CONFIGURATIONS = tuple(Configuration)


# ---------------------------------------------------------------------------
# Attribute matrices and problems
# ---------------------------------------------------------------------------

Row = tuple[int | None, int | None, int | None]


@dataclass(frozen=True)
class AttributeMatrix:
    """A 3x3 grid of one attribute's integer codes.

    In query form the bottom-right cell (and only that cell) is ``None``;
    a completed matrix has no empty cells.  Columns are exposed as the
    3-vectors used by the rule-fitting machinery.
    """

    kind: AttributeKind
    cells: tuple[Row, Row, Row]

    def __post_init__(self):
        if len(self.cells) != 3 or any(len(r) != 3 for r in self.cells):
            raise ContractViolation("attribute matrix must be 3x3")
        for r in range(3):
            for c in range(3):
                if self.cells[r][c] is None and (r, c) != (2, 2):
                    raise ContractViolation(f"only cell (3,3) may be empty, found empty ({r+1},{c+1})")

    @property
    def is_query(self) -> bool:
        return self.cells[2][2] is None

    def column(self, j: int) -> np.ndarray:
        col = [self.cells[i][j] for i in range(3)]
        return np.array([v if v is not None else np.nan for v in col], dtype=float)

    @property
    def a1(self) -> np.ndarray:
        return self.column(0)

    @property
    def a2(self) -> np.ndarray:
        return self.column(1)

    @property
    def a3(self) -> np.ndarray:
        return self.column(2)

    def filled(self, value: int) -> "AttributeMatrix":
        rows = (self.cells[0], self.cells[1], (self.cells[2][0], self.cells[2][1], int(value)))
        return AttributeMatrix(self.kind, rows)

    @classmethod
    def from_rows(cls, kind: AttributeKind, rows: Sequence[Sequence[int | None]]) -> "AttributeMatrix":
        return cls(kind, tuple(tuple(None if v is None else int(v) for v in r) for r in rows))


#: candidate tuple: component name -> attribute kind -> integer code
CandidateValues = Mapping[str, Mapping[AttributeKind, int]]


def candidate_key(cand: CandidateValues) -> tuple:
    """Canonical hashable form of a candidate tuple."""
    return tuple(
        (name, tuple(sorted((k.value, int(v)) for k, v in attrs.items())))
        for name, attrs in sorted(cand.items())
    )


@dataclass
class Problem:
    """One structured question: query matrices, 8 candidates, ground truth.

    ``annotations`` maps (component, kind) to the rule token used at
    generation time, or the markers "noise" (uniformity noise) and
    "irrelevant" (the non-governing one of Number/Position on grids).
    """

    id: str
    config: Configuration
    matrices: dict[str, dict[AttributeKind, AttributeMatrix]]
    candidates: tuple[CandidateValues, ...]
    truth_index: int | None = None
    annotations: dict[str, dict[AttributeKind, str]] | None = None
    panel_px: int = 80
    raster_dir: str | None = None

    @property
    def layout(self) -> Layout:
        return get_layout(self.config, self.panel_px)

    def completed_matrices(self, candidate_index: int) -> dict[str, dict[AttributeKind, AttributeMatrix]]:
        """Matrices with cell (3,3) filled from the given candidate."""
        cand = self.candidates[candidate_index]
        out: dict[str, dict[AttributeKind, AttributeMatrix]] = {}
        for name, mats in self.matrices.items():
            out[name] = {}
            for kind, mat in mats.items():
                out[name][kind] = mat.filled(cand[name][kind]) if mat.is_query else mat
        return out


def attribute_tuple_distance(a: CandidateValues, b: CandidateValues, layout: Layout) -> int:
    """Count of differing attributes between two candidate tuples.

    Number and Position are entangled on grid components (the occupancy
    mask determines the count), so a difference in that pair counts once.
    """
    if sorted(a.keys()) != sorted(b.keys()):
        raise ContractViolation("candidate tuples cover different components")
    dist = 0
    for comp in layout.components:
        va, vb = a[comp.name], b[comp.name]
        if comp.grid:
            pair_differs = (
                va[AttributeKind.NUMBER] != vb[AttributeKind.NUMBER]
                or va[AttributeKind.POSITION] != vb[AttributeKind.POSITION]
            )
            dist += int(pair_differs)
        else:
            dist += int(va.get(AttributeKind.NUMBER, 1) != vb.get(AttributeKind.NUMBER, 1))
            dist += int(va.get(AttributeKind.POSITION, 1) != vb.get(AttributeKind.POSITION, 1))
        for kind in (AttributeKind.TYPE, AttributeKind.SIZE, AttributeKind.COLOR):
            if kind in va or kind in vb:
                dist += int(va[kind] != vb[kind])
    return dist


def _check_value(comp: Component, kind: AttributeKind, value, where: str, violations: list[str]):
    if value is None:
        violations.append(f"{where}: missing value for {kind}")
        return
    if kind == AttributeKind.POSITION:
        if value < 0 or value >= (1 << comp.slot_count):
            violations.append(f"{where}: position mask {value:#b} uses bits >= {comp.slot_count} slots")
    elif not comp.admissible_value(kind, value):
        violations.append(f"{where}: {kind} value {value} outside component range")


def validate_problem(problem: Problem) -> list[str]:
    """Check every structural invariant; returns a list of violations
    (empty means the problem is well formed).  Diagnostics are returned,
    never raised."""
    violations: list[str] = []
    try:
        layout = problem.layout
    except (ContractViolation, ValueError) as exc:
        return [str(exc)]

    comp_names = {c.name for c in layout.components}
    if set(problem.matrices.keys()) != comp_names:
        violations.append(
            f"components {sorted(problem.matrices.keys())} do not match layout {sorted(comp_names)}"
        )
        return violations

    if len(problem.candidates) != 8:
        violations.append(f"candidate count != 8 (got {len(problem.candidates)})")
    if problem.truth_index is not None and not (0 <= problem.truth_index < len(problem.candidates)):
        violations.append(f"truth index {problem.truth_index} out of range")

    for comp in layout.components:
        mats = problem.matrices[comp.name]
        for kind, mat in mats.items():
            if not mat.is_query:
                violations.append(f"{comp.name}/{kind}: matrix is not in query form")
            for r in range(3):
                for c in range(3):
                    if (r, c) == (2, 2):
                        continue
                    _check_value(comp, kind, mat.cells[r][c], f"{comp.name}/{kind} cell ({r+1},{c+1})", violations)
        # occupancy consistency over the 8 observed cells
        if AttributeKind.NUMBER in mats and AttributeKind.POSITION in mats:
            nm, pm = mats[AttributeKind.NUMBER], mats[AttributeKind.POSITION]
            for r in range(3):
                for c in range(3):
                    n, p = nm.cells[r][c], pm.cells[r][c]
                    if n is None or p is None:
                        continue
                    if popcount(p) != n:
                        violations.append(
                            f"{comp.name} cell ({r+1},{c+1}): popcount(position)={popcount(p)} != number={n}"
                        )

    for i, cand in enumerate(problem.candidates):
        if set(cand.keys()) != comp_names:
            violations.append(f"candidate {i}: components do not match layout")
            continue
        for comp in layout.components:
            attrs = cand[comp.name]
            for kind, value in attrs.items():
                if kind == AttributeKind.ANGLE:
                    continue
                _check_value(comp, kind, value, f"candidate {i} {comp.name}", violations)
            n = attrs.get(AttributeKind.NUMBER)
            p = attrs.get(AttributeKind.POSITION)
            if n is not None and p is not None and popcount(p) != n:
                violations.append(f"candidate {i} {comp.name}: popcount(position) != number")

    if problem.truth_index is not None and len(problem.candidates) == 8:
        truth = problem.candidates[problem.truth_index]
        for i, cand in enumerate(problem.candidates):
            if i == problem.truth_index:
                continue
            try:
                if attribute_tuple_distance(truth, cand, layout) == 0:
                    violations.append(f"candidate {i} is identical to the truth tuple")
            except ContractViolation:
                pass  # already reported above

        if problem.annotations:
            # the truth-completed matrices must satisfy every annotated rule
            from . import rules as _rules  # local import: rules depends on core

            completed = problem.completed_matrices(problem.truth_index)
            for comp_name, per_kind in problem.annotations.items():
                for kind, token in per_kind.items():
                    if token in ("noise", "irrelevant"):
                        continue
                    mat = completed.get(comp_name, {}).get(kind)
                    if mat is None:
                        violations.append(f"annotation for missing matrix {comp_name}/{kind}")
                        continue
                    comp = layout.component(comp_name)
                    if not _rules.rule_holds(token, mat, slot_count=comp.slot_count):
                        violations.append(f"{comp_name}/{kind}: annotated rule {token!r} violated")

    return violations
