"""Procedural construction of matrix-completion problems with rule
annotations, uniformity noise, irrelevant attributes, and two candidate
permutation schemes (single-edit distractors vs. an impartial depth-3
attribute-permutation tree).

Generation is deterministic: each problem derives its own random stream
from (corpus seed, problem index), so output is independent of worker
count and identical specs produce byte-identical corpora.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .core import (
    ANGLE_DEGREES,
    AttributeKind,
    AttributeMatrix,
    CandidateValues,
    Component,
    Configuration,
    Layout,
    Problem,
    candidate_key,
    decode_position,
    encode_position,
    get_layout,
    modal_value,
    popcount,
)
from .errors import ContractViolation, GenerationError
from .rules import (
    Rule,
    RuleKind,
    classify_rule,
    detect_position_rule,
    fit_columns,
)

SCHEMES = ("raven", "iraven")
_MAX_DRAWS = 1000

_ORDINAL_ORDER = (AttributeKind.TYPE, AttributeKind.SIZE, AttributeKind.COLOR)
_NOISABLE = (AttributeKind.COLOR, AttributeKind.SIZE)


@dataclass(frozen=True)
class GenSpec:
    """Fully determines a corpus: equal specs give byte-identical output."""

    configs: tuple[Configuration, ...]
    scheme: str = "iraven"
    uniformity_noise: float = 0.0
    seed: int = 0
    count: int = 1
    panel_px: int = 80

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ContractViolation(f"scheme must be one of {SCHEMES}")
        if not (0.0 <= self.uniformity_noise <= 1.0):
            raise ContractViolation("uniformity noise must be a probability")
        if self.count < 1:
            raise ContractViolation("count must be positive")
        if not self.configs:
            raise ContractViolation("at least one configuration required")

    def to_dict(self) -> dict:
        return {
            "configs": [c.value for c in self.configs],
            "scheme": self.scheme,
            "uniformity_noise": self.uniformity_noise,
            "seed": self.seed,
            "count": self.count,
            "panel_px": self.panel_px,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GenSpec":
        return cls(
            configs=tuple(Configuration(c) for c in data["configs"]),
            scheme=data["scheme"],
            uniformity_noise=data["uniformity_noise"],
            seed=data["seed"],
            count=data["count"],
            panel_px=data.get("panel_px", 80),
        )


def rng_for(seed: int, index: int) -> np.random.Generator:
    """Per-problem random stream, independent of generation order."""
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), index]))


@dataclass(frozen=True)
class Entity:
    """Render-level description of one drawn shape."""

    type: int
    size: int
    color: int
    angle: int  # ordinal into the discrete rotation set


#: per panel: component name -> slot index -> Entity
PanelEntities = dict[str, dict[int, Entity]]


@dataclass
class PanelSet:
    """Entity-level detail for all 17 panels of one problem (9 query cells
    row-major, then the 8 candidates)."""

    queries: list[PanelEntities]
    candidates: list[PanelEntities]


# ---------------------------------------------------------------------------
# Rule assignment
# ---------------------------------------------------------------------------

RuleAssignment = dict[str, dict[AttributeKind, str]]


def _contiguous(values: Sequence[int]) -> bool:
    vs = sorted(values)
    return all(b - a == 1 for a, b in zip(vs, vs[1:]))


def _ordinal_families(kind: AttributeKind, values: Sequence[int]) -> list[str]:
    lo, hi = min(values), max(values)
    fams = ["constant"]
    if len(values) >= 3 and _contiguous(values):
        fams.append("progression")
    if kind != AttributeKind.TYPE:
        # arithmetic needs nonzero operands so the fitted system keeps
        # full rank and never mimics a constant row
        if hi >= 2 * max(lo, 1) and len(values) >= 2:
            fams.append("arithmetic")
    if len(values) >= 3:
        fams.append("distribute_three")
    return fams


def sample_rule_assignment(layout: Layout, rng: np.random.Generator, noise: float = 0.0) -> RuleAssignment:
    """Pick one rule per (component, reasoned attribute).

    Grid components get exactly one of Number/Position as the governing
    attribute; the other is marked irrelevant.  With probability ``noise``
    one Color/Size attribute is re-marked as uniformity noise.  Attributes
    a component holds fixed are annotated constant.
    """
    assignment: RuleAssignment = {}
    for comp in layout.components:
        per: dict[AttributeKind, str] = {}
        if comp.grid:
            governed = AttributeKind.NUMBER if rng.integers(2) == 0 else AttributeKind.POSITION
            other = AttributeKind.POSITION if governed == AttributeKind.NUMBER else AttributeKind.NUMBER
            per[other] = "irrelevant"
            if governed == AttributeKind.NUMBER:
                fams = _ordinal_families(AttributeKind.NUMBER, comp.number_values)
                per[governed] = _resolve_family(str(rng.choice(fams)), rng, comp.slot_count)
            else:
                fams = ["constant", "progression", "arithmetic", "distribute_three"]
                per[governed] = _resolve_position_family(str(rng.choice(fams)), rng, comp.slot_count)
        else:
            per[AttributeKind.NUMBER] = "constant"
            per[AttributeKind.POSITION] = "constant"
        for kind in _ORDINAL_ORDER:
            values = comp.value_set(kind)
            if kind in comp.varying and len(values) > 1:
                fams = _ordinal_families(kind, values)
                per[kind] = _resolve_family(str(rng.choice(fams)), rng, comp.slot_count)
            else:
                per[kind] = "constant"
        assignment[comp.name] = per

    if noise > 0.0 and rng.random() < noise:
        noisable = [
            (comp.name, kind)
            for comp in layout.components
            for kind in _NOISABLE
            if kind in comp.varying and len(comp.value_set(kind)) > 1
        ]
        if noisable:
            name, kind = noisable[int(rng.integers(len(noisable)))]
            assignment[name][kind] = "noise"
    return assignment


def _resolve_family(family: str, rng: np.random.Generator, slot_count: int) -> str:
    if family == "arithmetic":
        return "arithmetic_plus" if rng.integers(2) == 0 else "arithmetic_minus"
    if family == "distribute_three":
        return "distribute_three_up" if rng.integers(2) == 0 else "distribute_three_down"
    return family


def _resolve_position_family(family: str, rng: np.random.Generator, slot_count: int) -> str:
    if family == "progression":
        return f"position_shift_{int(rng.integers(1, slot_count))}"
    if family == "arithmetic":
        return "position_union" if rng.integers(2) == 0 else "position_difference"
    if family == "distribute_three":
        return "distribute_three_up" if rng.integers(2) == 0 else "distribute_three_down"
    return family


# ---------------------------------------------------------------------------
# Value-grid sampling (3x3 grids of integer codes satisfying one rule)
# ---------------------------------------------------------------------------


def _collinear(a: Sequence[int], b: Sequence[int]) -> bool:
    arr = np.array([a, b], dtype=float)
    return np.linalg.matrix_rank(arr) < 2


def _sample_ordinal_rows(token: str, values: Sequence[int], rng: np.random.Generator) -> list[list[int]]:
    """Row-major 3x3 grid satisfying ``token`` with every cell in range."""
    lo, hi = min(values), max(values)
    for _ in range(_MAX_DRAWS):
        if token == "constant":
            rows = [[int(v)] * 3 for v in rng.integers(lo, hi + 1, size=3)]
        elif token == "progression":
            span = hi - lo
            deltas = [d for d in (-2, -1, 1, 2) if abs(2 * d) <= span]
            d = int(deltas[int(rng.integers(len(deltas)))])
            starts = rng.integers(lo - min(0, 2 * d), hi - max(0, 2 * d) + 1, size=3)
            if starts[0] == starts[1] == starts[2]:
                continue  # identical rows collapse the design rank
            rows = [[int(v), int(v + d), int(v + 2 * d)] for v in starts]
        elif token in ("arithmetic_plus", "arithmetic_minus"):
            op_lo = max(lo, 1)
            rows = []
            for _i in range(3):
                if token == "arithmetic_plus":
                    x = int(rng.integers(op_lo, hi - op_lo + 1))
                    y = int(rng.integers(op_lo, hi - x + 1))
                    rows.append([x, y, x + y])
                else:
                    x = int(rng.integers(lo + 1, hi + 1))
                    y = int(rng.integers(1, x - lo + 1))
                    rows.append([x, y, x - y])
            if _collinear([r[0] for r in rows], [r[1] for r in rows]):
                continue
        elif token in ("distribute_three_up", "distribute_three_down"):
            vals = [int(v) for v in rng.choice(list(values), size=3, replace=False)]
            col1 = vals
            perm = [1, 2, 0] if token == "distribute_three_up" else [2, 0, 1]
            col2 = [col1[perm[i]] for i in range(3)]
            col3 = [col2[perm[i]] for i in range(3)]
            rows = [[col1[i], col2[i], col3[i]] for i in range(3)]
        else:
            raise ContractViolation(f"unknown ordinal rule token {token!r}")

        a1 = [r[0] for r in rows]
        a2 = [r[1] for r in rows]
        a3 = [r[2] for r in rows]
        fit = fit_columns(a1, a2, a3)
        got = classify_rule(fit, a1, a2, a3)
        if got.value == token:
            return rows
    raise GenerationError(f"could not realize rule {token!r} over values {values}")


def _random_mask(rng: np.random.Generator, slots: int, count: int | None = None, exclude: int | None = None) -> int:
    full = (1 << slots) - 1
    for _ in range(_MAX_DRAWS):
        if count is None:
            mask = int(rng.integers(1, full + 1))
        else:
            bits = rng.choice(slots, size=count, replace=False)
            mask = 0
            for b in bits:
                mask |= 1 << int(b)
        if exclude is None or mask != exclude:
            return mask
    raise GenerationError("mask space exhausted")


def _rot(mask: int, k: int, slots: int) -> int:
    k %= slots
    full = (1 << slots) - 1
    return ((mask << k) | (mask >> (slots - k))) & full if k else mask


def _sample_position_rows(token: str, slots: int, rng: np.random.Generator) -> list[list[int]]:
    full = (1 << slots) - 1
    for _ in range(_MAX_DRAWS):
        if token == "constant":
            rows = [[_random_mask(rng, slots)] * 3 for _ in range(3)]
        elif token.startswith("position_shift_"):
            k = int(token.rsplit("_", 1)[1])
            rows = []
            for _i in range(3):
                m = _random_mask(rng, slots)
                if _rot(m, k, slots) == m:
                    break  # shift-invariant mask degenerates to constant
                rows.append([m, _rot(m, k, slots), _rot(m, 2 * k, slots)])
            if len(rows) != 3:
                continue
        elif token == "position_union":
            rows = []
            for _i in range(3):
                x = int(rng.integers(1, full))  # proper subset, complement nonempty
                comp_bits = [b for b in range(slots) if not (x >> b) & 1]
                y = 0
                while y == 0:
                    y = sum(1 << b for b in comp_bits if rng.integers(2))
                rows.append([x, y, x | y])
        elif token == "position_difference":
            rows = []
            for _i in range(3):
                x = _random_mask(rng, slots)
                while popcount(x) < 2:
                    x = _random_mask(rng, slots)
                x_bits = [b for b in range(slots) if (x >> b) & 1]
                y = x
                while y == 0 or y == x:
                    y = sum(1 << b for b in x_bits if rng.integers(2))
                rows.append([x, y, x & ~y & full])
        elif token in ("distribute_three_up", "distribute_three_down"):
            masks: list[int] = []
            while len(masks) < 3:
                m = _random_mask(rng, slots)
                if m not in masks:
                    masks.append(m)
            perm = [1, 2, 0] if token == "distribute_three_up" else [2, 0, 1]
            col1 = masks
            col2 = [col1[perm[i]] for i in range(3)]
            col3 = [col2[perm[i]] for i in range(3)]
            rows = [[col1[i], col2[i], col3[i]] for i in range(3)]
        else:
            raise ContractViolation(f"unknown position rule token {token!r}")

        cols = list(zip(*rows))
        got = detect_position_rule(cols[0], cols[1], cols[2], slots)
        if got is not None and got.token == token:
            return [list(r) for r in rows]
    raise GenerationError(f"could not realize position rule {token!r} on {slots} slots")


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------


@dataclass
class _CompDraw:
    """Cell-level value grids plus per-entity detail for one component."""

    number: list[list[int]]
    position: list[list[int]]
    grids: dict[AttributeKind, list[list[int]]]
    per_entity: dict[AttributeKind, list[list[list[int]]]]  # noised attrs only


def _draw_component(comp: Component, tokens: Mapping[AttributeKind, str], rng: np.random.Generator) -> _CompDraw:
    slots = comp.slot_count
    if comp.grid:
        if tokens[AttributeKind.POSITION] == "irrelevant":
            number = _sample_ordinal_rows(tokens[AttributeKind.NUMBER], comp.number_values, rng)
            position = [[_random_mask(rng, slots, count=number[r][c]) for c in range(3)] for r in range(3)]
        else:
            position = _sample_position_rows(tokens[AttributeKind.POSITION], slots, rng)
            number = [[popcount(position[r][c]) for c in range(3)] for r in range(3)]
    else:
        number = [[1] * 3 for _ in range(3)]
        position = [[1] * 3 for _ in range(3)]

    grids: dict[AttributeKind, list[list[int]]] = {}
    per_entity: dict[AttributeKind, list[list[list[int]]]] = {}
    for kind in _ORDINAL_ORDER:
        values = comp.value_set(kind)
        token = tokens[kind]
        if token == "noise":
            vals = list(values)
            cells = [
                [[int(v) for v in rng.choice(vals, size=number[r][c])] for c in range(3)]
                for r in range(3)
            ]
            per_entity[kind] = cells
            grids[kind] = [[modal_value(cells[r][c]) for c in range(3)] for r in range(3)]
        elif token == "constant" and len(values) == 1:
            grids[kind] = [[values[0]] * 3 for _ in range(3)]
        else:
            grids[kind] = _sample_ordinal_rows(token, values, rng)
    return _CompDraw(number=number, position=position, grids=grids, per_entity=per_entity)


def _truth_tuple(layout: Layout, draws: Mapping[str, _CompDraw]) -> CandidateValues:
    truth: dict[str, dict[AttributeKind, int]] = {}
    for comp in layout.components:
        d = draws[comp.name]
        truth[comp.name] = {
            AttributeKind.NUMBER: d.number[2][2],
            AttributeKind.POSITION: d.position[2][2],
            AttributeKind.TYPE: d.grids[AttributeKind.TYPE][2][2],
            AttributeKind.SIZE: d.grids[AttributeKind.SIZE][2][2],
            AttributeKind.COLOR: d.grids[AttributeKind.COLOR][2][2],
        }
    return truth


def _copy_candidate(cand: CandidateValues) -> dict[str, dict[AttributeKind, int]]:
    return {name: dict(attrs) for name, attrs in cand.items()}


@dataclass(frozen=True)
class _Edit:
    component: str
    attribute: AttributeKind  # the governed one for Number/Position pairs


def _edit_menu(layout: Layout, truth: CandidateValues, assignment: RuleAssignment) -> list[_Edit]:
    menu: list[_Edit] = []
    for comp in layout.components:
        if comp.grid:
            governed = (
                AttributeKind.NUMBER
                if assignment[comp.name][AttributeKind.POSITION] == "irrelevant"
                else AttributeKind.POSITION
            )
            menu.append(_Edit(comp.name, governed))
        for kind in _ORDINAL_ORDER:
            if kind in comp.varying and len(comp.value_set(kind)) > 1:
                menu.append(_Edit(comp.name, kind))
    return menu


def _draw_edit_value(edit: _Edit, layout: Layout, truth: CandidateValues, rng: np.random.Generator) -> dict[AttributeKind, int]:
    """New value(s) for one edit, always different from the truth value."""
    comp = layout.component(edit.component)
    current = truth[edit.component]
    if edit.attribute == AttributeKind.NUMBER:
        options = [v for v in comp.number_values if v != current[AttributeKind.NUMBER]]
        if not options:
            raise GenerationError(f"no alternative count for {edit.component}")
        n = int(options[int(rng.integers(len(options)))])
        return {AttributeKind.NUMBER: n, AttributeKind.POSITION: _random_mask(rng, comp.slot_count, count=n)}
    if edit.attribute == AttributeKind.POSITION:
        mask = _random_mask(rng, comp.slot_count, exclude=current[AttributeKind.POSITION])
        return {AttributeKind.POSITION: mask, AttributeKind.NUMBER: popcount(mask)}
    options = [v for v in comp.value_set(edit.attribute) if v != current[edit.attribute]]
    if not options:
        raise GenerationError(f"no alternative {edit.attribute} value for {edit.component}")
    return {edit.attribute: int(options[int(rng.integers(len(options)))])}


def make_candidates_raven(
    truth: CandidateValues, layout: Layout, assignment: RuleAssignment, rng: np.random.Generator
) -> tuple[list[CandidateValues], int]:
    """Seven distractors, each one attribute-edit away from the truth,
    mutually distinct, truth inserted at a random index."""
    menu = _edit_menu(layout, truth, assignment)
    if not menu:
        raise GenerationError("no editable attribute for distractor construction")
    seen = {candidate_key(truth)}
    distractors: list[CandidateValues] = []
    attempts = 0
    while len(distractors) < 7:
        attempts += 1
        if attempts > _MAX_DRAWS:
            raise GenerationError("attribute space too small for 7 distinct distractors")
        edit = menu[int(rng.integers(len(menu)))]
        cand = _copy_candidate(truth)
        cand[edit.component].update(_draw_edit_value(edit, layout, truth, rng))
        key = candidate_key(cand)
        if key in seen:
            continue
        seen.add(key)
        distractors.append(cand)
    k = int(rng.integers(0, 8))
    candidates = distractors[:k] + [truth] + distractors[k:]
    return candidates, k


def make_candidates_iraven(
    truth: CandidateValues, layout: Layout, assignment: RuleAssignment, rng: np.random.Generator
) -> tuple[list[CandidateValues], int, list[_Edit]]:
    """Depth-3 permutation tree: three distinct attributes, one re-drawn
    value per attribute, all eight on/off edit combinations as leaves.

    Every permuted attribute ends up split 4-4 between its truth value and
    the alternative, so per-attribute majority voting ties across the
    whole candidate set.
    """
    menu = _edit_menu(layout, truth, assignment)
    if len(menu) < 3:
        raise GenerationError(f"need 3 permutable attributes, layout offers {len(menu)}")
    picks = rng.choice(len(menu), size=3, replace=False)
    edits = [menu[int(i)] for i in picks]
    new_values = [_draw_edit_value(e, layout, truth, rng) for e in edits]

    leaves: list[CandidateValues] = []
    for bits in range(8):
        cand = _copy_candidate(truth)
        for k in range(3):
            if bits >> k & 1:
                cand[edits[k].component].update(new_values[k])
        leaves.append(cand)

    placement = [int(p) for p in rng.permutation(8)]
    candidates: list[CandidateValues | None] = [None] * 8
    for leaf_index, pos in enumerate(placement):
        candidates[pos] = leaves[leaf_index]
    return list(candidates), placement[0], edits


def generate_problem(
    config: Configuration,
    scheme: str,
    noise: float,
    rng: np.random.Generator,
    problem_id: str,
    panel_px: int = 80,
) -> tuple[Problem, PanelSet]:
    """Build one problem plus the entity-level panel detail needed for
    rendering.  All attribute grids satisfy their assigned rules in all
    three rows once the truth candidate fills cell (3,3)."""
    layout = get_layout(config, panel_px)
    assignment = sample_rule_assignment(layout, rng, noise)
    draws = {comp.name: _draw_component(comp, assignment[comp.name], rng) for comp in layout.components}
    truth = _truth_tuple(layout, draws)

    if scheme == "raven":
        candidates, truth_index = make_candidates_raven(truth, layout, assignment, rng)
    elif scheme == "iraven":
        candidates, truth_index, _edits = make_candidates_iraven(truth, layout, assignment, rng)
    else:
        raise ContractViolation(f"unknown scheme {scheme!r}")

    matrices: dict[str, dict[AttributeKind, AttributeMatrix]] = {}
    for comp in layout.components:
        d = draws[comp.name]
        grids = {
            AttributeKind.NUMBER: d.number,
            AttributeKind.POSITION: d.position,
            **d.grids,
        }
        matrices[comp.name] = {
            kind: AttributeMatrix.from_rows(
                kind,
                [
                    [grid[r][c] if (r, c) != (2, 2) else None for c in range(3)]
                    for r in range(3)
                ],
            )
            for kind, grid in grids.items()
        }

    problem = Problem(
        id=problem_id,
        config=config,
        matrices=matrices,
        candidates=tuple(candidates),
        truth_index=truth_index,
        annotations={name: dict(per) for name, per in assignment.items()},
        panel_px=panel_px,
    )
    panels = _build_panels(layout, draws, problem, rng)
    return problem, panels


def _entities_for_cell(
    comp: Component, d: _CompDraw, r: int, c: int, rng: np.random.Generator
) -> dict[int, Entity]:
    mask = d.position[r][c]
    slots = [i for i in range(comp.slot_count) if (mask >> i) & 1]
    out: dict[int, Entity] = {}
    for j, slot in enumerate(slots):
        attrs = {}
        for kind in _ORDINAL_ORDER:
            if kind in d.per_entity:
                attrs[kind] = d.per_entity[kind][r][c][j]
            else:
                attrs[kind] = d.grids[kind][r][c]
        out[slot] = Entity(
            type=attrs[AttributeKind.TYPE],
            size=attrs[AttributeKind.SIZE],
            color=attrs[AttributeKind.COLOR],
            angle=int(rng.integers(len(ANGLE_DEGREES))),
        )
    return out


def _candidate_entities(layout: Layout, cand: CandidateValues, rng: np.random.Generator) -> PanelEntities:
    panel: PanelEntities = {}
    for comp in layout.components:
        attrs = cand[comp.name]
        mask = attrs[AttributeKind.POSITION]
        panel[comp.name] = {
            slot: Entity(
                type=attrs[AttributeKind.TYPE],
                size=attrs[AttributeKind.SIZE],
                color=attrs[AttributeKind.COLOR],
                angle=int(rng.integers(len(ANGLE_DEGREES))),
            )
            for slot in range(comp.slot_count)
            if (mask >> slot) & 1
        }
    return panel


def _build_panels(layout: Layout, draws: Mapping[str, _CompDraw], problem: Problem, rng: np.random.Generator) -> PanelSet:
    queries: list[PanelEntities] = []
    for r in range(3):
        for c in range(3):
            panel: PanelEntities = {}
            for comp in layout.components:
                panel[comp.name] = _entities_for_cell(comp, draws[comp.name], r, c, rng)
            queries.append(panel)
    candidates: list[PanelEntities] = []
    for i, cand in enumerate(problem.candidates):
        if i == problem.truth_index:
            candidates.append(queries[8])  # the answer is the missing panel itself
        else:
            candidates.append(_candidate_entities(layout, cand, rng))
    return PanelSet(queries=queries, candidates=candidates)


def generate_corpus(spec: GenSpec, with_panels: bool = False) -> Iterator[tuple[Problem, PanelSet | None]]:
    """Yield ``count`` problems, cycling through the spec's configurations
    so they stay equally distributed."""
    for i in range(spec.count):
        config = spec.configs[i % len(spec.configs)]
        rng = rng_for(spec.seed, i)
        pid = f"{spec.scheme}_{config.value}_{spec.seed:016x}_{i:06d}"
        problem, panels = generate_problem(
            config, spec.scheme, spec.uniformity_noise, rng, pid, spec.panel_px
        )
        yield problem, (panels if with_panels else None)
