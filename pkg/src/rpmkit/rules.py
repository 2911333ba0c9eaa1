"""Rule induction over attribute matrices.

Each attribute of a completed question panel gives a small linear system:
the two left columns of the 3x3 value matrix map onto the third.  Fitting
that system by least squares and inspecting the coefficient pattern
classifies the panel into one of four human-readable rule families
(constant rows, row progression, row arithmetic, cyclic three-value
distribution).  Position bitmasks do not fit the scalar linear model and
get a dedicated set-algebra detector instead.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    AttributeKind,
    AttributeMatrix,
    Layout,
    Problem,
    REASONED_KINDS,
    popcount,
)
from .errors import ContractViolation

#: Cyclic row permutation: row i takes the value of row i+1 ("up").
S_UP = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
#: The opposite cycle: row i takes the value of row i-1 ("down").
S_DOWN = S_UP.T.copy()

#: Tolerance for matching fitted coefficients against canonical patterns.
#: Attribute codes are small integers, so exact arithmetic is near-lossless
#: and a tight tolerance rejects accidental fits.
CLASSIFY_TOL = 1e-6


@dataclass(frozen=True)
class LinearFit:
    """Least-squares solution for one attribute's 3-row system.

    The offset vector absorbs whatever the linear part cannot express, so
    the reconstruction residual is zero up to floating-point noise.
    """

    theta: tuple[float, float]
    phi: tuple[float, float, float]
    rank: int
    residual: float


def least_squares_induce(a12: np.ndarray, a3: Sequence[float]) -> LinearFit:
    """Fit ``a3 ~= a12 @ theta + phi`` for a 3x2 design matrix.

    Uses the closed-form normal-equation solve when the 2x2 normal matrix
    is invertible and the minimum-norm pseudo-inverse solution otherwise
    (constant panels always land on the pseudo-inverse path).
    """
    a12 = np.asarray(a12, dtype=float)
    a3 = np.asarray(a3, dtype=float)
    if a12.shape != (3, 2) or a3.shape != (3,):
        raise ContractViolation(f"expected 3x2 design and 3-vector target, got {a12.shape} and {a3.shape}")
    if not (np.all(np.isfinite(a12)) and np.all(np.isfinite(a3))):
        raise ContractViolation("attribute values must be finite")

    gram = a12.T @ a12
    det = gram[0, 0] * gram[1, 1] - gram[0, 1] * gram[1, 0]
    scale = max(1.0, gram[0, 0]) * max(1.0, gram[1, 1])
    if abs(det) > 1e-9 * scale:
        rank = 2
        inv = np.array([[gram[1, 1], -gram[0, 1]], [-gram[1, 0], gram[0, 0]]]) / det
        theta = inv @ (a12.T @ a3)
    else:
        rank = 1 if np.any(a12 != 0.0) else 0
        theta = np.linalg.pinv(a12) @ a3
    phi = a3 - a12 @ theta
    residual = float(np.max(np.abs(a3 - (a12 @ theta + phi))))
    return LinearFit(theta=(float(theta[0]), float(theta[1])), phi=tuple(float(v) for v in phi),
                     rank=rank, residual=residual)


def fit_columns(a1: Sequence[float], a2: Sequence[float], a3: Sequence[float]) -> LinearFit:
    """Convenience wrapper building the 3x2 design from two columns."""
    return least_squares_induce(np.column_stack([a1, a2]), a3)


class RuleKind(str, enum.Enum):
    CONSTANT = "constant"
    PROGRESSION = "progression"
    ARITHMETIC_PLUS = "arithmetic_plus"
    ARITHMETIC_MINUS = "arithmetic_minus"
    DISTRIBUTE_THREE_UP = "distribute_three_up"
    DISTRIBUTE_THREE_DOWN = "distribute_three_down"
    POSITION_SHIFT = "position_shift"
    POSITION_UNION = "position_union"
    POSITION_DIFFERENCE = "position_difference"
    UNCLASSIFIED = "unclassified"

    def __str__(self) -> str:
        return self.value


_D3_KINDS = (RuleKind.DISTRIBUTE_THREE_UP, RuleKind.DISTRIBUTE_THREE_DOWN)
_D3_MATRICES = {RuleKind.DISTRIBUTE_THREE_UP: S_UP, RuleKind.DISTRIBUTE_THREE_DOWN: S_DOWN}

#: canonical linear coefficients per family; the cyclic family's pair
#: s/(p+s) depends on the observed first column and stays symbolic here.
CANONICAL_THETA = {
    RuleKind.CONSTANT: (0.5, 0.5),
    RuleKind.PROGRESSION: (-1.0, 2.0),
    RuleKind.ARITHMETIC_PLUS: (1.0, 1.0),
    RuleKind.ARITHMETIC_MINUS: (1.0, -1.0),
}


@dataclass(frozen=True)
class Rule:
    """A canonical reasoning rule for one attribute.

    Cyclic-distribution rules store only the direction; their offset vector
    depends on the observed first column and is recomputed at application
    time.  Position shifts carry the slot offset.
    """

    attribute: AttributeKind
    kind: RuleKind
    shift: int | None = None

    def __post_init__(self):
        if self.kind == RuleKind.POSITION_SHIFT and not self.shift:
            raise ContractViolation("position shift rule requires a nonzero offset")

    @property
    def token(self) -> str:
        if self.kind == RuleKind.POSITION_SHIFT:
            return f"{self.kind.value}_{self.shift}"
        return self.kind.value

    @property
    def canonical_theta(self) -> tuple[float, float] | None:
        return CANONICAL_THETA.get(self.kind)

    @property
    def phi_form(self) -> str:
        return "distribute_three" if self.kind in _D3_KINDS else "zero"

    @classmethod
    def from_token(cls, attribute: AttributeKind, token: str) -> "Rule":
        if token.startswith(RuleKind.POSITION_SHIFT.value + "_"):
            offset = int(token.rsplit("_", 1)[1])
            return cls(attribute, RuleKind.POSITION_SHIFT, offset)
        return cls(attribute, RuleKind(token))


def _close(a, b, tol=CLASSIFY_TOL) -> bool:
    return bool(np.all(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) <= tol))


def classify_rule(fit: LinearFit, a1, a2, a3, tol: float = CLASSIFY_TOL) -> RuleKind:
    """Map a fit (plus the columns that produced it) to a rule family.

    Checks run in a fixed precedence: equal columns always classify as
    constant, then the progression/arithmetic coefficient patterns with a
    zero offset, then the two cyclic permutations, else unclassified.
    """
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    a3 = np.asarray(a3, dtype=float)
    if _close(a1, a2, tol) and _close(a2, a3, tol):
        return RuleKind.CONSTANT
    if _close(fit.phi, (0.0, 0.0, 0.0), tol):
        if _close(fit.theta, (-1.0, 2.0), tol):
            return RuleKind.PROGRESSION
        if _close(fit.theta, (1.0, 1.0), tol):
            return RuleKind.ARITHMETIC_PLUS
        if _close(fit.theta, (1.0, -1.0), tol):
            return RuleKind.ARITHMETIC_MINUS
    for kind, s in _D3_MATRICES.items():
        if _close(a2, s @ a1, tol) and _close(a3, s @ a2, tol):
            return kind
    return RuleKind.UNCLASSIFIED


def distribute_three_theta_phi(a1, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form coefficients for a cyclic-distribution instance: the
    equal pair s/(p+s) and the first-column-dependent offset."""
    a1 = np.asarray(a1, dtype=float)
    p = float(a1 @ a1)
    sv = float(a1 @ (s @ a1))
    q = sv / (p + sv)
    theta = np.array([q, q])
    phi = (s.T - q * (np.eye(3) + s)) @ a1
    return theta, phi


def _rot_mask(mask: int, k: int, slots: int) -> int:
    k %= slots
    full = (1 << slots) - 1
    return ((mask << k) | (mask >> (slots - k))) & full if k else mask


def detect_position_rule(p1: Sequence[int], p2: Sequence[int], p3: Sequence[int], slot_count: int) -> Rule | None:
    """Classify three bitmask columns of a completed position matrix.

    Checks are ordered constant, union, difference, cyclic slot shift,
    cyclic row distribution; the first match wins.  Returns ``None`` when
    nothing matches.
    """
    full = (1 << slot_count) - 1
    cols = (tuple(p1), tuple(p2), tuple(p3))
    for col in cols:
        for m in col:
            if not (0 <= m <= full):
                raise ContractViolation(f"mask {m:#b} invalid for {slot_count} slots")
    rows = list(zip(*cols))

    attr = AttributeKind.POSITION
    if all(r[0] == r[1] == r[2] for r in rows):
        return Rule(attr, RuleKind.CONSTANT)
    if all(r[2] == (r[0] | r[1]) for r in rows):
        return Rule(attr, RuleKind.POSITION_UNION)
    if all(r[2] == (r[0] & ~r[1] & full) for r in rows):
        return Rule(attr, RuleKind.POSITION_DIFFERENCE)
    for k in range(1, slot_count):
        if all(
            r[1] == _rot_mask(r[0], k, slot_count) and r[2] == _rot_mask(r[1], k, slot_count)
            for r in rows
        ):
            return Rule(attr, RuleKind.POSITION_SHIFT, k)
    for kind, s in _D3_MATRICES.items():
        perm = [int(np.argmax(s[i])) for i in range(3)]
        if all(cols[1][i] == cols[0][perm[i]] for i in range(3)) and all(
            cols[2][i] == cols[1][perm[i]] for i in range(3)
        ):
            return Rule(attr, kind)
    return None


# ---------------------------------------------------------------------------
# Rule application and consistency
# ---------------------------------------------------------------------------


def _cycle_perm(kind: RuleKind) -> list[int]:
    s = _D3_MATRICES[kind]
    return [int(np.argmax(s[i])) for i in range(3)]


def rule_holds(token: str, matrix: AttributeMatrix, slot_count: int = 1) -> bool:
    """True iff a completed matrix satisfies the rule named by ``token``."""
    rule = Rule.from_token(matrix.kind, token)
    a1, a2, a3 = matrix.a1, matrix.a2, matrix.a3
    if np.any(np.isnan(a3)):
        raise ContractViolation("rule_holds requires a completed matrix")
    k = rule.kind
    if k == RuleKind.CONSTANT:
        return _close(a1, a2) and _close(a2, a3)
    if k == RuleKind.PROGRESSION:
        return _close(a3, 2 * a2 - a1) and not _close(a1, a2)
    if k == RuleKind.ARITHMETIC_PLUS:
        return _close(a3, a1 + a2)
    if k == RuleKind.ARITHMETIC_MINUS:
        return _close(a3, a1 - a2)
    if k in _D3_KINDS:
        s = _D3_MATRICES[k]
        return _close(a2, s @ a1) and _close(a3, s @ a2)
    cols = [[int(v) for v in col] for col in (a1, a2, a3)]
    if k == RuleKind.POSITION_UNION:
        return all(cols[2][i] == cols[0][i] | cols[1][i] for i in range(3))
    if k == RuleKind.POSITION_DIFFERENCE:
        full = (1 << slot_count) - 1
        return all(cols[2][i] == cols[0][i] & ~cols[1][i] & full for i in range(3))
    if k == RuleKind.POSITION_SHIFT:
        return all(
            cols[1][i] == _rot_mask(cols[0][i], rule.shift, slot_count)
            and cols[2][i] == _rot_mask(cols[1][i], rule.shift, slot_count)
            for i in range(3)
        )
    return False


def check_consistency(rule: Rule, matrix: AttributeMatrix, slot_count: int = 1) -> bool:
    """True iff applying ``rule`` to the two observed rows reproduces their
    third entries exactly; cyclic rules additionally require the full
    column-permutation structure on the observed columns."""
    rows = matrix.cells
    k = rule.kind
    if k in (RuleKind.CONSTANT, RuleKind.PROGRESSION, RuleKind.ARITHMETIC_PLUS, RuleKind.ARITHMETIC_MINUS):
        for i in range(2):
            x, y, z = rows[i]
            if k == RuleKind.CONSTANT:
                if not (x == y == z):
                    return False
            elif k == RuleKind.PROGRESSION:
                if 2 * y - x != z:
                    return False
            elif k == RuleKind.ARITHMETIC_PLUS:
                if x + y != z:
                    return False
            elif x - y != z:
                return False
        return True
    if k in _D3_KINDS:
        perm = _cycle_perm(k)
        c1 = [rows[i][0] for i in range(3)]
        c2 = [rows[i][1] for i in range(3)]
        c3 = [rows[i][2] for i in range(3)]
        if any(c2[i] != c1[perm[i]] for i in range(3)):
            return False
        return all(c3[i] == c2[perm[i]] for i in range(2))
    # position set-algebra rules, rows 1-2 only (plus full-column structure
    # falls out of the row checks for shift/union/difference)
    full = (1 << slot_count) - 1
    for i in range(2):
        x, y, z = rows[i]
        if k == RuleKind.POSITION_UNION:
            if z != (x | y):
                return False
        elif k == RuleKind.POSITION_DIFFERENCE:
            if z != (x & ~y & full):
                return False
        elif k == RuleKind.POSITION_SHIFT:
            if y != _rot_mask(x, rule.shift, slot_count) or z != _rot_mask(y, rule.shift, slot_count):
                return False
        else:
            return False
    if k == RuleKind.POSITION_SHIFT:
        # the third row's observed prefix must continue the same shift
        x, y = rows[2][0], rows[2][1]
        return y == _rot_mask(x, rule.shift, slot_count)
    return True


def predict_value(rule: Rule, matrix: AttributeMatrix, slot_count: int = 1) -> int:
    """Predicted integer code for cell (3,3) under an already-consistent rule."""
    rows = matrix.cells
    x, y = rows[2][0], rows[2][1]
    k = rule.kind
    if k == RuleKind.CONSTANT:
        return int(y)
    if k == RuleKind.PROGRESSION:
        return int(2 * y - x)
    if k == RuleKind.ARITHMETIC_PLUS:
        return int(x + y)
    if k == RuleKind.ARITHMETIC_MINUS:
        return int(x - y)
    if k in _D3_KINDS:
        perm = _cycle_perm(k)
        c2 = [rows[i][1] for i in range(3)]
        return int(c2[perm[2]])
    full = (1 << slot_count) - 1
    if k == RuleKind.POSITION_UNION:
        return int(x | y)
    if k == RuleKind.POSITION_DIFFERENCE:
        return int(x & ~y & full)
    if k == RuleKind.POSITION_SHIFT:
        return int(_rot_mask(y, rule.shift, slot_count))
    raise ContractViolation(f"rule {rule.token} cannot predict values")


# ---------------------------------------------------------------------------
# Whole-sample induction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InducedRule:
    component: str  # component name within the configuration
    role: str       # structural pool key
    rule: Rule


def is_degenerate_sample(matrices: Mapping[str, Mapping[AttributeKind, AttributeMatrix]]) -> bool:
    """True when the first two rows are identical across every attribute,
    which is not enough to pin down a concrete rule."""
    for mats in matrices.values():
        for mat in mats.values():
            if mat.cells[0] != mat.cells[1]:
                return False
    return True


def induce_from_sample(problem: Problem) -> list[InducedRule]:
    """Derive one rule per (component, attribute) from a truth-completed
    problem; attributes whose three rows fit no family emit nothing."""
    if problem.truth_index is None:
        raise ContractViolation("induction requires a problem with a ground-truth index")
    layout = problem.layout
    completed = problem.completed_matrices(problem.truth_index)
    induced: list[InducedRule] = []
    for comp in layout.components:
        mats = completed[comp.name]
        for kind in REASONED_KINDS:
            mat = mats.get(kind)
            if mat is None:
                continue
            if kind == AttributeKind.POSITION:
                cols = [[int(v) for v in mat.column(j)] for j in range(3)]
                rule = detect_position_rule(cols[0], cols[1], cols[2], comp.slot_count)
                if rule is not None:
                    induced.append(InducedRule(comp.name, comp.role, rule))
                continue
            a1, a2, a3 = mat.a1, mat.a2, mat.a3
            fit = fit_columns(a1, a2, a3)
            rk = classify_rule(fit, a1, a2, a3)
            if rk != RuleKind.UNCLASSIFIED:
                induced.append(InducedRule(comp.name, comp.role, Rule(kind, rk)))
    return induced


# ---------------------------------------------------------------------------
# Rule pool
# ---------------------------------------------------------------------------


@dataclass
class RulePool:
    """Deduplicated set of (component role, attribute, rule) with
    per-entry provenance counts.

    Merging partial pools is commutative and associative, so pools built
    concurrently over corpus shards equal the sequentially built pool.
    """

    entries: dict[tuple[str, AttributeKind, str], int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def insert(self, role: str, rule: Rule, count: int = 1) -> None:
        key = (role, rule.attribute, rule.token)
        self.entries[key] = self.entries.get(key, 0) + count

    def merge(self, other: "RulePool") -> "RulePool":
        for (role, attr, token), count in other.entries.items():
            self.entries[(role, attr, token)] = self.entries.get((role, attr, token), 0) + count
        return self

    def rules_for(self, role: str, attribute: AttributeKind) -> list[Rule]:
        out = []
        for (r, attr, token), _count in sorted(self.entries.items()):
            if r == role and attr == attribute:
                out.append(Rule.from_token(attribute, token))
        return out

    def kind_set(self) -> set[tuple[str, AttributeKind, str]]:
        return set(self.entries.keys())

    def to_text(self) -> str:
        lines = [
            f"{role}\t{attr.value}\t{token}\t{count}"
            for (role, attr, token), count in sorted(
                self.entries.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2])
            )
        ]
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_text(cls, text: str) -> "RulePool":
        pool = cls()
        for ln, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ContractViolation(f"pool line {ln}: expected 4 tab-separated fields")
            role, attr, token, count = parts
            try:
                pool.entries[(role, AttributeKind(attr), token)] = int(count)
            except ValueError as exc:
                raise ContractViolation(f"pool line {ln}: {exc}") from exc
        return pool

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "RulePool":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def pool_insert(pool: RulePool, entries: Iterable[InducedRule]) -> RulePool:
    """Set-union insertion with provenance counting; returns the pool."""
    for entry in entries:
        pool.insert(entry.role, entry.rule)
    return pool
