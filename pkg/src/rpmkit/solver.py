"""Testing-phase procedure: find pool rules consistent with the two
complete rows of a query, predict the missing cell per attribute, and
score the eight candidates against those predictions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import AttributeKind, AttributeMatrix, Layout, Problem, REASONED_KINDS, popcount
from .errors import ContractViolation, EmptyPoolError
from .rules import Rule, RulePool, check_consistency, predict_value


@dataclass(frozen=True)
class PredictedConstraint:
    """One rule's prediction for cell (3,3) of one attribute matrix."""

    component: str
    attribute: AttributeKind
    predicted_value: int
    source_rule: Rule


@dataclass
class SolveReport:
    """Solver output for one problem: chosen index (or abstention), the
    per-candidate scores, and the evidence behind them."""

    problem_id: str
    chosen_index: int | None
    scores: list[int]
    constraints: list[PredictedConstraint]
    feasible_rules: dict[tuple[str, AttributeKind], list[Rule]]
    tie: bool = False

    @property
    def abstained(self) -> bool:
        return self.chosen_index is None

    def to_record(self, truth_index: int | None = None) -> dict:
        rec = {
            "id": self.problem_id,
            "chosen": self.chosen_index,
            "scores": self.scores,
            "abstained": self.abstained,
            "tie": self.tie,
            "constraints": [
                {
                    "component": c.component,
                    "attribute": c.attribute.value,
                    "predicted": c.predicted_value,
                    "rule": c.source_rule.token,
                }
                for c in self.constraints
            ],
        }
        if truth_index is not None:
            rec["truth"] = truth_index
            rec["correct"] = self.chosen_index == truth_index
        return rec


def predict_attribute(rule: Rule, matrix: AttributeMatrix, slot_count: int = 1) -> int:
    """Apply a consistent rule to the third row to predict cell (3,3)."""
    return predict_value(rule, matrix, slot_count=slot_count)


def find_feasible_rules(problem: Problem, pool: RulePool) -> dict[tuple[str, AttributeKind], list[Rule]]:
    """Every pool rule for this problem's component roles that reproduces
    the two observed rows; an attribute may map to zero or several rules."""
    if len(pool) == 0:
        raise EmptyPoolError("cannot solve against an empty rule pool")
    layout = problem.layout
    feasible: dict[tuple[str, AttributeKind], list[Rule]] = {}
    for comp in layout.components:
        mats = problem.matrices[comp.name]
        for kind in REASONED_KINDS:
            mat = mats.get(kind)
            if mat is None:
                continue
            hits = [
                rule
                for rule in pool.rules_for(comp.role, kind)
                if check_consistency(rule, mat, slot_count=comp.slot_count)
            ]
            if hits:
                feasible[(comp.name, kind)] = hits
    return feasible


def build_constraints(problem: Problem, feasible: Mapping[tuple[str, AttributeKind], list[Rule]]) -> list[PredictedConstraint]:
    """Predictions for every feasible rule, dropping any that leave the
    attribute's valid range (an out-of-range prediction means the rule
    cannot extend to this row)."""
    layout = problem.layout
    constraints: list[PredictedConstraint] = []
    for (comp_name, kind), rules in feasible.items():
        comp = layout.component(comp_name)
        mat = problem.matrices[comp_name][kind]
        for rule in rules:
            value = predict_attribute(rule, mat, slot_count=comp.slot_count)
            if not comp.admissible_value(kind, value):
                continue
            constraints.append(PredictedConstraint(comp_name, kind, value, rule))
    return constraints


def score_candidates(constraints: Sequence[PredictedConstraint], candidates: Sequence) -> list[int]:
    """Score = number of constrained attributes whose prediction set
    contains the candidate's value.  Multiple feasible rules for one
    attribute are disjunctive; unconstrained attributes score nothing."""
    if len(candidates) != 8:
        raise ContractViolation(f"expected 8 candidates, got {len(candidates)}")
    groups: dict[tuple[str, AttributeKind], set[int]] = {}
    for c in constraints:
        groups.setdefault((c.component, c.attribute), set()).add(c.predicted_value)
    scores = []
    for cand in candidates:
        score = 0
        for (comp_name, kind), predictions in groups.items():
            if cand[comp_name].get(kind) in predictions:
                score += 1
        scores.append(score)
    return scores


def solve_problem(problem: Problem, pool: RulePool) -> SolveReport:
    """Full testing-phase pass; abstains (no chosen index) when nothing is
    constrained, and breaks score ties toward the lowest candidate index."""
    feasible = find_feasible_rules(problem, pool)
    constraints = build_constraints(problem, feasible)
    scores = score_candidates(constraints, problem.candidates)
    best = max(scores) if scores else 0
    if best <= 0:
        return SolveReport(problem.id, None, scores, constraints, feasible)
    winners = [i for i, s in enumerate(scores) if s == best]
    return SolveReport(
        problem.id,
        winners[0],
        scores,
        constraints,
        feasible,
        tie=len(winners) > 1,
    )
