"""Command-line harness: generate corpora, build rule pools, solve and
evaluate, study accuracy vs. training-set size, and run perception over
image directories.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Report files never embed timing, so identical seeds reproduce identical
bytes; wall-clock goes to stdout only.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    ALL_CONFIGURATIONS,
    AttributeKind,
    CONFIG_DISPLAY,
    Configuration,
    Problem,
    get_layout,
)
from .dataio import (
    import_external_attributes,
    problem_to_record,
    read_corpus,
    write_corpus,
    write_records,
)
from .errors import RpmkitError, TrainingDataError
from .generator import GenSpec, generate_corpus
from .rules import RulePool, induce_from_sample, is_degenerate_sample, pool_insert
from .solver import SolveReport, solve_problem
from . import vision

_CONFIG_ALIASES = {c.value: c for c in ALL_CONFIGURATIONS}
_CONFIG_ALIASES.update({"2x2": Configuration.GRID22, "3x3": Configuration.GRID33})


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we reserve that for data errors
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# train / eval / shrink operations
# ---------------------------------------------------------------------------


@dataclass
class TrainSummary:
    pool: RulePool
    samples: int
    degenerate: int

    def format_text(self) -> str:
        lines = [f"trained on {self.samples} problems ({self.degenerate} degenerate, flagged)"]
        lines.append(f"pool size: {len(self.pool)} distinct rules")
        per_attr: dict[str, list[str]] = {}
        for (role, attr, token), count in sorted(self.pool.entries.items()):
            per_attr.setdefault(f"{role}/{attr.value}", []).append(f"{token}(x{count})")
        for key, kinds in sorted(per_attr.items()):
            lines.append(f"  {key}: {', '.join(kinds)}")
        return "\n".join(lines) + "\n"


def run_train(problems: Sequence[Problem], pool_path=None) -> TrainSummary:
    """Build the rule pool by induction over every truth-completed problem."""
    pool = RulePool()
    degenerate = 0
    for problem in problems:
        if problem.truth_index is None:
            raise TrainingDataError(f"problem {problem.id} lacks a ground-truth index")
        if is_degenerate_sample(problem.completed_matrices(problem.truth_index)):
            degenerate += 1
        pool_insert(pool, induce_from_sample(problem))
    if pool_path is not None:
        pool.save(pool_path)
    return TrainSummary(pool=pool, samples=len(problems), degenerate=degenerate)


@dataclass
class EvalReport:
    """Per-configuration and overall accuracy, plus the evidence stream."""

    per_config: dict[str, tuple[int, int]]  # config -> (correct, total)
    abstentions: int
    pool_size: int
    reports: list[SolveReport] = field(default_factory=list)
    truths: list[int] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def total(self) -> int:
        return sum(t for _c, t in self.per_config.values())

    @property
    def correct(self) -> int:
        return sum(c for c, _t in self.per_config.values())

    @property
    def overall(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def accuracy(self, config: str) -> float:
        c, t = self.per_config.get(config, (0, 0))
        return c / t if t else 0.0

    def format_table(self) -> str:
        configs = [c for c in ALL_CONFIGURATIONS if c.value in self.per_config]
        headers = ["Acc"] + [CONFIG_DISPLAY[c] for c in configs]
        row = [f"{100 * self.overall:.1f}%"] + [f"{100 * self.accuracy(c.value):.1f}%" for c in configs]
        widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
        lines = [
            "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
            "  ".join(v.ljust(w) for v, w in zip(row, widths)),
        ]
        lines.append(
            f"correct {self.correct}/{self.total}, abstentions {self.abstentions}, "
            f"pool size {self.pool_size}"
        )
        return "\n".join(lines) + "\n"

    def to_records(self):
        yield {
            "kind": "summary",
            "per_config": {k: {"correct": c, "total": t} for k, (c, t) in sorted(self.per_config.items())},
            "overall": round(self.overall, 6),
            "abstentions": self.abstentions,
            "pool_size": self.pool_size,
        }
        for report, truth in zip(self.reports, self.truths):
            yield {"kind": "problem", **report.to_record(truth_index=truth)}


def _solve_batch(problems: Sequence[Problem], pool: RulePool, workers: int) -> list[SolveReport]:
    if workers <= 1 or len(problems) < 2:
        return [solve_problem(p, pool) for p in problems]
    import multiprocessing as mp

    global _WORK_STATE
    _WORK_STATE = (problems, pool)
    try:
        ctx = mp.get_context("fork")
        with ctx.Pool(workers) as mpool:
            return mpool.map(_solve_index, range(len(problems)), chunksize=64)
    finally:
        _WORK_STATE = None


_WORK_STATE = None


def _solve_index(i: int) -> SolveReport:
    problems, pool = _WORK_STATE
    return solve_problem(problems[i], pool)


def run_eval(problems: Sequence[Problem], pool: RulePool, workers: int = 1) -> EvalReport:
    """Solve every problem and tally accuracy per configuration; results
    are independent of worker count and corpus order."""
    start = time.perf_counter()
    for problem in problems:
        if problem.truth_index is None:
            raise TrainingDataError(f"problem {problem.id} lacks a ground-truth index")
    reports = _solve_batch(problems, pool, workers)
    per_config: dict[str, tuple[int, int]] = {}
    abstentions = 0
    truths = []
    for problem, report in zip(problems, reports):
        c, t = per_config.get(problem.config.value, (0, 0))
        correct = report.chosen_index == problem.truth_index
        per_config[problem.config.value] = (c + int(correct), t + 1)
        abstentions += int(report.abstained)
        truths.append(problem.truth_index)
    return EvalReport(
        per_config=dict(sorted(per_config.items())),
        abstentions=abstentions,
        pool_size=len(pool),
        reports=reports,
        truths=truths,
        wall_clock=time.perf_counter() - start,
    )


@dataclass
class ShrinkReport:
    sizes: list[int]
    seeds: list[int]
    accuracies: dict[tuple[int, int], float]  # (size, seed) -> accuracy

    def mean_for(self, size: int) -> float:
        return sum(self.accuracies[(size, s)] for s in self.seeds) / len(self.seeds)

    def format_table(self) -> str:
        header = ["size"] + [f"seed{s}" for s in self.seeds] + ["mean"]
        rows = []
        for size in self.sizes:
            row = [str(size)]
            row += [f"{100 * self.accuracies[(size, s)]:.2f}%" for s in self.seeds]
            row += [f"{100 * self.mean_for(size):.2f}%"]
            rows.append(row)
        widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        for row in rows:
            lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
        return "\n".join(lines) + "\n"

    def to_records(self):
        for size in self.sizes:
            rec = {"kind": "shrink", "size": size, "mean": round(self.mean_for(size), 6)}
            rec["per_seed"] = {str(s): round(self.accuracies[(size, s)], 6) for s in self.seeds}
            yield rec


def run_shrink(
    problems: Sequence[Problem],
    sizes: Sequence[int],
    seeds: Sequence[int],
    holdout: int = 500,
    workers: int = 1,
) -> ShrinkReport:
    """Accuracy vs. training-set size: per (size, seed), train a pool on a
    uniform subsample (without replacement) of the training split and
    evaluate on the fixed held-out tail."""
    if holdout >= len(problems):
        raise TrainingDataError(f"holdout {holdout} leaves no training data (corpus {len(problems)})")
    train = problems[: len(problems) - holdout]
    held = problems[len(problems) - holdout:]
    for size in sizes:
        if size > len(train):
            raise TrainingDataError(f"training size {size} exceeds available {len(train)} problems")
    accuracies: dict[tuple[int, int], float] = {}
    for size in sizes:
        for seed in seeds:
            rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), size]))
            picks = rng.choice(len(train), size=size, replace=False)
            subset = [train[int(i)] for i in picks]
            pool = run_train(subset).pool
            report = run_eval(held, pool, workers=workers)
            accuracies[(size, seed)] = report.overall
    return ShrinkReport(sizes=list(sizes), seeds=list(seeds), accuracies=accuracies)


# ---------------------------------------------------------------------------
# perception over image directories
# ---------------------------------------------------------------------------

_PANEL_RE = re.compile(r"^(?P<pid>.+)_(?P<kind>[qc])(?P<idx>[0-7])\.png$")


def perceive_directory(images_dir, config: Configuration, panel_px: int = 80) -> list[dict]:
    """Rebuild attribute records from per-panel PNGs named
    ``{problem_id}_{q0..q7|c0..c7}.png``."""
    layout = get_layout(config, panel_px)
    groups: dict[str, dict[str, str]] = {}
    for fname in sorted(os.listdir(images_dir)):
        m = _PANEL_RE.match(fname)
        if not m:
            continue
        groups.setdefault(m.group("pid"), {})[m.group("kind") + m.group("idx")] = os.path.join(
            images_dir, fname
        )
    records = []
    for pid in sorted(groups):
        panels = groups[pid]
        missing = [k for k in [f"q{i}" for i in range(8)] + [f"c{i}" for i in range(8)] if k not in panels]
        if missing:
            raise RpmkitError(f"problem {pid}: missing panels {missing}")
        cells = {}
        for i in range(8):
            perceived = vision.perceive_panel(vision.load_png(panels[f"q{i}"]), layout)
            cells[(i // 3, i % 3)] = perceived
        matrices = {}
        for ci, comp in enumerate(layout.components):
            matrices[comp.name] = {}
            for kind in (
                AttributeKind.NUMBER,
                AttributeKind.POSITION,
                AttributeKind.TYPE,
                AttributeKind.SIZE,
                AttributeKind.COLOR,
            ):
                rows = []
                for r in range(3):
                    row = []
                    for c in range(3):
                        if (r, c) == (2, 2):
                            row.append(None)
                        else:
                            row.append(cells[(r, c)][ci].as_values()[kind])
                    rows.append(row)
                matrices[comp.name][kind.value] = rows
        candidates = []
        for i in range(8):
            perceived = vision.perceive_panel(vision.load_png(panels[f"c{i}"]), layout)
            candidates.append(
                {
                    comp.name: {k.value: v for k, v in perceived[ci].as_values().items()}
                    for ci, comp in enumerate(layout.components)
                }
            )
        records.append(
            {
                "id": pid,
                "config": config.value,
                "panel_px": panel_px,
                "matrices": matrices,
                "candidates": candidates,
                "truth_index": None,
                "rules": None,
                "raster_dir": None,
            }
        )
    return records


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="rpmkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a problem corpus")
    g.add_argument("--config", default="all", help="configuration name or 'all'")
    g.add_argument("--scheme", choices=("raven", "iraven"), default="iraven")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--noise", type=float, default=0.0, help="uniformity-noise probability")
    g.add_argument("--render", action="store_true", help="also write per-panel PNGs")
    g.add_argument("--panel-px", type=int, default=80)
    g.add_argument("--out", required=True, help="output directory")

    t = sub.add_parser("train", help="build a rule pool from a corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True, help="pool output path")

    s = sub.add_parser("solve", help="solve a corpus and write per-problem reports")
    s.add_argument("--corpus", required=True)
    s.add_argument("--pool", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--workers", type=int, default=1)

    e = sub.add_parser("eval", help="solve and tally per-configuration accuracy")
    e.add_argument("--corpus", required=True)
    e.add_argument("--pool", required=True)
    e.add_argument("--report", default=None, help="optional machine-readable report path")
    e.add_argument("--workers", type=int, default=1)

    k = sub.add_parser("shrink", help="accuracy vs. training-set size study")
    k.add_argument("--corpus", required=True)
    k.add_argument("--sizes", required=True, help="comma-separated training sizes")
    k.add_argument("--seeds", required=True, help="comma-separated subsampling seeds")
    k.add_argument("--holdout", type=int, default=500)
    k.add_argument("--out", default=None, help="optional machine-readable table path")
    k.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("perceive", help="recover attributes from panel PNGs")
    p.add_argument("--images", required=True)
    p.add_argument("--layout", required=True, help="configuration name")
    p.add_argument("--panel-px", type=int, default=80)
    p.add_argument("--out", required=True)
    return parser


def _parse_configs(text: str) -> tuple[Configuration, ...]:
    if text == "all":
        return ALL_CONFIGURATIONS
    configs = []
    for token in text.split(","):
        token = token.strip().lower()
        if token not in _CONFIG_ALIASES:
            raise _UsageError(f"unknown configuration {token!r} (choose from {sorted(_CONFIG_ALIASES)})")
        configs.append(_CONFIG_ALIASES[token])
    return tuple(configs)


def _cmd_generate(args) -> int:
    spec = GenSpec(
        configs=_parse_configs(args.config),
        scheme=args.scheme,
        uniformity_noise=args.noise,
        seed=args.seed,
        count=args.count,
        panel_px=args.panel_px,
    )
    os.makedirs(args.out, exist_ok=True)
    raster_dir = os.path.join(args.out, "rasters") if args.render else None
    if raster_dir:
        os.makedirs(raster_dir, exist_ok=True)

    problems = []
    for problem, panels in generate_corpus(spec, with_panels=args.render):
        if raster_dir:
            layout = problem.layout
            for i in range(8):
                raster = vision.render_panel(panels.queries[i], layout)
                vision.save_png(raster, os.path.join(raster_dir, f"{problem.id}_q{i}.png"))
            for i in range(8):
                raster = vision.render_panel(panels.candidates[i], layout)
                vision.save_png(raster, os.path.join(raster_dir, f"{problem.id}_c{i}.png"))
            problem.raster_dir = "rasters"
        problems.append(problem)
    corpus_path = os.path.join(args.out, "corpus.jsonl")
    manifest = write_corpus(problems, corpus_path, gen_spec=spec)
    print(f"wrote {manifest.total} problems to {corpus_path}")
    for config, count in manifest.counts.items():
        print(f"  {config}: {count}")
    return 0


def _cmd_train(args) -> int:
    problems, _manifest = read_corpus(args.corpus)
    summary = run_train(problems, pool_path=args.out)
    sys.stdout.write(summary.format_text())
    print(f"pool written to {args.out}")
    return 0


def _cmd_solve(args) -> int:
    problems, _manifest = read_corpus(args.corpus)
    pool = RulePool.load(args.pool)
    reports = _solve_batch(problems, pool, args.workers)
    write_records(
        (r.to_record(truth_index=p.truth_index) for p, r in zip(problems, reports)),
        args.report,
    )
    answered = sum(1 for r in reports if not r.abstained)
    print(f"solved {len(problems)} problems ({answered} answered, {len(problems) - answered} abstained)")
    print(f"reports written to {args.report}")
    return 0


def _cmd_eval(args) -> int:
    problems, _manifest = read_corpus(args.corpus)
    pool = RulePool.load(args.pool)
    report = run_eval(problems, pool, workers=args.workers)
    sys.stdout.write(report.format_table())
    print(f"wall-clock: {report.wall_clock:.2f}s")
    if args.report:
        write_records(report.to_records(), args.report)
        print(f"report written to {args.report}")
    return 0


def _cmd_shrink(args) -> int:
    problems, _manifest = read_corpus(args.corpus)
    sizes = [int(v) for v in args.sizes.split(",") if v.strip()]
    seeds = [int(v) for v in args.seeds.split(",") if v.strip()]
    if not sizes or not seeds:
        raise _UsageError("--sizes and --seeds must be non-empty CSV lists")
    report = run_shrink(problems, sizes, seeds, holdout=args.holdout, workers=args.workers)
    sys.stdout.write(report.format_table())
    if args.out:
        write_records(report.to_records(), args.out)
        print(f"table written to {args.out}")
    return 0


def _cmd_perceive(args) -> int:
    configs = _parse_configs(args.layout)
    if len(configs) != 1:
        raise _UsageError("--layout expects exactly one configuration")
    records = perceive_directory(args.images, configs[0], panel_px=args.panel_px)
    write_records(records, args.out)
    print(f"perceived {len(records)} problems into {args.out}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "solve": _cmd_solve,
    "eval": _cmd_eval,
    "shrink": _cmd_shrink,
    "perceive": _cmd_perceive,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except RpmkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
