"""Persistence: line-oriented problem corpora with checksummed manifests,
externally produced attribute records, and solver report streams.

Corpus records are one JSON object per line with sorted keys, so equal
inputs always serialize to identical bytes and files diff cleanly.  The
manifest travels as a sibling ``<name>.manifest`` file carrying the
format version, a generation-spec echo, per-configuration counts, and a
SHA-256 over the record bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .core import (
    AttributeKind,
    AttributeMatrix,
    Configuration,
    Problem,
    get_layout,
    validate_problem,
)
from .errors import CorpusError
from .generator import GenSpec

FORMAT_VERSION = 1


@dataclass
class CorpusManifest:
    format_version: int
    total: int
    counts: dict[str, int]
    sha256: str
    gen_spec: dict | None = None

    def to_json(self) -> str:
        payload = {
            "format_version": self.format_version,
            "total": self.total,
            "counts": self.counts,
            "sha256": self.sha256,
            "gen_spec": self.gen_spec,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CorpusManifest":
        data = json.loads(text)
        return cls(
            format_version=data["format_version"],
            total=data["total"],
            counts=data["counts"],
            sha256=data["sha256"],
            gen_spec=data.get("gen_spec"),
        )


def _matrix_to_lists(mat: AttributeMatrix) -> list[list[int | None]]:
    return [[None if v is None else int(v) for v in row] for row in mat.cells]


def problem_to_record(problem: Problem) -> dict:
    return {
        "id": problem.id,
        "config": problem.config.value,
        "panel_px": problem.panel_px,
        "matrices": {
            name: {kind.value: _matrix_to_lists(mat) for kind, mat in mats.items()}
            for name, mats in problem.matrices.items()
        },
        "candidates": [
            {name: {k.value: int(v) for k, v in attrs.items()} for name, attrs in cand.items()}
            for cand in problem.candidates
        ],
        "truth_index": problem.truth_index,
        "rules": None
        if problem.annotations is None
        else {
            name: {str(k.value if isinstance(k, AttributeKind) else k): tok for k, tok in per.items()}
            for name, per in problem.annotations.items()
        },
        "raster_dir": problem.raster_dir,
    }


def record_to_problem(record: Mapping) -> Problem:
    matrices = {
        name: {
            AttributeKind(kind): AttributeMatrix.from_rows(AttributeKind(kind), rows)
            for kind, rows in mats.items()
        }
        for name, mats in record["matrices"].items()
    }
    candidates = tuple(
        {name: {AttributeKind(k): int(v) for k, v in attrs.items()} for name, attrs in cand.items()}
        for cand in record["candidates"]
    )
    annotations = record.get("rules")
    if annotations is not None:
        annotations = {
            name: {AttributeKind(k): str(tok) for k, tok in per.items()}
            for name, per in annotations.items()
        }
    return Problem(
        id=record["id"],
        config=Configuration(record["config"]),
        matrices=matrices,
        candidates=candidates,
        truth_index=record.get("truth_index"),
        annotations=annotations,
        panel_px=record.get("panel_px", 80),
        raster_dir=record.get("raster_dir"),
    )


def _record_line(record: Mapping) -> bytes:
    return (json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def manifest_path(corpus_path: str) -> str:
    return str(corpus_path) + ".manifest"


def write_corpus(problems: Iterable[Problem], path, gen_spec: GenSpec | None = None) -> CorpusManifest:
    """Write one record per line plus the sibling manifest; byte-stable
    for equal inputs."""
    digest = hashlib.sha256()
    counts: dict[str, int] = {}
    total = 0
    try:
        with open(path, "wb") as fh:
            for problem in problems:
                line = _record_line(problem_to_record(problem))
                fh.write(line)
                digest.update(line)
                counts[problem.config.value] = counts.get(problem.config.value, 0) + 1
                total += 1
    except OSError as exc:
        raise CorpusError(f"cannot write corpus at {path}: {exc}") from exc
    manifest = CorpusManifest(
        format_version=FORMAT_VERSION,
        total=total,
        counts=dict(sorted(counts.items())),
        sha256=digest.hexdigest(),
        gen_spec=gen_spec.to_dict() if gen_spec is not None else None,
    )
    try:
        with open(manifest_path(path), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(manifest.to_json())
    except OSError as exc:
        raise CorpusError(f"cannot write manifest for {path}: {exc}") from exc
    return manifest


def read_corpus(path, validate: bool = True) -> tuple[list[Problem], CorpusManifest]:
    """Load and fully check a corpus: manifest checksum, record count,
    and (optionally) every structural invariant of every problem."""
    mpath = manifest_path(path)
    if not os.path.exists(mpath):
        raise CorpusError(f"missing manifest {mpath}")
    try:
        with open(mpath, "r", encoding="utf-8") as fh:
            manifest = CorpusManifest.from_json(fh.read())
    except (OSError, ValueError, KeyError) as exc:
        raise CorpusError(f"unreadable manifest {mpath}: {exc}") from exc
    if manifest.format_version > FORMAT_VERSION:
        raise CorpusError(
            f"unsupported corpus format version {manifest.format_version} "
            f"(this build reads up to {FORMAT_VERSION})"
        )

    problems: list[Problem] = []
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for ln, raw in enumerate(fh, start=1):
                digest.update(raw)
                try:
                    record = json.loads(raw.decode("utf-8"))
                    problem = record_to_problem(record)
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorpusError(f"{path}: malformed record at line {ln}: {exc}") from exc
                if validate:
                    violations = validate_problem(problem)
                    if violations:
                        raise CorpusError(
                            f"{path}: invalid problem at line {ln}: {violations[0]}"
                        )
                problems.append(problem)
    except OSError as exc:
        raise CorpusError(f"cannot read corpus at {path}: {exc}") from exc

    if len(problems) != manifest.total:
        raise CorpusError(
            f"{path}: checksum failure after record {len(problems)} "
            f"(manifest promises {manifest.total} records)"
        )
    if digest.hexdigest() != manifest.sha256:
        raise CorpusError(f"{path}: checksum mismatch against manifest")
    return problems, manifest


def import_external_attributes(path) -> list[Problem]:
    """Ingest attribute-only records produced by an external perception
    stage.  Records carry query matrices and 8 candidate tuples (truth
    index optional); every problem passes the same validation as
    internally generated ones.  An empty file yields an empty list."""
    problems: list[Problem] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for ln, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                try:
                    record = json.loads(raw)
                    problem = record_to_problem(record)
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorpusError(f"{path}: malformed record at line {ln}: {exc}") from exc
                if len(problem.candidates) != 8:
                    raise CorpusError(f"{path}: record at line {ln} lacks 8 candidates")
                violations = validate_problem(problem)
                if violations:
                    raise CorpusError(f"{path}: invalid record at line {ln}: {violations[0]}")
                problems.append(problem)
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    return problems


def write_records(records: Iterable[Mapping], path) -> None:
    """Write a generic line-oriented record stream (reports, external
    attribute files)."""
    try:
        with open(path, "wb") as fh:
            for record in records:
                fh.write(_record_line(record))
    except OSError as exc:
        raise CorpusError(f"cannot write records at {path}: {exc}") from exc
