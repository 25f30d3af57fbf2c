"""Multi-template score fusion: the final ranking score is the unweighted
sum of each member's positive-answer probability (optionally weighted, off
by default). Works on flat score tables keyed by (impression_id,
candidate_id) or directly on per-impression scored lists."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .evaluation import MetricsReport, ScoredImpression, evaluate

ScoreTable = dict[tuple[str, str], float]


class AlignmentError(Exception):
    """Member score tables do not cover the same (impression, candidate)
    keys."""


@dataclass(frozen=True)
class EnsembleSpec:
    template_ids: tuple[str, ...]
    checkpoints: tuple[str, ...]

    def __post_init__(self):
        if not self.template_ids:
            raise ValueError("an ensemble needs at least one member")
        if len(set(self.template_ids)) != len(self.template_ids):
            raise ValueError("ensemble members must be distinct templates")
        if len(self.checkpoints) != len(self.template_ids):
            raise ValueError("one checkpoint per member template required")


def _check_alignment(tables: Sequence[ScoreTable]) -> None:
    reference = set(tables[0])
    for i, table in enumerate(tables[1:], start=1):
        keys = set(table)
        if keys != reference:
            missing = sorted(reference - keys)[:5]
            extra = sorted(keys - reference)[:5]
            parts = []
            if missing:
                parts.append(f"missing {missing}")
            if extra:
                parts.append(f"unexpected {extra}")
            raise AlignmentError(
                f"member {i} key set differs from member 0: "
                + "; ".join(parts))


def ensemble_scores(tables: Sequence[ScoreTable],
                    weights: Sequence[float] | None = None) -> ScoreTable:
    """Fuse member tables by (weighted) sum; all members must cover the
    identical key set."""
    if not tables:
        raise ValueError("no member score tables")
    if weights is not None and len(weights) != len(tables):
        raise ValueError("one weight per member required")
    _check_alignment(tables)
    if weights is None:
        weights = [1.0] * len(tables)
    fused: ScoreTable = {}
    for key in tables[0]:
        fused[key] = sum(w * t[key] for w, t in zip(weights, tables))
    return fused


def table_from_scored(scored: Sequence[ScoredImpression]) -> ScoreTable:
    table: ScoreTable = {}
    for imp in scored:
        for cid, score, _label in imp.entries:
            key = (imp.impression_id, cid)
            if key in table:
                raise ValueError(f"duplicate scored candidate {key}")
            table[key] = score
    return table


def table_from_predictions(rows: Sequence[Mapping]) -> ScoreTable:
    """Score table from flat prediction rows (impression_id, candidate_id,
    p_pos)."""
    table: ScoreTable = {}
    for row in rows:
        key = (row["impression_id"], row["candidate_id"])
        if key in table:
            raise ValueError(f"duplicate prediction for {key}")
        table[key] = float(row["p_pos"])
    return table


def fuse_scored(members: Sequence[Sequence[ScoredImpression]],
                weights: Sequence[float] | None = None
                ) -> list[ScoredImpression]:
    """Fuse per-member scored impressions into one scored list. Candidate
    order and labels follow the first member; labels must agree across
    members."""
    if not members:
        raise ValueError("no ensemble members")
    tables = [table_from_scored(m) for m in members]
    fused_table = ensemble_scores(tables, weights=weights)
    label_by_key: dict[tuple[str, str], int] = {}
    for member in members:
        for imp in member:
            for cid, _score, label in imp.entries:
                key = (imp.impression_id, cid)
                if label_by_key.setdefault(key, label) != label:
                    raise AlignmentError(
                        f"members disagree on the label of {key}")
    fused: list[ScoredImpression] = []
    for imp in members[0]:
        entries = tuple(
            (cid, fused_table[(imp.impression_id, cid)], label)
            for cid, _score, label in imp.entries)
        fused.append(ScoredImpression(impression_id=imp.impression_id,
                                      entries=entries))
    return fused


def cross_type_ensemble(members_by_kind: Mapping[str, Sequence[ScoredImpression]]
                        ) -> tuple[list[ScoredImpression], MetricsReport]:
    """Fuse one best member per template kind (discrete, continuous, hybrid)
    and evaluate the fused ranking."""
    expected = {"discrete", "continuous", "hybrid"}
    if set(members_by_kind) != expected:
        raise ValueError(
            f"cross-type ensembling needs exactly one member per kind "
            f"{sorted(expected)}, got {sorted(members_by_kind)}")
    fused = fuse_scored([members_by_kind[k]
                         for k in ("discrete", "continuous", "hybrid")])
    return fused, evaluate(fused, keep_per_impression=False)
