"""Per-impression ranking metrics: AUC, MRR, NDCG@5 and NDCG@10, averaged
unweighted over impressions.

Semantics pinned for reproducibility:
  * AUC is the probability a random (positive, negative) pair is ordered
    correctly, with ties counting 0.5; impressions lacking one of the two
    classes are skipped for AUC and tallied.
  * MRR averages 1/rank over all positives; NDCG uses gain 2^label - 1 and
    discount log2(rank + 1), normalized by the ideal DCG at the same cutoff.
  * Ranking ties are broken by input candidate order (stable sort), so all
    metrics are deterministic and invariant under strictly increasing score
    transforms.

Impressions with no positive skip MRR/NDCG as well; every skip is counted
in the report so the denominators stay auditable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ScoredImpression:
    impression_id: str
    entries: tuple[tuple[str, float, int], ...]  # (candidate_id, score, label)

    def __post_init__(self):
        if not self.entries:
            raise ValueError(
                f"impression {self.impression_id}: no scored entries")
        for cid, _score, label in self.entries:
            if label not in (0, 1):
                raise ValueError(
                    f"impression {self.impression_id}: label {label!r} for "
                    f"{cid!r} is not 0/1")

    @property
    def labels(self) -> np.ndarray:
        return np.array([lab for _, _, lab in self.entries], dtype=np.int64)

    @property
    def scores(self) -> np.ndarray:
        return np.array([s for _, s, _ in self.entries], dtype=np.float64)


def _descending_order(y_score: np.ndarray) -> np.ndarray:
    """Indices sorting scores descending; ties keep input order."""
    return np.argsort(-y_score, kind="stable")


def _midranks(x: np.ndarray) -> np.ndarray:
    """Average 1-based ranks of x in ascending order (ties share the mean)."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc_score(y_true: np.ndarray, y_score: np.ndarray) -> float | None:
    """Pairwise ranking AUC with 0.5 credit for ties; None when the
    impression lacks a positive or a negative (skip signal)."""
    y_true = np.asarray(y_true)
    y_score = np.asarray(y_score, dtype=np.float64)
    n_pos = int(y_true.sum())
    n_neg = len(y_true) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _midranks(y_score)
    pos_rank_sum = float(ranks[y_true == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def mrr_score(y_true: np.ndarray, y_score: np.ndarray) -> float | None:
    """Mean over positives of 1/rank under descending score; None without a
    positive."""
    y_true = np.asarray(y_true)
    y_score = np.asarray(y_score, dtype=np.float64)
    if y_true.sum() == 0:
        return None
    ordered = y_true[_descending_order(y_score)]
    reciprocal = ordered / np.arange(1, len(ordered) + 1)
    return float(reciprocal.sum() / y_true.sum())


def ndcg_score(y_true: np.ndarray, y_score: np.ndarray, k: int) -> float | None:
    """Binary-relevance NDCG@k (gain 2^label - 1, discount log2(rank + 1));
    None without a positive."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    y_true = np.asarray(y_true)
    y_score = np.asarray(y_score, dtype=np.float64)
    if y_true.sum() == 0:
        return None
    discounts = 1.0 / np.log2(np.arange(2, len(y_true) + 2))

    def dcg(gains: np.ndarray) -> float:
        top = gains[:k].astype(np.float64)
        return float(((2.0 ** top - 1.0) * discounts[:len(top)]).sum())

    actual = dcg(y_true[_descending_order(y_score)])
    ideal = dcg(np.sort(y_true)[::-1])
    return actual / ideal


@dataclass
class MetricsReport:
    auc: float | None
    mrr: float | None
    ndcg5: float | None
    ndcg10: float | None
    n_impressions: int
    skipped: dict = field(default_factory=dict)
    per_impression: list | None = None

    def to_dict(self, include_per_impression: bool = False) -> dict:
        out = {
            "auc": self.auc,
            "mrr": self.mrr,
            "ndcg5": self.ndcg5,
            "ndcg10": self.ndcg10,
            "n_impressions": self.n_impressions,
            "skipped": dict(self.skipped),
        }
        if include_per_impression and self.per_impression is not None:
            out["per_impression"] = self.per_impression
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    def write_per_impression_csv(self, path) -> None:
        if self.per_impression is None:
            raise ValueError("report was built without per-impression rows")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["impression_id", "auc", "mrr", "ndcg5",
                                "ndcg10"])
            writer.writeheader()
            writer.writerows(self.per_impression)


def evaluate(scored: list[ScoredImpression],
             keep_per_impression: bool = True) -> MetricsReport:
    """Unweighted mean of each metric over the impressions where it is
    defined; skip tallies reported per metric."""
    if not scored:
        raise ValueError("no scored impressions to evaluate")
    sums = {"auc": 0.0, "mrr": 0.0, "ndcg5": 0.0, "ndcg10": 0.0}
    counts = {key: 0 for key in sums}
    skipped = {key: 0 for key in sums}
    rows = []
    for imp in scored:
        y_true, y_score = imp.labels, imp.scores
        values = {
            "auc": auc_score(y_true, y_score),
            "mrr": mrr_score(y_true, y_score),
            "ndcg5": ndcg_score(y_true, y_score, 5),
            "ndcg10": ndcg_score(y_true, y_score, 10),
        }
        for key, value in values.items():
            if value is None:
                skipped[key] += 1
            else:
                sums[key] += value
                counts[key] += 1
        if keep_per_impression:
            rows.append({"impression_id": imp.impression_id, **values})
    means = {key: (sums[key] / counts[key] if counts[key] else None)
             for key in sums}
    return MetricsReport(
        auc=means["auc"], mrr=means["mrr"], ndcg5=means["ndcg5"],
        ndcg10=means["ndcg10"], n_impressions=len(scored), skipped=skipped,
        per_impression=rows if keep_per_impression else None)
