"""Inference glue: render samples through a template, encode, score the
mask, and regroup scores into per-impression ranking lists or flat
prediction tables (JSON lines / CSV with impression_id, candidate_id,
template_id, p_pos)."""

from __future__ import annotations

import csv
import json
from typing import Sequence

import numpy as np

from .backends.base import MaskedLMBackend
from .corpus import Sample
from .evaluation import ScoredImpression
from .templates import TemplateSpec, render


def encode_samples(backend: MaskedLMBackend, template: TemplateSpec,
                   samples: Sequence[Sample], max_len: int | None = None):
    """Render and tokenize each sample under the template."""
    return [backend.encode(render(template, s.user_text, s.candidate_text),
                           max_len=max_len)
            for s in samples]


def score_samples(backend: MaskedLMBackend, template: TemplateSpec,
                  samples: Sequence[Sample], max_len: int | None = None,
                  batch_size: int = 32, normalize: str = "pair"
                  ) -> np.ndarray:
    """Positive-answer probability for every sample, in input order."""
    answers = backend.answer_ids(template.answer_space)
    encoded = encode_samples(backend, template, samples, max_len=max_len)
    return backend.score_mask(encoded, answers, batch_size=batch_size,
                              normalize=normalize)


def scored_impressions(samples: Sequence[Sample], scores: np.ndarray
                       ) -> list[ScoredImpression]:
    """Group flat (sample, score) pairs into per-impression entries,
    preserving candidate order within each impression."""
    if len(samples) != len(scores):
        raise ValueError(f"{len(samples)} samples vs {len(scores)} scores")
    groups: dict[str, list[tuple[str, float, int]]] = {}
    order: list[str] = []
    for sample, score in zip(samples, scores):
        if sample.impression_id not in groups:
            groups[sample.impression_id] = []
            order.append(sample.impression_id)
        groups[sample.impression_id].append(
            (sample.candidate_id, float(score), sample.label))
    return [ScoredImpression(impression_id=imp, entries=tuple(groups[imp]))
            for imp in order]


def score_impressions(backend: MaskedLMBackend, template: TemplateSpec,
                      samples: Sequence[Sample],
                      max_len: int | None = None, batch_size: int = 32,
                      normalize: str = "pair") -> list[ScoredImpression]:
    scores = score_samples(backend, template, samples, max_len=max_len,
                           batch_size=batch_size, normalize=normalize)
    return scored_impressions(samples, scores)


def prediction_rows(samples: Sequence[Sample], scores: np.ndarray,
                    template_id: str) -> list[dict]:
    if len(samples) != len(scores):
        raise ValueError(f"{len(samples)} samples vs {len(scores)} scores")
    return [
        {"impression_id": s.impression_id, "candidate_id": s.candidate_id,
         "template_id": template_id, "p_pos": float(score), "label": s.label}
        for s, score in zip(samples, scores)
    ]


PREDICTION_FIELDS = ["impression_id", "candidate_id", "template_id", "p_pos",
                     "label"]


def write_predictions_jsonl(rows: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


def read_predictions_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_predictions_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=PREDICTION_FIELDS)
        writer.writeheader()
        writer.writerows({k: row.get(k) for k in PREDICTION_FIELDS}
                         for row in rows)
