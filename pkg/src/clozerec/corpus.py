"""MIND-format corpus handling: parsing, text building, sampling and splits.

News and behavior files are tab-separated in the MIND layout:

    news.tsv       news_id \t category \t subcategory \t title \t ...
    behaviors.tsv  impression_id \t user_id \t time \t history \t candidates

where ``history`` is a space-separated list of news ids (chronological,
oldest first) and ``candidates`` holds space-separated ``NEWSID-{0|1}``
tokens. Assembled sample sets are serialized as JSON lines.

All randomized operations take an explicit seed and are deterministic;
everything here is pure with respect to inputs plus that seed, so file
shards can be processed in parallel and merged.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

NCLS_MARKER = "[NCLS]"

MAX_HISTORY = 50
MAX_HISTORY_TITLE_WORDS = 10
MAX_CANDIDATE_TITLE_WORDS = 20
DEFAULT_NEG_RATIO = 4
DEFAULT_VALID_FRACTION = 0.05


class CorpusError(Exception):
    """Base class for corpus-level failures."""


class ParseError(CorpusError):
    """A malformed line or token in a news/behaviors file."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class MissingNewsError(CorpusError):
    """A candidate news id could not be resolved in the catalog."""


@dataclass(frozen=True)
class NewsArticle:
    news_id: str
    title_words: tuple[str, ...]
    category: str | None = None
    subcategory: str | None = None

    @property
    def has_empty_title(self) -> bool:
        return len(self.title_words) == 0


class NewsCatalog:
    """Id-indexed store of news articles.

    Duplicate ids during parsing keep the first occurrence;
    ``duplicates_skipped`` counts how many lines were dropped that way.
    """

    def __init__(self, articles: dict[str, NewsArticle] | None = None,
                 duplicates_skipped: int = 0):
        self.articles: dict[str, NewsArticle] = dict(articles or {})
        self.duplicates_skipped = duplicates_skipped

    def __len__(self) -> int:
        return len(self.articles)

    def __contains__(self, news_id: str) -> bool:
        return news_id in self.articles

    def __getitem__(self, news_id: str) -> NewsArticle:
        try:
            return self.articles[news_id]
        except KeyError:
            raise MissingNewsError(f"unknown news id: {news_id!r}") from None

    def get(self, news_id: str) -> NewsArticle | None:
        return self.articles.get(news_id)


@dataclass(frozen=True)
class ImpressionRecord:
    impression_id: str
    user_id: str
    timestamp: str
    history_ids: tuple[str, ...]
    candidates: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError(f"impression {self.impression_id}: no candidates")
        for news_id, label in self.candidates:
            if label not in (0, 1):
                raise ValueError(
                    f"impression {self.impression_id}: label {label!r} for "
                    f"{news_id!r} is not 0/1")

    @property
    def positives(self) -> list[str]:
        return [nid for nid, lab in self.candidates if lab == 1]

    @property
    def negatives(self) -> list[str]:
        return [nid for nid, lab in self.candidates if lab == 0]


@dataclass(frozen=True)
class UserText:
    """History rendered as alternating [NCLS] markers and title word spans."""

    title_spans: tuple[tuple[str, ...], ...]
    dropped_missing: int = 0

    @property
    def included_history_count(self) -> int:
        return len(self.title_spans)

    @property
    def rendered(self) -> list[str]:
        """Flat segment list: marker, title string, marker, title string, ..."""
        out: list[str] = []
        for span in self.title_spans:
            out.append(NCLS_MARKER)
            out.append(" ".join(span))
        return out


@dataclass(frozen=True)
class CandidateText:
    words: tuple[str, ...]

    @property
    def rendered(self) -> str:
        return " ".join(self.words)


@dataclass(frozen=True)
class Sample:
    impression_id: str
    user_text: UserText
    candidate_id: str
    candidate_text: CandidateText
    label: int

    @property
    def group_key(self) -> str:
        return self.impression_id


def parse_news(lines: Iterable[str]) -> NewsCatalog:
    """Parse a news TSV stream into a catalog.

    Each line needs at least 4 tab-separated fields (id, category,
    subcategory, title); extra columns are ignored. Duplicate ids keep the
    first occurrence and bump the catalog's duplicate counter.
    """
    articles: dict[str, NewsArticle] = {}
    duplicates = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) < 4:
            raise ParseError(
                f"expected >= 4 tab-separated fields, got {len(fields)}",
                line_number=lineno)
        news_id, category, subcategory, title = fields[:4]
        if news_id in articles:
            duplicates += 1
            continue
        articles[news_id] = NewsArticle(
            news_id=news_id,
            title_words=tuple(title.split()),
            category=category or None,
            subcategory=subcategory or None,
        )
    return NewsCatalog(articles, duplicates_skipped=duplicates)


def _parse_candidate_token(token: str, lineno: int) -> tuple[str, int]:
    news_id, sep, suffix = token.rpartition("-")
    if not sep or suffix not in ("0", "1"):
        raise ParseError(
            f"candidate token {token!r} lacks a -0/-1 label suffix",
            line_number=lineno)
    return news_id, int(suffix)


def parse_behaviors(lines: Iterable[str]) -> list[ImpressionRecord]:
    """Parse a behaviors TSV stream into impression records, in file order."""
    records: list[ImpressionRecord] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) < 5:
            raise ParseError(
                f"expected 5 tab-separated fields, got {len(fields)}",
                line_number=lineno)
        imp_id, user_id, timestamp, history, cands = fields[:5]
        history_ids = tuple(history.split())
        candidates = tuple(
            _parse_candidate_token(tok, lineno) for tok in cands.split())
        if not candidates:
            raise ParseError("impression has no candidates", line_number=lineno)
        records.append(ImpressionRecord(
            impression_id=imp_id,
            user_id=user_id,
            timestamp=timestamp,
            history_ids=history_ids,
            candidates=candidates,
        ))
    return records


def build_user_text(history_ids: Sequence[str], catalog: NewsCatalog,
                    max_history: int = MAX_HISTORY,
                    max_title_words: int = MAX_HISTORY_TITLE_WORDS) -> UserText:
    """Render a click history: most recent ``max_history`` clicks, each title
    truncated to its first ``max_title_words`` words, chronological order kept.

    History ids missing from the catalog are dropped and counted; a candidate
    can't be scored without text, but history degrades gracefully.
    """
    resolved: list[tuple[str, ...]] = []
    dropped = 0
    for news_id in history_ids:
        article = catalog.get(news_id)
        if article is None:
            dropped += 1
            continue
        resolved.append(article.title_words[:max_title_words])
    return UserText(title_spans=tuple(resolved[-max_history:]),
                    dropped_missing=dropped)


def build_candidate_text(news_id: str, catalog: NewsCatalog,
                         max_title_words: int = MAX_CANDIDATE_TITLE_WORDS,
                         ) -> CandidateText:
    """Render a candidate title, truncated to its first ``max_title_words``
    words. Raises MissingNewsError for unresolvable ids."""
    article = catalog[news_id]
    return CandidateText(words=article.title_words[:max_title_words])


def assemble_training_set(impressions: Iterable[ImpressionRecord],
                          catalog: NewsCatalog,
                          neg_ratio: int = DEFAULT_NEG_RATIO,
                          rng_seed: int = 0,
                          max_history: int = MAX_HISTORY,
                          max_history_title_words: int = MAX_HISTORY_TITLE_WORDS,
                          max_candidate_title_words: int = MAX_CANDIDATE_TITLE_WORDS,
                          ) -> list[Sample]:
    """Emit, per positive candidate, the positive sample plus up to
    ``neg_ratio`` distinct negatives drawn without replacement from the same
    impression. Deterministic under a fixed seed.
    """
    if neg_ratio < 0:
        raise ValueError(f"neg_ratio must be >= 0, got {neg_ratio}")
    rng = random.Random(rng_seed)
    samples: list[Sample] = []
    for imp in impressions:
        user_text = build_user_text(
            imp.history_ids, catalog,
            max_history=max_history, max_title_words=max_history_title_words)
        negatives = imp.negatives
        for pos_id in imp.positives:
            samples.append(Sample(
                impression_id=imp.impression_id,
                user_text=user_text,
                candidate_id=pos_id,
                candidate_text=build_candidate_text(
                    pos_id, catalog, max_title_words=max_candidate_title_words),
                label=1,
            ))
            k = min(neg_ratio, len(negatives))
            for neg_id in rng.sample(negatives, k):
                samples.append(Sample(
                    impression_id=imp.impression_id,
                    user_text=user_text,
                    candidate_id=neg_id,
                    candidate_text=build_candidate_text(
                        neg_id, catalog,
                        max_title_words=max_candidate_title_words),
                    label=0,
                ))
    return samples


def assemble_eval_set(impressions: Iterable[ImpressionRecord],
                      catalog: NewsCatalog,
                      max_history: int = MAX_HISTORY,
                      max_history_title_words: int = MAX_HISTORY_TITLE_WORDS,
                      max_candidate_title_words: int = MAX_CANDIDATE_TITLE_WORDS,
                      ) -> list[Sample]:
    """Emit one sample per candidate, with no sampling, preserving impression
    composition for ranking evaluation."""
    samples: list[Sample] = []
    for imp in impressions:
        user_text = build_user_text(
            imp.history_ids, catalog,
            max_history=max_history, max_title_words=max_history_title_words)
        for news_id, label in imp.candidates:
            samples.append(Sample(
                impression_id=imp.impression_id,
                user_text=user_text,
                candidate_id=news_id,
                candidate_text=build_candidate_text(
                    news_id, catalog,
                    max_title_words=max_candidate_title_words),
                label=label,
            ))
    return samples


def _round_half_up(x: float) -> int:
    return int(x + 0.5)


def split_validation(impressions: Sequence[ImpressionRecord],
                     fraction: float = DEFAULT_VALID_FRACTION,
                     rng_seed: int = 0,
                     ) -> tuple[list[ImpressionRecord], list[ImpressionRecord]]:
    """Partition impressions into (train, valid) with
    ``|valid| = round(fraction * |total|)``, deterministic under the seed."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n_valid = _round_half_up(fraction * len(impressions))
    rng = random.Random(rng_seed)
    valid_idx = set(rng.sample(range(len(impressions)), n_valid))
    train = [imp for i, imp in enumerate(impressions) if i not in valid_idx]
    valid = [imp for i, imp in enumerate(impressions) if i in valid_idx]
    return train, valid


def downsample_training(items: Sequence, fraction: float, rng_seed: int = 0) -> list:
    """Keep a uniform random subset of round(fraction * n) impressions.

    Works on impression records or on assembled samples: grouping is by
    ``impression_id`` either way, so samples of a kept impression stay
    together. Only the training input is touched by construction.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return list(items)
    group_order: list[str] = []
    seen: set[str] = set()
    for item in items:
        key = item.impression_id
        if key not in seen:
            seen.add(key)
            group_order.append(key)
    n_keep = _round_half_up(fraction * len(group_order))
    rng = random.Random(rng_seed)
    kept = set(rng.sample(group_order, n_keep))
    return [item for item in items if item.impression_id in kept]


def sample_to_dict(sample: Sample) -> dict:
    return {
        "impression_id": sample.impression_id,
        "user_text": sample.user_text.rendered,
        "candidate_id": sample.candidate_id,
        "candidate_text": sample.candidate_text.rendered,
        "label": sample.label,
    }


def sample_from_dict(record: dict) -> Sample:
    segments = record["user_text"]
    if len(segments) % 2 != 0:
        raise ValueError("user_text segments must alternate marker/title pairs")
    spans = []
    for i in range(0, len(segments), 2):
        if segments[i] != NCLS_MARKER:
            raise ValueError(f"expected {NCLS_MARKER} at segment {i}, "
                             f"got {segments[i]!r}")
        spans.append(tuple(segments[i + 1].split()))
    return Sample(
        impression_id=record["impression_id"],
        user_text=UserText(title_spans=tuple(spans)),
        candidate_id=record["candidate_id"],
        candidate_text=CandidateText(words=tuple(record["candidate_text"].split())),
        label=int(record["label"]),
    )


def write_samples_jsonl(samples: Iterable[Sample], path) -> int:
    """Write samples as JSON lines; returns the number of lines written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_dict(sample), sort_keys=True))
            fh.write("\n")
            count += 1
    return count


def read_samples_jsonl(path) -> list[Sample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                samples.append(sample_from_dict(json.loads(line)))
    return samples


def group_samples_by_impression(samples: Iterable[Sample]) -> dict[str, list[Sample]]:
    """Group eval-style samples back into per-impression candidate lists,
    preserving candidate order within each impression."""
    groups: dict[str, list[Sample]] = {}
    for sample in samples:
        groups.setdefault(sample.impression_id, []).append(sample)
    return groups
