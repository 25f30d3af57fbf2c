"""Synthetic MIND-format corpus with a planted click rule.

Every user has one preferred topic; history titles come from that topic and
a candidate is clicked exactly when its title's topic keyword matches the
user's topic. A model that learns keyword overlap separates positives from
negatives, which makes the corpus a fast, deterministic harness for
learning smoke tests and CLI demos. Output is real news/behaviors TSV text,
so it flows through the normal parsing path.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass


@dataclass(frozen=True)
class SyntheticConfig:
    n_topics: int = 6
    articles_per_topic: int = 40
    n_train_impressions: int = 500
    n_test_impressions: int = 100
    history_min: int = 4
    history_max: int = 8
    positives_per_impression: int = 2
    negatives_min: int = 6
    negatives_max: int = 8
    title_filler_words: int = 1
    filler_vocab: int = 40
    seed: int = 0


@dataclass(frozen=True)
class SyntheticDataset:
    news_tsv: str
    train_behaviors_tsv: str
    test_behaviors_tsv: str

    def write(self, directory) -> dict[str, str]:
        os.makedirs(directory, exist_ok=True)
        paths = {
            "news": os.path.join(directory, "news.tsv"),
            "train_behaviors": os.path.join(directory, "train_behaviors.tsv"),
            "test_behaviors": os.path.join(directory, "test_behaviors.tsv"),
        }
        for key, text in (("news", self.news_tsv),
                          ("train_behaviors", self.train_behaviors_tsv),
                          ("test_behaviors", self.test_behaviors_tsv)):
            with open(paths[key], "w", encoding="utf-8") as fh:
                fh.write(text)
        return paths


_TOPIC_WORDS = ["soccer", "piano", "rockets", "baking", "chess", "surfing",
                "gardens", "drones", "fossils", "cinema", "sailing", "yoga"]


def _topic_keyword(topic: int) -> str:
    if topic < len(_TOPIC_WORDS):
        return _TOPIC_WORDS[topic]
    return f"subject{topic}"


def generate(config: SyntheticConfig = SyntheticConfig()) -> SyntheticDataset:
    rng = random.Random(config.seed)
    fillers = [f"word{i}" for i in range(config.filler_vocab)]

    news_lines: list[str] = []
    by_topic: dict[int, list[str]] = {t: [] for t in range(config.n_topics)}
    nid = 0
    for topic in range(config.n_topics):
        keyword = _topic_keyword(topic)
        for _ in range(config.articles_per_topic):
            nid += 1
            news_id = f"N{nid}"
            words = [keyword] + rng.sample(fillers, config.title_filler_words)
            news_lines.append(
                f"{news_id}\ttopic{topic}\tgeneral\t{' '.join(words)}")
            by_topic[topic].append(news_id)

    def behaviors(n_impressions: int, id_prefix: str, rng: random.Random
                  ) -> str:
        lines = []
        for i in range(n_impressions):
            topic = rng.randrange(config.n_topics)
            pool = by_topic[topic]
            h = rng.randint(config.history_min, config.history_max)
            history = rng.sample(pool, h)
            unseen = [a for a in pool if a not in history]
            positives = rng.sample(
                unseen, min(config.positives_per_impression, len(unseen)))
            other_topics = [t for t in range(config.n_topics) if t != topic]
            n_neg = rng.randint(config.negatives_min, config.negatives_max)
            negatives = [rng.choice(by_topic[rng.choice(other_topics)])
                         for _ in range(n_neg)]
            cands = [f"{p}-1" for p in positives] + [f"{n}-0"
                                                     for n in negatives]
            rng.shuffle(cands)
            lines.append("\t".join([
                f"{id_prefix}{i + 1}",
                f"U{id_prefix}{i + 1}",
                "11/11/2019 9:00:00 AM",
                " ".join(history),
                " ".join(cands),
            ]))
        return "\n".join(lines) + "\n"

    train_rng = random.Random(config.seed + 1)
    test_rng = random.Random(config.seed + 2)
    return SyntheticDataset(
        news_tsv="\n".join(news_lines) + "\n",
        train_behaviors_tsv=behaviors(config.n_train_impressions, "tr",
                                      train_rng),
        test_behaviors_tsv=behaviors(config.n_test_impressions, "te",
                                     test_rng),
    )
