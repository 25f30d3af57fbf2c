import pytest

from clozerec import corpus
from clozerec.backends.tiny import TinyModelConfig, build_tiny_backend
from clozerec.synthetic import SyntheticConfig, generate
from clozerec.templates import builtin_templates, get_template

TINY_CONFIG = TinyModelConfig(hidden=32, layers=2, heads=2, ffn=64,
                              max_positions=96)


@pytest.fixture(scope="session")
def small_dataset():
    """A small planted-rule corpus parsed into catalog + impressions."""
    data = generate(SyntheticConfig(n_train_impressions=40,
                                    n_test_impressions=12,
                                    articles_per_topic=15, n_topics=4,
                                    seed=13))
    catalog = corpus.parse_news(data.news_tsv.splitlines())
    train_imps = corpus.parse_behaviors(data.train_behaviors_tsv.splitlines())
    test_imps = corpus.parse_behaviors(data.test_behaviors_tsv.splitlines())
    return catalog, train_imps, test_imps


@pytest.fixture(scope="session")
def small_samples(small_dataset):
    catalog, train_imps, test_imps = small_dataset
    train = corpus.assemble_training_set(train_imps, catalog, neg_ratio=2,
                                         rng_seed=0)
    test = corpus.assemble_eval_set(test_imps, catalog)
    return train, test


@pytest.fixture(scope="session")
def tiny_backend(small_samples):
    train, test = small_samples
    return build_tiny_backend(train + test, builtin_templates(),
                              config=TINY_CONFIG, seed=0)


@pytest.fixture(scope="session")
def utility_template():
    return get_template("discrete-utility")
