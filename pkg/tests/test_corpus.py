import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clozerec import corpus
from clozerec.corpus import (CandidateText, ImpressionRecord, MissingNewsError,
                             NCLS_MARKER, ParseError, UserText,
                             assemble_training_set, build_candidate_text,
                             build_user_text, downsample_training,
                             parse_behaviors, parse_news, read_samples_jsonl,
                             split_validation, write_samples_jsonl)


def make_catalog(titles: dict[str, str]) -> corpus.NewsCatalog:
    lines = [f"{nid}\tcat\tsubcat\t{title}" for nid, title in titles.items()]
    return parse_news(lines)


def make_impression(imp_id, history, positives, negatives):
    candidates = tuple((nid, 1) for nid in positives) + tuple(
        (nid, 0) for nid in negatives)
    return ImpressionRecord(impression_id=imp_id, user_id="U1",
                            timestamp="11/11/2019 9:00:00 AM",
                            history_ids=tuple(history),
                            candidates=candidates)


class TestParseNews:
    def test_direct_field_mapping(self):
        catalog = parse_news(["N1\tsports\tsoccer\tTeam wins final"])
        article = catalog["N1"]
        assert article.title_words == ("Team", "wins", "final")
        assert article.category == "sports"
        assert article.subcategory == "soccer"

    def test_empty_input(self):
        assert len(parse_news([])) == 0

    def test_duplicates_keep_first(self):
        lines = ["N1\ta\tb\tfirst title", "N1\ta\tb\tsecond title"]
        catalog = parse_news(lines)
        # independent scan: unique ids in the raw lines
        unique_ids = {line.split("\t")[0] for line in lines}
        assert len(catalog) == len(unique_ids) == 1
        assert catalog.duplicates_skipped == 1
        assert catalog["N1"].title_words == ("first", "title")

    def test_extra_columns_ignored(self):
        catalog = parse_news(["N9\tnews\tworld\tsome title\textra\tmore"])
        assert catalog["N9"].title_words == ("some", "title")

    def test_malformed_line_reports_number(self):
        with pytest.raises(ParseError) as err:
            parse_news(["N1\ta\tb\ttitle", "N2\tonly-two"])
        assert err.value.line_number == 2

    def test_empty_title_flagged(self):
        catalog = parse_news(["N1\ta\tb\t"])
        assert catalog["N1"].has_empty_title


class TestParseBehaviors:
    def test_candidate_suffix_decoding(self):
        records = parse_behaviors(["imp1\tU1\ttime\tN1 N2\tN5-1 N6-0"])
        assert records[0].candidates == (("N5", 1), ("N6", 0))

    def test_empty_history_is_cold_user(self):
        records = parse_behaviors(["imp1\tU1\ttime\t\tN5-1"])
        assert records[0].history_ids == ()

    def test_file_order_preserved(self):
        lines = [f"imp{i}\tU1\ttime\tN1\tN2-0 N3-1" for i in range(3)]
        records = parse_behaviors(lines)
        assert [r.impression_id for r in records] == ["imp0", "imp1", "imp2"]

    def test_bad_candidate_token_identified(self):
        with pytest.raises(ParseError, match="N6"):
            parse_behaviors(["imp1\tU1\ttime\tN1\tN5-1 N6"])

    def test_hyphenated_id_keeps_label_suffix(self):
        records = parse_behaviors(["imp1\tU1\ttime\t\tab-cd-1"])
        assert records[0].candidates == (("ab-cd", 1),)


class TestBuildUserText:
    def test_recent_fifty_kept(self):
        titles = {f"N{i}": f"title {i}" for i in range(60)}
        catalog = make_catalog(titles)
        history = [f"N{i}" for i in range(60)]
        text = build_user_text(history, catalog)
        assert text.included_history_count == 50
        # the 10 oldest dropped, chronological order preserved
        assert text.title_spans[0] == ("title", "10")
        assert text.title_spans[-1] == ("title", "59")

    def test_empty_history(self):
        text = build_user_text([], make_catalog({}))
        assert text.included_history_count == 0
        assert text.rendered == []

    def test_title_truncated_to_ten_words(self):
        words = " ".join(f"w{i}" for i in range(14))
        catalog = make_catalog({"N1": words})
        text = build_user_text(["N1"], catalog)
        assert text.title_spans[0] == tuple(f"w{i}" for i in range(10))

    def test_missing_history_ids_dropped_with_counter(self):
        catalog = make_catalog({"N1": "a title"})
        text = build_user_text(["N1", "Nmissing"], catalog)
        assert text.included_history_count == 1
        assert text.dropped_missing == 1

    def test_marker_count_matches_included(self):
        catalog = make_catalog({f"N{i}": f"t {i}" for i in range(5)})
        text = build_user_text([f"N{i}" for i in range(5)], catalog)
        markers = [seg for seg in text.rendered if seg == NCLS_MARKER]
        assert len(markers) == text.included_history_count == 5


class TestBuildCandidateText:
    def test_truncated_to_twenty_words(self):
        words = " ".join(f"w{i}" for i in range(25))
        catalog = make_catalog({"N1": words})
        text = build_candidate_text("N1", catalog)
        assert text.words == tuple(f"w{i}" for i in range(20))

    def test_short_title_unchanged(self):
        catalog = make_catalog({"N1": "a b c"})
        assert build_candidate_text("N1", catalog).words == ("a", "b", "c")

    def test_unknown_id_raises(self):
        with pytest.raises(MissingNewsError):
            build_candidate_text("Nx", make_catalog({}))


class TestAssembleTrainingSet:
    def _catalog(self, n):
        return make_catalog({f"N{i}": f"title {i}" for i in range(n)})

    def test_ratio_four(self):
        catalog = self._catalog(20)
        imp = make_impression("imp1", ["N11"], ["N0"],
                              [f"N{i}" for i in range(1, 11)])
        samples = assemble_training_set([imp], catalog, neg_ratio=4,
                                        rng_seed=7)
        assert len(samples) == 5
        assert sum(s.label for s in samples) == 1

    def test_fewer_negatives_than_ratio(self):
        catalog = self._catalog(5)
        imp = make_impression("imp1", [], ["N0"], ["N1", "N2"])
        samples = assemble_training_set([imp], catalog, neg_ratio=4,
                                        rng_seed=7)
        assert len(samples) == 3

    def test_same_seed_identical(self):
        catalog = self._catalog(30)
        imps = [make_impression(f"imp{k}", [], [f"N{k}"],
                                [f"N{i}" for i in range(10, 25)])
                for k in range(4)]
        a = assemble_training_set(imps, catalog, neg_ratio=4, rng_seed=3)
        b = assemble_training_set(imps, catalog, neg_ratio=4, rng_seed=3)
        assert [(s.impression_id, s.candidate_id, s.label) for s in a] == \
               [(s.impression_id, s.candidate_id, s.label) for s in b]

    def test_negatives_distinct_within_positive(self):
        catalog = self._catalog(10)
        imp = make_impression("imp1", [], ["N0"],
                              [f"N{i}" for i in range(1, 9)])
        samples = assemble_training_set([imp], catalog, neg_ratio=4,
                                        rng_seed=0)
        negs = [s.candidate_id for s in samples if s.label == 0]
        assert len(negs) == len(set(negs)) == 4

    @given(st.lists(
        st.tuples(st.integers(0, 3), st.integers(0, 6)), min_size=1,
        max_size=5), st.integers(0, 6), st.integers(0, 999))
    @settings(max_examples=40, deadline=None)
    def test_sample_count_formula(self, shapes, neg_ratio, seed):
        catalog = self._catalog(30)
        imps = []
        expected = 0
        for k, (n_pos, n_neg) in enumerate(shapes):
            if n_pos + n_neg == 0:
                continue
            positives = [f"N{i}" for i in range(n_pos)]
            negatives = [f"N{i}" for i in range(10, 10 + n_neg)]
            imps.append(make_impression(f"imp{k}", [], positives, negatives))
            expected += n_pos * (1 + min(neg_ratio, n_neg))
        if not imps:
            return
        samples = assemble_training_set(imps, catalog, neg_ratio=neg_ratio,
                                        rng_seed=seed)
        assert len(samples) == expected

    def test_round_trip_against_source(self):
        # every emitted (impression, candidate, label) triple exists in the
        # source behaviors lines, checked by brute-force scan
        lines = [
            "imp1\tU1\ttime\tN5\tN0-1 N1-0 N2-0 N3-0",
            "imp2\tU2\ttime\t\tN4-0 N0-1 N2-1",
        ]
        catalog = self._catalog(6)
        imps = parse_behaviors(lines)
        samples = assemble_training_set(imps, catalog, neg_ratio=2,
                                        rng_seed=1)
        source = set()
        for line in lines:
            fields = line.split("\t")
            for token in fields[4].split():
                nid, _, lab = token.rpartition("-")
                source.add((fields[0], nid, int(lab)))
        for s in samples:
            assert (s.impression_id, s.candidate_id, s.label) in source


class TestSplitValidation:
    def _impressions(self, n):
        return [make_impression(f"imp{i}", [], ["N0"], ["N1"])
                for i in range(n)]

    def test_five_percent(self):
        train, valid = split_validation(self._impressions(100),
                                        fraction=0.05, rng_seed=0)
        assert (len(train), len(valid)) == (95, 5)

    def test_partition(self):
        imps = self._impressions(37)
        train, valid = split_validation(imps, fraction=0.2, rng_seed=5)
        train_ids = {i.impression_id for i in train}
        valid_ids = {i.impression_id for i in valid}
        assert train_ids.isdisjoint(valid_ids)
        assert train_ids | valid_ids == {i.impression_id for i in imps}

    def test_deterministic(self):
        imps = self._impressions(50)
        a = split_validation(imps, fraction=0.1, rng_seed=9)
        b = split_validation(imps, fraction=0.1, rng_seed=9)
        assert [i.impression_id for i in a[1]] == \
               [i.impression_id for i in b[1]]

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_fraction_out_of_range(self, fraction):
        with pytest.raises(ValueError):
            split_validation(self._impressions(10), fraction=fraction)


class TestDownsample:
    def _impressions(self, n):
        return [make_impression(f"imp{i}", [], ["N0"], ["N1"])
                for i in range(n)]

    def test_identity(self):
        imps = self._impressions(10)
        assert downsample_training(imps, 1.0, rng_seed=0) == imps

    def test_half_of_two_hundred(self):
        kept = downsample_training(self._impressions(200), 0.5, rng_seed=0)
        assert len(kept) == 100

    def test_impression_granularity_on_samples(self):
        catalog = make_catalog({f"N{i}": f"t {i}" for i in range(6)})
        imps = [make_impression(f"imp{i}", [], ["N0"], ["N1", "N2"])
                for i in range(10)]
        samples = assemble_training_set(imps, catalog, neg_ratio=2,
                                        rng_seed=0)
        kept = downsample_training(samples, 0.5, rng_seed=0)
        kept_ids = {s.impression_id for s in kept}
        assert len(kept_ids) == 5
        # samples of a kept impression stay together
        for s in samples:
            assert (s in kept) == (s.impression_id in kept_ids)

    @pytest.mark.parametrize("fraction", [0.0, 1.01, -0.5])
    def test_fraction_out_of_range(self, fraction):
        with pytest.raises(ValueError):
            downsample_training(self._impressions(4), fraction)


class TestSerialization:
    def test_jsonl_round_trip(self, tmp_path):
        catalog = make_catalog({"N1": "alpha beta", "N2": "gamma",
                                "N3": "delta words here"})
        imp = make_impression("imp1", ["N1", "N2"], ["N3"], ["N1"])
        samples = corpus.assemble_eval_set([imp], catalog)
        path = tmp_path / "samples.jsonl"
        count = write_samples_jsonl(samples, path)
        assert count == 2
        loaded = read_samples_jsonl(path)
        assert loaded == samples

    def test_record_schema(self, tmp_path):
        catalog = make_catalog({"N1": "alpha beta", "N2": "gamma"})
        imp = make_impression("imp1", ["N1"], ["N2"], [])
        path = tmp_path / "samples.jsonl"
        write_samples_jsonl(corpus.assemble_eval_set([imp], catalog), path)
        record = json.loads(path.read_text().splitlines()[0])
        assert record["impression_id"] == "imp1"
        assert record["user_text"] == [NCLS_MARKER, "alpha beta"]
        assert record["candidate_text"] == "gamma"
        assert record["label"] == 1
        assert record["candidate_id"] == "N2"

    def test_deterministic_bytes(self, tmp_path):
        catalog = make_catalog({f"N{i}": f"w{i} word" for i in range(8)})
        imps = [make_impression(f"imp{i}", ["N1"], ["N0"],
                                ["N2", "N3", "N4"]) for i in range(5)]
        out = []
        for name in ("a", "b"):
            samples = assemble_training_set(imps, catalog, neg_ratio=2,
                                            rng_seed=11)
            path = tmp_path / f"{name}.jsonl"
            write_samples_jsonl(samples, path)
            out.append(path.read_bytes())
        assert out[0] == out[1]


@given(st.lists(st.lists(st.text(
    alphabet=st.characters(whitelist_categories=("Ll",)), min_size=1,
    max_size=8), min_size=1, max_size=14), max_size=8),
    st.integers(1, 5), st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_user_text_invariants(titles, max_history, max_title_words):
    catalog = make_catalog(
        {f"N{i}": " ".join(words) for i, words in enumerate(titles)})
    history = [f"N{i}" for i in range(len(titles))]
    text = build_user_text(history, catalog, max_history=max_history,
                           max_title_words=max_title_words)
    markers = [seg for seg in text.rendered if seg == NCLS_MARKER]
    assert len(markers) == text.included_history_count
    assert text.included_history_count <= max_history
    assert all(len(span) <= max_title_words for span in text.title_spans)
