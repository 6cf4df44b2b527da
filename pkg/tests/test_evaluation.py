"""Hand-computed scoring fixtures plus matching/bootstrap properties."""

from __future__ import annotations

import numpy as np
import pytest

from argmine.corpus import AduSpan, MergedAdu
from argmine.evaluation import (
    EvalError,
    MatchMode,
    ScoreReport,
    align_adus,
    bootstrap_compare,
    detection_vs_classification,
    error_feature_report,
    find_connector,
    greedy_match,
    relation_detection_vs_classification,
    relation_f1,
    span_f1,
    spans_match,
    token_macro_f1,
)
from argmine.tagging import tokenize

from conftest import adu, make_section, rel

EXACT = MatchMode.exact()
WEAK = MatchMode.weak("shorter")
WEAK_LONG = MatchMode.weak("longer")


class Graph:
    """Minimal adus+relations holder for relation scoring tests."""

    def __init__(self, adus, relations):
        self.adus = list(adus)
        self.relations = list(relations)


class TestTokenMacroF1:
    def test_identical_is_one(self):
        seq = ["a", "b", "c", "O", "a"]
        report = token_macro_f1(seq, seq)
        assert report.macro_f1 == pytest.approx(1.0, abs=1e-12)

    def test_half_right_single_class(self):
        report = token_macro_f1(["x", "x", "O", "O"], ["x", "O", "O", "x"])
        prf = report.per_class["x"]
        assert prf.precision == pytest.approx(0.5, abs=1e-12)
        assert prf.recall == pytest.approx(0.5, abs=1e-12)
        assert prf.f1 == pytest.approx(0.5, abs=1e-12)
        assert report.macro_f1 == pytest.approx(0.5, abs=1e-12)

    def test_all_outside_prediction_is_zero(self):
        report = token_macro_f1(["a", "b", "O"], ["O", "O", "O"])
        assert report.macro_f1 == 0.0

    def test_two_class_hand_computation(self):
        report = token_macro_f1(["a", "a", "b", "O"], ["a", "b", "b", "O"])
        # a: TP 1, FN 1 -> P 1, R 1/2, F1 2/3.  b: TP 1, FP 1 -> F1 2/3.
        assert report.per_class["a"].f1 == pytest.approx(2 / 3, abs=1e-12)
        assert report.per_class["b"].f1 == pytest.approx(2 / 3, abs=1e-12)
        assert report.macro_f1 == pytest.approx(2 / 3, abs=1e-12)

    def test_confusion_counts(self):
        report = token_macro_f1(["a", "a", "b", "O", "O"],
                                ["a", "b", "b", "a", "O"])
        labels = report.confusion_labels
        conf = report.confusion
        assert labels == ["a", "b", "O"]
        assert conf[labels.index("a"), labels.index("a")] == 1
        assert conf[labels.index("a"), labels.index("b")] == 1
        assert conf[labels.index("O"), labels.index("a")] == 1
        # gold O / pred O true negatives stay out of the matrix.
        assert conf[labels.index("O"), labels.index("O")] == 0

    def test_include_outside(self):
        report = token_macro_f1(["x", "O"], ["x", "O"], include_outside=True)
        assert "O" in report.classes
        assert report.macro_f1 == pytest.approx(1.0, abs=1e-12)

    def test_nested_rows_flattened(self):
        report = token_macro_f1([["x", "O"], ["x"]], [["x", "O"], ["x"]])
        assert report.per_class["x"].tp == 2

    def test_length_mismatch(self):
        with pytest.raises(EvalError):
            token_macro_f1(["a"], ["a", "b"])


class TestSpansMatch:
    def test_exact_needs_identical_bounds(self):
        g = adu("g", "data", 0, 10)
        assert spans_match(g, adu("p", "data", 0, 10), EXACT)
        assert not spans_match(g, adu("p", "data", 0, 9), EXACT)

    def test_weak_shorter_denominator(self):
        g = adu("g", "data", 0, 10)
        # overlap 6 >= 6/2 with the shorter span (len 6) as denominator.
        assert spans_match(g, adu("p", "data", 0, 6), WEAK)
        assert spans_match(g, adu("p", "data", 4, 6), WEAK)

    def test_weak_longer_denominator(self):
        g = adu("g", "data", 0, 10)
        # overlap 2 < 10/2: fails against the longer span.
        assert not spans_match(g, adu("p", "data", 4, 6), WEAK_LONG)
        assert spans_match(g, adu("p", "data", 0, 6), WEAK_LONG)

    def test_type_must_agree(self):
        g = adu("g", "data", 0, 10)
        assert not spans_match(g, adu("p", "own_claim", 0, 10), WEAK)
        assert spans_match(g, adu("p", "own_claim", 0, 10), WEAK,
                           require_type=False)

    def test_half_exactly_counts(self):
        g = adu("g", "data", 0, 10)
        # overlap 5 of denominator 10: boundary case is a match (>= half).
        assert spans_match(g, adu("p", "data", 5, 15), WEAK_LONG)
        assert not spans_match(g, adu("p", "data", 6, 16), WEAK_LONG)

    def test_merged_exact_needs_same_fragments(self):
        g = MergedAdu(fragments=(adu("g1", "data", 0, 5),
                                 adu("g2", "data", 10, 15)), adu_type="data")
        p_same = MergedAdu(fragments=(adu("p1", "data", 0, 5),
                                      adu("p2", "data", 10, 15)),
                           adu_type="data")
        p_diff = MergedAdu(fragments=(adu("p1", "data", 0, 5),
                                      adu("p2", "data", 10, 14)),
                           adu_type="data")
        assert spans_match(g, p_same, EXACT)
        assert not spans_match(g, p_diff, EXACT)

    def test_merged_weak_uses_summed_lengths(self):
        g = MergedAdu(fragments=(adu("g1", "data", 0, 5),
                                 adu("g2", "data", 10, 15)),
                      adu_type="data")  # total 10 chars
        p = adu("p", "data", 0, 5)  # overlap 5, shorter length 5
        assert spans_match(g, p, WEAK)
        assert not spans_match(g, adu("q", "data", 0, 2), WEAK_LONG)


class TestSpanF1:
    def test_perfect(self):
        gold = [adu("g1", "data", 0, 5), adu("g2", "own_claim", 10, 20)]
        pred = [adu("p1", "data", 0, 5), adu("p2", "own_claim", 10, 20)]
        for mode in (EXACT, WEAK):
            assert span_f1(gold, pred, mode).macro_f1 == pytest.approx(1.0)

    def test_boundary_error_only_weak_matches(self):
        gold = [adu("g1", "data", 0, 10)]
        pred = [adu("p1", "data", 0, 6)]
        assert span_f1(gold, pred, EXACT).macro_f1 == 0.0
        assert span_f1(gold, pred, WEAK).macro_f1 == pytest.approx(1.0)

    def test_type_error_counts_both_ways(self):
        gold = [adu("g1", "data", 0, 5)]
        pred = [adu("p1", "own_claim", 0, 5)]
        report = span_f1(gold, pred, EXACT)
        assert report.per_class["data"].fn == 1
        assert report.per_class["own_claim"].fp == 1
        assert report.macro_f1 == 0.0

    def test_one_to_one_matching(self):
        gold = [adu("g1", "data", 0, 10)]
        pred = [adu("p1", "data", 0, 10), adu("p2", "data", 0, 9)]
        report = span_f1(gold, pred, WEAK)
        prf = report.per_class["data"]
        assert (prf.tp, prf.fp, prf.fn) == (1, 1, 0)
        assert prf.f1 == pytest.approx(2 / 3, abs=1e-12)

    def test_greedy_prefers_larger_overlap_then_earlier_start(self):
        gold = [adu("g1", "data", 0, 4)]
        pred = [adu("p_late", "data", 2, 4), adu("p_early", "data", 0, 2)]
        pairs, _, _ = greedy_match(gold, pred, WEAK)
        # overini ties (2 chars each): earliest start wins.
        assert pairs[0][1].id == "p_early"
        pred2 = [adu("p_small", "data", 0, 2), adu("p_big", "data", 1, 4)]
        pairs2, _, _ = greedy_match(gold, pred2, WEAK)
        assert pairs2[0][1].id == "p_big"

    def test_order_invariance(self):
        gold = [adu("g1", "data", 0, 5), adu("g2", "data", 10, 15),
                adu("g3", "own_claim", 20, 30)]
        pred = [adu("p1", "data", 0, 5), adu("p2", "data", 11, 15),
                adu("p3", "own_claim", 20, 29)]
        a = span_f1(gold, pred, WEAK).to_dict()
        b = span_f1(list(reversed(gold)), list(reversed(pred)), WEAK).to_dict()
        assert a == b

    def test_exact_not_above_weak_on_random_sets(self):
        rng = np.random.default_rng(0)
        types = ("background_claim", "own_claim", "data")
        for _ in range(50):
            gold, pred = [], []
            cursor = 0
            for i in range(rng.integers(1, 8)):
                start = cursor + int(rng.integers(0, 4))
                end = start + int(rng.integers(1, 10))
                gold.append(adu(f"g{i}", types[rng.integers(0, 3)], start, end))
                cursor = end
            for i in range(rng.integers(0, 8)):
                start = int(rng.integers(0, max(1, cursor)))
                end = start + int(rng.integers(1, 10))
                pred.append(adu(f"p{i}", types[rng.integers(0, 3)], start, end))
            exact = span_f1(gold, pred, EXACT).macro_f1
            weak = span_f1(gold, pred, WEAK).macro_f1
            assert exact <= weak + 1e-12


class TestDetectionVsClassification:
    def test_permuted_labels(self):
        gold = [adu("g1", "data", 0, 5), adu("g2", "own_claim", 10, 15)]
        pred = [adu("p1", "own_claim", 0, 5), adu("p2", "data", 10, 15)]
        det, cls = detection_vs_classification(gold, pred, EXACT)
        assert det.macro_f1 == pytest.approx(1.0, abs=1e-12)
        assert cls.macro_f1 == 0.0
        labels = cls.confusion_labels
        assert cls.confusion[labels.index("data"),
                             labels.index("own_claim")] == 1

    def test_half_found_perfect_labels(self):
        gold = [adu("g1", "data", 0, 5), adu("g2", "data", 10, 15)]
        pred = [adu("p1", "data", 0, 5)]
        det, cls = detection_vs_classification(gold, pred, EXACT)
        assert det.macro_f1 == pytest.approx(2 / 3, abs=1e-9)
        assert cls.macro_f1 == pytest.approx(1.0, abs=1e-12)

    def test_empty_prediction(self):
        gold = [adu("g1", "data", 0, 5)]
        det, cls = detection_vs_classification(gold, [], EXACT)
        assert det.macro_f1 == 0.0
        assert cls.macro_f1 == 0.0


class TestRelationF1:
    A = adu("A", "data", 0, 5)
    B = adu("B", "own_claim", 10, 20)
    C = adu("C", "data", 30, 35)

    def _gold(self, *rels):
        return Graph([self.A, self.B, self.C], list(rels))

    def test_perfect_on_shared_adus(self):
        gold = self._gold(rel("A", "B", "supports"), rel("C", "B", "contradicts"))
        pred = self._gold(rel("A", "B", "supports"), rel("C", "B", "contradicts"))
        report = relation_f1(gold, pred, EXACT)
        assert report.micro_f1 == pytest.approx(1.0, abs=1e-12)

    def test_wrong_label_half_credit(self):
        gold = self._gold(rel("A", "B", "supports"), rel("C", "B", "supports"))
        pred = self._gold(rel("A", "B", "supports"), rel("C", "B", "contradicts"))
        report = relation_f1(gold, pred, EXACT)
        micro = report.micro
        assert micro.precision == pytest.approx(0.5, abs=1e-12)
        assert micro.recall == pytest.approx(0.5, abs=1e-12)

    def test_symmetric_label_order_free(self):
        gold = self._gold(rel("A", "B", "contradicts"))
        pred = self._gold(rel("B", "A", "contradicts"))
        assert relation_f1(gold, pred, EXACT).micro_f1 == pytest.approx(1.0)

    def test_directed_supports_wrong_order_fails(self):
        gold = self._gold(rel("A", "B", "supports"))
        pred = self._gold(rel("B", "A", "supports"))
        assert relation_f1(gold, pred, EXACT).micro_f1 == 0.0

    def test_unaligned_endpoint_is_fp(self):
        gold = self._gold(rel("A", "B", "supports"))
        pred = Graph([adu("A2", "data", 50, 55), self.B],
                     [rel("A2", "B", "supports")])
        report = relation_f1(gold, pred, WEAK)
        prf = report.per_class["supports"]
        assert (prf.tp, prf.fp, prf.fn) == (0, 1, 1)

    def test_weak_endpoints_allow_boundary_errors(self):
        gold = self._gold(rel("A", "B", "supports"))
        pred = Graph([adu("A2", "data", 0, 4), adu("B2", "own_claim", 10, 18)],
                     [rel("A2", "B2", "supports")])
        assert relation_f1(gold, pred, EXACT).micro_f1 == 0.0
        assert relation_f1(gold, pred, WEAK).micro_f1 == pytest.approx(1.0)

    def test_gold_adu_mode_exact_equals_weak(self):
        gold = self._gold(rel("A", "B", "supports"), rel("C", "B", "contradicts"))
        pred = self._gold(rel("A", "B", "supports"))
        exact = relation_f1(gold, pred, EXACT).to_dict()
        weak = relation_f1(gold, pred, WEAK).to_dict()
        assert exact == weak

    def test_parts_of_same_scored_separately(self):
        gold = self._gold(rel("A", "C", "parts_of_same"))
        pred = self._gold(rel("C", "A", "parts_of_same"))
        main = relation_f1(gold, pred, EXACT)
        assert main.micro.tp == 0  # not part of the supports/contradicts score
        aux = relation_f1(gold, pred, EXACT, labels=("parts_of_same",))
        assert aux.micro_f1 == pytest.approx(1.0)

    def test_explicit_alignment_used(self):
        gold = self._gold(rel("A", "B", "supports"))
        pred = Graph([adu("X", "data", 0, 5), adu("Y", "own_claim", 10, 20)],
                     [rel("X", "Y", "supports")])
        report = relation_f1(gold, pred, adu_alignment={"X": "A", "Y": "B"})
        assert report.micro_f1 == pytest.approx(1.0)

    def test_duplicate_predictions_deduped(self):
        gold = self._gold(rel("A", "B", "supports"))
        pred = self._gold(rel("A", "B", "supports"), rel("A", "B", "supports"))
        report = relation_f1(gold, pred, EXACT)
        assert report.micro.fp == 0

    def test_needs_mode_or_alignment(self):
        gold = self._gold()
        with pytest.raises(EvalError):
            relation_f1(gold, gold)


class TestRelationDecomposition:
    A = adu("A", "data", 0, 5)
    B = adu("B", "own_claim", 10, 20)

    def test_found_pair_wrong_label(self):
        gold = Graph([self.A, self.B], [rel("A", "B", "supports")])
        pred = Graph([self.A, self.B], [rel("A", "B", "contradicts")])
        det, cls = relation_detection_vs_classification(gold, pred, EXACT)
        assert det.micro_f1 == pytest.approx(1.0)
        assert cls.per_class["contradicts"].fp == 1
        assert cls.per_class["supports"].fn == 1

    def test_missing_pair(self):
        gold = Graph([self.A, self.B], [rel("A", "B", "supports")])
        pred = Graph([self.A, self.B], [])
        det, _ = relation_detection_vs_classification(gold, pred, EXACT)
        assert det.micro.fn == 1 and det.micro.tp == 0


class TestAlignAdus:
    def test_identity_on_equal_spans(self):
        gold = [adu("A", "data", 0, 5), adu("B", "own_claim", 10, 20)]
        pred = [adu("X", "data", 0, 5), adu("Y", "own_claim", 10, 20)]
        assert align_adus(gold, pred, EXACT) == {"X": "A", "Y": "B"}

    def test_weak_alignment(self):
        gold = [adu("A", "data", 0, 10)]
        pred = [adu("X", "data", 2, 9)]
        assert align_adus(gold, pred, WEAK) == {"X": "A"}
        assert align_adus(gold, pred, EXACT) == {}


class TestBootstrap:
    SECTIONS = list(range(20))

    def test_identical_systems(self):
        mean_a, mean_b, p = bootstrap_compare(
            lambda sample: (0.7, 0.7), self.SECTIONS,
            rng=np.random.default_rng(0))
        assert mean_a == mean_b == pytest.approx(0.7)
        assert p == 1.0

    def test_clearly_different_systems(self):
        _, _, p = bootstrap_compare(
            lambda sample: (0.0, 1.0), self.SECTIONS,
            rng=np.random.default_rng(0))
        assert p < 0.01

    def test_deterministic_given_rng(self):
        def fn(sample):
            vals = [s / 20 for s in sample]
            m = sum(vals) / len(vals)
            return m, m + 0.01

        out1 = bootstrap_compare(fn, self.SECTIONS,
                                 rng=np.random.default_rng(5))
        out2 = bootstrap_compare(fn, self.SECTIONS,
                                 rng=np.random.default_rng(5))
        assert out1 == out2

    def test_sample_size_guard(self):
        with pytest.raises(EvalError):
            bootstrap_compare(lambda s: (0, 0), [1, 2], sample_size=10)

    def test_samples_drawn_from_sections(self):
        seen = []

        def fn(sample):
            seen.extend(sample)
            return 0.0, 0.0

        bootstrap_compare(fn, self.SECTIONS, n_samples=5,
                          rng=np.random.default_rng(1))
        assert len(seen) == 50
        assert set(seen) <= set(self.SECTIONS)


class TestConnectors:
    def test_simple_hit(self):
        assert find_connector(["However", ",", "X"]) == "however"

    def test_longest_phrase_wins(self):
        assert find_connector(["even", "though"]) == "even though"

    def test_lexicon_priority(self):
        assert find_connector(["but", "even", "though"]) == "but"

    def test_brackets_fallback(self):
        assert find_connector(["(", "Smith", "2019", ")"]) == "BRACKETS"

    def test_none(self):
        assert find_connector(["because", "of", "this"]) == "NONE"

    def test_multiword_in_context(self):
        assert find_connector(["x", "in", "contrast", "y"]) == "in contrast"


class TestErrorFeatureReport:
    def _fixture(self):
        text = ("We claim this is good . However other work says bad things "
                "because of data .")
        a = adu("A", "own_claim", 3, 22)        # "claim this is good"
        b = adu("B", "background_claim", 32, 57)  # "other work says bad thin…"
        c = adu("C", "data", 69, 76)            # "of data"
        section = make_section(text, adus=[a, b, c])
        tokens = tokenize(section).tokens
        gold = Graph([a, b, c], [rel("B", "A", "contradicts"),
                                 rel("C", "B", "supports")])
        pred = Graph([a, b, c], [rel("B", "A", "contradicts"),
                                 rel("C", "A", "supports")])
        return gold, pred, tokens

    def test_categories(self):
        gold, pred, tokens = self._fixture()
        report = error_feature_report(pred, gold, tokens)
        # contradicts(B,A) in both; supports(C,B) only gold; supports(C,A)
        # only predicted.
        assert sum(report["tp"]["arg_types"].values()) == 1
        assert sum(report["fp"]["arg_types"].values()) == 1
        assert sum(report["fn"]["arg_types"].values()) == 1
        # Symmetric labels are canonicalized by endpoint id, so the TP pair
        # contradicts(B,A) reports as (A, B).
        assert report["tp"]["arg_types"] == {"own_claim->background_claim": 1}

    def test_connector_and_sentence_features(self):
        gold, pred, tokens = self._fixture()
        report = error_feature_report(pred, gold, tokens)
        # B starts right after "However": the TP pair sees the connector.
        assert report["tp"]["connector"] == {"however": 1}
        # A and B live in different sentences (period between them).
        assert report["tp"]["same_sentence"] == {"false": 1}
        # supports(C,B): B is the earlier span and sits right after
        # "However", which the 3-token left context picks up.
        assert report["fn"]["connector"] == {"however": 1}
        assert report["fn"]["same_sentence"] == {"true": 1}

    def test_empty_graphs(self):
        _, _, tokens = self._fixture()
        empty = Graph([], [])
        report = error_feature_report(empty, empty, tokens)
        assert report == {"tp": {"connector": {}, "arg_types": {},
                                 "same_sentence": {}},
                          "fp": {"connector": {}, "arg_types": {},
                                 "same_sentence": {}},
                          "fn": {"connector": {}, "arg_types": {},
                                 "same_sentence": {}}}


class TestReportPlumbing:
    def test_none_none_rejected(self):
        report = ScoreReport(classes=["a"])
        with pytest.raises(EvalError):
            report.record("none", "none")

    def test_unknown_label_rejected(self):
        report = ScoreReport(classes=["a"])
        with pytest.raises(EvalError, match="zzz"):
            report.record("zzz", "a")

    def test_table_and_csv_render(self):
        report = token_macro_f1(["a", "b", "O"], ["a", "a", "O"])
        table = report.format_table("tokens")
        assert "tokens" in table and "macro" in table and "micro" in table
        csv = report.confusion_csv()
        assert csv.startswith("gold\\pred,a,b,O")
        assert csv.endswith("\n")

    def test_json_round_trip(self):
        import json

        report = token_macro_f1(["a", "b", "O"], ["a", "a", "O"])
        data = json.loads(report.to_json())
        assert data["per_class"]["a"]["tp"] == 1
        assert data["macro"]["f1"] == pytest.approx(report.macro_f1)


class TestMergeReports:
    def test_sum_of_counts_and_confusion(self):
        from argmine.evaluation import merge_reports

        a = token_macro_f1(["x", "O"], ["x", "x"])
        b = token_macro_f1(["y", "x"], ["y", "O"])
        merged = merge_reports([a, b])
        assert merged.classes == ["x", "y"]
        assert merged.per_class["x"].tp == 1
        assert merged.per_class["x"].fp == 1
        assert merged.per_class["x"].fn == 1
        assert merged.per_class["y"].tp == 1
        assert int(merged.confusion.sum()) == 4
        matched = token_macro_f1(["x", "O", "y", "x"], ["x", "x", "y", "O"])
        assert merged.to_dict() == matched.to_dict()

    def test_empty_input(self):
        from argmine.evaluation import merge_reports

        merged = merge_reports([])
        assert merged.classes == []

    def test_mixed_none_labels_rejected(self):
        from argmine.evaluation import merge_reports

        a = ScoreReport(classes=["x"], none_label="O")
        b = ScoreReport(classes=["x"], none_label="none")
        with pytest.raises(EvalError):
            merge_reports([a, b])
