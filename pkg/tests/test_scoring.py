import json
import unittest
from functools import lru_cache

import numpy as np
import pandas as pd

from measex.fixtures import guideline_corpus, perturb_frames
from measex.model import Document, EntityClass, MeasurementFrame, Sentence, Span
from measex.scoring import (
    MATCH_TYPES,
    align_corpora,
    classify_matches,
    match_quantities,
    overlap_f1,
    pair_spans,
    score_confidence_interval,
    score_corpus,
    strict_prf,
)


def _brute_force_best(gold, pred):
    """
    Lexicographic maximum of (identical pairs, total overlap) over every
    one-to-one pairing restricted to overlapping spans.
    """

    @lru_cache(maxsize=None)
    def best(g, used):
        if g == len(gold):
            return (0, 0)
        result = best(g + 1, used)
        for p, span in enumerate(pred):
            if used & (1 << p) or not gold[g].overlaps(span):
                continue
            exact, overlap = best(g + 1, used | (1 << p))
            candidate = (exact + (gold[g] == span), overlap + gold[g].overlap(span))
            result = max(result, candidate)
        return result

    return best(0, 0)


def _random_spans(rng, n):
    spans = set()
    while len(spans) < n:
        start = int(rng.integers(0, 40))
        spans.add(Span(start, start + int(rng.integers(1, 9))))
    return sorted(spans)


def _locate(text, surface, after=0):
    start = text.index(surface, after)
    return Span(start, start + len(surface))


def _rows(frame, column):
    return frame[frame["domain"] == "all"].set_index(column)


class TestOverlapF1(unittest.TestCase):
    def test_fixture(self):
        text = "The patient weighted ~100 pounds."
        gold, pred = _locate(text, "~100 pounds"), _locate(text, "100 pounds")
        self.assertAlmostEqual(overlap_f1(gold, pred), 20 / 21, delta=1e-12)
        self.assertEqual(overlap_f1(gold, pred), overlap_f1(pred, gold))

    def test_extremes(self):
        self.assertEqual(overlap_f1(Span(3, 9), Span(3, 9)), 1.0)
        self.assertEqual(overlap_f1(Span(0, 3), Span(3, 9)), 0.0)
        self.assertEqual(overlap_f1(Span(0, 3), None), 0.0)
        self.assertLess(overlap_f1(Span(0, 9), Span(0, 8)), 1.0)


class TestPairSpans(unittest.TestCase):
    def test_larger_overlap_wins(self):
        gold = [Span(0, 10), Span(8, 20)]
        pred = [Span(5, 18)]
        self.assertEqual(pair_spans(gold, pred).tolist(), [-1, 0])
        alignment = match_quantities(
            [MeasurementFrame(s) for s in gold], [MeasurementFrame(s) for s in pred]
        )
        self.assertEqual(alignment.pairs, [(1, 0)])
        self.assertEqual(alignment.unmatched_gold, [0])

    def test_unmatched_pred(self):
        records = classify_matches([Span(0, 4)], [Span(0, 4), Span(9, 12)], EntityClass.QUANTITY)
        self.assertEqual([r.match_type for r in records], ["match", "spurious"])

    def test_invalid_strategy(self):
        with self.assertRaises(KeyError):
            pair_spans([], [], strategy="hungarian")

    def test_against_brute_force(self):
        """
        Greedy pairing finds as many identical pairs as an exhaustive search,
        and optimal pairing also reaches the largest total overlap, on 500
        random instances.
        """
        rng = np.random.default_rng(123)
        for _ in range(500):
            gold = _random_spans(rng, int(rng.integers(0, 7)))
            pred = _random_spans(rng, int(rng.integers(0, 7)))
            best_exact, best_overlap = _brute_force_best(tuple(gold), tuple(pred))

            records = classify_matches(gold, pred, EntityClass.UNIT)
            counts = {t: sum(r.match_type == t for r in records) for t in MATCH_TYPES}
            self.assertEqual(counts["match"], best_exact)
            self.assertEqual(counts["match"] + counts["partial"] + counts["missing"], len(gold))
            self.assertEqual(counts["match"] + counts["partial"] + counts["spurious"], len(pred))

            precision, recall, f1 = strict_prf(records)
            expected_p = best_exact / len(pred) if pred else 0.0
            expected_r = best_exact / len(gold) if gold else 0.0
            expected_f = (
                2 * expected_p * expected_r / (expected_p + expected_r) if best_exact else 0.0
            )
            self.assertAlmostEqual(precision, expected_p, delta=1e-12)
            self.assertAlmostEqual(recall, expected_r, delta=1e-12)
            self.assertAlmostEqual(f1, expected_f, delta=1e-12)

            optimal = pair_spans(gold, pred, strategy="optimal").tolist()
            exact = sum(p >= 0 and gold[g] == pred[p] for g, p in enumerate(optimal))
            overlap = sum(gold[g].overlap(pred[p]) for g, p in enumerate(optimal) if p >= 0)
            self.assertEqual((exact, overlap), (best_exact, best_overlap))


class TestHandFixture(unittest.TestCase):
    """
    Four frames: predictions get one MeasuredEntity partially right and miss
    one MeasuredProperty.
    """

    text = (
        "The gel was dried at 60 °C for 10 h and the film weighed 5 mg in total; "
        "the rod length was 12 cm."
    )

    def setUp(self):
        text = self.text

        def span(surface, after=0):
            return _locate(text, surface, after)

        gold = [
            MeasurementFrame(span("60"), span("°C"), span("gel"), span("dried")),
            MeasurementFrame(span("10"), span("h", text.index("10 h"))),
            MeasurementFrame(span("5"), span("mg"), span("film"), span("weighed")),
            MeasurementFrame(span("12"), span("cm"), span("rod"), span("length")),
        ]
        pred = list(gold)
        pred[2] = pred[2].with_span(EntityClass.MEASURED_ENTITY, span("the film"))
        pred[3] = pred[3].with_span(EntityClass.MEASURED_PROPERTY, None)
        sentences = [Sentence(Span(0, len(text)), 0)]
        self.gold = [Document("d", text, sentences, gold, domain="msp", split="test")]
        self.pred = [Document("d", text, sentences, pred, domain="msp", split="test")]

    def test_strict(self):
        report = score_corpus(self.gold, self.pred)
        rows = _rows(report.entities, "class")
        self.assertEqual(rows.loc["MeasuredEntity", "partial"], 1)
        self.assertEqual(rows.loc["MeasuredProperty", "missing"], 1)
        self.assertAlmostEqual(rows.loc["Quantity", "f1"], 1.0)
        self.assertAlmostEqual(rows.loc["Unit", "f1"], 1.0)
        self.assertAlmostEqual(rows.loc["MeasuredEntity", "f1"], 2 / 3)
        self.assertAlmostEqual(rows.loc["MeasuredProperty", "precision"], 1.0)
        self.assertAlmostEqual(rows.loc["MeasuredProperty", "f1"], 0.8)
        self.assertAlmostEqual(rows.loc["Overall", "precision"], 12 / 13)
        self.assertAlmostEqual(rows.loc["Overall", "recall"], 6 / 7)
        self.assertAlmostEqual(rows.loc["Overall", "f1"], 8 / 9)

    def test_overlap(self):
        report = score_corpus(self.gold, self.pred, mode="overlap")
        rows = _rows(report.entities, "class")
        self.assertAlmostEqual(rows.loc["MeasuredEntity", "overlap_f1"], 8 / 9)
        self.assertAlmostEqual(rows.loc["MeasuredProperty", "overlap_precision"], 1.0)
        self.assertAlmostEqual(rows.loc["MeasuredProperty", "overlap_recall"], 2 / 3)
        self.assertIn("overlap_f1", report.entity_table().columns)
        self.assertNotIn("f1", report.entity_table().columns)

    def test_relations(self):
        rows = _rows(score_corpus(self.gold, self.pred).relations, "relation")
        self.assertEqual(rows.loc["HasProperty", ["gold", "pred", "correct"]].tolist(), [3, 2, 2])
        self.assertEqual(rows.loc["HasQuantity", ["gold", "pred", "correct"]].tolist(), [3, 3, 2])
        self.assertAlmostEqual(rows.loc["HasQuantity", "f1"], 2 / 3)
        self.assertAlmostEqual(rows.loc["Overall", "f1"], 8 / 11)


class TestScoreCorpus(unittest.TestCase):
    def setUp(self):
        self.gold = guideline_corpus()
        self.pred = [perturb_frames(doc, random_state=i) for i, doc in enumerate(self.gold)]

    def test_perfect(self):
        for mode in ("strict", "overlap"):
            report = score_corpus(self.gold, self.gold, mode=mode)
            score = "f1" if mode == "strict" else "overlap_f1"
            self.assertTrue(np.allclose(report.entities[score], 1.0), msg=mode)
            self.assertTrue(np.allclose(report.relations["f1"], 1.0), msg=mode)

    def test_empty_predictions(self):
        empty = [doc.with_frames([]) for doc in self.gold]
        report = score_corpus(self.gold, empty)
        self.assertTrue((report.entities["recall"] == 0).all())
        self.assertTrue((report.entities["overlap_recall"] == 0).all())
        self.assertTrue((report.relations["recall"] == 0).all())

    def test_swap_symmetry(self):
        forward = score_corpus(self.gold, self.pred)
        backward = score_corpus(self.pred, self.gold)
        for a, b in (
            ("precision", "recall"),
            ("missing", "spurious"),
            ("overlap_precision", "overlap_recall"),
        ):
            np.testing.assert_allclose(forward.entities[a], backward.entities[b], atol=1e-12)
        np.testing.assert_allclose(forward.entities["f1"], backward.entities["f1"], atol=1e-12)
        np.testing.assert_allclose(
            forward.relations["precision"], backward.relations["recall"], atol=1e-12
        )

    def test_order_invariance(self):
        forward = score_corpus(self.gold, self.pred)
        reversed_ = score_corpus(self.gold[::-1], self.pred[::-1], workers=3)
        pd.testing.assert_frame_equal(forward.entities, reversed_.entities)
        pd.testing.assert_frame_equal(forward.relations, reversed_.relations)

    def test_layout(self):
        report = score_corpus(self.gold, self.pred)
        self.assertEqual(report.entities["domain"].iloc[-1], "all")
        self.assertEqual(
            report.entities["class"].tolist()[:5],
            ["Quantity", "Unit", "MeasuredEntity", "MeasuredProperty", "Overall"],
        )
        payload = json.loads(report.to_json())
        self.assertEqual(payload["mode"], "strict")
        self.assertEqual(len(payload["entities"]), len(report.entities))
        self.assertIn("Entities (strict)", report.to_table())
        self.assertIn("Relations", report.to_table())

    def test_errors(self):
        with self.assertRaises(ValueError):
            score_corpus(self.gold, self.pred[1:])
        with self.assertRaises(KeyError):
            score_corpus(self.gold, self.pred, mode="lenient")
        with self.assertRaises(KeyError):
            score_corpus(self.gold, self.pred, strategy="random")
        with self.assertRaises(ValueError):
            align_corpora(self.gold, self.pred + [Document("extra", "x")])


class TestConfidenceInterval(unittest.TestCase):
    def setUp(self):
        self.gold = guideline_corpus()
        self.pred = [perturb_frames(doc, random_state=i) for i, doc in enumerate(self.gold)]

    def test_seeded(self):
        first = score_confidence_interval(self.gold, self.pred, bootstraps=200, random_state=7)
        second = score_confidence_interval(self.gold, self.pred, bootstraps=200, random_state=7)
        pd.testing.assert_frame_equal(first, second)
        self.assertTrue((first["lower"] <= first["upper"]).all())
        report = _rows(score_corpus(self.gold, self.pred).entities, "class")
        np.testing.assert_allclose(first.set_index("class")["f1"], report["f1"], atol=1e-12)

    def test_perfect(self):
        intervals = score_confidence_interval(self.gold, self.gold, bootstraps=50, random_state=1)
        self.assertTrue(np.allclose(intervals[["lower", "upper"]], 1.0))

    def test_errors(self):
        with self.assertRaises(ValueError):
            score_confidence_interval(self.gold, self.pred, interval=100)
        with self.assertRaises(ValueError):
            score_confidence_interval(self.gold, self.pred, bootstraps=0)
        with self.assertRaises(ValueError):
            score_confidence_interval([], [])


if __name__ == "__main__":
    unittest.main()
