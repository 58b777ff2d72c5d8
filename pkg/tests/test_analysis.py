import json
import math
import os
import tempfile
import unittest
import warnings

import numpy as np
import pandas as pd

from measex.analysis import (
    CoderAnnotations,
    VocabularyWarning,
    attribute_report,
    entity_attributes,
    entity_density,
    entity_length,
    krippendorff_alpha,
    quantity_distance,
    read_coder_annotations,
    top_unigrams,
    vocab_overlap,
)
from measex.corpus import CorpusFormatError
from measex.model import Document, EntityClass, MeasurementFrame, Sentence, Span
from measex.tagging import tokenize

Q = EntityClass.QUANTITY
U = EntityClass.UNIT


class TestAttributes(unittest.TestCase):
    def test_entity_length(self):
        text = "deionized (DI) water"
        self.assertEqual(entity_length(Span(0, len(text)), tokenize(text)), 5)
        self.assertEqual(entity_length(Span(11, 13), tokenize(text)), 1)
        with self.assertRaises(ValueError):
            entity_length(Span(0, 40), tokenize(text))

    def test_entity_density(self):
        text = "The gel weighed 5 mg ."
        frames = [MeasurementFrame(Span(16, 17), Span(18, 20), Span(4, 7))]
        self.assertAlmostEqual(entity_density(text, frames), 3 / 6)
        with self.assertRaises(ValueError):
            entity_density("   ", [])

    def test_quantity_distance(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            a_start, b_start, d = (int(x) for x in rng.integers(0, 50, size=3))
            a = Span(a_start, a_start + 3)
            b = Span(b_start, b_start + 4)
            self.assertEqual(quantity_distance(a, b), quantity_distance(b, a))
            touching = a.start <= b.end and b.start <= a.end
            self.assertEqual(quantity_distance(a, b) == 0, touching)
            if b.start >= a.end:
                self.assertEqual(quantity_distance(a, b.shift(d)), quantity_distance(a, b) + d)
        self.assertEqual(quantity_distance(Span(0, 3), Span(3, 5)), 0)


class TestAttributeReport(unittest.TestCase):
    """
    Two sentences, three gold frames and four predicted frames giving twelve
    match records.
    """

    def setUp(self):
        text = "The dried gel weighed 5 mg . The film was heated to 60 °C for 2 h ."
        sentences = [Sentence(Span(0, 28), 0), Sentence(Span(29, 67), 1)]
        gold = [
            MeasurementFrame(Span(22, 23), Span(24, 26), Span(4, 13), Span(14, 21)),
            MeasurementFrame(Span(52, 54), Span(55, 57), Span(33, 37), Span(42, 48)),
            MeasurementFrame(Span(62, 63), Span(64, 65)),
        ]
        pred = [
            MeasurementFrame(Span(22, 23), Span(24, 26), Span(10, 13), Span(14, 21)),
            MeasurementFrame(Span(52, 54), Span(55, 57), Span(29, 37)),
            MeasurementFrame(Span(62, 65)),
            MeasurementFrame(Span(0, 3), measured_entity=Span(4, 9)),
        ]
        self.gold = [Document("d", text, sentences, gold, domain="msp", split="test")]
        self.pred = [Document("d", text, sentences, pred, domain="msp", split="test")]

    def test_records(self):
        attributes = entity_attributes(self.gold, self.pred)
        self.assertEqual(len(attributes), 12)
        self.assertEqual(
            attributes["match_type"].value_counts().to_dict(),
            {"match": 5, "partial": 3, "spurious": 2, "missing": 2},
        )

    def test_report(self):
        s0, s1, p0 = 4 / 7, 6 / 11, 6 / 7
        nan = float("nan")
        expected = pd.DataFrame(
            [
                ("msp", "Quantity", "match", 2, 1.0, (s0 + s1) / 2, nan),
                ("msp", "Quantity", "partial", 1, 1.0, s1, nan),
                ("msp", "Quantity", "spurious", 1, 1.0, p0, nan),
                ("msp", "Unit", "match", 2, 1.0, (s0 + s1) / 2, nan),
                ("msp", "Unit", "missing", 1, 1.0, s1, nan),
                ("msp", "MeasuredEntity", "partial", 2, 1.5, (s0 + s1) / 2, 12.0),
                ("msp", "MeasuredEntity", "spurious", 1, 1.0, p0, 1.0),
                ("msp", "MeasuredProperty", "match", 1, 1.0, s0, 1.0),
                ("msp", "MeasuredProperty", "missing", 1, 1.0, s1, 4.0),
            ],
            columns=[
                "domain",
                "entity_class",
                "match_type",
                "count",
                "mean_eLen",
                "mean_eDen",
                "mean_qDist",
            ],
        )
        report = attribute_report(self.gold, self.pred)
        pd.testing.assert_frame_equal(report, expected, check_dtype=False)

    def test_report_matches_brute_force(self):
        attributes = entity_attributes(self.gold, self.pred).to_dict(orient="records")
        report = attribute_report(self.gold, self.pred, workers=2)
        for row in report.itertuples(index=False):
            selected = [
                a
                for a in attributes
                if (a["domain"], a["class"], a["match_type"])
                == (row.domain, row.entity_class, row.match_type)
            ]
            self.assertEqual(row.count, len(selected))
            self.assertAlmostEqual(row.mean_eLen, sum(a["eLen"] for a in selected) / len(selected))
            distances = [a["qDist"] for a in selected if not math.isnan(a["qDist"])]
            if distances:
                self.assertAlmostEqual(row.mean_qDist, sum(distances) / len(distances))
            else:
                self.assertTrue(math.isnan(row.mean_qDist))

    def test_empty(self):
        report = attribute_report([], [])
        self.assertTrue(report.empty)
        self.assertIn("mean_eLen", report.columns)


class TestVocabOverlap(unittest.TestCase):
    words = "alpha beta gamma delta epsilon zeta eta theta iota kappa".split()

    def test_known_intersection(self):
        first = [Document("a", " ".join(self.words))]
        second = [Document("b", " ".join(self.words[:6] + ["lambda", "mu", "nu", "xi"]))]
        with warnings.catch_warnings():
            warnings.simplefilter("error", VocabularyWarning)
            matrix = vocab_overlap([("first", first), ("second", second)], k=10)
        self.assertEqual(matrix.loc["first", "second"], 0.6)
        self.assertEqual(matrix.loc["second", "first"], 0.6)
        self.assertEqual(np.diag(matrix.values).tolist(), [1.0, 1.0])

    def test_symmetric_unit_diagonal(self):
        rng = np.random.default_rng(4)
        corpora = []
        for c in range(4):
            sample = rng.choice(self.words, size=int(rng.integers(0, 30)))
            corpora.append((f"c{c}", [Document(f"c{c}", " ".join(sample))]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", VocabularyWarning)
            matrix = vocab_overlap(corpora, k=5).values
        np.testing.assert_allclose(matrix, matrix.T)
        np.testing.assert_allclose(np.diag(matrix), 1.0)

    def test_small_corpus_warns(self):
        with self.assertWarns(VocabularyWarning):
            vocab_overlap([("tiny", [Document("t", "one word")])], k=10)
        with self.assertRaises(ValueError):
            vocab_overlap([], k=0)

    def test_top_unigrams_ties(self):
        docs = [Document("d", "b a c a b d")]
        self.assertEqual(top_unigrams(docs, 3), ["a", "b", "c"])


class TestKrippendorffAlpha(unittest.TestCase):
    def test_fixture(self):
        a = CoderAnnotations("a", {"d": [(Q, Span(0, 2))]})
        b = CoderAnnotations("b", {"d": [(Q, Span(0, 1))]})
        alpha = krippendorff_alpha([a, b], {"d": "abcd"})
        self.assertAlmostEqual(alpha["combined"], 1 - (2 / 8) / (30 / 56), delta=1e-4)
        self.assertAlmostEqual(alpha["Quantity"], 0.5333, delta=1e-4)

    def test_nested_spans_per_class(self):
        """
        A unit nested in an agreed quantity leaves the quantity score untouched.
        """
        a = CoderAnnotations("a", {"d": [(Q, Span(0, 5)), (U, Span(3, 5))]})
        b = CoderAnnotations("b", {"d": [(Q, Span(0, 5))]})
        alpha = krippendorff_alpha([a, b], {"d": "abcdefgh"})
        self.assertEqual(alpha["Quantity"], 1.0)
        self.assertLess(alpha["Unit"], 1.0)
        self.assertLess(alpha["combined"], 1.0)

    def test_perfect_agreement(self):
        spans = [(Q, Span(0, 2)), (U, Span(3, 5))]
        coders = [CoderAnnotations(name, {"d": spans}) for name in "abc"]
        alpha = krippendorff_alpha(coders, {"d": "10 mg of salt"})
        self.assertTrue(np.allclose(alpha.values, 1.0, atol=1e-12))

    def test_coder_permutation(self):
        """
        Alpha does not depend on the order in which coders are listed.
        """
        rng = np.random.default_rng(11)
        text = "x" * 30
        for _ in range(100):
            coders = []
            for name in "abc":
                spans = []
                for _ in range(int(rng.integers(1, 4))):
                    start = int(rng.integers(0, 25))
                    entity_class = list(EntityClass)[int(rng.integers(0, 4))]
                    spans.append((entity_class, Span(start, start + int(rng.integers(1, 6)))))
                coders.append(CoderAnnotations(name, {"d": spans}))
            forward = krippendorff_alpha(coders, {"d": text}, classes=[])
            backward = krippendorff_alpha(coders[::-1], {"d": text}, classes=[])
            self.assertAlmostEqual(forward["combined"], backward["combined"], delta=1e-9)
            self.assertGreaterEqual(forward["combined"], -1.0)
            self.assertLessEqual(forward["combined"], 1.0)

    def test_errors(self):
        a = CoderAnnotations("a", {"d": []})
        with self.assertRaises(ValueError):
            krippendorff_alpha([a], {"d": "abcd"})
        with self.assertRaises(ValueError):
            krippendorff_alpha([a, CoderAnnotations("b", {"e": []})], {"d": "abcd"})
        with self.assertRaises(ValueError):
            outside = CoderAnnotations("b", {"d": [(Q, Span(2, 9))]})
            krippendorff_alpha([a, outside], {"d": "abcd"})

    def test_read_coder_annotations(self):
        record = {
            "doc_id": "d",
            "text": "It weighed 5 g.",
            "spans": [
                {"class": "Q", "start": 11, "end": 12},
                {"class": "Unit", "start": 13, "end": 14},
            ],
        }
        with tempfile.TemporaryDirectory() as tmp:
            for name in ("ann1", "ann2"):
                with open(os.path.join(tmp, f"{name}.jsonl"), "w", encoding="utf-8") as handle:
                    handle.write(json.dumps(record) + "\n")
            coders, texts = read_coder_annotations(tmp)
        self.assertEqual([c.coder for c in coders], ["ann1", "ann2"])
        self.assertEqual(texts, {"d": "It weighed 5 g."})
        self.assertEqual(coders[0].documents["d"], [(Q, Span(11, 12)), (U, Span(13, 14))])
        self.assertEqual(krippendorff_alpha(coders, texts)["combined"], 1.0)

    def test_malformed_coder_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "ann1.jsonl")
            with open(path, "w", encoding="utf-8") as handle:
                handle.write(json.dumps({"doc_id": "d", "text": "abc"}) + "\n")
                handle.write(json.dumps({"doc_id": "e", "spans": []}) + "\n")
            with self.assertRaises(CorpusFormatError) as raises:
                read_coder_annotations(tmp)
        self.assertEqual(raises.exception.line, 2)
        self.assertEqual(raises.exception.field, "text")
        self.assertIn("ann1.jsonl", str(raises.exception))

    def test_no_coder_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(FileNotFoundError):
                read_coder_annotations(tmp)


if __name__ == "__main__":
    unittest.main()
