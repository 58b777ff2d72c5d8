import json
import os
import tempfile
import unittest

from measex.corpus import (
    CorpusFormatError,
    DanglingReferenceError,
    MappingTable,
    SourceEntity,
    SourceRecord,
    SourceRelation,
    SpanBoundsError,
    convert_source_corpus,
    corpus_statistics,
    default_mapping_table,
    document_from_record,
    document_to_record,
    dumps_document,
    map_source_annotations,
    pool_corpora,
    read_corpus,
    read_source_annotations,
    segment_sentences,
    split_filter,
    write_corpus,
)
from measex.fixtures import CorpusSimulator, guideline_corpus
from measex.model import Document, EntityClass, MeasurementFrame, Span


class TestSegmentSentences(unittest.TestCase):
    def _texts(self, text):
        return [s.span.slice(text) for s in segment_sentences(text)]

    def test_examples(self):
        self.assertEqual(
            self._texts("It was dried at 60 °C. Then cooled."),
            ["It was dried at 60 °C.", "Then cooled."],
        )
        self.assertEqual(len(segment_sentences("See Fig. 3 for details.")), 1)
        self.assertEqual(segment_sentences(""), [])
        self.assertEqual(segment_sentences("   "), [])

    def test_protected(self):
        cases = (
            "Samples from Smith et al. 2019 were used.",
            "The yield was high (see Sec. 2. Then ignore it) overall.",
            "The value was 3.5 mg in total.",
            "Prepared by J. Smith in the lab.",
            "Solvents, e.g. Ethanol, were used.",
        )
        for text in cases:
            self.assertEqual(len(segment_sentences(text)), 1, msg=text)

    def test_digit_starts_sentence(self):
        self.assertEqual(len(segment_sentences("It was pure. 500 g were used.")), 2)
        self.assertEqual(len(segment_sentences("It was pure. then it was not.")), 1)

    def test_idempotent_and_ordered(self):
        for doc in guideline_corpus():
            sentences = segment_sentences(doc.text)
            for before, after in zip(sentences, sentences[1:]):
                self.assertLessEqual(before.span.end, after.span.start)
            for sentence in sentences:
                again = segment_sentences(doc.sentence_text(sentence))
                self.assertEqual(len(again), 1)

    def test_guideline_offsets(self):
        """
        Segmenting the guideline documents reproduces their stored sentences.
        """
        for doc in guideline_corpus():
            self.assertEqual(segment_sentences(doc.text), list(doc.sentences), msg=doc.doc_id)


class TestMapSourceAnnotations(unittest.TestCase):
    def setUp(self):
        self.table = default_mapping_table()

    def test_unit(self):
        entities = [
            SourceEntity("1", "Number", Span(0, 3)),
            SourceEntity("2", "Amount-Unit", Span(4, 6)),
        ]
        relations = [SourceRelation("1", "2", "Number_Of")]
        (frame,) = map_source_annotations(entities, relations, self.table)
        self.assertEqual(frame, MeasurementFrame(Span(0, 3), Span(4, 6)))

    def test_material_and_unmapped(self):
        entities = [
            SourceEntity("n", "Number", Span(10, 12)),
            SourceEntity("m", "Material", Span(0, 5)),
            SourceEntity("b", "Brand", Span(20, 25)),
        ]
        relations = [SourceRelation("m", "n", "Amount_Of"), SourceRelation("n", "b", "x")]
        (frame,) = map_source_annotations(entities, relations, self.table)
        self.assertEqual(frame, MeasurementFrame(Span(10, 12), measured_entity=Span(0, 5)))

    def test_two_hops_and_nearest(self):
        entities = [
            SourceEntity("n", "Number", Span(30, 32)),
            SourceEntity("u", "Condition-Unit", Span(33, 35)),
            SourceEntity("p", "Condition-Type", Span(20, 28)),
            SourceEntity("far", "Material", Span(0, 4)),
            SourceEntity("near", "Material", Span(10, 18)),
            SourceEntity("deep", "Apparatus-Unit", Span(40, 42)),
        ]
        relations = [
            SourceRelation("n", "u", "Number_Of"),
            SourceRelation("u", "p", "Condition_Of"),
            SourceRelation("far", "n", "x"),
            SourceRelation("near", "n", "x"),
            SourceRelation("p", "deep", "x"),
        ]
        (frame,) = map_source_annotations(entities, relations, self.table)
        self.assertEqual(frame.unit, Span(33, 35))
        self.assertEqual(frame.measured_property, Span(20, 28))
        self.assertEqual(frame.measured_entity, Span(10, 18))

    def test_mp_without_me_dropped(self):
        entities = [
            SourceEntity("n", "Number", Span(0, 2)),
            SourceEntity("p", "Property-Type", Span(3, 9)),
        ]
        (frame,) = map_source_annotations(entities, [SourceRelation("n", "p", "x")], self.table)
        self.assertEqual(frame, MeasurementFrame(Span(0, 2)))

    def test_one_frame_per_root(self):
        entities = [SourceEntity(str(i), "Number", Span(i * 3, i * 3 + 2)) for i in range(5)]
        self.assertEqual(len(map_source_annotations(entities, [], self.table)), 5)

    def test_dangling(self):
        entities = [SourceEntity("n", "Number", Span(0, 2))]
        with self.assertRaises(DanglingReferenceError) as raises:
            map_source_annotations(entities, [SourceRelation("n", "ghost", "x")], self.table)
        self.assertIn("ghost", str(raises.exception))

    def test_mapping_table(self):
        self.assertIs(self.table.lookup("Amount-Misc"), EntityClass.MEASURED_PROPERTY)
        self.assertIs(self.table.lookup("Number"), EntityClass.QUANTITY)
        self.assertIsNone(self.table.lookup("Operation"))
        with self.assertRaises(ValueError):
            MappingTable({"Value": "Unit"}, root_label="Value")


class TestCanonicalFormat(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def _path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_round_trip(self):
        sim = CorpusSimulator(random_state=5)
        sim.fit(n_documents=30, domains=("a", "b"))
        docs = sim.generate() + guideline_corpus()
        path = self._path("corpus.jsonl")
        write_corpus(docs, path)
        read_back = read_corpus(path)
        self.assertEqual(read_back, docs)
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        self.assertEqual(lines, [dumps_document(doc) for doc in read_back])

    def _record(self, **changes):
        record = {
            "doc_id": "d1",
            "domain": "msp",
            "split": "test",
            "text": "It weighed 5 g.",
            "sentences": [{"start": 0, "end": 15}],
            "frames": [
                {
                    "quantity": {"start": 11, "end": 12},
                    "unit": {"start": 13, "end": 14},
                    "measured_entity": {"start": 0, "end": 2},
                    "measured_property": None,
                }
            ],
        }
        record.update(changes)
        return record

    def test_valid_record(self):
        doc = document_from_record(self._record())
        self.assertEqual(doc.frames[0].unit, Span(13, 14))
        self.assertEqual(document_to_record(doc), self._record())

    def test_errors(self):
        with self.assertRaises(SpanBoundsError) as raises:
            document_from_record(self._record(frames=[{"quantity": {"start": 11, "end": 40}}]))
        self.assertIn("span-out-of-bounds doc=d1", str(raises.exception))

        with self.assertRaises(CorpusFormatError) as raises:
            document_from_record(self._record(frames=[{"unit": {"start": 13, "end": 14}}]), 7)
        self.assertIn("frames[0].quantity", str(raises.exception))
        self.assertEqual(raises.exception.line, 7)

        with self.assertRaises(CorpusFormatError):
            document_from_record(self._record(frames=[{"quantity": {"start": 12, "end": 11}}]))
        with self.assertRaises(CorpusFormatError):
            document_from_record(self._record(split="holdout"))
        with self.assertRaises(CorpusFormatError):
            document_from_record(self._record(text=None))

    def test_bad_line(self):
        path = self._path("bad.jsonl")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps(self._record()) + "\n{not json\n")
        with self.assertRaises(CorpusFormatError) as raises:
            read_corpus(path)
        self.assertEqual(raises.exception.line, 2)

    def test_duplicate_ids(self):
        doc = document_from_record(self._record())
        with self.assertRaises(ValueError):
            pool_corpora([doc], [doc])


class TestConvert(unittest.TestCase):
    def test_read_and_convert(self):
        record = {
            "doc_id": "s1",
            "text": "The powder was heated to 400 °C. Then 5 g was added.",
            "entities": [
                {"id": "T1", "type": "Number", "start": 25, "end": 28},
                {"id": "T2", "type": "Condition-Unit", "start": 29, "end": 31},
                {"id": "T3", "type": "Material", "start": 4, "end": 10},
            ],
            "relations": [
                {"from": "T2", "to": "T1", "label": "Number_Of"},
                {"from": "T3", "to": "T1", "label": "Condition_Of"},
            ],
        }
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "source.jsonl")
            with open(path, "w", encoding="utf-8") as handle:
                handle.write(json.dumps(record) + "\n")
            records = read_source_annotations(path)
        (doc,) = convert_source_corpus(records, split="train")
        self.assertEqual(len(doc.sentences), 2)
        self.assertEqual(doc.frames, (MeasurementFrame(Span(25, 28), Span(29, 31), Span(4, 10)),))
        (claim,) = convert_source_corpus(records, segment=False)
        self.assertEqual(len(claim.sentences), 1)

    def test_out_of_bounds_entity(self):
        record = SourceRecord("x", "abc", [SourceEntity("1", "Number", Span(1, 9))], [])
        with self.assertRaises(SpanBoundsError):
            convert_source_corpus([record])


class TestCorpusHelpers(unittest.TestCase):
    def test_split_filter(self):
        splits = ["train"] * 6 + ["dev"] * 2 + ["test"] * 2
        docs = [Document(f"d{i}", "x", split=s) for i, s in enumerate(splits)]
        self.assertEqual([d.doc_id for d in split_filter(docs, "test")], ["d8", "d9"])
        self.assertEqual(split_filter([], "test"), [])
        self.assertEqual(split_filter(docs, "unsplit"), [])

    def test_statistics(self):
        stats = corpus_statistics(guideline_corpus())
        (row,) = stats.to_dict(orient="records")
        self.assertEqual(row["domain"], "guideline")
        self.assertEqual(row["sentences"], 30)
        self.assertEqual(row["Q_total"], 40)
        self.assertLess(row["unigram_ratio"], 1.0)


if __name__ == "__main__":
    unittest.main()
