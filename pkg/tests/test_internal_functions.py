import unittest
from measex import internal_functions
import numpy as np


class TestOverlapMatrix(unittest.TestCase):
    def test_overlap_matrix(self):
        """
        Check the numba kernel against a direct pairwise computation.
        """
        rng = np.random.default_rng(123)
        for _ in range(50):
            gold_starts = rng.integers(0, 50, size=rng.integers(0, 6))
            gold_ends = gold_starts + rng.integers(1, 10, size=gold_starts.size)
            pred_starts = rng.integers(0, 50, size=rng.integers(0, 6))
            pred_ends = pred_starts + rng.integers(1, 10, size=pred_starts.size)

            ret = internal_functions.overlap_matrix(
                gold_starts, gold_ends, pred_starts, pred_ends
            )
            self.assertEqual(ret.shape, (gold_starts.size, pred_starts.size))
            for i in range(gold_starts.size):
                for j in range(pred_starts.size):
                    expected = max(
                        0, min(gold_ends[i], pred_ends[j]) - max(gold_starts[i], pred_starts[j])
                    )
                    self.assertEqual(ret[i, j], expected)


class TestGreedyAssign(unittest.TestCase):
    def test_first_candidate_wins(self):
        gold = np.array([0, 0, 1, 1])
        pred = np.array([1, 0, 1, 0])
        ret = internal_functions.greedy_assign(gold, pred, 2, 2)
        self.assertEqual(ret.tolist(), [1, 0])

    def test_unassigned(self):
        ret = internal_functions.greedy_assign(np.array([0]), np.array([0]), 3, 1)
        self.assertEqual(ret.tolist(), [0, -1, -1])


class TestSpanGaps(unittest.TestCase):
    def test_span_gaps(self):
        starts = np.array([0, 10, 20, 30])
        ends = np.array([5, 15, 25, 40])
        ret = internal_functions.span_gaps(starts, ends, 15, 22)
        self.assertEqual(ret.tolist(), [10, 0, 0, 8])


class TestPaintLabels(unittest.TestCase):
    def test_later_spans_win(self):
        ret = internal_functions.paint_labels(
            6, np.array([0, 2]), np.array([4, 3]), np.array([1, 2])
        )
        self.assertEqual(ret.tolist(), [1, 1, 2, 1, 0, 0])

    def test_clipped_to_length(self):
        ret = internal_functions.paint_labels(3, np.array([1]), np.array([10]), np.array([4]))
        self.assertEqual(ret.tolist(), [0, 4, 4])


class TestLabelValueCounts(unittest.TestCase):
    def test_label_value_counts(self):
        labels = np.array([[1, 1, 0, 0], [1, 0, 0, 0]])
        ret = internal_functions.label_value_counts(labels, 2)
        self.assertEqual(ret.tolist(), [[0, 2], [1, 1], [2, 0], [2, 0]])


class TestBootstrapTotals(unittest.TestCase):
    def test_bootstrap_totals(self):
        per_document = np.array([[1, 0], [0, 2], [3, 3]])
        indices = np.array([[0, 1, 2], [2, 2, 0]])
        ret = internal_functions.bootstrap_totals(per_document, indices)
        self.assertEqual(ret.tolist(), [[4, 5], [7, 6]])


class TestParallelMap(unittest.TestCase):
    def test_order_preserved(self):
        items = list(range(100))
        serial = internal_functions.parallel_map(lambda x: x * x, items, 1)
        threaded = internal_functions.parallel_map(lambda x: x * x, items, 4)
        self.assertEqual(serial, threaded)
        self.assertEqual(serial[:3], [0, 1, 4])

    def test_workers_validated(self):
        with self.assertRaises(ValueError):
            internal_functions.parallel_map(abs, [1], 0)


if __name__ == "__main__":
    unittest.main()
