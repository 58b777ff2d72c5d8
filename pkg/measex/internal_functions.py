from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List

import numpy as np
import numba as nb


def parallel_map(func: Callable, items: Iterable, workers: int = 1) -> List:
    """Apply ``func`` to every item, keeping input order.

    Runs serially when ``workers`` is 1, otherwise on a thread pool.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1.")
    if workers == 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))


@nb.jit(nopython=True, cache=True)
def overlap_matrix(gold_starts, gold_ends, pred_starts, pred_ends):
    """Numba-accelerated pairwise character overlap between two sets of spans.

    Parameters
    ----------
    gold_starts, gold_ends : 1D arrays of ints
        Half-open bounds of the gold spans.
    pred_starts, pred_ends : 1D arrays of ints
        Half-open bounds of the predicted spans.

    Returns
    -------
    2D array of ints
        Entry (i, j) is the number of characters shared by gold span i and
        predicted span j.
    """
    n_gold = gold_starts.shape[0]
    n_pred = pred_starts.shape[0]
    overlap = np.zeros((n_gold, n_pred), dtype=np.int64)
    for i in range(n_gold):
        for j in range(n_pred):
            lo = max(gold_starts[i], pred_starts[j])
            hi = min(gold_ends[i], pred_ends[j])
            if hi > lo:
                overlap[i, j] = hi - lo
    return overlap


@nb.jit(nopython=True, cache=True)
def greedy_assign(candidate_gold, candidate_pred, n_gold: int, n_pred: int):
    """Walks an ordered candidate list and keeps every pair whose endpoints
    are both still free.

    Parameters
    ----------
    candidate_gold, candidate_pred : 1D arrays of ints
        Gold and predicted indices of the candidate pairs, best candidate first.
    n_gold, n_pred : int
        Number of gold and predicted items.

    Returns
    -------
    1D array of ints
        Predicted index assigned to each gold item, -1 when unassigned.
    """
    gold_to_pred = np.full(n_gold, -1, dtype=np.int64)
    pred_taken = np.zeros(n_pred, dtype=np.bool_)
    for k in range(candidate_gold.shape[0]):
        g = candidate_gold[k]
        p = candidate_pred[k]
        if gold_to_pred[g] == -1 and not pred_taken[p]:
            gold_to_pred[g] = p
            pred_taken[p] = True
    return gold_to_pred


@nb.jit(nopython=True, cache=True)
def span_gaps(starts, ends, anchor_start: int, anchor_end: int):
    """Character gap between each span and an anchor span.

    Overlapping or touching spans have a gap of zero.

    Parameters
    ----------
    starts, ends : 1D arrays of ints
    anchor_start, anchor_end : int

    Returns
    -------
    1D array of ints
    """
    gaps = np.zeros(starts.shape[0], dtype=np.int64)
    for i in range(starts.shape[0]):
        gap = max(starts[i], anchor_start) - min(ends[i], anchor_end)
        if gap > 0:
            gaps[i] = gap
    return gaps


@nb.jit(nopython=True, cache=True)
def paint_labels(length: int, starts, ends, codes):
    """Builds a per-character label array from labelled spans.

    Spans are painted in the order given, so later spans win where spans
    nest. Characters covered by no span keep the label 0.

    Parameters
    ----------
    length : int
        Number of characters in the text.
    starts, ends : 1D arrays of ints
    codes : 1D array of ints
        Label of each span, greater than 0.

    Returns
    -------
    1D array of ints
    """
    labels = np.zeros(length, dtype=np.int64)
    for i in range(starts.shape[0]):
        for c in range(max(starts[i], 0), min(ends[i], length)):
            labels[c] = codes[i]
    return labels


@nb.jit(nopython=True, cache=True)
def label_value_counts(labels, n_values: int):
    """Counts, per unit, how many coders assigned each value.

    Parameters
    ----------
    labels : 2D array of ints
        One row per coder and one column per unit.
    n_values : int
        Size of the value domain.

    Returns
    -------
    2D array of ints
        Units by values.
    """
    n_coders, n_units = labels.shape
    counts = np.zeros((n_units, n_values), dtype=np.int64)
    for c in range(n_coders):
        for u in range(n_units):
            counts[u, labels[c, u]] += 1
    return counts


@nb.jit(nopython=True, cache=True)
def bootstrap_totals(per_document, indices):
    """Sums per-document count rows over resampled document indices.

    Parameters
    ----------
    per_document : 2D array of ints
        One row of counts per document.
    indices : 2D array of ints
        One row of document indices per bootstrap draw.

    Returns
    -------
    2D array of ints
        One row of totals per bootstrap draw.
    """
    n_draws = indices.shape[0]
    totals = np.zeros((n_draws, per_document.shape[1]), dtype=np.int64)
    for b in range(n_draws):
        for k in range(indices.shape[1]):
            totals[b] += per_document[indices[b, k]]
    return totals
