"""Match-type classification, strict and overlap F1, and relation scoring.

Spans are paired per class. Quantities are paired first within each document;
the Unit, MeasuredEntity and MeasuredProperty spans of paired frames are then
compared with each other, and relations only earn credit inside a quantity
pair.
"""
import json
import math
from collections import Counter
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from measex.internal_functions import bootstrap_totals, greedy_assign, overlap_matrix, parallel_map
from measex.model import (
    CONTEXT_CLASSES,
    Document,
    EntityClass,
    MeasurementFrame,
    RelationType,
    Span,
    implied_relations,
)

MATCH_TYPES = ("match", "partial", "missing", "spurious")
STRATEGIES = ("greedy", "optimal")
MODES = ("strict", "overlap")
OVERALL = "Overall"
ALL_DOMAINS = "all"

_CLASS_ORDER = [entity_class.value for entity_class in EntityClass] + [OVERALL]
_RELATION_ORDER = [relation.value for relation in RelationType] + [OVERALL]
_OVERLAP_FIELDS = ("overlap_sum", "both", "gold_only", "pred_only")
_STRICT_COLUMNS = ["precision", "recall", "f1"]
_OVERLAP_COLUMNS = ["overlap_precision", "overlap_recall", "overlap_f1"]


class MatchRecord(NamedTuple):
    """Outcome for one gold span, one predicted span, or a pair of them."""

    entity_class: EntityClass
    match_type: str
    gold: Optional[Span]
    pred: Optional[Span]


class AnchoredRecord(NamedTuple):
    """A match record with the quantity of the frame it was scored in.

    ``quantity`` is the gold quantity, except for spurious records where it is
    the predicted one. Quantity records have no anchor.
    """

    record: MatchRecord
    quantity: Optional[Span]


class QuantityAlignment(NamedTuple):
    pairs: List[Tuple[int, int]]
    unmatched_gold: List[int]
    unmatched_pred: List[int]


def _span_arrays(spans: Sequence[Span]):
    starts = np.array([span.start for span in spans], dtype=np.int64)
    ends = np.array([span.end for span in spans], dtype=np.int64)
    return starts, ends


def pair_spans(gold: Sequence[Span], pred: Sequence[Span], strategy: str = "greedy"):
    """Pair gold and predicted spans one-to-one on character overlap.

    Parameters
    ----------
    gold, pred : sequence of Span
    strategy : {"greedy", "optimal"}, optional
        "greedy" walks candidate pairs by descending overlap, preferring
        identical spans on equal overlap and then the pair whose leftmost span
        comes first. "optimal" maximizes the number of identical pairs first
        and the total overlap second. By default "greedy".

    Returns
    -------
    1D array of ints
        Index of the predicted span paired with each gold span, -1 when the
        gold span stays unpaired. Zero-overlap pairs never form.

    Examples
    --------
    >>> pair_spans([Span(0, 5), Span(10, 20)], [Span(12, 15)]).tolist()
    [-1, 0]
    """
    if strategy not in STRATEGIES:
        raise KeyError("Invalid 'strategy' argument.")
    gold_starts, gold_ends = _span_arrays(gold)
    pred_starts, pred_ends = _span_arrays(pred)
    overlap = overlap_matrix(gold_starts, gold_ends, pred_starts, pred_ends)
    exact = (gold_starts[:, None] == pred_starts[None, :]) & (
        gold_ends[:, None] == pred_ends[None, :]
    )
    exact &= overlap > 0
    if strategy == "optimal":
        return _optimal_pairing(overlap, exact)

    gi, pi = np.nonzero(overlap)
    gs, ge, ps, pe = gold_starts[gi], gold_ends[gi], pred_starts[pi], pred_ends[pi]
    gold_first = (gs < ps) | ((gs == ps) & (ge <= pe))
    order = np.lexsort(
        (
            pi,
            gi,
            np.where(gold_first, pe, ge),
            np.where(gold_first, ps, gs),
            np.where(gold_first, ge, pe),
            np.where(gold_first, gs, ps),
            -exact[gi, pi].astype(np.int64),
            -overlap[gi, pi],
        )
    )
    return greedy_assign(
        gi[order].astype(np.int64), pi[order].astype(np.int64), len(gold), len(pred)
    )


def _optimal_pairing(overlap, exact):
    n_gold, n_pred = overlap.shape
    gold_to_pred = np.full(n_gold, -1, dtype=np.int64)
    if overlap.size == 0:
        return gold_to_pred
    weight = overlap + exact * (int(overlap.sum()) + 1)
    rows, cols = linear_sum_assignment(weight, maximize=True)
    keep = weight[rows, cols] > 0
    gold_to_pred[rows[keep]] = cols[keep]
    return gold_to_pred


def classify_matches(
    gold: Sequence[Span],
    pred: Sequence[Span],
    entity_class: EntityClass,
    strategy: str = "greedy",
) -> List[MatchRecord]:
    """Classify every span of one class in one document.

    Identical pairs are matches, overlapping pairs partial matches, unpaired
    gold spans missing and unpaired predictions spurious.

    Examples
    --------
    >>> [r.match_type for r in classify_matches([Span(0, 5)], [Span(0, 3)], EntityClass.UNIT)]
    ['partial']
    >>> [r.match_type for r in classify_matches([Span(0, 5)], [Span(10, 12)], EntityClass.UNIT)]
    ['missing', 'spurious']
    """
    gold, pred = list(gold), list(pred)
    gold_to_pred = pair_spans(gold, pred, strategy)
    records = []
    paired = set()
    for g, p in enumerate(gold_to_pred.tolist()):
        if p < 0:
            records.append(MatchRecord(entity_class, "missing", gold[g], None))
            continue
        paired.add(p)
        match_type = "match" if gold[g] == pred[p] else "partial"
        records.append(MatchRecord(entity_class, match_type, gold[g], pred[p]))
    for p, span in enumerate(pred):
        if p not in paired:
            records.append(MatchRecord(entity_class, "spurious", None, span))
    return records


def _prf(correct, n_pred, n_gold) -> Tuple[float, float, float]:
    precision = correct / n_pred if n_pred else 0.0
    recall = correct / n_gold if n_gold else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def strict_prf(records: Sequence[MatchRecord]) -> Tuple[float, float, float]:
    """Strict precision, recall and F1, where partial matches count as errors.

    Examples
    --------
    >>> records = [MatchRecord(EntityClass.QUANTITY, "match", Span(0, 1), Span(0, 1))]
    >>> strict_prf(records)
    (1.0, 1.0, 1.0)
    """
    counts = Counter(record.match_type for record in records)
    return _strict_from_counts(
        counts["match"], counts["partial"], counts["missing"], counts["spurious"]
    )


def _strict_from_counts(match, partial, missing, spurious):
    return _prf(match, match + partial + spurious, match + partial + missing)


def match_quantities(
    gold_frames: Sequence[MeasurementFrame],
    pred_frames: Sequence[MeasurementFrame],
    strategy: str = "greedy",
) -> QuantityAlignment:
    """Pair the frames of one document on quantity overlap.

    Examples
    --------
    >>> gold = [MeasurementFrame(Span(0, 4)), MeasurementFrame(Span(5, 12))]
    >>> pred = [MeasurementFrame(Span(3, 10))]
    >>> match_quantities(gold, pred)
    QuantityAlignment(pairs=[(1, 0)], unmatched_gold=[0], unmatched_pred=[])
    """
    gold_to_pred = pair_spans(
        [frame.quantity for frame in gold_frames],
        [frame.quantity for frame in pred_frames],
        strategy,
    ).tolist()
    pairs = [(g, p) for g, p in enumerate(gold_to_pred) if p >= 0]
    paired = {p for _, p in pairs}
    return QuantityAlignment(
        pairs,
        [g for g, p in enumerate(gold_to_pred) if p < 0],
        [p for p in range(len(pred_frames)) if p not in paired],
    )


def overlap_f1(gold_span: Optional[Span], pred_span: Optional[Span]) -> float:
    """Character-overlap F1 of two spans, 0 when either is absent.

    Examples
    --------
    >>> overlap_f1(Span(21, 32), Span(22, 32)) == 20 / 21
    True
    """
    if gold_span is None or pred_span is None:
        return 0.0
    total = gold_span.length + pred_span.length
    if total <= 0:
        return 0.0
    return 2 * gold_span.overlap(pred_span) / total


class DocumentMatches(NamedTuple):
    doc_id: str
    domain: str
    records: List[AnchoredRecord]
    alignment: QuantityAlignment
    gold_frames: Tuple[MeasurementFrame, ...]
    pred_frames: Tuple[MeasurementFrame, ...]


def match_document(gold: Document, pred: Document, strategy: str = "greedy") -> DocumentMatches:
    """Classify every span of a document pair.

    Quantities are classified over the document's distinct quantity spans.
    Context spans are classified inside each quantity pair; the context spans
    of unpaired gold frames are missing and those of unpaired predicted frames
    spurious.
    """
    records = [
        AnchoredRecord(record, None)
        for record in classify_matches(
            sorted({frame.quantity for frame in gold.frames}),
            sorted({frame.quantity for frame in pred.frames}),
            EntityClass.QUANTITY,
            strategy,
        )
    ]
    alignment = match_quantities(gold.frames, pred.frames, strategy)
    for g, p in alignment.pairs:
        gold_frame, pred_frame = gold.frames[g], pred.frames[p]
        for entity_class in CONTEXT_CLASSES:
            gold_span, pred_span = gold_frame.get(entity_class), pred_frame.get(entity_class)
            for record in classify_matches(
                [] if gold_span is None else [gold_span],
                [] if pred_span is None else [pred_span],
                entity_class,
                strategy,
            ):
                if record.match_type == "spurious":
                    records.append(AnchoredRecord(record, pred_frame.quantity))
                else:
                    records.append(AnchoredRecord(record, gold_frame.quantity))
    for g in alignment.unmatched_gold:
        frame = gold.frames[g]
        for entity_class, span in frame.entities():
            if entity_class is not EntityClass.QUANTITY:
                records.append(
                    AnchoredRecord(MatchRecord(entity_class, "missing", span, None), frame.quantity)
                )
    for p in alignment.unmatched_pred:
        frame = pred.frames[p]
        for entity_class, span in frame.entities():
            if entity_class is not EntityClass.QUANTITY:
                records.append(
                    AnchoredRecord(
                        MatchRecord(entity_class, "spurious", None, span), frame.quantity
                    )
                )
    return DocumentMatches(
        gold.doc_id, gold.domain, records, alignment, gold.frames, pred.frames
    )


def align_corpora(
    gold_docs: Sequence[Document], pred_docs: Sequence[Document]
) -> List[Tuple[Document, Document]]:
    """Pair gold and predicted documents by ``doc_id``, in gold order.

    Raises
    ------
    ValueError
        If the two corpora do not hold the same documents.
    """
    predicted = {doc.doc_id: doc for doc in pred_docs}
    gold_ids = [doc.doc_id for doc in gold_docs]
    missing = sorted(set(gold_ids) - set(predicted))
    unexpected = sorted(set(predicted) - set(gold_ids))
    if missing or unexpected:
        parts = []
        if missing:
            parts.append(f"no predictions for {missing}")
        if unexpected:
            parts.append(f"predictions for unknown documents {unexpected}")
        raise ValueError("Gold and predicted corpora differ: " + "; ".join(parts) + ".")
    return [(doc, predicted[doc.doc_id]) for doc in gold_docs]


def _entity_tally(matches: DocumentMatches) -> List[dict]:
    rows = {
        entity_class: dict.fromkeys(MATCH_TYPES + _OVERLAP_FIELDS, 0)
        for entity_class in EntityClass
    }
    overlap_scores: Dict[EntityClass, List[float]] = {c: [] for c in EntityClass}
    for anchored in matches.records:
        rows[anchored.record.entity_class][anchored.record.match_type] += 1

    gold_frames, pred_frames = matches.gold_frames, matches.pred_frames
    frame_pairs = [(gold_frames[g], pred_frames[p]) for g, p in matches.alignment.pairs]
    frame_pairs += [(gold_frames[g], None) for g in matches.alignment.unmatched_gold]
    frame_pairs += [(None, pred_frames[p]) for p in matches.alignment.unmatched_pred]
    for gold_frame, pred_frame in frame_pairs:
        for entity_class in EntityClass:
            gold_span = None if gold_frame is None else gold_frame.get(entity_class)
            pred_span = None if pred_frame is None else pred_frame.get(entity_class)
            row = rows[entity_class]
            if gold_span is not None and pred_span is not None:
                row["both"] += 1
                overlap_scores[entity_class].append(overlap_f1(gold_span, pred_span))
            elif gold_span is not None:
                row["gold_only"] += 1
            elif pred_span is not None:
                row["pred_only"] += 1
    for entity_class, scores in overlap_scores.items():
        rows[entity_class]["overlap_sum"] = math.fsum(scores)

    return [
        dict(doc_id=matches.doc_id, domain=matches.domain, entity_class=entity_class.value, **row)
        for entity_class, row in rows.items()
    ]


def _relation_tally(matches: DocumentMatches) -> List[dict]:
    counts = {relation: Counter() for relation in RelationType}
    for frame in matches.gold_frames:
        for edge in implied_relations(frame):
            counts[edge.relation.relation]["gold"] += 1
    for frame in matches.pred_frames:
        for edge in implied_relations(frame):
            counts[edge.relation.relation]["pred"] += 1
    for g, p in matches.alignment.pairs:
        gold_edges = {edge.relation: edge for edge in implied_relations(matches.gold_frames[g])}
        for edge in implied_relations(matches.pred_frames[p]):
            gold_edge = gold_edges.get(edge.relation)
            if (
                gold_edge is not None
                and gold_edge.source_span.overlaps(edge.source_span)
                and gold_edge.target_span.overlaps(edge.target_span)
            ):
                counts[edge.relation.relation]["correct"] += 1
    return [
        {
            "doc_id": matches.doc_id,
            "domain": matches.domain,
            "relation": relation.value,
            "gold": tally["gold"],
            "pred": tally["pred"],
            "correct": tally["correct"],
        }
        for relation, tally in counts.items()
    ]


def _entity_rows(tally: pd.DataFrame) -> pd.DataFrame:
    aggregations = {column: "sum" for column in MATCH_TYPES + _OVERLAP_FIELDS}
    # exact float sums keep the scores independent of document order
    aggregations["overlap_sum"] = math.fsum
    scoped = pd.concat([tally, tally.assign(domain=ALL_DOMAINS)], ignore_index=True)
    per_class = scoped.groupby(["domain", "entity_class"], sort=False).agg(aggregations)
    overall = scoped.groupby("domain", sort=False).agg(aggregations)
    rows = pd.concat(
        [per_class.reset_index(), overall.reset_index().assign(entity_class=OVERALL)],
        ignore_index=True,
    )

    strict = [
        _strict_from_counts(r.match, r.partial, r.missing, r.spurious)
        for r in rows.itertuples(index=False)
    ]
    loose = [
        _overlap_scores(r.overlap_sum, r.both, r.gold_only, r.pred_only)
        for r in rows.itertuples(index=False)
    ]
    rows = pd.concat(
        [
            rows,
            pd.DataFrame(strict, index=rows.index, columns=_STRICT_COLUMNS),
            pd.DataFrame(loose, index=rows.index, columns=_OVERLAP_COLUMNS),
        ],
        axis=1,
    )
    rows = rows.rename(columns={"entity_class": "class"})
    return _ordered(rows, "class", _CLASS_ORDER)[
        ["domain", "class"] + list(MATCH_TYPES) + _STRICT_COLUMNS + _OVERLAP_COLUMNS
    ]


def _overlap_scores(total, both, gold_only, pred_only):
    n_pred = both + pred_only
    n_gold = both + gold_only
    union = both + gold_only + pred_only
    return (
        total / n_pred if n_pred else 0.0,
        total / n_gold if n_gold else 0.0,
        total / union if union else 0.0,
    )


def _relation_rows(tally: pd.DataFrame) -> pd.DataFrame:
    scoped = pd.concat([tally, tally.assign(domain=ALL_DOMAINS)], ignore_index=True)
    per_relation = (
        scoped.groupby(["domain", "relation"], sort=False)[["gold", "pred", "correct"]]
        .sum()
        .reset_index()
    )
    overall = per_relation.groupby("domain", sort=False)[["gold", "pred", "correct"]].sum()
    overall = overall.reset_index().assign(relation=OVERALL)
    rows = pd.concat([per_relation, overall], ignore_index=True)
    scores = [_prf(r.correct, r.pred, r.gold) for r in rows.itertuples(index=False)]
    scores = pd.DataFrame(scores, index=rows.index, columns=_STRICT_COLUMNS)
    rows = pd.concat([rows, scores], axis=1)
    return _ordered(rows, "relation", _RELATION_ORDER)[
        ["domain", "relation", "gold", "pred", "correct"] + _STRICT_COLUMNS
    ]


def _ordered(rows: pd.DataFrame, column: str, order: List[str]) -> pd.DataFrame:
    domains = sorted(set(rows["domain"]) - {ALL_DOMAINS}) + [ALL_DOMAINS]
    rows = rows.assign(
        _domain=rows["domain"].map(domains.index), _item=rows[column].map(order.index)
    )
    rows = rows.sort_values(["_domain", "_item"], kind="mergesort")
    return rows.drop(columns=["_domain", "_item"]).reset_index(drop=True)


class ScoreReport:
    """Scores per domain and class, plus relation scores.

    Attributes
    ----------
    mode : {"strict", "overlap"}
        Which scores :meth:`to_table` and :meth:`to_json` present.
    entities : pandas.DataFrame
        One row per (domain, class) with match-type counts and both strict
        and overlap precision, recall and F1. The "Overall" class row
        micro-averages the four classes and the "all" domain pools every
        document.
    relations : pandas.DataFrame
        One row per (domain, relation type) with gold, predicted and correct
        edge counts and precision, recall and F1.
    """

    def __init__(self, mode: str, entities: pd.DataFrame, relations: pd.DataFrame):
        if mode not in MODES:
            raise KeyError("Invalid 'mode' argument.")
        self.mode = mode
        self.entities = entities
        self.relations = relations

    def entity_table(self) -> pd.DataFrame:
        scores = _STRICT_COLUMNS if self.mode == "strict" else _OVERLAP_COLUMNS
        return self.entities[["domain", "class"] + list(MATCH_TYPES) + scores]

    def to_json(self) -> str:
        """Full-precision JSON document of the report."""
        payload = {
            "mode": self.mode,
            "entities": _records(self.entity_table()),
            "relations": _records(self.relations),
        }
        return json.dumps(payload, indent=2)

    def to_table(self) -> str:
        """Aligned text tables with scores rounded to three decimals."""
        formatter = "{:.3f}".format
        return "\n".join(
            [
                f"Entities ({self.mode})",
                self.entity_table().to_string(index=False, float_format=formatter),
                "",
                "Relations",
                self.relations.to_string(index=False, float_format=formatter),
            ]
        )


def _records(frame: pd.DataFrame) -> List[dict]:
    return [
        {key: _native(value) for key, value in row.items()}
        for row in frame.to_dict(orient="records")
    ]


def _native(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def score_corpus(
    gold_docs: Sequence[Document],
    pred_docs: Sequence[Document],
    mode: str = "strict",
    strategy: str = "greedy",
    workers: int = 1,
) -> ScoreReport:
    """Score predicted frames against gold frames.

    Parameters
    ----------
    gold_docs, pred_docs : sequence of Document
        Corpora holding the same ``doc_id`` values. Domains come from the
        gold documents.
    mode : {"strict", "overlap"}, optional
        Scores presented by the report, by default "strict". Both are always
        computed.
    strategy : {"greedy", "optimal"}, optional
        Span pairing strategy, see :func:`pair_spans`.
    workers : int, optional
        Threads used for per-document matching, by default 1.

    Returns
    -------
    ScoreReport

    Raises
    ------
    ValueError
        If the corpora hold different documents.
    KeyError
        On an unknown ``mode`` or ``strategy``.
    """
    if mode not in MODES:
        raise KeyError("Invalid 'mode' argument.")
    if strategy not in STRATEGIES:
        raise KeyError("Invalid 'strategy' argument.")
    pairs = align_corpora(gold_docs, pred_docs)
    matches = parallel_map(lambda pair: match_document(*pair, strategy), pairs, workers)

    entity_tally = pd.DataFrame(
        [row for document in matches for row in _entity_tally(document)],
        columns=["doc_id", "domain", "entity_class"]
        + list(MATCH_TYPES)
        + ["overlap_sum", "both", "gold_only", "pred_only"],
    )
    relation_tally = pd.DataFrame(
        [row for document in matches for row in _relation_tally(document)],
        columns=["doc_id", "domain", "relation", "gold", "pred", "correct"],
    )
    return ScoreReport(mode, _entity_rows(entity_tally), _relation_rows(relation_tally))


def score_confidence_interval(
    gold_docs: Sequence[Document],
    pred_docs: Sequence[Document],
    interval: float = 95,
    bootstraps: int = 1000,
    random_state=None,
    strategy: str = "greedy",
) -> pd.DataFrame:
    """Document-level bootstrap percentile intervals for strict F1.

    Documents are resampled with replacement and the match-type counts of
    each draw are pooled before F1 is computed.

    Parameters
    ----------
    gold_docs, pred_docs : sequence of Document
    interval : float, optional
        Percentage width of the interval, by default 95.
    bootstraps : int, optional
        Number of resampled corpora, by default 1000.
    random_state : int or numpy.random.Generator, optional
        Seeds the resampler.
    strategy : {"greedy", "optimal"}, optional

    Returns
    -------
    pandas.DataFrame
        Columns class, f1, lower and upper; one row per class plus "Overall".

    Raises
    ------
    ValueError
        If ``interval`` is not strictly between 0 and 100, ``bootstraps`` is
        below 1, or there are no documents.
    """
    if not 0 < interval < 100:
        raise ValueError("interval must be between 0 and 100.")
    if bootstraps < 1:
        raise ValueError("bootstraps must be at least 1.")
    pairs = align_corpora(gold_docs, pred_docs)
    if not pairs:
        raise ValueError("Cannot bootstrap an empty corpus.")

    classes = list(EntityClass)
    per_document = np.zeros((len(pairs), len(classes) * len(MATCH_TYPES)), dtype=np.int64)
    for d, pair in enumerate(pairs):
        for anchored in match_document(*pair, strategy).records:
            record = anchored.record
            column = classes.index(record.entity_class) * len(MATCH_TYPES)
            per_document[d, column + MATCH_TYPES.index(record.match_type)] += 1

    rng = np.random.default_rng(random_state)
    indices = rng.integers(0, len(pairs), size=(bootstraps, len(pairs)))
    totals = bootstrap_totals(per_document, indices).reshape(bootstraps, len(classes), -1)
    observed = per_document.sum(axis=0).reshape(len(classes), -1)
    totals = np.concatenate([totals, totals.sum(axis=1, keepdims=True)], axis=1)
    observed = np.concatenate([observed, observed.sum(axis=0, keepdims=True)], axis=0)

    tail = (100 - interval) / 2
    rows = []
    for c, name in enumerate([entity_class.value for entity_class in classes] + [OVERALL]):
        draws = _f1_array(totals[:, c, :])
        lower, upper = np.percentile(draws, [tail, 100 - tail])
        f1 = _strict_from_counts(*observed[c].tolist())[2]
        rows.append({"class": name, "f1": f1, "lower": lower, "upper": upper})
    return pd.DataFrame(rows, columns=["class", "f1", "lower", "upper"])


def _f1_array(counts: np.ndarray) -> np.ndarray:
    match, partial, missing, spurious = counts.T.astype(float)
    n_pred = match + partial + spurious
    n_gold = match + partial + missing
    precision = np.divide(match, n_pred, out=np.zeros_like(match), where=n_pred > 0)
    recall = np.divide(match, n_gold, out=np.zeros_like(match), where=n_gold > 0)
    both = precision + recall
    return np.divide(2 * precision * recall, both, out=np.zeros_like(match), where=both > 0)


__all__ = [
    "MATCH_TYPES",
    "MatchRecord",
    "AnchoredRecord",
    "QuantityAlignment",
    "DocumentMatches",
    "ScoreReport",
    "pair_spans",
    "classify_matches",
    "strict_prf",
    "match_quantities",
    "overlap_f1",
    "match_document",
    "align_corpora",
    "score_corpus",
    "score_confidence_interval",
]
