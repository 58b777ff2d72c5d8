"""Error analysis by entity attribute, vocabulary overlap between corpora and
character-level inter-annotator agreement."""
import json
import warnings
from collections import Counter
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import krippendorff
import numpy as np
import pandas as pd

from measex.corpus import CorpusFormatError
from measex.internal_functions import label_value_counts, paint_labels, parallel_map
from measex.model import Document, EntityClass, Span, sentence_entities
from measex.scoring import align_corpora, match_document
from measex.tagging import Token, tokenize, unigrams

# row order of the attribute report
REPORT_MATCH_ORDER = ("match", "partial", "spurious", "missing")
# later classes win where spans nest
_PAINT_ORDER = (
    EntityClass.QUANTITY,
    EntityClass.MEASURED_ENTITY,
    EntityClass.MEASURED_PROPERTY,
    EntityClass.UNIT,
)
_DISTANCE_CLASSES = (EntityClass.MEASURED_ENTITY, EntityClass.MEASURED_PROPERTY)
COMBINED = "combined"


class VocabularyWarning(Warning):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return repr(self.message)


class AttributeRow(NamedTuple):
    domain: str
    entity_class: str
    match_type: str
    count: int
    mean_eLen: float
    mean_eDen: float
    mean_qDist: float


class CoderAnnotations(NamedTuple):
    """Spans one coder marked, keyed by ``doc_id``."""

    coder: str
    documents: Mapping[str, Sequence[Tuple[EntityClass, Span]]]


def entity_length(span: Span, tokens: Sequence[Token]) -> int:
    """Number of tokens intersecting ``span``.

    Raises
    ------
    ValueError
        If ``span`` is not a valid span inside the extent of ``tokens``.

    Examples
    --------
    >>> text = "deionized (DI) water"
    >>> entity_length(Span(0, len(text)), tokenize(text))
    5
    """
    tokens = [token for token in tokens if not token.is_marker]
    if (
        not span.is_valid()
        or not tokens
        or span.start < tokens[0].span.start
        or span.end > tokens[-1].span.end
    ):
        raise ValueError(f"Span ({span.start}, {span.end}) lies outside the sentence.")
    return sum(1 for token in tokens if token.span.overlaps(span))


def entity_density(sentence_text: str, frames) -> float:
    """Distinct entities of all classes in a sentence per sentence token.

    ``frames`` use sentence-local offsets; entities outside the sentence are
    not counted.

    Raises
    ------
    ValueError
        If the sentence has no tokens.
    """
    n_tokens = len(tokenize(sentence_text))
    if n_tokens == 0:
        raise ValueError("Entity density is undefined for an empty sentence.")
    return len(sentence_entities(frames, Span(0, len(sentence_text)))) / n_tokens


def quantity_distance(entity_span: Span, q_span: Span) -> int:
    """Character gap between an entity and its quantity, 0 when they overlap or touch.

    Examples
    --------
    >>> quantity_distance(Span(10, 20), Span(25, 30))
    5
    """
    return entity_span.distance(q_span)


def _document_attributes(pair) -> List[dict]:
    gold, pred = pair
    matches = match_document(gold, pred)
    tokens = {id(gold): tokenize(gold.text), id(pred): tokenize(pred.text)}
    rows = []
    for anchored in matches.records:
        record = anchored.record
        spurious = record.match_type == "spurious"
        doc = pred if spurious else gold
        span = record.pred if spurious else record.gold
        sentence = doc.sentence_of(span)

        density = np.nan
        distance = np.nan
        if sentence is not None:
            density = len(sentence_entities(doc.frames, sentence.span)) / len(
                [t for t in tokens[id(doc)] if t.span.overlaps(sentence.span)]
            )
            if (
                record.entity_class in _DISTANCE_CLASSES
                and anchored.quantity is not None
                and sentence.span.contains(anchored.quantity)
            ):
                distance = quantity_distance(span, anchored.quantity)
        rows.append(
            {
                "domain": gold.domain,
                "doc_id": gold.doc_id,
                "class": record.entity_class.value,
                "match_type": record.match_type,
                "start": span.start,
                "end": span.end,
                "eLen": sum(1 for t in tokens[id(doc)] if t.span.overlaps(span)),
                "eDen": density,
                "qDist": distance,
            }
        )
    return rows


_ATTRIBUTE_COLUMNS = [
    "domain", "doc_id", "class", "match_type", "start", "end", "eLen", "eDen", "qDist"
]


def entity_attributes(
    gold_docs: Sequence[Document], pred_docs: Sequence[Document], workers: int = 1
) -> pd.DataFrame:
    """One row per match record with its length, density and quantity distance.

    Attributes are measured on the gold span, except for spurious
    predictions where the predicted span is used. ``qDist`` is only filled
    for MeasuredEntity and MeasuredProperty spans in their quantity's
    sentence.
    """
    pairs = align_corpora(gold_docs, pred_docs)
    per_document = parallel_map(_document_attributes, pairs, workers)
    return pd.DataFrame(
        [row for rows in per_document for row in rows], columns=_ATTRIBUTE_COLUMNS
    )


def attribute_report(
    gold_docs: Sequence[Document], pred_docs: Sequence[Document], workers: int = 1
) -> pd.DataFrame:
    """Count and mean attributes per domain, class and match type.

    Parameters
    ----------
    gold_docs, pred_docs : sequence of Document
        Aligned corpora.
    workers : int, optional
        Threads used per document, by default 1.

    Returns
    -------
    pandas.DataFrame
        Columns follow :class:`AttributeRow`. Means over no values are NaN.

    Raises
    ------
    ValueError
        If the corpora hold different documents.
    """
    attributes = entity_attributes(gold_docs, pred_docs, workers)
    columns = list(AttributeRow._fields)
    if attributes.empty:
        return pd.DataFrame(columns=columns)
    report = (
        attributes.groupby(["domain", "class", "match_type"], sort=False)
        .agg(
            count=("eLen", "size"),
            mean_eLen=("eLen", "mean"),
            mean_eDen=("eDen", "mean"),
            mean_qDist=("qDist", "mean"),
        )
        .reset_index()
        .rename(columns={"class": "entity_class"})
    )
    class_order = [entity_class.value for entity_class in EntityClass]
    report = report.assign(
        _class=report["entity_class"].map(class_order.index),
        _match=report["match_type"].map(REPORT_MATCH_ORDER.index),
    )
    report = report.sort_values(["domain", "_class", "_match"], kind="mergesort")
    return report[columns].reset_index(drop=True)


def top_unigrams(docs: Sequence[Document], k: int) -> List[str]:
    """The ``k`` most frequent lowercased unigrams, ties broken alphabetically."""
    counts = Counter(word for doc in docs for word in unigrams(doc.text))
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [word for word, _ in ranked[:k]]


def vocab_overlap(
    corpora: Sequence[Tuple[str, Sequence[Document]]], k: int = 500
) -> pd.DataFrame:
    """Share of top-``k`` unigrams each pair of corpora has in common.

    Parameters
    ----------
    corpora : sequence of (str, sequence of Document)
        Named corpora.
    k : int, optional
        Vocabulary size compared, by default 500.

    Returns
    -------
    pandas.DataFrame
        Symmetric matrix indexed by corpus name. Cell (i, j) is the size of
        the intersection of the two top-``k`` lists divided by ``k``, or by
        the longer list when both corpora hold fewer than ``k`` unigrams.

    Warns
    -----
    VocabularyWarning
        When a corpus holds fewer than ``k`` distinct unigrams.
    """
    if k < 1:
        raise ValueError("k must be at least 1.")
    names = [name for name, _ in corpora]
    tops = []
    for name, docs in corpora:
        top = top_unigrams(docs, k)
        if len(top) < k:
            warnings.warn(
                VocabularyWarning(
                    f"corpus {name!r} has {len(top)} distinct unigrams, fewer than k={k}"
                )
            )
        tops.append(set(top))

    matrix = np.zeros((len(tops), len(tops)))
    for i, top_i in enumerate(tops):
        for j, top_j in enumerate(tops):
            denominator = min(k, max(len(top_i), len(top_j)))
            if denominator == 0:
                matrix[i, j] = 1.0 if i == j else 0.0
            else:
                matrix[i, j] = len(top_i & top_j) / denominator
    return pd.DataFrame(matrix, index=names, columns=names)


def _character_labels(coders, documents, entity_class=None):
    # with entity_class, a 0/1 coverage array by that class's own spans
    codes = {c: code for code, c in enumerate(_PAINT_ORDER, start=1)}
    rows = []
    for annotations in coders:
        painted = []
        for doc_id, text in documents.items():
            spans = sorted(
                annotations.documents[doc_id], key=lambda item: _PAINT_ORDER.index(item[0])
            )
            for _, span in spans:
                if not span.is_valid(len(text)):
                    raise ValueError(
                        f"Coder {annotations.coder}: span ({span.start}, {span.end}) lies "
                        f"outside document {doc_id}."
                    )
            if entity_class is not None:
                spans = [(c, span) for c, span in spans if c is entity_class]
            painted.append(
                paint_labels(
                    len(text),
                    np.array([span.start for _, span in spans], dtype=np.int64),
                    np.array([span.end for _, span in spans], dtype=np.int64),
                    np.array(
                        [1 if entity_class is not None else codes[c] for c, _ in spans],
                        dtype=np.int64,
                    ),
                )
            )
        rows.append(np.concatenate(painted) if painted else np.zeros(0, dtype=np.int64))
    return np.vstack(rows)


def _alpha(labels: np.ndarray, n_values: int) -> float:
    if labels.shape[1] == 0:
        raise ValueError("No characters to compare.")
    if (labels == labels[0]).all():
        return 1.0
    counts = label_value_counts(labels, n_values)
    return float(krippendorff.alpha(value_counts=counts, level_of_measurement="nominal"))


def krippendorff_alpha(
    coders: Sequence[CoderAnnotations],
    documents: Mapping[str, str],
    classes: Optional[Sequence[EntityClass]] = None,
) -> pd.Series:
    """Character-level nominal Krippendorff's alpha.

    Every character of every document is a unit. For the combined score it
    is labelled by the class of the span covering it, or by "none"; where
    spans nest, Unit wins over MeasuredProperty, which wins over
    MeasuredEntity, which wins over Quantity. Each class score compares
    only whether the character lies inside a span of that class.

    Parameters
    ----------
    coders : sequence of CoderAnnotations
        At least two coders annotating exactly the documents in
        ``documents``.
    documents : mapping of str to str
        Document text by ``doc_id``.
    classes : sequence of EntityClass, optional
        Classes scored as binary "X or not X" labels. Defaults to all four.

    Returns
    -------
    pandas.Series
        Alpha per class name, plus "combined" over the five-way labels.

    Raises
    ------
    ValueError
        With fewer than two coders, when coders annotated different
        documents, or when there is no text.

    Examples
    --------
    >>> a = CoderAnnotations("a", {"d": [(EntityClass.QUANTITY, Span(0, 2))]})
    >>> b = CoderAnnotations("b", {"d": [(EntityClass.QUANTITY, Span(0, 1))]})
    >>> round(krippendorff_alpha([a, b], {"d": "abcd"})["combined"], 4)
    0.5333
    """
    if len(coders) < 2:
        raise ValueError("Agreement needs at least two coders.")
    expected = set(documents)
    for annotations in coders:
        if set(annotations.documents) != expected:
            raise ValueError(
                f"Coder {annotations.coder} annotated a different document set: "
                f"missing {sorted(expected - set(annotations.documents))}, "
                f"extra {sorted(set(annotations.documents) - expected)}."
            )
    if classes is None:
        classes = list(EntityClass)

    scores = {}
    for entity_class in classes:
        coverage = _character_labels(coders, documents, entity_class)
        scores[entity_class.value] = _alpha(coverage, 2)
    scores[COMBINED] = _alpha(_character_labels(coders, documents), len(_PAINT_ORDER) + 1)
    return pd.Series(scores, name="alpha")


def read_coder_annotations(directory) -> Tuple[List[CoderAnnotations], Dict[str, str]]:
    """Load one ``<coder>.jsonl`` file per coder from ``directory``.

    Records hold ``doc_id``, ``text`` and ``spans`` (``class``, ``start``,
    ``end``).

    Raises
    ------
    FileNotFoundError
        If the directory holds no ``.jsonl`` files.
    CorpusFormatError
        On a malformed record, naming the file and line.
    ValueError
        If coders disagree on a document's text.
    """
    paths = sorted(Path(directory).glob("*.jsonl"))
    if not paths:
        raise FileNotFoundError(f"No coder files (*.jsonl) in {directory}")
    coders = []
    texts: Dict[str, str] = {}
    for path in paths:
        documents = {}
        with open(path, encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                doc_id, text, spans = _coder_record(line, path, number)
                if texts.setdefault(doc_id, text) != text:
                    raise ValueError(f"{path}:{number}: text of {doc_id} differs between coders.")
                documents[doc_id] = spans
        coders.append(CoderAnnotations(path.stem, documents))
    return coders, texts


def _coder_record(line, path, number):
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"invalid JSON in {path}: {exc.msg}", number)
    if not isinstance(raw, dict):
        raise CorpusFormatError(f"record in {path} must be a JSON object", number)
    try:
        items = [(item["class"], item["start"], item["end"]) for item in raw.get("spans", [])]
        doc_id, text = raw["doc_id"], raw["text"]
    except KeyError as missing:
        raise CorpusFormatError(f"missing key in {path}", number, missing.args[0])
    spans = []
    for name, start, end in items:
        try:
            entity_class = EntityClass.parse(name)
        except KeyError:
            raise CorpusFormatError(f"unknown class {name!r} in {path}", number, "class")
        spans.append((entity_class, Span(int(start), int(end))))
    return doc_id, text, spans


__all__ = [
    "VocabularyWarning",
    "AttributeRow",
    "CoderAnnotations",
    "entity_length",
    "entity_density",
    "quantity_distance",
    "entity_attributes",
    "attribute_report",
    "top_unigrams",
    "vocab_overlap",
    "krippendorff_alpha",
    "read_coder_annotations",
]
