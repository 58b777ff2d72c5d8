"""Canonical corpus files, sentence segmentation and source-scheme conversion."""
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import pandas as pd

from measex.config import default_config
from measex.model import (
    SPLITS,
    Document,
    EntityClass,
    MeasurementFrame,
    Sentence,
    Span,
)
from measex.tagging import unigrams

logger = logging.getLogger(__name__)

_FRAME_KEYS = ("quantity", "unit", "measured_entity", "measured_property")
_SENTENCE_END = frozenset(".!?")
_CLOSING_QUOTES = frozenset("\"'”’")
_OPENERS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = {v: k for k, v in _OPENERS.items()}
_INITIAL = re.compile(r"[A-Z]\.")


class CorpusFormatError(ValueError):
    """A corpus record that does not follow the canonical format."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SpanBoundsError(ValueError):
    def __init__(self, doc_id, message=""):
        self.doc_id = doc_id
        super().__init__(f"span-out-of-bounds doc={doc_id}" + (f": {message}" if message else ""))


class DanglingReferenceError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


# --------------------------------------------------------------------------
# sentence segmentation


def segment_sentences(text: str, abbreviations: Optional[Sequence[str]] = None) -> List[Sentence]:
    """Split scientific text into sentences.

    A sentence ends at ".", "!" or "?" (optionally followed by closing
    quotes) when whitespace and then an uppercase letter or a digit follow.
    Full stops of protected abbreviations and single capital initials never
    end a sentence, and neither does punctuation inside balanced brackets.
    Sentence spans exclude surrounding whitespace.

    Parameters
    ----------
    text : str
    abbreviations : sequence of str, optional
        Protected tokens, by default the shipped abbreviation list.

    Returns
    -------
    list of Sentence

    Examples
    --------
    >>> [s.span for s in segment_sentences("It was dried at 60 °C. Then cooled.")]
    [Span(start=0, end=22), Span(start=23, end=35)]
    >>> len(segment_sentences("See Fig. 3 for details."))
    1
    """
    if abbreviations is None:
        abbreviations = default_config().abbreviation_list()
    protected = _bracketed(text)
    boundaries = []
    for i, char in enumerate(text):
        if char not in _SENTENCE_END or protected[i]:
            continue
        end = i + 1
        while end < len(text) and text[end] in _CLOSING_QUOTES:
            end += 1
        after = end
        while after < len(text) and text[after].isspace():
            after += 1
        if after == end or after == len(text):
            continue
        if not (text[after].isupper() or text[after].isdigit()):
            continue
        if char == "." and _is_protected(text, i, abbreviations):
            continue
        boundaries.append(end)

    sentences = []
    start = 0
    for end in boundaries + [len(text)]:
        span = _strip(text, start, end)
        if span is not None:
            sentences.append(Sentence(span, len(sentences)))
        start = end
    return sentences


def _bracketed(text: str) -> List[bool]:
    """Marks characters enclosed by a matched bracket pair."""
    inside = [False] * len(text)
    stack = []
    for i, char in enumerate(text):
        if char in _OPENERS:
            stack.append((char, i))
        elif char in _CLOSERS and stack and stack[-1][0] == _CLOSERS[char]:
            _, opened = stack.pop()
            for j in range(opened + 1, i):
                inside[j] = True
    return inside


def _is_protected(text: str, period: int, abbreviations: Sequence[str]) -> bool:
    head = text[: period + 1]
    for abbreviation in abbreviations:
        if head.endswith(abbreviation):
            before = period + 1 - len(abbreviation) - 1
            if before < 0 or not text[before].isalnum():
                return True
    word_start = period
    while word_start > 0:
        previous = text[word_start - 1]
        if previous.isspace() or previous in _OPENERS:
            break
        word_start -= 1
    return _INITIAL.fullmatch(text, word_start, period + 1) is not None


def _strip(text: str, start: int, end: int) -> Optional[Span]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return Span(start, end) if end > start else None


# --------------------------------------------------------------------------
# source annotation schemes


class SourceEntity(NamedTuple):
    id: str
    type_label: str
    span: Span


class SourceRelation(NamedTuple):
    from_id: str
    to_id: str
    label: str


class SourceRecord(NamedTuple):
    doc_id: str
    text: str
    entities: List[SourceEntity]
    relations: List[SourceRelation]


@dataclass(frozen=True)
class MappingTable:
    """Many-to-one map from source-scheme labels to entity classes.

    The root label is always mapped to Quantity.
    """

    labels: Mapping[str, EntityClass] = field(default_factory=dict)
    root_label: str = "Number"

    def __post_init__(self):
        labels = {label: EntityClass(value) for label, value in self.labels.items()}
        mapped = labels.setdefault(self.root_label, EntityClass.QUANTITY)
        if mapped is not EntityClass.QUANTITY:
            raise ValueError(
                f"Root label {self.root_label!r} must map to Quantity, not {mapped.value}."
            )
        object.__setattr__(self, "labels", labels)

    def lookup(self, type_label: str) -> Optional[EntityClass]:
        return self.labels.get(type_label)


def load_mapping_table(path) -> MappingTable:
    """Read a JSON mapping table ``{"root_label": ..., "labels": {...}}``."""
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    try:
        return MappingTable(
            labels={k: EntityClass.parse(v) for k, v in raw["labels"].items()},
            root_label=raw["root_label"],
        )
    except KeyError as missing:
        raise CorpusFormatError(f"invalid mapping table {path}: {missing}")


def default_mapping_table() -> MappingTable:
    """The shipped MSP mapping table."""
    return load_mapping_table(default_config().mapping_table)


def map_source_annotations(
    entities: Sequence[SourceEntity],
    relations: Sequence[SourceRelation],
    table: MappingTable,
) -> List[MeasurementFrame]:
    """Build one frame per root-label entity by following its relations.

    Relations are walked in both directions up to two hops from the root,
    without passing through other root entities. For each of Unit,
    MeasuredEntity and MeasuredProperty the nearest hop wins; ties go to the
    entity closest in characters to the root, then the leftmost one.
    A MeasuredProperty without a MeasuredEntity is dropped.

    Raises
    ------
    DanglingReferenceError
        If a relation names an entity id that does not exist.
    """
    by_id = {entity.id: entity for entity in entities}
    neighbours: Dict[str, List[str]] = {entity.id: [] for entity in entities}
    for relation in relations:
        for endpoint in (relation.from_id, relation.to_id):
            if endpoint not in by_id:
                raise DanglingReferenceError(f"dangling relation endpoint: {endpoint}")
        neighbours[relation.from_id].append(relation.to_id)
        neighbours[relation.to_id].append(relation.from_id)

    frames = []
    for root in entities:
        if root.type_label != table.root_label:
            continue
        depth = {root.id: 0}
        frontier = [root.id]
        for hop in (1, 2):
            following = []
            for node in frontier:
                for other in neighbours[node]:
                    if other in depth:
                        continue
                    depth[other] = hop
                    if by_id[other].type_label != table.root_label:
                        following.append(other)
            frontier = following

        chosen: Dict[EntityClass, Tuple[int, int, int, Span]] = {}
        for node, hops in depth.items():
            candidate = by_id[node]
            entity_class = table.lookup(candidate.type_label)
            if hops == 0 or entity_class in (None, EntityClass.QUANTITY):
                continue
            key = (hops, candidate.span.distance(root.span), candidate.span.start, candidate.span)
            if entity_class not in chosen or key < chosen[entity_class]:
                chosen[entity_class] = key

        frame = MeasurementFrame(root.span)
        for entity_class, key in chosen.items():
            frame = frame.with_span(entity_class, key[-1])
        if frame.measured_property is not None and frame.measured_entity is None:
            frame = frame.with_span(EntityClass.MEASURED_PROPERTY, None)
        frames.append(frame)
    return frames


def read_source_annotations(path) -> List[SourceRecord]:
    """Read a source-annotation import file (JSON Lines)."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            raw = _parse_line(line, number)
            try:
                entities = [
                    SourceEntity(str(e["id"]), e["type"], Span(int(e["start"]), int(e["end"])))
                    for e in raw.get("entities", [])
                ]
                relations = [
                    SourceRelation(str(r["from"]), str(r["to"]), r.get("label", ""))
                    for r in raw.get("relations", [])
                ]
                records.append(SourceRecord(raw["doc_id"], raw["text"], entities, relations))
            except KeyError as missing:
                raise CorpusFormatError("missing key", number, missing.args[0])
    logger.info("Read %d source records from %s", len(records), path)
    return records


def convert_source_corpus(
    records: Iterable[SourceRecord],
    table: Optional[MappingTable] = None,
    domain: str = "msp",
    split: str = "unsplit",
    segment: bool = True,
    abbreviations: Optional[Sequence[str]] = None,
) -> List[Document]:
    """Turn source records into Documents with suggested frames.

    With ``segment=False`` the whole stripped text becomes one sentence.
    """
    if table is None:
        table = default_mapping_table()
    docs = []
    for record in records:
        for entity in record.entities:
            if not entity.span.is_valid(len(record.text)):
                raise SpanBoundsError(record.doc_id, f"entity {entity.id}")
        if segment:
            sentences = segment_sentences(record.text, abbreviations)
        else:
            whole = _strip(record.text, 0, len(record.text))
            sentences = [] if whole is None else [Sentence(whole, 0)]
        frames = map_source_annotations(record.entities, record.relations, table)
        docs.append(Document(record.doc_id, record.text, sentences, frames, domain, split))
    _check_unique(docs)
    return docs


# --------------------------------------------------------------------------
# canonical corpus files


def document_to_record(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "domain": doc.domain,
        "split": doc.split,
        "text": doc.text,
        "sentences": [s.span.to_dict() for s in doc.sentences],
        "frames": [
            {
                key: (None if span is None else span.to_dict())
                for key, span in zip(_FRAME_KEYS, frame._fields())
            }
            for frame in doc.frames
        ],
    }


def document_from_record(raw, line: Optional[int] = None) -> Document:
    """Parse and validate one canonical record.

    Raises
    ------
    CorpusFormatError
        On missing or mistyped fields, inverted spans or disordered sentences.
    SpanBoundsError
        If a span reaches beyond the text.
    """
    if not isinstance(raw, dict):
        raise CorpusFormatError("record must be a JSON object", line)
    for key, kind in (("doc_id", str), ("domain", str), ("split", str), ("text", str)):
        if key not in raw:
            raise CorpusFormatError("missing field", line, key)
        if not isinstance(raw[key], kind):
            raise CorpusFormatError(f"expected {kind.__name__}", line, key)
    if raw["split"] not in SPLITS:
        raise CorpusFormatError(f"split must be one of {SPLITS}", line, "split")
    doc_id, text = raw["doc_id"], raw["text"]

    sentences = []
    for i, item in enumerate(_list_field(raw, "sentences", line)):
        span = _span(item, line, f"sentences[{i}]", doc_id, len(text))
        if sentences and span.start < sentences[-1].span.end:
            raise CorpusFormatError(
                "sentences overlap or are out of order", line, f"sentences[{i}]"
            )
        sentences.append(Sentence(span, i))

    frames = []
    for i, item in enumerate(_list_field(raw, "frames", line)):
        if not isinstance(item, dict):
            raise CorpusFormatError("frame must be an object", line, f"frames[{i}]")
        if item.get("quantity") is None:
            raise CorpusFormatError("missing field", line, f"frames[{i}].quantity")
        spans = []
        for key in _FRAME_KEYS:
            value = item.get(key)
            spans.append(
                None
                if value is None
                else _span(value, line, f"frames[{i}].{key}", doc_id, len(text))
            )
        frames.append(MeasurementFrame(*spans))

    return Document(doc_id, text, sentences, frames, raw["domain"], raw["split"])


def _list_field(raw, key, line):
    if key not in raw:
        raise CorpusFormatError("missing field", line, key)
    if not isinstance(raw[key], list):
        raise CorpusFormatError("expected list", line, key)
    return raw[key]


def _span(value, line, path, doc_id, text_length) -> Span:
    if not isinstance(value, dict) or "start" not in value or "end" not in value:
        raise CorpusFormatError("expected {start, end}", line, path)
    start, end = value["start"], value["end"]
    if not (isinstance(start, int) and isinstance(end, int)) or isinstance(start, bool):
        raise CorpusFormatError("offsets must be integers", line, path)
    span = Span(start, end)
    if start >= end:
        raise CorpusFormatError(f"span-inverted ({start}, {end})", line, path)
    if start < 0 or end > text_length:
        raise SpanBoundsError(doc_id, f"{path} ({start}, {end}) in text of length {text_length}")
    return span


def _parse_line(line, number):
    try:
        return json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"invalid JSON: {exc.msg}", number)


def read_corpus(path) -> List[Document]:
    """Read a canonical JSON Lines corpus, keeping document order."""
    docs = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            docs.append(document_from_record(_parse_line(line, number), number))
    _check_unique(docs)
    logger.info("Read %d documents from %s", len(docs), path)
    return docs


def dumps_document(doc: Document) -> str:
    return json.dumps(document_to_record(doc), ensure_ascii=False)


def write_corpus(docs: Iterable[Document], path) -> None:
    """Write documents in canonical form, one JSON object per line."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for doc in docs:
            handle.write(dumps_document(doc) + "\n")
            count += 1
    logger.info("Wrote %d documents to %s", count, path)


def _check_unique(docs: Sequence[Document]) -> None:
    counts = Counter(doc.doc_id for doc in docs)
    duplicated = sorted(doc_id for doc_id, n in counts.items() if n > 1)
    if duplicated:
        raise CorpusFormatError(f"duplicate doc_id values: {duplicated}")


def split_filter(docs: Iterable[Document], split: str) -> List[Document]:
    """Documents whose split tag equals ``split``, in input order."""
    return [doc for doc in docs if doc.split == split]


def pool_corpora(*corpora: Iterable[Document]) -> List[Document]:
    """Concatenate corpora in argument order.

    Raises
    ------
    ValueError
        If a doc_id occurs in more than one corpus.
    """
    pooled = [doc for corpus in corpora for doc in corpus]
    _check_unique(pooled)
    return pooled


def corpus_statistics(docs: Iterable[Document]) -> pd.DataFrame:
    """Sentence, unigram and entity statistics per (domain, split).

    Returns
    -------
    pandas.DataFrame
        One row per (domain, split) with sentence and unigram counts, the
        unique/total unigram ratio, and for every class the entity count and
        the unique/total ratio of entity surface strings.
    """
    groups: Dict[Tuple[str, str], dict] = {}
    for doc in docs:
        group = groups.setdefault(
            (doc.domain, doc.split),
            {"sentences": 0, "unigrams": Counter(), "surfaces": {c: [] for c in EntityClass}},
        )
        group["sentences"] += len(doc.sentences)
        group["unigrams"].update(unigrams(doc.text))
        for entity_class, span in doc.entity_spans():
            group["surfaces"][entity_class].append(span.slice(doc.text))

    rows = []
    for (domain, split), group in sorted(groups.items()):
        total = sum(group["unigrams"].values())
        row = {
            "domain": domain,
            "split": split,
            "sentences": group["sentences"],
            "unigrams": total,
            "unique_unigrams": len(group["unigrams"]),
            "unigram_ratio": len(group["unigrams"]) / total if total else 0.0,
        }
        for entity_class in EntityClass:
            surfaces = group["surfaces"][entity_class]
            row[f"{entity_class.short}_total"] = len(surfaces)
            row[f"{entity_class.short}_ratio"] = (
                len(set(surfaces)) / len(surfaces) if surfaces else 0.0
            )
        rows.append(row)

    columns = ["domain", "split", "sentences", "unigrams", "unique_unigrams", "unigram_ratio"]
    for entity_class in EntityClass:
        columns += [f"{entity_class.short}_total", f"{entity_class.short}_ratio"]
    return pd.DataFrame(rows, columns=columns)
