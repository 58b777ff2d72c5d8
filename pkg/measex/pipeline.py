"""Two-step cascading extraction with pluggable taggers.

Task 1 finds quantities in a sentence. Every quantity is then wrapped in
marker tokens and handed to Task 2, which tags the unit, measured entity and
measured property of that one quantity. A deterministic assembly step keeps
at most one span per class.
"""
import json
import logging
import re
import warnings
from dataclasses import dataclass
from itertools import chain
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from measex.config import Config, default_config
from measex.corpus import DanglingReferenceError
from measex.internal_functions import parallel_map, span_gaps
from measex.model import (
    CONTEXT_CLASSES,
    Document,
    EntityClass,
    MeasurementFrame,
    Span,
)
from measex.tagging import (
    BIO_UMEMP,
    IO_Q,
    TagSequence,
    Token,
    decode_tags,
    enrich_with_quantity,
    marker_positions,
    tag_context_spans,
    tag_quantities,
    tag_token_ranges,
    tokenize,
)

logger = logging.getLogger(__name__)

_NUMBER = r"[~><≥≤±≈]*[-+−]?\d+(?:[.,]\d+)*(?:[eE][-+−]?\d+)?"
_NUMERIC_TOKEN = re.compile(rf"{_NUMBER}(?:[-–−:/]{_NUMBER})*")
_LEADING_NUMBER = re.compile(_NUMBER)
_MULTIPLIER_TOKEN = re.compile(r"[x×]?10(?:\^|[-−+])?[-−]?\d+|[x×]10")
_LIST_SEPARATORS = frozenset([",", "or"])


class AssemblyWarning(Warning):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return repr(self.message)


class PredictionLookupError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class SentenceContext(NamedTuple):
    """Where a token stream comes from; taggers that read stored output need it."""

    doc_id: str
    sentence_index: int
    text: str
    quantity: Optional[Span] = None


class Tagger:
    """Base class of sequence taggers.

    A tagger receives the tokens of one sentence (quantity-enriched for task 2)
    and returns one label per token under the task's scheme: IO-Q for task 1
    and BIO-UMEMP for task 2.
    """

    #: tasks the tagger can answer
    tasks: Tuple[int, ...] = (1, 2)

    def tag(self, tokens: Sequence[Token], task: int, context: SentenceContext) -> TagSequence:
        raise NotImplementedError


def is_numeric_token(text: str) -> bool:
    return _NUMERIC_TOKEN.fullmatch(text) is not None


def is_glued_quantity(text: str, units: FrozenSet[str]) -> bool:
    """A number directly followed by a known unit, as in "200g"."""
    match = _LEADING_NUMBER.match(text)
    return match is not None and text[match.end() :] in units


def rule_quantity_tagger(tokens: Sequence[Token], units: Iterable[str] = ()) -> TagSequence:
    """IO-tag numeric tokens as quantities.

    Numbers, ranges, ratios, numbers with leading specifiers and numbers
    glued to a unit from ``units`` ("200g") are tagged.
    A parenthesised or bare power-of-ten multiplier right after a number is
    added to it, and "," or "or" between numbers joins them into one quantity
    when the token after the last number is in ``units``.

    Examples
    --------
    >>> seq = rule_quantity_tagger(tokenize("The patient weighted ~100 pounds"))
    >>> seq.tags
    ('O', 'O', 'O', 'Q', 'O')
    """
    units = frozenset(units)
    n = len(tokens)
    texts = [token.text for token in tokens]
    numeric = [is_numeric_token(text) for text in texts]
    tags = [
        "Q" if flag or is_glued_quantity(text, units) else "O" for flag, text in zip(numeric, texts)
    ]

    for i in range(n):
        if not numeric[i]:
            continue
        if (
            i + 3 < n
            and texts[i + 1] == "("
            and _MULTIPLIER_TOKEN.fullmatch(texts[i + 2])
            and texts[i + 3] == ")"
        ):
            tags[i + 1 : i + 4] = ["Q"] * 3
        elif i + 1 < n and not numeric[i + 1] and _MULTIPLIER_TOKEN.fullmatch(texts[i + 1]):
            tags[i + 1] = "Q"

    i = 0
    while i < n:
        if not numeric[i]:
            i += 1
            continue
        chain_end = i
        j = i + 1
        while j < n:
            k = j
            while k < n and texts[k] in _LIST_SEPARATORS and k - j < 2:
                k += 1
            if k == j or k >= n or not numeric[k]:
                break
            chain_end = k
            j = k + 1
        if chain_end > i and chain_end + 1 < n and texts[chain_end + 1] in units:
            tags[i : chain_end + 1] = ["Q"] * (chain_end + 1 - i)
        i = chain_end + 1
    return TagSequence(tokens, tags, IO_Q)


class RuleQuantityTagger(Tagger):
    """Task 1 baseline built on :func:`rule_quantity_tagger`."""

    tasks = (1,)

    def __init__(self, units: Optional[Iterable[str]] = None):
        self.units = frozenset(default_config().units() if units is None else units)

    def tag(self, tokens, task=1, context=None):
        return rule_quantity_tagger(tokens, self.units)


class LexiconContextTagger(Tagger):
    """Task 2 baseline that tags context spans from lexicons.

    Parameters
    ----------
    units : iterable of str, optional
        Unit surface forms; runs of up to three tokens right after "[/Q]"
        are matched.
    operations : iterable of str, optional
        Operation words tagged as MeasuredProperty, matched case-insensitively.
    stoplist : iterable of str, optional
        Lowercased words that never belong to a MeasuredEntity guess.

    The defaults come from the shipped configuration.
    """

    tasks = (2,)

    def __init__(self, units=None, operations=None, stoplist=None):
        config = default_config()
        self.units = frozenset(config.units() if units is None else units)
        self.operations = frozenset(
            w.lower() for w in (config.operations() if operations is None else operations)
        )
        if stoplist is None:
            stoplists = config.stoplist_sets()
            stoplist = stoplists.span_edges | stoplists.function_words
        self.stoplist: FrozenSet[str] = frozenset(w.lower() for w in stoplist)

    def tag(self, tokens, task=2, context=None):
        return lexicon_context_tagger(tokens, self.units, self.operations, self.stoplist)


def lexicon_context_tagger(
    enriched_tokens: Sequence[Token],
    units: FrozenSet[str],
    operations: FrozenSet[str],
    stoplist: FrozenSet[str],
) -> TagSequence:
    """BIO-tag unit, measured property and measured entity guesses.

    Raises
    ------
    ValueError
        If the token stream carries no quantity markers.
    """
    open_at, close_at = marker_positions(enriched_tokens)
    texts = [token.text for token in enriched_tokens]
    ranges: Dict[EntityClass, Tuple[int, int]] = {}

    unit = _match_unit(enriched_tokens, close_at + 1, units)
    if unit is not None:
        ranges[EntityClass.UNIT] = unit
    taken = set(range(open_at, close_at + 1))
    if unit is not None:
        taken.update(range(unit[0], unit[1] + 1))

    best = None
    for i, text in enumerate(texts):
        if i in taken or enriched_tokens[i].is_marker or text.lower() not in operations:
            continue
        distance = open_at - i if i < open_at else i - close_at
        key = (distance, i > close_at)
        if best is None or key < best[0]:
            best = (key, i)
    property_at = None if best is None else best[1]
    if property_at is not None:
        ranges[EntityClass.MEASURED_PROPERTY] = (property_at, property_at)

    scan_from = open_at - 1
    if property_at is not None and property_at < open_at:
        scan_from = property_at - 1

    def noun_like(i):
        return _noun_like(enriched_tokens, i, units, operations, stoplist)

    head = scan_from
    while head >= 0 and not noun_like(head):
        head -= 1
    if head >= 0:
        first = head
        while first - 1 >= 0 and noun_like(first - 1):
            first -= 1
        ranges[EntityClass.MEASURED_ENTITY] = (first, head)

    return tag_token_ranges(enriched_tokens, ranges)


def _match_unit(tokens, start, units):
    for length in (3, 2, 1):
        stop = start + length
        if stop > len(tokens) or any(t.is_marker for t in tokens[start:stop]):
            continue
        surface = tokens[start].text
        for previous, token in zip(tokens[start : stop - 1], tokens[start + 1 : stop]):
            gap = " " if token.span.start > previous.span.end else ""
            surface += gap + token.text
        if surface in units:
            return start, stop - 1
    return None


def _noun_like(tokens, i, units, operations, stoplist):
    token = tokens[i]
    if token.is_marker:
        return False
    text = token.text
    if not any(char.isalpha() for char in text):
        return False
    if is_numeric_token(text):
        return False
    if text in units and i > 0 and not tokens[i - 1].is_marker and is_numeric_token(
        tokens[i - 1].text
    ):
        return False
    # chemical formulas and acronyms count regardless of the stoplist
    letters = [char for char in text if char.isalpha()]
    if any(char.isdigit() for char in text) or sum(char.isupper() for char in letters) >= 2:
        return True
    lowered = text.lower()
    return lowered not in stoplist and lowered not in operations


# --------------------------------------------------------------------------
# prediction interchange


@dataclass(frozen=True)
class PredictionRecord:
    """Stored tagger output for one sentence (task 1) or one quantity (task 2).

    Offsets are sentence-local.
    """

    doc_id: str
    sentence_index: int
    task: int
    spans: Tuple[Tuple[EntityClass, Span], ...] = ()
    quantity: Optional[Span] = None

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(self.spans))
        if self.task not in (1, 2):
            raise ValueError(f"task must be 1 or 2, got {self.task!r}")
        if self.task == 2 and self.quantity is None:
            raise ValueError("task 2 records need a quantity")
        for entity_class, _ in self.spans:
            if (self.task == 1) != (entity_class is EntityClass.QUANTITY):
                raise ValueError(f"{entity_class.value} spans are not task {self.task} output")

    @property
    def key(self) -> Tuple[str, int, int]:
        return self.doc_id, self.sentence_index, self.task

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "sentence_index": self.sentence_index,
            "task": self.task,
            "quantity": None if self.quantity is None else self.quantity.to_dict(),
            "spans": [
                {"class": entity_class.short, "start": span.start, "end": span.end}
                for entity_class, span in self.spans
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PredictionRecord":
        quantity = raw.get("quantity")
        return cls(
            doc_id=raw["doc_id"],
            sentence_index=int(raw["sentence_index"]),
            task=int(raw["task"]),
            spans=[
                (EntityClass.parse(item["class"]), Span(int(item["start"]), int(item["end"])))
                for item in raw.get("spans", [])
            ],
            quantity=None if quantity is None else Span(quantity["start"], quantity["end"]),
        )


class PredictionFile:
    """Indexed prediction records.

    Raises
    ------
    DanglingReferenceError
        If a task 2 record names a quantity that no task 1 record of the same
        sentence holds.
    """

    def __init__(self, records: Iterable[PredictionRecord]):
        self.records = list(records)
        self._index: Dict[Tuple[str, int, int], List[PredictionRecord]] = {}
        for record in self.records:
            self._index.setdefault(record.key, []).append(record)
        for record in self.records:
            if record.task != 2:
                continue
            task1 = self._index.get((record.doc_id, record.sentence_index, 1), [])
            known = {span for r in task1 for _, span in r.spans}
            if record.quantity not in known:
                raise DanglingReferenceError(
                    f"dangling-quantity doc_id={record.doc_id} "
                    f"sentence_index={record.sentence_index} "
                    f"quantity=({record.quantity.start}, {record.quantity.end})"
                )

    def __len__(self):
        return len(self.records)

    def lookup(
        self,
        doc_id: str,
        sentence_index: int,
        task: int,
        quantity: Optional[Span] = None,
        tokens: Sequence[Token] = (),
    ) -> PredictionRecord:
        """Find the record for a sentence, or for one quantity of it.

        Task 2 records match when their quantity equals ``quantity`` or
        covers the same tokens.

        Raises
        ------
        PredictionLookupError
            If no record matches.
        """
        candidates = self._index.get((doc_id, sentence_index, task), [])
        if task == 1 and candidates:
            return candidates[0]
        if task == 2 and quantity is not None:
            for record in candidates:
                if record.quantity == quantity:
                    return record
            wanted = _covered(tokens, quantity)
            for record in candidates:
                if wanted and _covered(tokens, record.quantity) == wanted:
                    return record
        where = f"doc_id={doc_id} sentence_index={sentence_index} task={task}"
        if quantity is not None:
            where += f" quantity=({quantity.start}, {quantity.end})"
        raise PredictionLookupError(f"no prediction record for {where}")


def _covered(tokens, span):
    return tuple(
        i for i, token in enumerate(tokens) if not token.is_marker and token.span.overlaps(span)
    )


def read_predictions(path) -> PredictionFile:
    """Read a prediction interchange file (JSON Lines)."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(PredictionRecord.from_dict(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{number}: invalid prediction record: {exc}")
    logger.info("Read %d prediction records from %s", len(records), path)
    return PredictionFile(records)


def write_predictions(records: Iterable[PredictionRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def frames_to_predictions(
    doc: Document, frames: Iterable[MeasurementFrame]
) -> List[PredictionRecord]:
    """Express frames as prediction records.

    Every sentence gets a task 1 record; every frame whose quantity lies in a
    sentence gets a task 2 record with its in-sentence context spans.
    """
    grouped: Dict[int, List[MeasurementFrame]] = {s.index: [] for s in doc.sentences}
    for frame in frames:
        home = doc.sentence_of(frame.quantity)
        if home is not None:
            grouped[home.index].append(frame)

    records = []
    for sentence in doc.sentences:
        offset = sentence.span.start
        local = [frame.shift(-offset) for frame in grouped[sentence.index]]
        quantities = sorted({frame.quantity for frame in local})
        records.append(
            PredictionRecord(
                doc.doc_id,
                sentence.index,
                1,
                [(EntityClass.QUANTITY, q) for q in quantities],
            )
        )
        length = sentence.span.length
        for frame in local:
            spans = [
                (entity_class, span)
                for entity_class, span in frame.entities()
                if entity_class is not EntityClass.QUANTITY and span.is_valid(length)
            ]
            records.append(
                PredictionRecord(doc.doc_id, sentence.index, 2, spans, frame.quantity)
            )
    return records


def file_backed_tagger(
    predictions: PredictionFile,
    doc_id: str,
    sentence_index: int,
    task: int,
    quantity: Optional[Span] = None,
    *,
    text: str,
    tokens: Optional[Sequence[Token]] = None,
) -> TagSequence:
    """Convert a stored prediction record into tags over the sentence's tokens.

    For task 2 the tokens are enriched around ``quantity``.

    Raises
    ------
    PredictionLookupError
        If the record does not exist.
    """
    if tokens is None:
        tokens = tokenize(text)
        if task == 2:
            tokens, _ = enrich_with_quantity(text, quantity, tokens)
    record = predictions.lookup(doc_id, sentence_index, task, quantity, tokens)
    if task == 1:
        return tag_quantities(tokens, [span for _, span in record.spans], len(text))
    return tag_context_spans(tokens, record.spans, len(text))


class FileBackedTagger(Tagger):
    """Tagger answering both tasks from a :class:`PredictionFile`."""

    def __init__(self, predictions: PredictionFile):
        self.predictions = predictions

    def tag(self, tokens, task, context):
        return file_backed_tagger(
            self.predictions,
            context.doc_id,
            context.sentence_index,
            task,
            context.quantity,
            text=context.text,
            tokens=tokens,
        )


class OracleTagger(FileBackedTagger):
    """Tagger that answers from gold frames."""

    def __init__(self, docs: Iterable[Document]):
        super().__init__(
            PredictionFile(chain.from_iterable(frames_to_predictions(d, d.frames) for d in docs))
        )


# --------------------------------------------------------------------------
# assembly and extraction


def assemble_frame(q: Span, decoded: Iterable[Tuple[EntityClass, Span]]) -> MeasurementFrame:
    """Keep, per context class, the candidate nearest to the quantity.

    Distance is the character gap (0 when overlapping), ties go to the
    leftmost candidate. Dropped candidates and a MeasuredProperty without a
    MeasuredEntity raise :class:`AssemblyWarning`.

    Examples
    --------
    >>> decoded = [(EntityClass.MEASURED_ENTITY, Span(0, 6)),
    ...            (EntityClass.MEASURED_ENTITY, Span(20, 26))]
    >>> with warnings.catch_warnings():
    ...     warnings.simplefilter("ignore")
    ...     frame = assemble_frame(Span(30, 32), decoded)
    >>> frame.measured_entity
    Span(start=20, end=26)
    """
    decoded = list(decoded)
    frame = MeasurementFrame(q)
    for entity_class in CONTEXT_CLASSES:
        candidates = [span for c, span in decoded if c is entity_class]
        if not candidates:
            continue
        starts = np.array([span.start for span in candidates], dtype=np.int64)
        ends = np.array([span.end for span in candidates], dtype=np.int64)
        gaps = span_gaps(starts, ends, q.start, q.end)
        order = np.lexsort((ends, starts, gaps))
        frame = frame.with_span(entity_class, candidates[order[0]])
        for i in order[1:]:
            dropped = candidates[i]
            warnings.warn(
                AssemblyWarning(
                    f"discarded {entity_class.value} candidate ({dropped.start}, {dropped.end}) "
                    f"for quantity ({q.start}, {q.end})"
                ),
                stacklevel=2,
            )
    if frame.measured_property is not None and frame.measured_entity is None:
        warnings.warn(
            AssemblyWarning(f"MP-without-ME for quantity ({q.start}, {q.end})"), stacklevel=2
        )
    return frame


def _checked(seq: TagSequence, tokens: Sequence[Token], scheme: str, task: int) -> TagSequence:
    if len(seq.tags) != len(tokens):
        raise ValueError(
            f"Task {task} tagger returned {len(seq.tags)} tags for {len(tokens)} tokens."
        )
    if seq.scheme != scheme:
        raise ValueError(f"Task {task} tagger answered in {seq.scheme}, expected {scheme}.")
    illegal = seq.illegal_labels()
    if illegal:
        raise ValueError(f"Task {task} tagger returned illegal labels {illegal}.")
    if tuple(seq.tokens) != tuple(tokens):
        seq = TagSequence(tokens, seq.tags, seq.scheme, seq.quantity_markers)
    return seq


def _extract_sentence(job) -> List[MeasurementFrame]:
    document, sentence, task1, task2 = job
    text = document.sentence_text(sentence)
    tokens = tokenize(text)
    context = SentenceContext(document.doc_id, sentence.index, text)
    seq1 = _checked(task1.tag(tokens, 1, context), tokens, IO_Q, 1)
    quantities = [span for c, span in decode_tags(seq1) if c is EntityClass.QUANTITY]

    frames = []
    for q in quantities:
        enriched, _ = enrich_with_quantity(text, q, tokens)
        seq2 = task2.tag(enriched, 2, context._replace(quantity=q))
        decoded = decode_tags(_checked(seq2, enriched, BIO_UMEMP, 2))
        frames.append(assemble_frame(q, decoded).shift(sentence.span.start))
    logger.debug(
        "%s sentence %d: %d quantities", document.doc_id, sentence.index, len(quantities)
    )
    return frames


def _sentence_jobs(document: Document, task1: Tagger, task2: Tagger):
    return [(document, sentence, task1, task2) for sentence in document.sentences]


def extract(
    document: Document, task1: Tagger, task2: Tagger, workers: int = 1
) -> List[MeasurementFrame]:
    """Run the two-step pipeline over every sentence of a document.

    Parameters
    ----------
    document : Document
    task1 : Tagger
        Quantity tagger.
    task2 : Tagger
        Context tagger, called once per decoded quantity.
    workers : int, optional
        Threads used for sentences, by default 1.

    Returns
    -------
    list of MeasurementFrame
        Document-offset frames ordered by sentence, then quantity start.

    Raises
    ------
    ValueError
        If the document has text but no sentences, or a tagger breaks its
        contract.
    """
    if not document.sentences and document.text.strip():
        raise ValueError(f"Document {document.doc_id} has no sentences.")
    per_sentence = parallel_map(_extract_sentence, _sentence_jobs(document, task1, task2), workers)
    return [frame for frames in per_sentence for frame in frames]


def extract_corpus(
    docs: Sequence[Document], task1: Tagger, task2: Tagger, workers: int = 1
) -> List[Document]:
    """Replace every document's frames with pipeline predictions."""
    docs = list(docs)
    for doc in docs:
        if not doc.sentences and doc.text.strip():
            raise ValueError(f"Document {doc.doc_id} has no sentences.")
    jobs = [job for doc in docs for job in _sentence_jobs(doc, task1, task2)]
    per_sentence = iter(parallel_map(_extract_sentence, jobs, workers))
    predicted = []
    for doc in docs:
        frames = [frame for _ in doc.sentences for frame in next(per_sentence)]
        predicted.append(doc.with_frames(frames))
    logger.info(
        "Extracted %d frames from %d documents", sum(len(d.frames) for d in predicted), len(docs)
    )
    return predicted


_TAGGER_SPECS = ("rule", "lexicon", "oracle", "file:<path>")


def make_tagger(
    spec: str,
    task: int,
    config: Optional[Config] = None,
    gold: Optional[Sequence[Document]] = None,
) -> Tagger:
    """Resolve a tagger from its command-line spec.

    Parameters
    ----------
    spec : {"rule", "lexicon", "oracle", "file:<path>"}
    task : {1, 2}
    config : Config, optional
        Source of lexicons and stoplists.
    gold : sequence of Document, optional
        Gold corpus, required by "oracle".

    Raises
    ------
    KeyError
        On an unknown spec.
    ValueError
        If the tagger cannot answer ``task`` or "oracle" lacks gold documents.
    """
    if config is None:
        config = default_config()
    if spec.startswith("file:"):
        tagger: Tagger = FileBackedTagger(read_predictions(spec[len("file:") :]))
    elif spec == "rule":
        tagger = RuleQuantityTagger(config.units())
    elif spec == "lexicon":
        stoplists = config.stoplist_sets()
        tagger = LexiconContextTagger(
            config.units(),
            config.operations(),
            stoplists.span_edges | stoplists.function_words,
        )
    elif spec == "oracle":
        if gold is None:
            raise ValueError("The oracle tagger needs gold documents.")
        tagger = OracleTagger(gold)
    else:
        raise KeyError(f"Invalid tagger {spec!r}, expected one of {_TAGGER_SPECS}.")
    if task not in tagger.tasks:
        raise ValueError(f"The {spec!r} tagger cannot answer task {task}.")
    return tagger


__all__ = [
    "AssemblyWarning",
    "PredictionLookupError",
    "SentenceContext",
    "Tagger",
    "rule_quantity_tagger",
    "RuleQuantityTagger",
    "lexicon_context_tagger",
    "LexiconContextTagger",
    "PredictionRecord",
    "PredictionFile",
    "read_predictions",
    "write_predictions",
    "frames_to_predictions",
    "file_backed_tagger",
    "FileBackedTagger",
    "OracleTagger",
    "assemble_frame",
    "extract",
    "extract_corpus",
    "make_tagger",
]
