"""Offset-preserving tokenization and the two tagging schemes.

Task 1 tags quantities with IO labels. Task 2 wraps one quantity in marker
tokens and tags its unit, measured entity and measured property with BIO
labels.
"""
import re
import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from measex.model import EntityClass, MeasurementFrame, Span

QUANTITY_OPEN = "[Q]"
QUANTITY_CLOSE = "[/Q]"

IO_Q = "IO-Q"
BIO_UMEMP = "BIO-UMEMP"
SCHEMES = (IO_Q, BIO_UMEMP)

IO_LABELS = ("O", "Q")
BIO_LABELS = ("O", "B-U", "I-U", "B-ME", "I-ME", "B-MP", "I-MP")
_SCHEME_LABELS = {IO_Q: frozenset(IO_LABELS), BIO_UMEMP: frozenset(BIO_LABELS)}

# encoding priority when context spans are forced to share tokens
_OVERLAP_PRIORITY = (
    EntityClass.UNIT,
    EntityClass.MEASURED_PROPERTY,
    EntityClass.MEASURED_ENTITY,
)

_EDGE_PUNCTUATION = frozenset('.,;:()[]{}"!?%')
_WHITESPACE_RUN = re.compile(r"\S+")


class SpanSnapWarning(Warning):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return repr(self.message)


class EncodingWarning(Warning):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return repr(self.message)


@dataclass(frozen=True)
class Token:
    """A token and its position in the sentence; marker tokens have no span."""

    text: str
    span: Optional[Span]

    @property
    def is_marker(self) -> bool:
        return self.span is None


MARKER_OPEN = Token(QUANTITY_OPEN, None)
MARKER_CLOSE = Token(QUANTITY_CLOSE, None)


@dataclass(frozen=True)
class TagSequence:
    """Tokens with one label each under a declared scheme.

    Parameters
    ----------
    tokens : tuple of Token
    tags : tuple of str
    scheme : {"IO-Q", "BIO-UMEMP"}
    quantity_markers : (int, int), optional
        Indices of the "[Q]" and "[/Q]" marker tokens.
    """

    tokens: Tuple[Token, ...]
    tags: Tuple[str, ...]
    scheme: str
    quantity_markers: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "tags", tuple(self.tags))
        if self.scheme not in SCHEMES:
            raise KeyError("Invalid 'scheme' argument.")
        if len(self.tags) != len(self.tokens):
            raise ValueError(
                f"Tag count {len(self.tags)} does not match token count {len(self.tokens)}."
            )

    def illegal_labels(self) -> List[str]:
        allowed = _SCHEME_LABELS[self.scheme]
        return sorted({tag for tag in self.tags if tag not in allowed})


def tokenize(text: str) -> List[Token]:
    """Split ``text`` into offset-preserving tokens.

    Whitespace separates tokens; leading and trailing characters from
    ``.,;:()[]{}"!?%`` are split off one by one. Everything else stays
    attached, so a number glued to its unit ("200g") is a single token.

    Examples
    --------
    >>> [t.text for t in tokenize("deionized (DI) water")]
    ['deionized', '(', 'DI', ')', 'water']
    >>> [t.text for t in tokenize("~100 pounds.")]
    ['~100', 'pounds', '.']
    >>> [t.text for t in tokenize("dried at 60°C for 10h.")]
    ['dried', 'at', '60°C', 'for', '10h', '.']
    """
    tokens = []
    for chunk in _WHITESPACE_RUN.finditer(text):
        start, end = chunk.start(), chunk.end()
        leading = []
        while start < end and text[start] in _EDGE_PUNCTUATION:
            leading.append(Token(text[start], Span(start, start + 1)))
            start += 1
        trailing = []
        while end > start and text[end - 1] in _EDGE_PUNCTUATION:
            trailing.append(Token(text[end - 1], Span(end - 1, end)))
            end -= 1
        tokens.extend(leading)
        if end > start:
            tokens.append(Token(text[start:end], Span(start, end)))
        tokens.extend(reversed(trailing))
    return tokens


def unigrams(text: str) -> List[str]:
    """Lowercased tokens holding at least one alphanumeric character."""
    return [
        token.text.lower()
        for token in tokenize(text)
        if any(char.isalnum() for char in token.text)
    ]


def snap_span(tokens: Sequence[Token], span: Span, text_length: int) -> Tuple[int, int]:
    """Indices of the first and last tokens covering ``span``.

    Marker tokens are never part of a snapped range. Warns with
    :class:`SpanSnapWarning` when the covering tokens are wider than ``span``.

    Raises
    ------
    ValueError
        If ``span`` lies outside the sentence or covers no token.
    """
    if not span.is_valid(text_length):
        raise ValueError(
            f"Span ({span.start}, {span.end}) lies outside the sentence of length {text_length}."
        )
    covering = [
        i for i, token in enumerate(tokens) if not token.is_marker and token.span.overlaps(span)
    ]
    if not covering:
        raise ValueError(f"Span ({span.start}, {span.end}) covers no token.")
    first, last = covering[0], covering[-1]
    snapped = Span(tokens[first].span.start, tokens[last].span.end)
    if snapped != span:
        warnings.warn(
            SpanSnapWarning(
                f"span ({span.start}, {span.end}) widened to token boundaries "
                f"({snapped.start}, {snapped.end})"
            ),
            stacklevel=2,
        )
    return first, last


def encode_task1(sentence_text: str, quantities: Iterable[Span]) -> TagSequence:
    """IO-tag the tokens of a sentence against its quantity spans.

    Examples
    --------
    >>> text = "The patient weighted ~100 pounds ."
    >>> encode_task1(text, [Span(21, 25)]).tags
    ('O', 'O', 'O', 'Q', 'O', 'O')
    """
    tokens = tokenize(sentence_text)
    return tag_quantities(tokens, quantities, len(sentence_text))


def tag_quantities(tokens: Sequence[Token], quantities: Iterable[Span], text_length: int):
    tags = ["O"] * len(tokens)
    for quantity in quantities:
        first, last = snap_span(tokens, quantity, text_length)
        for i in range(first, last + 1):
            tags[i] = "Q"
    return TagSequence(tokens, tags, IO_Q)


def enrich_with_quantity(
    sentence_text: str, q: Span, tokens: Optional[Sequence[Token]] = None
) -> Tuple[List[Token], Tuple[int, int]]:
    """Insert "[Q]" and "[/Q]" marker tokens around the quantity ``q``.

    Parameters
    ----------
    sentence_text : str
    q : Span
        Sentence-local quantity span.
    tokens : sequence of Token, optional
        Tokens of ``sentence_text``, computed when omitted.

    Returns
    -------
    list of Token
        The original tokens with the two markers inserted.
    (int, int)
        Indices of the opening and closing markers.

    Examples
    --------
    >>> enriched, markers = enrich_with_quantity("was dried at 60 °C", Span(13, 15))
    >>> [t.text for t in enriched]
    ['was', 'dried', 'at', '[Q]', '60', '[/Q]', '°C']
    >>> markers
    (3, 5)
    """
    if tokens is None:
        tokens = tokenize(sentence_text)
    first, last = snap_span(tokens, q, len(sentence_text))
    return _insert_markers(tokens, first, last)


def _insert_markers(tokens, first, last):
    enriched = list(tokens[:first]) + [MARKER_OPEN]
    enriched += list(tokens[first : last + 1]) + [MARKER_CLOSE]
    enriched += list(tokens[last + 1 :])
    return enriched, (first, last + 2)


def encode_task2(
    sentence_text: str, frame: MeasurementFrame, on_overlap: str = "raise"
) -> TagSequence:
    """BIO-tag the context spans of one frame over its quantity-enriched tokens.

    Tokens between the quantity markers belong to the quantity and are never
    tagged; a context span that lies entirely inside them (a unit glued to
    its number, as in "200g") is left out with a :class:`SpanSnapWarning`.

    Parameters
    ----------
    sentence_text : str
    frame : MeasurementFrame
        Frame with sentence-local offsets.
    on_overlap : {"raise", "priority"}, optional
        What to do when Unit, MeasuredEntity and MeasuredProperty spans share
        tokens. "raise" rejects the frame; "priority" keeps the tokens for
        the class that comes first in Unit, MeasuredProperty,
        MeasuredEntity order and warns.

    Raises
    ------
    ValueError
        On colliding context spans with ``on_overlap="raise"``.

    Examples
    --------
    >>> text = "It was heated at 100 °C for 40 min ."
    >>> frame = MeasurementFrame(Span(17, 23), measured_property=Span(7, 13))
    >>> seq = encode_task2(text, frame)
    >>> [t.text for t in seq.tokens][3:8]
    ['at', '[Q]', '100', '°C', '[/Q]']
    >>> seq.tags[:5]
    ('O', 'O', 'B-MP', 'O', 'O')
    """
    tokens = tokenize(sentence_text)
    enriched, markers = enrich_with_quantity(sentence_text, frame.quantity, tokens)
    spans = [
        (entity_class, frame.get(entity_class))
        for entity_class in _OVERLAP_PRIORITY
        if frame.get(entity_class) is not None
    ]
    return tag_context_spans(enriched, spans, len(sentence_text), on_overlap)


def tag_context_spans(
    enriched: Sequence[Token],
    spans: Iterable[Tuple[EntityClass, Span]],
    text_length: int,
    on_overlap: str = "priority",
) -> TagSequence:
    """BIO-tag context spans over an already enriched token list.

    Several spans of one class become separate runs, each opened by a
    ``B-`` label, and are left for frame assembly to choose from.

    Parameters
    ----------
    enriched : sequence of Token
        Tokens carrying the "[Q]" and "[/Q]" markers.
    spans : iterable of (EntityClass, Span)
        Sentence-local Unit, MeasuredEntity and MeasuredProperty spans.
    text_length : int
    on_overlap : {"raise", "priority"}, optional
        See :func:`encode_task2`.

    Examples
    --------
    >>> enriched, _ = enrich_with_quantity("gel or film was 5 g", Span(16, 17))
    >>> me = EntityClass.MEASURED_ENTITY
    >>> tag_context_spans(enriched, [(me, Span(0, 3)), (me, Span(7, 11))], 19).tags
    ('B-ME', 'O', 'B-ME', 'O', 'O', 'O', 'O', 'O')
    """
    if on_overlap not in ("raise", "priority"):
        raise KeyError("Invalid 'on_overlap' argument.")
    ranges = []
    for entity_class, span in spans:
        if entity_class not in _OVERLAP_PRIORITY:
            raise ValueError(f"{entity_class.value} is not a context class.")
        first, last = snap_span(enriched, span, text_length)
        ranges.append((entity_class, first, last))
    return _tag_context(enriched, ranges, marker_positions(enriched), on_overlap)


def tag_token_ranges(
    enriched: Sequence[Token], ranges: Dict[EntityClass, Tuple[int, int]]
) -> TagSequence:
    """BIO-tag inclusive token index ranges of an enriched token list."""
    flat = [(entity_class, first, last) for entity_class, (first, last) in ranges.items()]
    return _tag_context(enriched, flat, marker_positions(enriched), "raise")


def marker_positions(tokens: Sequence[Token]) -> Tuple[int, int]:
    """Indices of the "[Q]" and "[/Q]" marker tokens."""
    texts = [token.text if token.is_marker else None for token in tokens]
    if QUANTITY_OPEN not in texts or QUANTITY_CLOSE not in texts:
        raise ValueError("Token stream carries no quantity markers.")
    return texts.index(QUANTITY_OPEN), texts.index(QUANTITY_CLOSE)


def _tag_context(enriched, ranges, markers, on_overlap):
    open_at, close_at = markers
    order = sorted(
        range(len(ranges)),
        key=lambda k: (_OVERLAP_PRIORITY.index(ranges[k][0]), ranges[k][1], ranges[k][2]),
    )
    # owner[i] is (entity class, run number) of the span holding token i
    owner = [None] * len(enriched)
    for run, k in enumerate(order):
        entity_class, first, last = ranges[k]
        indices = [i for i in range(first, last + 1) if not open_at <= i <= close_at]
        if not indices:
            warnings.warn(
                SpanSnapWarning(
                    f"{entity_class.value} span lies inside the quantity's tokens "
                    "and is left untagged"
                ),
                stacklevel=3,
            )
            continue
        for i in indices:
            if owner[i] is not None:
                held = owner[i][0]
                if held is entity_class:
                    message = f"two {held.value} spans share token {enriched[i].text!r}"
                else:
                    message = (
                        f"{held.value} and {entity_class.value} share token "
                        f"{enriched[i].text!r}"
                    )
                if on_overlap == "raise":
                    raise ValueError(f"Overlapping context spans: {message}")
                warnings.warn(EncodingWarning(message), stacklevel=3)
                continue
            owner[i] = (entity_class, run)

    tags = []
    previous = None
    for token, held in zip(enriched, owner):
        if token.is_marker:
            tags.append("O")
            continue
        if held is None:
            tags.append("O")
        elif held == previous:
            tags.append(f"I-{held[0].short}")
        else:
            tags.append(f"B-{held[0].short}")
        previous = held
    return TagSequence(enriched, tags, BIO_UMEMP, markers)


def decode_tags(seq: TagSequence) -> List[Tuple[EntityClass, Span]]:
    """Turn maximal label runs back into character spans.

    Marker tokens are skipped without closing a run. An ``I-X`` that does not
    continue an ``X`` run opens a new span.

    Raises
    ------
    ValueError
        If a label is not part of the sequence's scheme.

    Examples
    --------
    >>> tokens = tokenize("a b 10 mg c")
    >>> decode_tags(TagSequence(tokens, ["O", "O", "Q", "Q", "O"], IO_Q))
    [(<EntityClass.QUANTITY: 'Quantity'>, Span(start=4, end=9))]
    """
    illegal = seq.illegal_labels()
    if illegal:
        raise ValueError(f"Unknown labels for scheme {seq.scheme}: {illegal}")

    spans = []
    current_class = None
    current_start = current_end = None
    for token, tag in zip(seq.tokens, seq.tags):
        if token.is_marker:
            continue
        label_class, begins = _read_label(tag, seq.scheme)
        if label_class is None or begins or label_class is not current_class:
            if current_class is not None:
                spans.append((current_class, Span(current_start, current_end)))
            current_class = label_class
            current_start = token.span.start
        current_end = token.span.end
    if current_class is not None:
        spans.append((current_class, Span(current_start, current_end)))
    return sorted(spans, key=lambda item: (item[1], list(EntityClass).index(item[0])))


def _read_label(tag, scheme):
    if tag == "O":
        return None, False
    if scheme == IO_Q:
        return EntityClass.QUANTITY, False
    prefix, name = tag.split("-", 1)
    return EntityClass.parse(name), prefix == "B"


def training_samples(docs, task: int) -> List[List[Tuple[str, str]]]:
    """Token/tag samples for one task: one per sentence for task 1, one per frame for task 2.

    Context spans outside the quantity's sentence are left out of task 2
    samples.
    """
    if task not in (1, 2):
        raise KeyError("Invalid 'task' argument.")
    samples = []
    for doc in docs:
        grouped = doc.frames_by_sentence()
        for sentence in doc.sentences:
            text = doc.sentence_text(sentence)
            offset = sentence.span.start
            frames = grouped[sentence.index]
            if task == 1:
                quantities = sorted({frame.quantity.shift(-offset) for frame in frames})
                seq = encode_task1(text, quantities)
                samples.append(_pairs(seq))
                continue
            for frame in frames:
                local = frame.shift(-offset)
                for entity_class, span in local.entities():
                    if not span.is_valid(len(text)):
                        warnings.warn(
                            SpanSnapWarning(
                                f"{doc.doc_id}: {entity_class.value} span outside the "
                                "quantity's sentence left out of the sample"
                            )
                        )
                        local = local.with_span(entity_class, None)
                samples.append(_pairs(encode_task2(text, local)))
    return samples


def _pairs(seq: TagSequence) -> List[Tuple[str, str]]:
    return [(token.text, tag) for token, tag in zip(seq.tokens, seq.tags)]


def export_training_file(docs, task: int, path) -> int:
    """Write training samples as "TOKEN<TAB>TAG" lines with blank lines between samples.

    Returns
    -------
    int
        Number of samples written.
    """
    samples = training_samples(docs, task)
    blocks = ["\n".join(f"{token}\t{tag}" for token, tag in sample) for sample in samples]
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        if blocks:
            handle.write("\n\n".join(blocks) + "\n")
    return len(samples)


def read_training_file(path) -> List[Tuple[List[str], List[str]]]:
    """Read a training export back into (tokens, tags) samples."""
    samples = []
    tokens, tags = [], []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                if tokens:
                    samples.append((tokens, tags))
                    tokens, tags = [], []
                continue
            try:
                token, tag = line.split("\t")
            except ValueError:
                raise ValueError(f"{path}:{number}: expected TOKEN<TAB>TAG, got {line!r}")
            tokens.append(token)
            tags.append(tag)
    if tokens:
        samples.append((tokens, tags))
    return samples
