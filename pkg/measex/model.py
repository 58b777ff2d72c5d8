"""Spans, entity classes, measurement frames and documents.

Every type here is an immutable value. Frame validation reports violations as
data so that annotation found in the wild stays inspectable.
"""
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple


SPLITS = ("train", "dev", "test", "unsplit")


class EntityClass(str, Enum):
    """Closed set of entity classes of a measurement frame."""

    QUANTITY = "Quantity"
    UNIT = "Unit"
    MEASURED_ENTITY = "MeasuredEntity"
    MEASURED_PROPERTY = "MeasuredProperty"

    @property
    def short(self) -> str:
        """Tag-set abbreviation: Q, U, ME or MP."""
        return _SHORT_NAMES[self]

    @classmethod
    def parse(cls, name: str) -> "EntityClass":
        """Resolve a class from its full name or its abbreviation.

        Examples
        --------
        >>> EntityClass.parse("ME")
        <EntityClass.MEASURED_ENTITY: 'MeasuredEntity'>
        >>> EntityClass.parse("Unit")
        <EntityClass.UNIT: 'Unit'>
        """
        for member in cls:
            if name in (member.value, member.short):
                return member
        raise KeyError(f"Invalid entity class {name!r}.")


_SHORT_NAMES = {
    EntityClass.QUANTITY: "Q",
    EntityClass.UNIT: "U",
    EntityClass.MEASURED_ENTITY: "ME",
    EntityClass.MEASURED_PROPERTY: "MP",
}

CONTEXT_CLASSES = (
    EntityClass.UNIT,
    EntityClass.MEASURED_ENTITY,
    EntityClass.MEASURED_PROPERTY,
)


class RelationType(str, Enum):
    HAS_QUANTITY = "HasQuantity"
    HAS_PROPERTY = "HasProperty"


@dataclass(frozen=True, order=True)
class Span:
    """Half-open character interval [start, end).

    Offsets index Unicode code points, which is what Python ``str`` slicing
    uses. Construction does not validate, so that inverted or out-of-bounds
    spans read from external data can still be reported by
    :func:`validate_frame`.

    Examples
    --------
    >>> Span(0, 5).overlap(Span(3, 8))
    2
    >>> Span(10, 20).distance(Span(25, 30))
    5
    """

    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start

    def is_valid(self, text_length: Optional[int] = None) -> bool:
        if not 0 <= self.start < self.end:
            return False
        return text_length is None or self.end <= text_length

    def overlap(self, other: "Span") -> int:
        """Number of characters shared with ``other``."""
        return max(0, min(self.end, other.end) - max(self.start, other.start))

    def overlaps(self, other: "Span") -> bool:
        return self.overlap(other) > 0

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end

    def distance(self, other: "Span") -> int:
        """Gap between the nearer boundaries; 0 when the spans overlap or touch."""
        return max(0, max(self.start, other.start) - min(self.end, other.end))

    def shift(self, offset: int) -> "Span":
        return Span(self.start + offset, self.end + offset)

    def slice(self, text: str) -> str:
        return text[self.start : self.end]

    def to_dict(self) -> Dict[str, int]:
        return {"start": self.start, "end": self.end}


class Relation(NamedTuple):
    source: EntityClass
    relation: RelationType
    target: EntityClass


class RelationEdge(NamedTuple):
    """A relation together with the spans of its two endpoints."""

    relation: Relation
    source_span: Span
    target_span: Span


_ME_HAS_Q = Relation(
    EntityClass.MEASURED_ENTITY, RelationType.HAS_QUANTITY, EntityClass.QUANTITY
)
_ME_HAS_MP = Relation(
    EntityClass.MEASURED_ENTITY, RelationType.HAS_PROPERTY, EntityClass.MEASURED_PROPERTY
)
_MP_HAS_Q = Relation(
    EntityClass.MEASURED_PROPERTY, RelationType.HAS_QUANTITY, EntityClass.QUANTITY
)


@dataclass(frozen=True)
class MeasurementFrame:
    """One Quantity with its optional Unit, MeasuredEntity and MeasuredProperty."""

    quantity: Span
    unit: Optional[Span] = None
    measured_entity: Optional[Span] = None
    measured_property: Optional[Span] = None

    def get(self, entity_class: EntityClass) -> Optional[Span]:
        return getattr(self, _FRAME_FIELDS[entity_class])

    def entities(self) -> List[Tuple[EntityClass, Span]]:
        """Present (class, span) pairs in class order."""
        present = []
        for entity_class in EntityClass:
            span = self.get(entity_class)
            if span is not None:
                present.append((entity_class, span))
        return present

    def shift(self, offset: int) -> "MeasurementFrame":
        return MeasurementFrame(
            *(None if span is None else span.shift(offset) for span in self._fields())
        )

    def with_span(self, entity_class: EntityClass, span: Optional[Span]) -> "MeasurementFrame":
        return replace(self, **{_FRAME_FIELDS[entity_class]: span})

    def _fields(self) -> Tuple[Optional[Span], ...]:
        return (self.quantity, self.unit, self.measured_entity, self.measured_property)


_FRAME_FIELDS = {
    EntityClass.QUANTITY: "quantity",
    EntityClass.UNIT: "unit",
    EntityClass.MEASURED_ENTITY: "measured_entity",
    EntityClass.MEASURED_PROPERTY: "measured_property",
}


class Violation(NamedTuple):
    rule_id: str
    message: str
    entity_class: Optional[EntityClass] = None


GEOMETRY_RULES = ("span-inverted", "span-negative", "span-out-of-bounds")


def validate_frame(frame: MeasurementFrame, text: Optional[str] = None) -> List[Violation]:
    """Check a frame against the cardinality and span-bounds invariants.

    Parameters
    ----------
    frame : MeasurementFrame
    text : str, optional
        Enclosing text. Upper bounds are only checked when it is given.

    Returns
    -------
    list of Violation
        Empty when every invariant holds.

    Examples
    --------
    >>> text = "The patient weighted ~100 pounds."
    >>> validate_frame(MeasurementFrame(Span(21, 25)), text)
    []
    >>> [v.rule_id for v in validate_frame(MeasurementFrame(Span(5, 2)))]
    ['span-inverted']
    """
    violations = []
    if frame.quantity is None:
        violations.append(
            Violation("quantity-missing", "frame has no Quantity", EntityClass.QUANTITY)
        )
    text_length = None if text is None else len(text)
    for entity_class, span in frame.entities():
        if span.start >= span.end:
            violations.append(
                Violation(
                    "span-inverted",
                    f"{entity_class.value} span ({span.start}, {span.end}) is empty or inverted",
                    entity_class,
                )
            )
        elif span.start < 0:
            violations.append(
                Violation(
                    "span-negative",
                    f"{entity_class.value} span starts at negative offset {span.start}",
                    entity_class,
                )
            )
        elif text_length is not None and span.end > text_length:
            violations.append(
                Violation(
                    "span-out-of-bounds",
                    f"{entity_class.value} span ends at {span.end} beyond text length "
                    f"{text_length}",
                    entity_class,
                )
            )
    if frame.measured_property is not None and frame.measured_entity is None:
        violations.append(
            Violation(
                "MP-without-ME",
                "MeasuredProperty present without a MeasuredEntity",
                EntityClass.MEASURED_PROPERTY,
            )
        )
    return violations


def implied_relations(frame: MeasurementFrame) -> List[RelationEdge]:
    """Relation edges implied by the optional fields present in ``frame``.

    Frames with a MeasuredProperty but no MeasuredEntity imply no edges.
    """
    q = frame.quantity
    me = frame.measured_entity
    mp = frame.measured_property
    if q is None or me is None:
        return []
    if mp is None:
        return [RelationEdge(_ME_HAS_Q, me, q)]
    return [RelationEdge(_ME_HAS_MP, me, mp), RelationEdge(_MP_HAS_Q, mp, q)]


def frame_relations(frame: MeasurementFrame) -> List[Relation]:
    """Relation edges of a valid frame.

    Raises
    ------
    ValueError
        If ``frame`` fails :func:`validate_frame`.

    Examples
    --------
    >>> frame = MeasurementFrame(Span(0, 3), measured_entity=Span(5, 9))
    >>> [(r.source.short, r.relation.value, r.target.short) for r in frame_relations(frame)]
    [('ME', 'HasQuantity', 'Q')]
    """
    violations = validate_frame(frame)
    if violations:
        raise ValueError(
            "Invalid frame: " + ", ".join(violation.rule_id for violation in violations)
        )
    return [edge.relation for edge in implied_relations(frame)]


@dataclass(frozen=True)
class Sentence:
    span: Span
    index: int


@dataclass(frozen=True)
class Document:
    """A text with its sentence offsets and measurement frames.

    ``sentences`` and ``frames`` are stored as tuples; lists passed to the
    constructor are converted.
    """

    doc_id: str
    text: str
    sentences: Tuple[Sentence, ...] = ()
    frames: Tuple[MeasurementFrame, ...] = ()
    domain: str = "unknown"
    split: str = "unsplit"

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.split not in SPLITS:
            raise ValueError(f"Invalid split {self.split!r}, expected one of {SPLITS}.")

    def with_frames(self, frames) -> "Document":
        return replace(self, frames=tuple(frames))

    def sentence_text(self, sentence: Sentence) -> str:
        return sentence.span.slice(self.text)

    def sentence_of(self, span: Span) -> Optional[Sentence]:
        """The sentence fully containing ``span``, if any."""
        for sentence in self.sentences:
            if sentence.span.contains(span):
                return sentence
        return None

    def is_cross_sentence(self, frame: MeasurementFrame) -> bool:
        """True when the frame's spans do not all lie in one sentence."""
        home = self.sentence_of(frame.quantity)
        if home is None:
            return True
        return any(not home.span.contains(span) for _, span in frame.entities())

    def frames_by_sentence(self) -> Dict[int, List[MeasurementFrame]]:
        """Frames grouped by the index of the sentence holding their Quantity."""
        grouped: Dict[int, List[MeasurementFrame]] = {s.index: [] for s in self.sentences}
        for frame in self.frames:
            home = self.sentence_of(frame.quantity)
            if home is not None:
                grouped[home.index].append(frame)
        return grouped

    def entity_spans(self) -> Iterator[Tuple[EntityClass, Span]]:
        for frame in self.frames:
            yield from frame.entities()


def sentence_entities(
    frames, sentence: Span
) -> List[Tuple[EntityClass, Span]]:
    """Distinct (class, span) pairs of ``frames`` lying inside ``sentence``."""
    seen = {}
    for frame in frames:
        for entity_class, span in frame.entities():
            if sentence.contains(span):
                seen[(entity_class, span)] = None
    return list(seen)


__all__ = [
    "SPLITS",
    "CONTEXT_CLASSES",
    "EntityClass",
    "RelationType",
    "Span",
    "Relation",
    "RelationEdge",
    "MeasurementFrame",
    "Violation",
    "GEOMETRY_RULES",
    "validate_frame",
    "implied_relations",
    "frame_relations",
    "Sentence",
    "Document",
    "sentence_entities",
]
