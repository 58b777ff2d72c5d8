"""Checks of annotated frames against the annotation guidelines.

Error findings are data-model violations; warnings are guideline
heuristics that a reviewer should look at.
"""
import json
import re
from typing import Iterable, List, NamedTuple, Optional, Sequence

from measex.config import Stoplists, default_config
from measex.internal_functions import parallel_map
from measex.model import (
    GEOMETRY_RULES,
    Document,
    EntityClass,
    Span,
    validate_frame,
)
from measex.tagging import tokenize

SEVERITIES = ("error", "warning", "info")
SPECIFIERS = frozenset("~><±")
_NOT_UNITS = ("ph",)
_ABBREVIATION = re.compile(r"\s*\(([A-Za-z0-9.\-]+)\)")


class Rule(NamedTuple):
    rule_id: str
    severity: str
    description: str
    anchor: str
    automated: bool = True


_RULES = (
    Rule(
        "ROOT-REQUIRED",
        "error",
        "Every frame has a Quantity.",
        "Guidelines A.1: the Number is the root entity of each sample",
    ),
    Rule(
        "MP-NEEDS-ME",
        "error",
        "A MeasuredProperty needs a MeasuredEntity in the same frame.",
        "Guidelines A: there must be a MeasuredEntity for any MeasuredProperty",
    ),
    Rule(
        "A2-SPAN-EXTENT",
        "warning",
        "MeasuredEntity and MeasuredProperty spans do not begin or end with an article, "
        "a copula or a preposition.",
        "Guidelines A.2: copulas and articles are not annotated",
    ),
    Rule(
        "B1-SPECIFIER",
        "warning",
        "A specifier (~, >, <, ±) right before a Quantity belongs to the Quantity span.",
        "Guidelines B.1: the Number span is expanded to contain its specifiers",
    ),
    Rule(
        "A6-NOT-A-UNIT",
        "warning",
        "pH and ratios are not units.",
        "Guidelines A.6: pH values are not considered units",
    ),
    Rule(
        "B7-ABBREV",
        "warning",
        "A parenthesised abbreviation right after an entity belongs to the entity span.",
        "Guidelines B.7: abbreviations are included in the entity span",
    ),
    Rule(
        "A3-CLOSEST-MENTION",
        "warning",
        "The annotated MeasuredEntity is the mention closest to its Quantity.",
        "Guidelines A.3: the span closest to its root Number is annotated",
    ),
    Rule(
        "A4-PART-WHOLE",
        "info",
        "Part-whole relations are annotated on the part.",
        "Guidelines A.4: part-whole relations",
        False,
    ),
    Rule(
        "A5-NON-NOUN-MP",
        "info",
        "MeasuredProperty spans may be verbs or adjectives.",
        "Guidelines A.5: non-noun properties",
        False,
    ),
    Rule(
        "B3-OPERATION-SPAN",
        "info",
        "Operations are annotated as MeasuredProperty without their objects.",
        "Guidelines B.3: operations",
        False,
    ),
    Rule(
        "B4-AMBIVALENT",
        "info",
        "Ambivalent relations follow the reading the sentence favours.",
        "Guidelines B.4: ambivalent relations",
        False,
    ),
    Rule(
        "B4-COREFERENCE",
        "info",
        "Coreferent mentions are resolved to the closest mention.",
        "Guidelines B.4: coreference",
        False,
    ),
    Rule(
        "B4-TRANSFORMATION",
        "info",
        "Transformations are annotated on the entity before the transformation.",
        "Guidelines B.4: transformations",
        False,
    ),
)

#: data-model check for unusable offsets; reported next to the guideline rules
SPAN_GEOMETRY = Rule(
    "SPAN-GEOMETRY",
    "error",
    "Spans are non-empty character ranges inside the document text.",
    "Data model: spans are half-open character offsets into the text",
)

_RULE_IDS = {rule.rule_id: rule for rule in _RULES + (SPAN_GEOMETRY,)}
# validate_frame rule ids that lint reports as error findings
_VALIDATION_RULES = {"quantity-missing": "ROOT-REQUIRED", "MP-without-ME": "MP-NEEDS-ME"}
_VALIDATION_RULES.update((rule_id, SPAN_GEOMETRY.rule_id) for rule_id in GEOMETRY_RULES)


class LintFinding(NamedTuple):
    rule_id: str
    severity: str
    span: Optional[Span]
    message: str
    doc_id: str = ""

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "rule_id": self.rule_id,
            "severity": self.severity,
            "start": None if self.span is None else self.span.start,
            "end": None if self.span is None else self.span.end,
            "message": self.message,
        }


def rule_catalog(include_manual: bool = False) -> List[Rule]:
    """The shipped guideline rules in stable order.

    :data:`SPAN_GEOMETRY` is a data-model check and not part of the catalog.

    Examples
    --------
    >>> [rule.rule_id for rule in rule_catalog()][:2]
    ['ROOT-REQUIRED', 'MP-NEEDS-ME']
    >>> len(rule_catalog()), len(rule_catalog(include_manual=True))
    (7, 13)
    """
    return [rule for rule in _RULES if include_manual or rule.automated]


def _finding(rule_id, span, message, doc_id):
    return LintFinding(rule_id, _RULE_IDS[rule_id].severity, span, message, doc_id)


def lint_document(doc: Document, stoplists: Optional[Stoplists] = None) -> List[LintFinding]:
    """Apply the automated rules to every frame of ``doc``.

    Parameters
    ----------
    doc : Document
    stoplists : Stoplists, optional
        Words span edges must avoid; the configured defaults when omitted.

    Returns
    -------
    list of LintFinding
        Findings ordered by frame, then by rule. A frame with an inverted,
        negative or out-of-bounds span gets a :data:`SPAN_GEOMETRY` finding
        per broken span and no guideline checks; its findings carry no span.
    """
    if stoplists is None:
        stoplists = default_config().stoplist_sets()
    findings = []
    edge_words = stoplists.span_edges
    for frame in doc.frames:
        violations = validate_frame(frame, doc.text)
        broken = any(v.rule_id in GEOMETRY_RULES for v in violations)
        for violation in violations:
            rule_id = _VALIDATION_RULES[violation.rule_id]
            span = None
            if not broken and violation.entity_class is not None:
                span = frame.get(violation.entity_class)
            findings.append(_finding(rule_id, span, violation.message, doc.doc_id))
        if broken or frame.quantity is None:
            continue
        findings.extend(_span_extent(doc, frame, edge_words))
        findings.extend(_specifier(doc, frame))
        findings.extend(_not_a_unit(doc, frame))
        findings.extend(_abbreviation(doc, frame))
        findings.extend(_closest_mention(doc, frame))
    return findings


def _span_extent(doc, frame, edge_words):
    for entity_class in (EntityClass.MEASURED_ENTITY, EntityClass.MEASURED_PROPERTY):
        span = frame.get(entity_class)
        if span is None:
            continue
        words = [t.text.lower() for t in tokenize(span.slice(doc.text))]
        if not words:
            continue
        for side, word in (("begins", words[0]), ("ends", words[-1])):
            if word in edge_words:
                yield _finding(
                    "A2-SPAN-EXTENT",
                    span,
                    f"{entity_class.value} span {side} with {word!r}",
                    doc.doc_id,
                )
                break


def _specifier(doc, frame):
    q = frame.quantity
    if q.start > 0 and doc.text[q.start - 1] in SPECIFIERS:
        yield _finding(
            "B1-SPECIFIER",
            q,
            f"specifier {doc.text[q.start - 1]!r} precedes the Quantity outside its span",
            doc.doc_id,
        )


def _not_a_unit(doc, frame):
    if frame.unit is None:
        return
    surface = frame.unit.slice(doc.text)
    if surface.lower() in _NOT_UNITS or "ratio" in surface.lower():
        yield _finding("A6-NOT-A-UNIT", frame.unit, f"{surface!r} is not a unit", doc.doc_id)


def _abbreviation(doc, frame):
    for entity_class in (EntityClass.MEASURED_ENTITY, EntityClass.MEASURED_PROPERTY):
        span = frame.get(entity_class)
        if span is None:
            continue
        match = _ABBREVIATION.match(doc.text, span.end)
        if match is None:
            continue
        abbreviation = match.group(1)
        if sum(char.isupper() for char in abbreviation) >= 2:
            yield _finding(
                "B7-ABBREV",
                span,
                f"abbreviation ({abbreviation}) follows the {entity_class.value} span",
                doc.doc_id,
            )


def _closest_mention(doc, frame):
    me = frame.measured_entity
    if me is None:
        return
    sentence = doc.sentence_of(frame.quantity)
    if sentence is None:
        return
    surface = me.slice(doc.text)
    annotated = me.distance(frame.quantity)
    pattern = re.compile(r"(?<!\w)" + re.escape(surface) + r"(?!\w)")
    for match in pattern.finditer(doc.text, sentence.span.start, sentence.span.end):
        mention = Span(match.start(), match.end())
        if mention != me and mention.distance(frame.quantity) < annotated:
            yield _finding(
                "A3-CLOSEST-MENTION",
                me,
                f"{surface!r} also occurs at ({mention.start}, {mention.end}), "
                "closer to the Quantity",
                doc.doc_id,
            )
            return


def lint_corpus(
    docs: Sequence[Document], stoplists: Optional[Stoplists] = None, workers: int = 1
) -> List[LintFinding]:
    """Lint every document, keeping corpus order."""
    if stoplists is None:
        stoplists = default_config().stoplist_sets()
    per_document = parallel_map(lambda doc: lint_document(doc, stoplists), docs, workers)
    return [finding for findings in per_document for finding in findings]


def findings_to_jsonl(findings: Iterable[LintFinding]) -> str:
    return "".join(
        json.dumps(finding.to_dict(), ensure_ascii=False) + "\n" for finding in findings
    )


def has_errors(findings: Iterable[LintFinding]) -> bool:
    return any(finding.severity == "error" for finding in findings)


__all__ = [
    "Rule",
    "SPAN_GEOMETRY",
    "LintFinding",
    "rule_catalog",
    "lint_document",
    "lint_corpus",
    "findings_to_jsonl",
    "has_errors",
]
