"""Golden guideline corpus and a seeded simulator of random annotated corpora."""
import re
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from measex.model import Document, EntityClass, MeasurementFrame, Sentence, Span
from measex.tagging import tokenize


class GuidelineExample(NamedTuple):
    section: str
    sentence: str
    # one (Quantity, Unit, MeasuredEntity, MeasuredProperty) surface tuple per frame
    frames: Tuple[Tuple[str, Optional[str], Optional[str], Optional[str]], ...]


GUIDELINE_EXAMPLES = (
    GuidelineExample(
        "A",
        "The sick patient weighted ~100 pounds and was prescribed an Ibuprofen dosage of 500 mg.",
        (
            ("~100", "pounds", "sick patient", "weighted"),
            ("500", "mg", "Ibuprofen", "dosage"),
        ),
    ),
    GuidelineExample(
        "A.1",
        "The lowest input of odd nitrogen corresponds to 3.5-6.1 (x10-4) wt.% N accumulated "
        "over 3 byr and mixed into 1.5-2.6 m, of soil.",
        (
            ("3.5-6.1 (x10-4)", "wt.%", "N", "lowest input of odd nitrogen"),
            ("3", "byr", "lowest input of odd nitrogen", "accumulated"),
            ("1.5-2.6", "m", "soil", None),
        ),
    ),
    GuidelineExample(
        "A.2",
        "The earth surface temperatures have risen by 0.5 °C compared to baseline levels.",
        (("0.5", "°C", "earth surface temperatures", "risen"),),
    ),
    GuidelineExample(
        "A.3",
        "The O2/N ratio was measured with the aforementioned machinery (O2/N = 2.8).",
        (("2.8", None, "O2/N", "ratio"),),
    ),
    GuidelineExample(
        "A.4",
        "The hamburger consisted of 30% patty and 10% cheese.",
        (
            ("30", "%", "hamburger", "patty"),
            ("10", "%", "hamburger", "cheese"),
        ),
    ),
    GuidelineExample(
        "A.4",
        "Steam activation was carried out by heating an amount of sample in a flow of "
        "10% water vapor.",
        (("10", "%", "flow", "water vapor"),),
    ),
    GuidelineExample(
        "A.4",
        "The patty of the hamburger was 200g.",
        (("200", "g", "hamburger", "patty"),),
    ),
    GuidelineExample(
        "A.5",
        "The patient weighed 100 pounds.",
        (("100", "pounds", "patient", "weighed"),),
    ),
    GuidelineExample(
        "A.5",
        "Possible beverage sizes are 200, 300 or 400 ml.",
        (("200, 300 or 400", "ml", "beverage", "sizes"),),
    ),
    GuidelineExample(
        "B.2",
        "The gel was ground to powders and then calcined at 400 °C in a muffle furnace under "
        "air atmosphere.",
        (("400", "°C", "powders", "calcined"),),
    ),
    GuidelineExample(
        "B.2",
        "The as-synthesized zeolites were calcined at 580 degC for 4 h under a flow of air.",
        (
            ("580", "degC", "as-synthesized zeolites", "calcined"),
            ("4", "h", "as-synthesized zeolites", "calcined"),
        ),
    ),
    GuidelineExample(
        "B.3",
        "The obtained sample was washed with absolute ethanol, and then dried at 60 °C for 10h.",
        (
            ("60", "°C", "obtained sample", "dried"),
            ("10", "h", "obtained sample", "dried"),
        ),
    ),
    GuidelineExample(
        "B.3",
        "The solution was modified by dissolving it in 10 wt% ethanol.",
        (("10", "wt%", "ethanol", None),),
    ),
    GuidelineExample(
        "B.3",
        "500 g of the sample was dissolved in 10 ml NaCl solution.",
        (
            ("500", "g", "sample", "dissolved"),
            ("10", "ml", "NaCl solution", None),
        ),
    ),
    GuidelineExample(
        "B.3",
        "The composite was ground, pressed and sintered at 300 °C.",
        (("300", "°C", "composite", "sintered"),),
    ),
    GuidelineExample(
        "B.3",
        "Copper (99,99%) was purchased from Sigma-Aldrich.",
        (("99,99", "%", "Copper", None),),
    ),
    GuidelineExample(
        "B.3",
        "The chemical was heated at 300 °C under constant airflow.",
        (("300", "°C", "chemical", "heated"),),
    ),
    GuidelineExample(
        "B.3",
        "The chemical was dried in air at 300 °C.",
        (("300", "°C", "chemical", "dried"),),
    ),
    GuidelineExample(
        "B.3",
        "The chemical was under magnetic stirring for 2 h.",
        (("2", "h", "chemical", "magnetic stirring"),),
    ),
    GuidelineExample(
        "B.3",
        "The chemical was calcinated at 300 °C with a heating rate of 10 °C per minute.",
        (
            ("300", "°C", "chemical", "calcinated"),
            ("10", "°C per minute", "chemical", "heating rate"),
        ),
    ),
    GuidelineExample(
        "B.4",
        "The enhanced form was obtained by calcination at 220 °C under a flow of air.",
        (("220", "°C", "calcination", "under a flow of air"),),
    ),
    GuidelineExample(
        "B.4",
        "NH4OH solution was slowly added until the pH was 10.",
        (("10", None, "pH", None),),
    ),
    GuidelineExample(
        "B.4",
        "Finally, it was filtered, washed with water and ethanol, and vacuum-dried at 70 °C.",
        (("70", "°C", "it", "vacuum-dried"),),
    ),
    GuidelineExample(
        "B.4",
        "To prepare C3N4-Pd composites, the as-prepared g-C3N4 was added into 100 mL ethanol "
        "and was sonicated for 2 h to obtain thin g-C3N4 nanosheets.",
        (
            ("2 h", None, "as-prepared g-C3N4 was added into 100 mL ethanol", "sonicated"),
            ("100", "mL", "ethanol", None),
        ),
    ),
    GuidelineExample(
        "B.5",
        "20g of gold (99.99% purity) were ground.",
        (
            ("20", "g", "gold", "ground"),
            ("99.99", "%", "gold", "purity"),
        ),
    ),
    GuidelineExample(
        "B.5",
        "In a typical process, NiCl2*6H2O (0.173 g) was dissolved in a solution.",
        (("0.173", "g", "NiCl2*6H2O", "dissolved"),),
    ),
    GuidelineExample(
        "B.6",
        "At a weight ratio of 1:1, the MWCNT@MPC composite was mixed with sublimed sulfur.",
        (("1:1", None, "MWCNT@MPC composite was mixed with sublimed sulfur", "weight ratio"),),
    ),
    GuidelineExample(
        "B.7",
        "Hydrochloric acid (HCl, 100 ml) was added to the mixture.",
        (("100", "ml", "Hydrochloric acid (HCl", "added"),),
    ),
    GuidelineExample(
        "MSP",
        "Cleaned sponge and diatom opal was dissolved via wet alkaline digestion at 100 °C "
        "for 40 min.",
        (("100 °C", None, "Cleaned sponge and diatom opal", "wet alkaline digestion"),),
    ),
    GuidelineExample(
        "MSP",
        "The mixture of elements were heated in evacuated quartz ampoules at 1220 K.",
        (("1220 K", None, "mixture of elements", "heated"),),
    ),
)


def _surface_pattern(surface: str) -> "re.Pattern":
    head, tail = surface[0], surface[-1]
    before = ""
    if head.isalpha():
        before = r"(?<![^\W\d_])"
    elif head.isdigit():
        before = r"(?<![\w.,])"
    after = ""
    if tail.isalpha():
        after = r"(?![^\W\d_])"
    elif tail.isdigit():
        after = r"(?!\d|[.,:\-]\d)"
    return re.compile(before + re.escape(surface) + after)


def locate(
    sentence: str, surface: str, anchor: Optional[Span] = None, prefer_after: bool = False
) -> Span:
    """Character span of ``surface`` in ``sentence``.

    Occurrences inside longer words or numbers are skipped. Without an
    anchor the first occurrence is returned, otherwise the one nearest to
    the anchor, preferring occurrences after it when ``prefer_after``.

    Raises
    ------
    ValueError
        If ``surface`` does not occur.

    Examples
    --------
    >>> locate("dried at 10 °C for 100 h", "10")
    Span(start=9, end=11)
    """
    found = [Span(m.start(), m.end()) for m in _surface_pattern(surface).finditer(sentence)]
    if not found:
        raise ValueError(f"{surface!r} does not occur in {sentence!r}")
    if anchor is None:
        return found[0]
    if prefer_after:
        following = [span for span in found if span.start >= anchor.end]
        if following:
            found = following
    return min(found, key=lambda span: (span.distance(anchor), span.start))


def example_frames(example: GuidelineExample) -> List[MeasurementFrame]:
    """Frames of one guideline example with sentence-local offsets."""
    frames = []
    for quantity, unit, entity, prop in example.frames:
        q = locate(example.sentence, quantity)
        frames.append(
            MeasurementFrame(
                q,
                None if unit is None else locate(example.sentence, unit, q, prefer_after=True),
                None if entity is None else locate(example.sentence, entity, q),
                None if prop is None else locate(example.sentence, prop, q),
            )
        )
    return frames


def guideline_corpus() -> List[Document]:
    """The guideline examples as annotated documents, one per guideline section.

    Examples
    --------
    >>> docs = guideline_corpus()
    >>> sum(len(doc.frames) for doc in docs)
    40
    """
    sections: Dict[str, List[GuidelineExample]] = {}
    for example in GUIDELINE_EXAMPLES:
        sections.setdefault(example.section, []).append(example)

    docs = []
    for section, examples in sections.items():
        text = ""
        sentences = []
        frames = []
        for example in examples:
            if text:
                text += " "
            offset = len(text)
            text += example.sentence
            sentences.append(Sentence(Span(offset, len(text)), len(sentences)))
            frames.extend(frame.shift(offset) for frame in example_frames(example))
        docs.append(
            Document(
                f"guideline-{section}", text, sentences, frames, domain="guideline", split="test"
            )
        )
    return docs


# --------------------------------------------------------------------------
# random corpora

_WORDS = (
    "sample", "solution", "powder", "mixture", "film", "layer", "catalyst", "precursor",
    "temperature", "pressure", "rate", "yield", "density", "thickness", "grain", "fiber",
    "water", "ethanol", "acid", "oxide", "crystal", "surface", "particle", "reactor",
    "was", "were", "then", "and", "the", "of", "in", "with", "for", "at",
)
_UNITS = ("mg", "ml", "h", "min", "K", "nm", "mol", "°C")
_PROPERTIES = ("dried", "heated", "stirred", "calcined", "weight", "length", "volume")


class CorpusSimulator:
    """Simulates documents with token-aligned random measurement frames.

    Parameters
    ----------
    random_state : int or numpy.random.Generator instance, optional
        Seedable for reproducibility, by default None

    Notes
    -----
    Every simulated frame has a single-token numeric Quantity. Quantities of
    one sentence never touch each other, and the context spans of a frame
    never share tokens with each other or with its Quantity, so every frame
    survives a tagging round trip.

    Examples
    --------
    >>> simulator = CorpusSimulator(random_state=3)
    >>> simulator.fit(n_documents=2)
    >>> len(simulator.generate())
    2
    """

    def __init__(self, random_state=None):
        self.random_generator = np.random.default_rng(random_state)
        self.settings = None

    def fit(
        self,
        n_documents: int = 10,
        sentences: Tuple[int, int] = (1, 3),
        tokens: Tuple[int, int] = (8, 20),
        max_frames: int = 3,
        domains: Sequence[str] = ("simulated",),
    ):
        """Fix the shape of the corpora :meth:`generate` returns.

        Parameters
        ----------
        n_documents : int, optional
            Documents per corpus, by default 10.
        sentences, tokens : (int, int), optional
            Inclusive ranges of sentences per document and tokens per sentence.
        max_frames : int, optional
            Most frames per sentence, by default 3.
        domains : sequence of str, optional
            Domains assigned to documents in turn.
        """
        if not all(isinstance(n, (int, np.integer)) for n in (n_documents, max_frames)):
            raise TypeError("n_documents and max_frames must be integers.")
        if n_documents < 0 or max_frames < 0:
            raise ValueError("n_documents and max_frames must not be negative.")
        if tokens[0] < 4 or tokens[0] > tokens[1] or sentences[0] < 1:
            raise ValueError("Sentences need at least 4 tokens and documents one sentence.")
        self.settings = dict(
            n_documents=n_documents,
            sentences=sentences,
            tokens=tokens,
            max_frames=max_frames,
            domains=tuple(domains),
        )

    def generate(self) -> List[Document]:
        """Generate a simulated corpus.

        Returns
        -------
        list of Document
        """
        if self.settings is None:
            raise AttributeError("Call fit() before generate().")
        settings = self.settings
        docs = []
        for d in range(settings["n_documents"]):
            low, high = settings["sentences"]
            parts, sentences, frames = [], [], []
            offset = 0
            for index in range(int(self.random_generator.integers(low, high + 1))):
                text, local = self._sentence()
                parts.append(text)
                sentences.append(Sentence(Span(offset, offset + len(text)), index))
                frames.extend(frame.shift(offset) for frame in local)
                offset += len(text) + 1
            domain = settings["domains"][d % len(settings["domains"])]
            docs.append(
                Document(f"sim-{d:04d}", " ".join(parts), sentences, frames, domain=domain)
            )
        return docs

    def _sentence(self) -> Tuple[str, List[MeasurementFrame]]:
        rng = self.random_generator
        low, high = self.settings["tokens"]
        n = int(rng.integers(low, high + 1))
        words = [str(rng.choice(_WORDS)) for _ in range(n)]
        words[0] = words[0].capitalize()

        n_frames = int(rng.integers(0, self.settings["max_frames"] + 1))
        # quantities sit on even positions past the first token so they never touch
        slots = rng.permutation(np.arange(2, n - 1, 2))[:n_frames]
        layout = []
        for position in sorted(slots.tolist()):
            words[position] = _number(rng)
            unit = None
            if rng.random() < 0.7:
                words[position + 1] = str(rng.choice(_UNITS))
                unit = position + 1
            layout.append((position, unit))
        quantity_positions = {position for position, _ in layout}

        text = " ".join(words) + " ."
        tokens = tokenize(text)
        frames = []
        for position, unit in layout:
            used = {position} | ({unit} if unit is not None else set())
            entity = _free_run(rng, n, used | quantity_positions, 3)
            if entity is not None:
                used |= set(range(entity[0], entity[1] + 1))
            prop = None
            if entity is not None and rng.random() < 0.6:
                prop = _free_run(rng, n, used | quantity_positions, 1)
                if prop is not None:
                    words_prop = str(rng.choice(_PROPERTIES))
                    text, tokens = _replace_token(text, tokens, prop[0], words_prop)
            frames.append((position, unit, entity, prop))
        return text, [_frame_from_tokens(tokens, *frame) for frame in frames]


def _number(rng) -> str:
    value = rng.integers(1, 1000)
    if rng.random() < 0.3:
        return f"{value}.{rng.integers(0, 10)}"
    return str(value)


def _free_run(rng, n, blocked, longest):
    free = [i for i in range(n) if i not in blocked]
    if not free:
        return None
    start = int(rng.choice(free))
    end = start
    length = int(rng.integers(1, longest + 1))
    while end + 1 < n and end + 1 not in blocked and end - start + 1 < length:
        end += 1
    return start, end


def _replace_token(text, tokens, index, word):
    span = tokens[index].span
    text = text[: span.start] + word + text[span.end :]
    return text, tokenize(text)


def _frame_from_tokens(tokens, quantity, unit, entity, prop) -> MeasurementFrame:
    def covering(run):
        if run is None:
            return None
        return Span(tokens[run[0]].span.start, tokens[run[1]].span.end)

    return MeasurementFrame(
        covering((quantity, quantity)),
        None if unit is None else covering((unit, unit)),
        covering(entity),
        covering(prop),
    )


def perturb_frames(
    doc: Document, random_state=None, drop_rate: float = 0.2, trim_rate: float = 0.2
) -> Document:
    """A copy of ``doc`` whose frames look like imperfect predictions.

    Whole frames and single context spans are dropped with probability
    ``drop_rate``; multi-token context spans lose their first token with
    probability ``trim_rate``. Spans stay token-aligned and frames never gain
    overlaps they did not have.
    """
    rng = np.random.default_rng(random_state)
    tokens = tokenize(doc.text)
    frames = []
    for frame in doc.frames:
        if rng.random() < drop_rate:
            continue
        for entity_class in (
            EntityClass.UNIT,
            EntityClass.MEASURED_ENTITY,
            EntityClass.MEASURED_PROPERTY,
        ):
            span = frame.get(entity_class)
            if span is None:
                continue
            if rng.random() < drop_rate:
                frame = frame.with_span(entity_class, None)
                continue
            inside = [t for t in tokens if span.contains(t.span)]
            if len(inside) > 1 and rng.random() < trim_rate:
                frame = frame.with_span(entity_class, Span(inside[1].span.start, span.end))
        if frame.measured_property is not None and frame.measured_entity is None:
            frame = frame.with_span(EntityClass.MEASURED_PROPERTY, None)
        frames.append(frame)
    return doc.with_frames(frames)


__all__ = [
    "GuidelineExample",
    "GUIDELINE_EXAMPLES",
    "locate",
    "example_frames",
    "guideline_corpus",
    "CorpusSimulator",
    "perturb_frames",
]
