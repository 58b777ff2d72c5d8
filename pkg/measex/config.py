import json
import os
from dataclasses import dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import FrozenSet, Mapping, NamedTuple, Optional, Tuple, Union

DATA_DIR = Path(__file__).parent / "data"
CONFIG_ENV = "MEASEX_CONFIG"
SCORING_MODES = ("strict", "overlap")

_PATH_FIELDS = ("unit_lexicon", "operation_lexicon", "abbreviations", "mapping_table")
_STOPLIST_NAMES = ("articles", "copulas", "prepositions", "function_words")


def _default_stoplists():
    return {name: DATA_DIR / f"{name}.txt" for name in _STOPLIST_NAMES}


def _default_workers():
    return os.cpu_count() or 1


class Stoplists(NamedTuple):
    articles: FrozenSet[str]
    copulas: FrozenSet[str]
    prepositions: FrozenSet[str]
    function_words: FrozenSet[str]

    @property
    def span_edges(self) -> FrozenSet[str]:
        """Words that must not open or close a MeasuredEntity/Property span."""
        return self.articles | self.copulas | self.prepositions


@dataclass(frozen=True)
class Config:
    """Paths to the lexicons and defaults shared by every subcommand.

    Parameters
    ----------
    unit_lexicon, operation_lexicon, abbreviations : Path
        One entry per line. Blank lines and ``#`` comments are skipped.
    mapping_table : Path
        JSON mapping table for source-annotation conversion.
    stoplists : mapping of str to Path
        Files for ``articles``, ``copulas``, ``prepositions`` and
        ``function_words``.
    scoring_mode : {"strict", "overlap"}
    top_k : int
        Number of most frequent unigrams compared by vocabulary overlap.
    workers : int
        Thread count for per-document work. Defaults to the CPU count.
    random_state : int, optional
        Seed for bootstrap intervals.
    """

    unit_lexicon: Path = DATA_DIR / "units.txt"
    operation_lexicon: Path = DATA_DIR / "operations.txt"
    abbreviations: Path = DATA_DIR / "abbreviations.txt"
    mapping_table: Path = DATA_DIR / "msp_mapping.json"
    stoplists: Mapping[str, Path] = field(default_factory=_default_stoplists)
    scoring_mode: str = "strict"
    top_k: int = 500
    workers: int = field(default_factory=_default_workers)
    random_state: Optional[int] = None

    def __post_init__(self):
        if self.scoring_mode not in SCORING_MODES:
            raise KeyError("Invalid 'scoring_mode' argument.")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1.")
        if self.workers < 1:
            raise ValueError("workers must be at least 1.")
        unknown = set(self.stoplists) - set(_STOPLIST_NAMES)
        if unknown:
            raise KeyError(f"Unknown stoplists: {sorted(unknown)}")

    def units(self) -> Tuple[str, ...]:
        return load_lexicon(self.unit_lexicon)

    def operations(self) -> Tuple[str, ...]:
        return load_lexicon(self.operation_lexicon)

    def abbreviation_list(self) -> Tuple[str, ...]:
        return load_lexicon(self.abbreviations)

    def stoplist_sets(self) -> Stoplists:
        paths = {**_default_stoplists(), **self.stoplists}
        return Stoplists(
            *(frozenset(w.lower() for w in load_lexicon(paths[name])) for name in _STOPLIST_NAMES)
        )


@lru_cache(maxsize=32)
def load_lexicon(path: Union[str, Path]) -> Tuple[str, ...]:
    """Read a lexicon file, one entry per line.

    Blank lines and lines starting with ``#`` are skipped; order is kept.
    """
    with open(path, encoding="utf-8") as handle:
        entries = (line.strip() for line in handle)
        return tuple(entry for entry in entries if entry and not entry.startswith("#"))


def load_config(path: Optional[Union[str, Path]] = None) -> Config:
    """Build a Config from a JSON file.

    The file is taken from ``path`` when given, else from the ``MEASEX_CONFIG``
    environment variable; with neither, the shipped defaults are returned.
    Relative paths inside the file resolve against the file's directory.

    Raises
    ------
    KeyError
        On keys that are not Config fields.
    FileNotFoundError
        If the config file or any file it references does not exist.
    ValueError
        If ``top_k`` or ``workers`` is below 1.
    """
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return Config()

    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: configuration must be a JSON object.")

    known = {f.name for f in fields(Config)}
    unknown = set(raw) - known
    if unknown:
        raise KeyError(f"Unknown configuration keys: {sorted(unknown)}")

    base = path.parent
    values = dict(raw)
    for name in _PATH_FIELDS:
        if name in values:
            values[name] = _existing(base, values[name])
    if "stoplists" in values:
        values["stoplists"] = {
            name: _existing(base, value) for name, value in values["stoplists"].items()
        }
    return Config(**values)


def _existing(base: Path, value: str) -> Path:
    resolved = Path(value)
    if not resolved.is_absolute():
        resolved = base / resolved
    if not resolved.exists():
        raise FileNotFoundError(f"Referenced file does not exist: {resolved}")
    return resolved


@lru_cache(maxsize=1)
def default_config() -> Config:
    return Config()
