"""Canonical vocabulary and recipe-corpus loading.

The vocabulary CSV is the shared node namespace for everything downstream:
ids are assigned densely in file order and stay stable for the whole run.
Recipes are newline-delimited JSON records whose ingredient names are matched
against the vocabulary after normalization; unmatched names are dropped and
counted, never fatal.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

#: The eight cuisine macro-regions an ingredient may be tagged with.
MACRO_REGIONS = (
    "east_asian",
    "western_atlantic",
    "mediterranean",
    "eastern_european",
    "southeast_asian",
    "south_asian",
    "latin_american",
    "japanese",
)
_REGION_SET = frozenset(MACRO_REGIONS)

MAX_CUISINE_TAGS = 3

_FIXED_COLUMNS = ["name", "flavordb_id", "usda_id", "food_group", "nova", "cuisine_tags"]
_SCORE_PREFIX = "score:"

_COLLAPSE_RE = re.compile(r"[\s\-_]+")


class IngestError(ValueError):
    """Raised on malformed vocabulary files or unusable recipe corpora."""


def normalize_name(raw: str) -> str:
    """Lowercase, trim, and collapse whitespace/hyphen runs to one underscore."""
    return _COLLAPSE_RE.sub("_", raw.strip().lower()).strip("_")


@dataclass(frozen=True)
class IngredientEntry:
    id: int
    name: str
    flavordb_anchor: str | None = None
    usda_anchor: str | None = None
    cuisine_tags: tuple[str, ...] = ()
    food_group: str | None = None
    nova_class: int | None = None
    continuous_scores: dict[str, float] = field(default_factory=dict)

    @property
    def is_cuisine_specific(self) -> bool:
        return len(self.cuisine_tags) > 0


@dataclass
class CanonicalVocabulary:
    entries: list[IngredientEntry]
    name_index: dict[str, int]

    def __len__(self) -> int:
        return len(self.entries)

    def name_of(self, ingredient_id: int) -> str:
        return self.entries[ingredient_id].name

    def id_of(self, name: str) -> int | None:
        return self.name_index.get(normalize_name(name))

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def score_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            for probe in e.continuous_scores:
                seen.setdefault(probe, None)
        return list(seen)

    def score_column(self, probe: str) -> tuple[np.ndarray, np.ndarray]:
        """Return (ids, values) for every entry carrying the probe score."""
        ids, vals = [], []
        for e in self.entries:
            if probe in e.continuous_scores:
                ids.append(e.id)
                vals.append(e.continuous_scores[probe])
        return np.asarray(ids, dtype=np.int64), np.asarray(vals, dtype=np.float64)

    def cuisine_specific_ids(self) -> np.ndarray:
        return np.asarray([e.id for e in self.entries if e.is_cuisine_specific], dtype=np.int64)

    def food_group_labels(self) -> tuple[np.ndarray, list[str]]:
        ids, groups = [], []
        for e in self.entries:
            if e.food_group is not None:
                ids.append(e.id)
                groups.append(e.food_group)
        return np.asarray(ids, dtype=np.int64), groups


def _parse_nova(cell: str, row_no: int) -> int | None:
    if cell == "":
        return None
    try:
        nova = int(cell)
    except ValueError:
        raise IngestError(f"row {row_no}: nova class {cell!r} is not an integer") from None
    if not 1 <= nova <= 4:
        raise IngestError(f"row {row_no}: nova class {nova} outside 1..4")
    return nova


def _parse_tags(cell: str, row_no: int) -> tuple[str, ...]:
    if cell == "":
        return ()
    tags = []
    for part in cell.split("|"):
        tag = normalize_name(part)
        if tag not in _REGION_SET:
            raise IngestError(f"row {row_no}: unknown cuisine label {part!r}")
        tags.append(tag)
    if len(tags) > MAX_CUISINE_TAGS:
        raise IngestError(f"row {row_no}: {len(tags)} cuisine tags, at most {MAX_CUISINE_TAGS} allowed")
    return tuple(sorted(set(tags)))


def load_vocabulary(path: str | Path) -> CanonicalVocabulary:
    """Load the canonical-vocabulary CSV; ids are dense in file order."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty vocabulary file") from None
        if header[: len(_FIXED_COLUMNS)] != _FIXED_COLUMNS:
            raise IngestError(
                f"{path}: header must start with {','.join(_FIXED_COLUMNS)}, got {header[:6]}"
            )
        score_cols: list[tuple[int, str]] = []
        for idx, col in enumerate(header[len(_FIXED_COLUMNS) :], start=len(_FIXED_COLUMNS)):
            if not col.startswith(_SCORE_PREFIX):
                raise IngestError(f"{path}: unexpected column {col!r} (score columns must be 'score:<probe>')")
            score_cols.append((idx, col[len(_SCORE_PREFIX) :]))

        entries: list[IngredientEntry] = []
        name_index: dict[str, int] = {}
        first_row_of: dict[str, int] = {}
        for row_no, row in enumerate(reader, start=2):
            if not row or all(cell == "" for cell in row):
                continue
            name = normalize_name(row[0])
            if not name:
                raise IngestError(f"row {row_no}: empty ingredient name")
            if name in name_index:
                raise IngestError(
                    f"duplicate name {name!r} after normalization: rows {first_row_of[name]} and {row_no}"
                )
            cells = row + [""] * (len(header) - len(row))
            scores = {}
            for idx, probe in score_cols:
                if cells[idx] != "":
                    scores[probe] = float(cells[idx])
            entry = IngredientEntry(
                id=len(entries),
                name=name,
                flavordb_anchor=cells[1] or None,
                usda_anchor=cells[2] or None,
                cuisine_tags=_parse_tags(cells[5], row_no),
                food_group=normalize_name(cells[3]) or None,
                nova_class=_parse_nova(cells[4], row_no),
                continuous_scores=scores,
            )
            name_index[name] = entry.id
            first_row_of[name] = row_no
            entries.append(entry)

    if not entries:
        raise IngestError(f"{path}: vocabulary has no rows")
    logger.info("loaded vocabulary: %d ingredients from %s", len(entries), path)
    return CanonicalVocabulary(entries=entries, name_index=name_index)


def write_vocabulary(vocab: CanonicalVocabulary, path: str | Path) -> None:
    """Write the vocabulary back out; load_vocabulary(write_vocabulary(v)) == v."""
    probes = vocab.score_names()
    header = _FIXED_COLUMNS + [_SCORE_PREFIX + p for p in probes]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for e in vocab.entries:
            row = [
                e.name,
                e.flavordb_anchor or "",
                e.usda_anchor or "",
                e.food_group or "",
                "" if e.nova_class is None else str(e.nova_class),
                "|".join(e.cuisine_tags),
            ]
            for p in probes:
                val = e.continuous_scores.get(p)
                row.append("" if val is None else repr(val))
            writer.writerow(row)


@dataclass
class MatchedCorpus:
    """Recipes mapped to deduplicated canonical-id sets.

    Zero-match recipes are retained (empty id sets) so counts stay auditable;
    anything with fewer than two ids is pairless and contributes no pair.
    """

    recipes: list[np.ndarray]
    n_total_input: int
    n_matched: int
    vocab_size: int
    report: dict = field(default_factory=dict)

    @property
    def n_pairless(self) -> int:
        return sum(1 for r in self.recipes if len(r) < 2)

    def pairless_flags(self) -> list[bool]:
        return [len(r) < 2 for r in self.recipes]


def load_recipes(paths: list[str | Path], vocab: CanonicalVocabulary) -> MatchedCorpus:
    """Match recipe files against the vocabulary.

    Files are processed in the given order and lines in file order, so the
    resulting corpus is independent of any sharding a caller might add.
    """
    recipes: list[np.ndarray] = []
    n_matched = 0
    n_malformed = 0
    n_unmatched_names = 0
    n_raw_names = 0
    per_file: dict[str, int] = {}

    for path in paths:
        path = Path(path)
        n_before = len(recipes)
        file_key = path.name
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    names = record["ingredients"]
                    if not isinstance(names, list):
                        raise TypeError("ingredients is not a list")
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    logger.warning("%s:%d: skipping malformed record (%s)", path, line_no, exc)
                    n_malformed += 1
                    continue
                ids = set()
                for raw in names:
                    n_raw_names += 1
                    matched = vocab.id_of(str(raw))
                    if matched is None:
                        n_unmatched_names += 1
                    else:
                        ids.add(matched)
                if ids:
                    n_matched += 1
                recipes.append(np.asarray(sorted(ids), dtype=np.int32))
        per_file[file_key] = per_file.get(file_key, 0) + (len(recipes) - n_before)

    if not recipes:
        raise IngestError("no readable recipes in input")

    corpus = MatchedCorpus(
        recipes=recipes,
        n_total_input=len(recipes),
        n_matched=n_matched,
        vocab_size=len(vocab),
        report={
            "n_total_input": len(recipes),
            "n_matched": n_matched,
            "n_malformed": n_malformed,
            "n_raw_names": n_raw_names,
            "n_unmatched_names": n_unmatched_names,
            "match_rate": n_matched / len(recipes),
            "per_file": per_file,
        },
    )
    corpus.report["n_pairless"] = corpus.n_pairless
    logger.info(
        "matched corpus: %d/%d recipes with >=1 match, %d pairless, %d malformed",
        n_matched,
        len(recipes),
        corpus.report["n_pairless"],
        n_malformed,
    )
    return corpus
