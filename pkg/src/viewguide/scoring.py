"""Category appearance scoring: prompt emission, prior table, complexity gate.

Categories are scored 0-100 on five appearance metrics by a language
model; the shipped table is a static reconstruction so runs are
deterministic and offline. ``render_prompt`` emits the exact template
used to (re)generate the table against any chat endpoint.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Iterable

METRICS = (
    "geometric complexity",
    "texture complexity",
    "size",
    "specularity",
    "transparency",
)

# Short column names used in the CSV table, aligned with METRICS.
METRIC_COLUMNS = ("geometric", "texture", "size", "specularity", "transparency")

PROMPT_TEMPLATE = (
    "I have a dataset containing object IDs and their corresponding categories. "
    "Could you please assign a score (from 0 to 100) to each category based on "
    "its potential to contain {parameter}? {object list}"
)

DEFAULT_THRESHOLD = 60.0


class UnknownCategoryError(KeyError):
    """Raised when a category is missing from the prior table."""


@dataclass(frozen=True)
class CategoryScores:
    category: str
    geometric_complexity: int
    texture_complexity: int
    size: int
    specularity: int
    transparency: int

    def __post_init__(self):
        for value in self.values():
            if not (0 <= value <= 100):
                raise ValueError(f"score {value} for {self.category!r} outside [0, 100]")

    def values(self) -> tuple[int, int, int, int, int]:
        return (
            self.geometric_complexity,
            self.texture_complexity,
            self.size,
            self.specularity,
            self.transparency,
        )


def aggregate_score(scores: CategoryScores) -> float:
    """Final score: arithmetic mean of the five metric scores."""
    return sum(scores.values()) / 5.0


@dataclass(frozen=True)
class PriorTable:
    scores: dict[str, CategoryScores]
    provenance: str = ""

    def __contains__(self, category: str) -> bool:
        return category in self.scores

    def __getitem__(self, category: str) -> CategoryScores:
        try:
            return self.scores[category]
        except KeyError:
            raise UnknownCategoryError(category) from None

    def categories(self) -> list[str]:
        return list(self.scores)

    @classmethod
    def from_csv_text(cls, text: str) -> "PriorTable":
        provenance = ""
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                provenance = line.lstrip("# ").removeprefix("provenance:").strip()
                continue
            rows.append(line)
        header = [c.strip() for c in rows[0].split(",")]
        expected = ["category", *METRIC_COLUMNS]
        if header != expected:
            raise ValueError(f"prior table header {header} != {expected}")
        scores: dict[str, CategoryScores] = {}
        for row in rows[1:]:
            cells = [c.strip() for c in row.split(",")]
            category = cells[0]
            if category in scores:
                raise ValueError(f"duplicate category {category!r} in prior table")
            g, t, s, sp, tr = (int(c) for c in cells[1:6])
            scores[category] = CategoryScores(category, g, t, s, sp, tr)
        return cls(scores=scores, provenance=provenance)

    @classmethod
    def from_csv(cls, path) -> "PriorTable":
        with open(path) as f:
            return cls.from_csv_text(f.read())

    def to_csv_text(self) -> str:
        lines = []
        if self.provenance:
            lines.append(f"# provenance: {self.provenance}")
        lines.append(",".join(["category", *METRIC_COLUMNS]))
        for cs in self.scores.values():
            lines.append(",".join([cs.category, *(str(v) for v in cs.values())]))
        return "\n".join(lines) + "\n"


def load_default_table() -> PriorTable:
    text = resources.files("viewguide.data").joinpath("category_scores.csv").read_text()
    return PriorTable.from_csv_text(text)


def render_prompt(parameter: str, categories: Iterable[str]) -> str:
    """The scoring prompt for one metric over an id-numbered category list."""
    if parameter not in METRICS:
        raise ValueError(f"unknown metric {parameter!r}, expected one of {METRICS}")
    object_list = "\n".join(f"{i}: {category}" for i, category in enumerate(categories))
    return PROMPT_TEMPLATE.replace("{parameter}", parameter).replace("{object list}", object_list)


def is_complex(category: str, table: PriorTable, threshold: float = DEFAULT_THRESHOLD) -> bool:
    """True when the category's final score strictly exceeds the threshold."""
    return aggregate_score(table[category]) > threshold


_SCORE_LINE = re.compile(r"^\s*(\d+)\s*[:\-]\s*(?:.*?[:\-])?\s*(\d{1,3})\s*$")


def parse_score_response(text: str, count: int) -> list[int]:
    """Extract ``id: score`` pairs from a chat response, in id order."""
    found: dict[int, int] = {}
    for line in text.splitlines():
        m = _SCORE_LINE.match(line)
        if m:
            found[int(m.group(1))] = int(m.group(2))
    missing = [i for i in range(count) if i not in found]
    if missing:
        raise ValueError(f"response is missing scores for ids {missing}")
    return [found[i] for i in range(count)]


def score_vocabulary(
    ask: Callable[[str], str], categories: list[str], provenance: str = ""
) -> PriorTable:
    """Regenerate a prior table by sending the five metric prompts to ``ask``.

    ``ask`` is any prompt -> response callable (e.g. a chat API client);
    the five prompts are issued in METRICS order so a stateful client can
    keep them in one conversation.
    """
    columns: list[list[int]] = []
    for metric in METRICS:
        response = ask(render_prompt(metric, categories))
        columns.append(parse_score_response(response, len(categories)))
    scores = {
        category: CategoryScores(category, *(columns[m][i] for m in range(5)))
        for i, category in enumerate(categories)
    }
    return PriorTable(scores=scores, provenance=provenance)
