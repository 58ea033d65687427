"""Structural predictors: repeat-last, course-order successor, and their combination.

All three are pure functions of the context (and a course-order map); they
need no training.  The course-order model emits no prediction when the last
action is off the course order or is its final item; no-prediction is scored
incorrect, which keeps denominators identical across models.  The combined
model stays total by falling back to repeat in exactly those cases.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import DuplicateItemError, NextactionError
from .ingest import Vocabulary

NO_PREDICTION = -1  # sentinel id; never matches a real action


@dataclass
class SyllabusMap:
    """Course-ordered action ids with their positions.

    ``coverage`` is the number of course items that resolved against the
    vocabulary; ``unmatched`` lists the tokens that did not.
    """

    items: list[int]
    position_of: dict[int, int]
    coverage: int
    unmatched: list[str]


def load_syllabus(path: str | Path, vocab: Vocabulary) -> SyllabusMap:
    """Read one token per line (course order) and resolve against the vocabulary."""
    seen: set[str] = set()
    items: list[int] = []
    unmatched: list[str] = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            token = line.strip()
            if not token or token.startswith("#"):
                continue
            if token in seen:
                raise DuplicateItemError(f"duplicate course item {token!r}")
            seen.add(token)
            action_id = vocab.encode(token)
            if action_id is None:
                unmatched.append(token)
            else:
                items.append(action_id)
    return SyllabusMap(
        items=items,
        position_of={a: i for i, a in enumerate(items)},
        coverage=len(items),
        unmatched=unmatched,
    )


def repeat_predict(context: Sequence[int]) -> int:
    """The next action is the last action."""
    if not context:
        raise NextactionError("repeat prediction needs a non-empty context")
    return context[-1]


def syllabus_predict(context: Sequence[int], syllabus: SyllabusMap) -> int | None:
    """The next action is the course-order successor of the last action.

    Returns None (no prediction) when the last action is off the course
    order or is its final item.
    """
    if not context:
        raise NextactionError("course-order prediction needs a non-empty context")
    pos = syllabus.position_of.get(context[-1])
    if pos is None or pos + 1 >= len(syllabus.items):
        return None
    return syllabus.items[pos + 1]


def syllabus_repeat_predict(context: Sequence[int], syllabus: SyllabusMap) -> int:
    """Course-order successor when it exists, otherwise repeat the last action."""
    successor = syllabus_predict(context, syllabus)
    return context[-1] if successor is None else successor


class RepeatModel:
    name = "repeat"

    def predict(self, context: Sequence[int]) -> int:
        return repeat_predict(context)


class SyllabusModel:
    name = "syllabus"

    def __init__(self, syllabus: SyllabusMap):
        self.syllabus = syllabus

    def predict(self, context: Sequence[int]) -> int:
        predicted = syllabus_predict(context, self.syllabus)
        return NO_PREDICTION if predicted is None else predicted


class SyllabusRepeatModel:
    name = "syllabus+repeat"

    def __init__(self, syllabus: SyllabusMap):
        self.syllabus = syllabus

    def predict(self, context: Sequence[int]) -> int:
        return syllabus_repeat_predict(context, self.syllabus)
