"""Strict grammar for ``<think>...</think><answer>[[x1,y1,x2,y2],...]</answer>``."""
from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field

from .geometry import BBox

THINK_OPEN, THINK_CLOSE = "<think>", "</think>"
ANSWER_OPEN, ANSWER_CLOSE = "<answer>", "</answer>"
TAGS = (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE)

DEFAULT_MAX_LENGTH = 65536


class ViolationKind(enum.Enum):
    MISSING_THINK = "MissingThink"
    MISSING_ANSWER = "MissingAnswer"
    TAG_ORDER = "TagOrder"
    EXTRA_CONTENT = "ExtraContent"
    BAD_JSON = "BadJson"
    BAD_BOX = "BadBox"
    TOO_LONG = "TooLong"


class FormatViolation(ValueError):
    """Output does not follow the grammar. ``index`` is set for ``BAD_BOX``."""

    def __init__(self, kind: ViolationKind, detail: str = "", index: int | None = None):
        self.kind = kind
        self.detail = detail
        self.index = index
        super().__init__(str(self))

    def __str__(self) -> str:
        name = self.kind.value
        if self.index is not None:
            name = f"{name}({self.index})"
        return f"{name}: {self.detail}" if self.detail else name


@dataclass(frozen=True)
class StructuredOutput:
    think_text: str
    boxes: tuple[BBox, ...] = ()
    raw: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        for tag in TAGS:
            if tag in self.think_text:
                raise ValueError(f"think text may not contain {tag}")


def _number(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError
    f = float(v)
    if not math.isfinite(f):
        raise ValueError
    return f


def _reject_constant(name: str):
    raise ValueError(f"non-finite literal {name}")


def _parse_boxes(body: str) -> tuple[BBox, ...]:
    try:
        value = json.loads(body, parse_constant=_reject_constant)
    except (ValueError, RecursionError) as exc:
        raise FormatViolation(ViolationKind.BAD_JSON, str(exc)[:200]) from None
    if not isinstance(value, list):
        raise FormatViolation(ViolationKind.BAD_JSON, "answer is not a JSON array")
    boxes = []
    for k, item in enumerate(value):
        if not isinstance(item, list) or len(item) != 4:
            raise FormatViolation(ViolationKind.BAD_JSON, f"element {k} is not a 4-number array")
        try:
            coords = [_number(v) for v in item]
        except (TypeError, ValueError, OverflowError):
            raise FormatViolation(ViolationKind.BAD_JSON, f"element {k} has a non-finite or non-numeric value") from None
        try:
            boxes.append(BBox(*coords))
        except (TypeError, ValueError) as exc:
            raise FormatViolation(ViolationKind.BAD_BOX, str(exc), index=k) from None
    return tuple(boxes)


def parse_output(raw: str | bytes, max_length: int = DEFAULT_MAX_LENGTH,
                 strict: bool = True) -> StructuredOutput:
    """Parse a model response or raise :class:`FormatViolation`.

    Never raises anything else, whatever the input. ``strict=False`` salvages
    the first ``<answer>`` block for inference use; rewards always use the
    strict grammar.
    """
    if isinstance(raw, (bytes, bytearray)):
        raw = bytes(raw).decode("utf-8", errors="replace")
    if len(raw) > max_length:
        raise FormatViolation(ViolationKind.TOO_LONG, f"{len(raw)} > {max_length} characters")
    if not strict:
        return _parse_lenient(raw)

    counts = {tag: raw.count(tag) for tag in TAGS}
    if counts[THINK_OPEN] == 0 or counts[THINK_CLOSE] == 0:
        raise FormatViolation(ViolationKind.MISSING_THINK)
    if counts[ANSWER_OPEN] == 0 or counts[ANSWER_CLOSE] == 0:
        raise FormatViolation(ViolationKind.MISSING_ANSWER)
    repeated = [tag for tag, n in counts.items() if n > 1]
    if repeated:
        raise FormatViolation(ViolationKind.EXTRA_CONTENT, f"repeated tag {repeated[0]}")

    t0, t1 = raw.index(THINK_OPEN), raw.index(THINK_CLOSE)
    a0, a1 = raw.index(ANSWER_OPEN), raw.index(ANSWER_CLOSE)
    if not (t0 < t1 < a0 < a1):
        raise FormatViolation(ViolationKind.TAG_ORDER)
    # overlapping tags (e.g. "<think>" inside "</think>") cannot occur: "/" differs
    outside = (raw[:t0], raw[t1 + len(THINK_CLOSE):a0], raw[a1 + len(ANSWER_CLOSE):])
    for chunk in outside:
        if chunk.strip():
            raise FormatViolation(ViolationKind.EXTRA_CONTENT, f"text outside tags: {chunk.strip()[:40]!r}")

    think = raw[t0 + len(THINK_OPEN):t1]
    boxes = _parse_boxes(raw[a0 + len(ANSWER_OPEN):a1])
    return StructuredOutput(think, boxes, raw)


_ANSWER_RE = re.compile(re.escape(ANSWER_OPEN) + r"(.*?)" + re.escape(ANSWER_CLOSE), re.S)
_THINK_RE = re.compile(re.escape(THINK_OPEN) + r"(.*?)" + re.escape(THINK_CLOSE), re.S)


def _parse_lenient(raw: str) -> StructuredOutput:
    answer = _ANSWER_RE.search(raw)
    if answer is None:
        raise FormatViolation(ViolationKind.MISSING_ANSWER)
    think = _THINK_RE.search(raw)
    think_text = think.group(1) if think else ""
    for tag in TAGS:
        think_text = think_text.replace(tag, "")
    return StructuredOutput(think_text, _parse_boxes(answer.group(1)), raw)


def format_number(v: float) -> str:
    """Shortest decimal that round-trips; integral values drop the ``.0``."""
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def render_boxes(boxes) -> str:
    """Compact JSON list of ``[x1,y1,x2,y2]`` lists, as used inside the answer block."""
    return "[" + ",".join("[" + ",".join(format_number(c) for c in b.to_list()) + "]" for b in boxes) + "]"


def render_output(s: StructuredOutput) -> str:
    return f"{THINK_OPEN}{s.think_text}{THINK_CLOSE}{ANSWER_OPEN}{render_boxes(s.boxes)}{ANSWER_CLOSE}"
