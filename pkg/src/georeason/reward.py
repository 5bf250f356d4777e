"""Composite localisation reward: IoU accuracy + count + format."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .geometry import BBox, iou
from .matching import max_weight_matching
from .parser import FormatViolation, StructuredOutput, parse_output


class MatchingMode(enum.Enum):
    PER_GT_MAX = "max"
    HUNGARIAN = "hungarian"


@dataclass(frozen=True)
class RewardBreakdown:
    r_iou: float
    r_count: float
    r_format: float
    total: float

    @classmethod
    def of(cls, r_iou: float, r_count: float, r_format: float) -> "RewardBreakdown":
        return cls(r_iou, r_count, r_format, r_iou + r_count + r_format)

    def to_dict(self) -> dict:
        return asdict(self)


ZERO = RewardBreakdown(0.0, 0.0, 0.0, 0.0)


def iou_matrix(pred: Sequence[BBox], gt: Sequence[BBox]) -> np.ndarray:
    return np.array([[iou(p, g) for g in gt] for p in pred], dtype=float).reshape(len(pred), len(gt))


def accuracy_reward(pred: Sequence[BBox], gt: Sequence[BBox],
                    mode: MatchingMode = MatchingMode.PER_GT_MAX) -> float:
    """Mean over ground-truth boxes of the IoU with their predicted partner.

    ``PER_GT_MAX`` lets every gt box take its best prediction (predictions may
    be reused); ``HUNGARIAN`` uses the best one-to-one assignment, unmatched gt
    boxes scoring 0. With no gt boxes the reward is 1 for an empty prediction
    and 0 otherwise.
    """
    if not gt:
        return 1.0 if not pred else 0.0
    if not pred:
        return 0.0
    m = iou_matrix(pred, gt)
    if mode is MatchingMode.PER_GT_MAX:
        total = float(m.max(axis=0).sum())
    else:
        _, total = max_weight_matching(m)
    return total / len(gt)


def count_reward(pred_count: int, gt_count: int) -> float:
    if pred_count < 0 or gt_count < 0:
        raise ValueError("counts must be non-negative")
    if gt_count == 0:
        return 1.0 if pred_count == 0 else 0.0
    return math.exp(-2.0 * abs(pred_count - gt_count) / gt_count)


def format_reward(raw: str) -> tuple[float, StructuredOutput | None]:
    try:
        return 1.0, parse_output(raw)
    except FormatViolation:
        return 0.0, None


def total_reward(raw: str, gt: Sequence[BBox],
                 mode: MatchingMode = MatchingMode.PER_GT_MAX,
                 format_gate: bool = True) -> RewardBreakdown:
    """Score one response. Unparseable output earns nothing unless ``format_gate``
    is off, in which case it is scored as an empty prediction."""
    r_format, parsed = format_reward(raw)
    if parsed is None:
        if format_gate:
            return ZERO
        boxes: Sequence[BBox] = ()
    else:
        boxes = parsed.boxes
    return RewardBreakdown.of(
        accuracy_reward(boxes, gt, mode),
        count_reward(len(boxes), len(gt)),
        r_format,
    )
