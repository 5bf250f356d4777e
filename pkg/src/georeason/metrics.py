"""Region/pixel metrics (gIoU, cIoU, Acc@0.5) and contour metrics (boundary F1, ASD, HD)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .geometry import BBox, BinaryMask, boundary_pixels, boundary_points, dilate
from .reward import MatchingMode, accuracy_reward


class EmptyDataset(ValueError):
    pass


class EmptyBoundary(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


Target = Union[BinaryMask, Sequence[BBox]]


@dataclass(frozen=True)
class EvalPair:
    """Prediction and ground truth for one sample.

    Either side may be a mask or a list of boxes; boxes are rasterised (pixel
    centers inside) when a mask is needed, which requires ``width``/``height``
    unless the other side is a mask.
    """

    sample_id: str
    pred: Target
    gt: Target
    width: int | None = None
    height: int | None = None

    def __post_init__(self):
        if not isinstance(self.pred, BinaryMask):
            object.__setattr__(self, "pred", tuple(self.pred))
        if not isinstance(self.gt, BinaryMask):
            object.__setattr__(self, "gt", tuple(self.gt))
        shapes = {m.shape for m in (self.pred, self.gt) if isinstance(m, BinaryMask)}
        if self.width is not None and self.height is not None:
            shapes.add((self.height, self.width))
        if len(shapes) > 1:
            raise DimensionMismatch(f"sample {self.sample_id}: shapes {sorted(shapes)}")
        if shapes:
            h, w = shapes.pop()
            object.__setattr__(self, "height", h)
            object.__setattr__(self, "width", w)

    @property
    def is_box_pair(self) -> bool:
        return not isinstance(self.pred, BinaryMask) and not isinstance(self.gt, BinaryMask)

    def _as_mask(self, target: Target) -> BinaryMask:
        if isinstance(target, BinaryMask):
            return target
        if self.width is None or self.height is None:
            raise DimensionMismatch(f"sample {self.sample_id}: image size needed to rasterise boxes")
        m = BinaryMask.zeros(self.height, self.width)
        for b in target:
            m = m | BinaryMask.from_box(b, self.height, self.width)
        return m

    def pred_mask(self) -> BinaryMask:
        return self._as_mask(self.pred)

    def gt_mask(self) -> BinaryMask:
        return self._as_mask(self.gt)


def mask_iou(pred: BinaryMask, gt: BinaryMask) -> float:
    inter, union = intersection_union(pred, gt)
    return 1.0 if union == 0 else inter / union


def intersection_union(pred: BinaryMask, gt: BinaryMask) -> tuple[int, int]:
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"{pred.shape} vs {gt.shape}")
    return (int(np.count_nonzero(pred.data & gt.data)),
            int(np.count_nonzero(pred.data | gt.data)))


def sample_iou(pair: EvalPair, mode: MatchingMode = MatchingMode.PER_GT_MAX) -> float:
    """Per-sample IoU: matched-box IoU for box pairs, set IoU otherwise.

    Empty vs empty scores 1, empty vs non-empty 0.
    """
    if pair.is_box_pair:
        return accuracy_reward(pair.pred, pair.gt, mode)
    return mask_iou(pair.pred_mask(), pair.gt_mask())


def _require(pairs) -> list[EvalPair]:
    pairs = list(pairs)
    if not pairs:
        raise EmptyDataset("no samples to evaluate")
    return pairs


def g_iou(pairs: Sequence[EvalPair], mode: MatchingMode = MatchingMode.PER_GT_MAX) -> float:
    pairs = _require(pairs)
    return float(np.mean([sample_iou(p, mode) for p in pairs]))


def c_iou(pairs: Sequence[EvalPair]) -> float:
    """Cumulative intersection over cumulative union, in pixels."""
    pairs = _require(pairs)
    inter = union = 0
    for p in pairs:
        i, u = intersection_union(p.pred_mask(), p.gt_mask())
        inter += i
        union += u
    return 1.0 if union == 0 else inter / union


def acc_at_05(pairs: Sequence[EvalPair], mode: MatchingMode = MatchingMode.PER_GT_MAX) -> float:
    pairs = _require(pairs)
    return float(np.mean([sample_iou(p, mode) >= 0.5 for p in pairs]))


def boundary_f1(pred: BinaryMask, gt: BinaryMask, radius_px: int) -> float:
    """F1 of boundary pixels matched within a (2r+1)-square tolerance band."""
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"{pred.shape} vs {gt.shape}")
    bp, bg = boundary_pixels(pred), boundary_pixels(gt)
    n_p, n_g = bp.foreground_count(), bg.foreground_count()
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    precision = (bp & dilate(bg, radius_px)).foreground_count() / n_p
    recall = (bg & dilate(bp, radius_px)).foreground_count() / n_g
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _nn_distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    d, _ = cKDTree(dst).query(src, k=1)
    return np.asarray(d, dtype=float)


def _points(pts) -> np.ndarray:
    arr = np.asarray(pts, dtype=float).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise EmptyBoundary("boundary point set is empty")
    return arr


def asd(pred_boundary, gt_boundary) -> float:
    """Average symmetric nearest-neighbour distance between two point sets."""
    p, g = _points(pred_boundary), _points(gt_boundary)
    total = _nn_distances(p, g).sum() + _nn_distances(g, p).sum()
    return float(total / (len(p) + len(g)))


def hausdorff(pred_boundary, gt_boundary) -> float:
    p, g = _points(pred_boundary), _points(gt_boundary)
    return float(max(_nn_distances(p, g).max(), _nn_distances(g, p).max()))


METRICS_BY_TASK = {
    "region": ("gIoU", "cIoU", "Acc@0.5"),
    "pixel": ("gIoU", "cIoU", "Acc@0.5"),
    "contour": ("F1@1", "F1@3", "ASD", "HD"),
}
METRICS_BY_TASK["all"] = METRICS_BY_TASK["pixel"] + METRICS_BY_TASK["contour"]


@dataclass(frozen=True)
class EvalConfig:
    task: str = "all"
    matching: MatchingMode = MatchingMode.PER_GT_MAX
    per_sample: bool = False

    def __post_init__(self):
        if self.task not in METRICS_BY_TASK:
            raise ValueError(f"unknown task {self.task!r}")


@dataclass
class EvalReport:
    metrics: dict[str, float]
    sample_count: int
    per_sample: list[dict] | None = None
    distance_samples: int = 0
    """Samples contributing to ASD/HD (both boundaries non-empty)."""

    def to_dict(self) -> dict:
        out = {"metrics": self.metrics, "sample_count": self.sample_count,
               "distance_samples": self.distance_samples}
        if self.per_sample is not None:
            out["per_sample"] = self.per_sample
        return out


def _contour_row(pair: EvalPair) -> dict:
    pm, gm = pair.pred_mask(), pair.gt_mask()
    row = {"F1@1": boundary_f1(pm, gm, 1), "F1@3": boundary_f1(pm, gm, 3)}
    bp, bg = boundary_points(pm), boundary_points(gm)
    if len(bp) and len(bg):
        row["ASD"] = asd(bp, bg)
        row["HD"] = hausdorff(bp, bg)
    elif not len(bp) and not len(bg):
        row["ASD"] = row["HD"] = 0.0
    return row


def evaluate(pairs: Sequence[EvalPair], config: EvalConfig = EvalConfig()) -> EvalReport:
    """Every metric for ``config.task``; samples are reduced in id order.

    ASD/HD skip samples where exactly one side is empty (distance undefined).
    """
    pairs = sorted(_require(pairs), key=lambda p: p.sample_id)
    names = METRICS_BY_TASK[config.task]
    rows = []
    inter_total = union_total = 0
    for p in pairs:
        row: dict = {"id": p.sample_id}
        if "gIoU" in names:
            row["IoU"] = sample_iou(p, config.matching)
            row["I"], row["U"] = intersection_union(p.pred_mask(), p.gt_mask())
            inter_total += row["I"]
            union_total += row["U"]
        if "F1@1" in names:
            row.update(_contour_row(p))
        rows.append(row)

    metrics: dict[str, float] = {}
    if "gIoU" in names:
        ious = [r["IoU"] for r in rows]
        metrics["gIoU"] = float(np.mean(ious))
        metrics["cIoU"] = 1.0 if union_total == 0 else inter_total / union_total
        metrics["Acc@0.5"] = float(np.mean([v >= 0.5 for v in ious]))
    distance_samples = 0
    if "F1@1" in names:
        metrics["F1@1"] = float(np.mean([r["F1@1"] for r in rows]))
        metrics["F1@3"] = float(np.mean([r["F1@3"] for r in rows]))
        dist_rows = [r for r in rows if "ASD" in r]
        distance_samples = len(dist_rows)
        metrics["ASD"] = float(np.mean([r["ASD"] for r in dist_rows])) if dist_rows else math.nan
        metrics["HD"] = float(np.mean([r["HD"] for r in dist_rows])) if dist_rows else math.nan
    return EvalReport(metrics, len(pairs), rows if config.per_sample else None, distance_samples)


def report_csv(report: EvalReport) -> str:
    names = list(report.metrics)
    return ",".join(["samples"] + names) + "\n" + ",".join(
        [str(report.sample_count)] + [repr(report.metrics[n]) for n in names]) + "\n"


def report_markdown(report: EvalReport) -> str:
    names = list(report.metrics)
    head = "| samples | " + " | ".join(names) + " |"
    sep = "|" + "---|" * (len(names) + 1)
    body = f"| {report.sample_count} | " + " | ".join(f"{report.metrics[n]:.4f}" for n in names) + " |"
    return "\n".join([head, sep, body]) + "\n"
