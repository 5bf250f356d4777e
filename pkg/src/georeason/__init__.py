"""Geospatial region reasoning: GRPO objective, box rewards, mask/contour workflow and metrics."""
from .geometry import (
    BBox, BinaryMask, Contour, DegenerateContour, EmptyMask, Point, bbox_centroid,
    boundary_pixels, dilate, iou, mask_to_bbox, mask_to_contour, rasterize_contour,
)
from .grpo import GroupTooSmall, GrpoConfig, RolloutGroup, advantages, clipped_term, grpo_objective, kl_penalty
from .metrics import EvalPair, EvalReport, asd, boundary_f1, c_iou, evaluate, g_iou, hausdorff, acc_at_05
from .parser import FormatViolation, StructuredOutput, ViolationKind, parse_output, render_output
from .reward import MatchingMode, RewardBreakdown, accuracy_reward, count_reward, format_reward, total_reward

__version__ = "0.1.0"

__all__ = [
    "BBox", "BinaryMask", "Contour", "DegenerateContour", "EmptyMask", "Point", "bbox_centroid",
    "boundary_pixels", "dilate", "iou", "mask_to_bbox", "mask_to_contour", "rasterize_contour",
    "GroupTooSmall", "GrpoConfig", "RolloutGroup", "advantages", "clipped_term", "grpo_objective",
    "kl_penalty", "EvalPair", "EvalReport", "asd", "boundary_f1", "c_iou", "evaluate", "g_iou",
    "hausdorff", "acc_at_05", "FormatViolation", "StructuredOutput", "ViolationKind",
    "parse_output", "render_output", "MatchingMode", "RewardBreakdown", "accuracy_reward",
    "count_reward", "format_reward", "total_reward",
]
