"""Region -> mask -> contour inference workflow and Mask2Bbox/Mask2Contour annotation.

The segmentation model sits behind :class:`Segmenter`: anything that turns a
box prompt (plus its centroid) into one binary mask of the requested size.
"""
from __future__ import annotations

import json
import os
import shlex
import subprocess
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .geometry import (
    BBox, BinaryMask, Contour, EmptyMask, Point, bbox_centroid, iou, label_components,
    mask_to_bbox, mask_to_contour, tight_box,
)
from .maskio import MaskFormatError, decode_pbm, decode_rle
from .parser import parse_output

LEVELS = ("region", "pixel", "contour")


class SegmenterFailure(RuntimeError):
    def __init__(self, box_index: int, reason: str):
        self.box_index = box_index
        super().__init__(f"segmenter failed on box {box_index}: {reason}")


class WorkerTimeout(RuntimeError):
    pass


class WorkerCrashed(RuntimeError):
    def __init__(self, exit_code: int, stderr: str = ""):
        self.exit_code = exit_code
        super().__init__(f"worker exited with code {exit_code}: {stderr.strip()[:200]}")


class BadResponse(RuntimeError):
    pass


class UnknownTemplate(KeyError):
    pass


class Segmenter(Protocol):
    name: str

    def segment(self, width: int, height: int, box: BBox, point: Point,
                image_path: str | None = None) -> BinaryMask:
        ...


class BoxFillSegmenter:
    """Fills the prompt box; ignores the point and the image."""

    name = "box-fill"

    def segment(self, width, height, box, point, image_path=None):
        return BinaryMask.from_box(box, height, width)


class OracleSegmenter:
    """Returns the stored gt component whose tight box best overlaps the prompt.

    Falls back to filling the prompt box when the best IoU is below ``iou_gate``.
    """

    name = "oracle"

    def __init__(self, gt_masks: Iterable[BinaryMask], iou_gate: float = 0.5):
        if not 0 <= iou_gate <= 1:
            raise ValueError("iou_gate must be in [0, 1]")
        self.iou_gate = iou_gate
        self._components: list[tuple[BBox, BinaryMask]] = []
        for m in gt_masks:
            for comp in label_components(m):
                self._components.append((tight_box(comp), BinaryMask(comp)))

    def segment(self, width, height, box, point, image_path=None):
        best, best_iou = None, -1.0
        for comp_box, comp in self._components:
            if comp.shape != (height, width):
                continue
            score = iou(box, comp_box)
            if score > best_iou:
                best, best_iou = comp, score
        if best is not None and best_iou >= self.iou_gate:
            return best
        return BinaryMask.from_box(box, height, width)


class ExternalSegmenter:
    """Runs a worker process per request over files in ``workdir``.

    The worker is invoked as ``<worker_command> <workdir>/request.json``. The
    request holds ``image_path``, ``width``, ``height``, ``box`` and ``point``;
    the worker writes ``response.pbm`` or ``response.json`` (RLE) next to it.
    Requests are serialised, since they share the work directory.
    """

    name = "external"

    def __init__(self, worker_command: str | Sequence[str], workdir: str | os.PathLike,
                 timeout_s: float = 60.0, image_path: str | None = None):
        self.command = shlex.split(worker_command) if isinstance(worker_command, str) else list(worker_command)
        if not self.command:
            raise ValueError("empty worker command")
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.timeout_s = timeout_s
        self.image_path = image_path
        self._lock = threading.Lock()

    def segment(self, width, height, box, point, image_path=None):
        with self._lock:
            return self._segment_locked(width, height, box, point, image_path or self.image_path)

    def _segment_locked(self, width, height, box, point, image_path):
        request = self.workdir / "request.json"
        responses = [self.workdir / "response.pbm", self.workdir / "response.json"]
        for r in responses:
            r.unlink(missing_ok=True)
        request.write_text(json.dumps({
            "image_path": image_path, "width": width, "height": height,
            "box": box.to_list(), "point": [point.x, point.y],
        }))
        try:
            proc = subprocess.run(self.command + [str(request)], cwd=self.workdir,
                                  capture_output=True, text=True, timeout=self.timeout_s)
        except subprocess.TimeoutExpired:
            raise WorkerTimeout(f"worker exceeded {self.timeout_s}s") from None
        except OSError as exc:
            raise WorkerCrashed(-1, str(exc)) from None
        if proc.returncode != 0:
            raise WorkerCrashed(proc.returncode, proc.stderr)
        found = [r for r in responses if r.exists()]
        if not found:
            raise BadResponse("worker wrote no response file")
        try:
            if found[0].suffix == ".pbm":
                mask = decode_pbm(found[0].read_bytes())
            else:
                mask = decode_rle(json.loads(found[0].read_text()))
        except (MaskFormatError, ValueError) as exc:
            raise BadResponse(f"unreadable mask: {exc}") from None
        if mask.shape != (height, width):
            raise BadResponse(f"mask is {mask.height}x{mask.width}, expected {height}x{width}")
        return mask


@dataclass
class ReasoningResult:
    think_text: str
    boxes: list[BBox]
    masks: list[BinaryMask] | None = None
    contours: list[Contour] | None = None
    provenance: str | None = None

    def union_mask(self, width: int, height: int) -> BinaryMask:
        out = BinaryMask.zeros(height, width)
        for m in self.masks or []:
            out = out | m
        return out


def run_pipeline(region_output: str, image_dims: tuple[int, int], segmenter: Segmenter | None,
                 levels: Iterable[str] = LEVELS, image_path: str | None = None,
                 simplify_eps: float = 0.0) -> ReasoningResult:
    """Turn one region-level response into boxes, masks and contours.

    ``image_dims`` is ``(width, height)``. Raises FormatViolation if the output
    does not parse and SegmenterFailure if a mask cannot be produced.
    """
    levels = set(levels)
    unknown = levels - set(LEVELS)
    if unknown:
        raise ValueError(f"unknown levels {sorted(unknown)}")
    if "contour" in levels and "pixel" not in levels:
        raise ValueError("contour level requires the pixel level")
    width, height = image_dims
    parsed = parse_output(region_output)
    result = ReasoningResult(parsed.think_text, list(parsed.boxes))
    if "pixel" not in levels:
        return result
    if segmenter is None:
        raise ValueError("pixel level needs a segmenter")

    masks = []
    for k, box in enumerate(result.boxes):
        try:
            mask = segmenter.segment(width, height, box, bbox_centroid(box), image_path)
        except Exception as exc:
            raise SegmenterFailure(k, str(exc)) from exc
        if not isinstance(mask, BinaryMask) or mask.shape != (height, width):
            raise SegmenterFailure(k, "mask has the wrong type or dimensions")
        masks.append(mask)
    result.masks = masks
    result.provenance = getattr(segmenter, "name", type(segmenter).__name__)
    if "contour" in levels:
        result.contours = [c for m in masks for c in mask_to_contour(m, simplify_eps)]
    return result


def available_templates() -> list[str]:
    root = resources.files("georeason") / "templates"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".txt"))


def load_template(template_id: str) -> str:
    path = resources.files("georeason") / "templates" / f"{template_id}.txt"
    if "/" in template_id or not path.is_file():
        raise UnknownTemplate(template_id)
    return path.read_text(encoding="utf-8")


@dataclass(frozen=True)
class AnnotationRecord:
    sample_id: str
    question: str
    width: int
    height: int
    boxes: tuple[BBox, ...]
    contours: tuple[Contour, ...]
    prompt: str
    mask_ref: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.sample_id,
            "question": self.question,
            "mask": self.mask_ref,
            "width": self.width,
            "height": self.height,
            "boxes": [b.to_list() for b in self.boxes],
            "contours": [c.to_list() for c in self.contours],
            "prompt": self.prompt,
        }


def build_annotations(gt_mask: BinaryMask, question: str, template_id: str = "default",
                      sample_id: str = "", mask_ref: str | None = None) -> AnnotationRecord:
    template = load_template(template_id)
    if gt_mask.is_empty():
        raise EmptyMask(f"sample {sample_id or '?'} has an empty mask")
    boxes = mask_to_bbox(gt_mask, per_component=True)
    contours = mask_to_contour(gt_mask)
    prompt = template.format(question=question, width=gt_mask.width, height=gt_mask.height)
    return AnnotationRecord(sample_id, question, gt_mask.width, gt_mask.height,
                            tuple(boxes), tuple(contours), prompt, mask_ref)
