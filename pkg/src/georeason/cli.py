"""``georeason`` command line: reward, train, eval, convert, parse.

Exit codes: 0 success, 1 usage/config error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .geometry import BBox, BinaryMask, EmptyMask, mask_to_bbox, mask_to_contour, rasterize_contour
from .grpo import GrpoConfig
from .maskio import MaskFormatError, load_mask
from .metrics import EvalConfig, EvalPair, evaluate, report_csv, report_markdown
from .parser import FormatViolation, parse_output, render_boxes, render_output
from .pipeline import (
    BoxFillSegmenter, ExternalSegmenter, OracleSegmenter, SegmenterFailure,
    available_templates, build_annotations, run_pipeline,
)
from .policy_sim import BoxVocabulary, SyntheticTask, TrainConfig, train
from .reward import MatchingMode, total_reward

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class DataError(Exception):
    """Bad input data; reported on stderr with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _matching(name: str) -> MatchingMode:
    return MatchingMode(name)


def _read_jsonl(path: str, required: tuple[str, ...]) -> list[tuple[int, dict]]:
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise DataError(f"{path}:{lineno}: record is not an object")
        missing = [k for k in required if k not in rec]
        if missing:
            raise DataError(f"{path}:{lineno}: missing field(s) {', '.join(missing)}")
        records.append((lineno, rec))
    return records


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_reward(args) -> int:
    mode = _matching(args.matching)
    out = []
    for lineno, rec in _read_jsonl(args.input, ("output", "gt_boxes")):
        if not isinstance(rec["output"], str):
            raise DataError(f"{args.input}:{lineno}: 'output' must be a string")
        try:
            gt = [BBox.from_list(b) for b in rec["gt_boxes"]]
        except (TypeError, ValueError) as exc:
            raise DataError(f"{args.input}:{lineno}: bad gt_boxes ({exc})") from None
        r = total_reward(rec["output"], gt, mode, format_gate=not args.no_format_gate)
        out.append(json.dumps(r.to_dict()))
    _write(args.output, "".join(line + "\n" for line in out))
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        vocab = BoxVocabulary(args.grid, tuple(args.scales), args.image_size, args.image_size)
        cfg = TrainConfig(GrpoConfig(args.epsilon, args.beta), args.lr, args.group_size,
                          _matching(args.matching), args.kl_mode)
        task = SyntheticTask(0, (vocab.box(vocab.token(args.target_row, args.target_col)),),
                             vocab.image_width, vocab.image_height)
    except (ValueError, IndexError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.steps < 0:
        print("config error: --steps must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    result = train([task], cfg, args.steps, args.seed, vocab)
    _write(args.curve, result.curve_csv())
    if args.policy:
        Path(args.policy).write_text(result.policy.to_json(vocab))
    print(f"final_mean_reward={result.expected_reward!r} final_kl={result.final_kl!r}",
          file=sys.stderr if args.curve in (None, "-") else sys.stdout)
    return EXIT_OK


def _load_manifest(path: str) -> dict[str, dict]:
    base = Path(path).parent
    out = {}
    for lineno, rec in _read_jsonl(path, ("id", "mask")):
        sid = str(rec["id"])
        if sid in out:
            raise DataError(f"{path}:{lineno}: duplicate id {sid}")
        mask_path = Path(rec["mask"])
        if not mask_path.is_absolute():
            mask_path = base / mask_path
        try:
            mask = load_mask(mask_path)
        except (OSError, MaskFormatError) as exc:
            raise DataError(f"{path}:{lineno}: cannot load mask for {sid}: {exc}") from None
        out[sid] = {"mask": mask, "question": rec.get("question", ""), "mask_ref": rec["mask"]}
    return out


def _load_predictions(path: str) -> dict[str, object]:
    """id -> raw output text (JSONL) or id -> mask (directory of .pbm/.json)."""
    p = Path(path)
    if p.is_dir():
        preds = {}
        for f in sorted(p.iterdir()):
            if f.suffix.lower() not in (".pbm", ".json"):
                continue
            if f.stem in preds:
                raise DataError(f"{path}: two mask files for id {f.stem}")
            try:
                preds[f.stem] = load_mask(f)
            except (OSError, MaskFormatError) as exc:
                raise DataError(f"{f}: {exc}") from None
        return preds
    preds = {}
    for lineno, rec in _read_jsonl(path, ("id", "output")):
        sid = str(rec["id"])
        if sid in preds:
            raise DataError(f"{path}:{lineno}: duplicate id {sid}")
        if not isinstance(rec["output"], str):
            raise DataError(f"{path}:{lineno}: 'output' must be a string")
        preds[sid] = rec["output"]
    return preds


def _contour_fill(m: BinaryMask) -> BinaryMask:
    """Union of the rasterised outer contours of ``m``."""
    out = BinaryMask.zeros(m.height, m.width)
    for c in mask_to_contour(m):
        out = out | rasterize_contour(c, m.width, m.height)
    return out


def _make_segmenter(args, gt_masks):
    if args.segmenter == "oracle":
        return OracleSegmenter(gt_masks, args.iou_gate)
    if args.segmenter == "box-fill":
        return BoxFillSegmenter()
    if not args.worker_cmd:
        raise ValueError("--segmenter external needs --worker-cmd")
    return ExternalSegmenter(args.worker_cmd, args.workdir, args.timeout)


def _eval_pair(sid: str, pred, gt: BinaryMask, task: str, segmenter, lenient: bool) -> EvalPair:
    w, h = gt.width, gt.height
    if isinstance(pred, BinaryMask):
        if pred.shape != gt.shape:
            raise DataError(f"sample {sid}: prediction is {pred.shape}, gt is {gt.shape}")
        if task == "region":
            return EvalPair(sid, mask_to_bbox(pred, per_component=True), mask_to_bbox(gt, per_component=True), w, h)
        if task == "contour":
            return EvalPair(sid, _contour_fill(pred), _contour_fill(gt))
        return EvalPair(sid, pred, gt)

    text = pred
    if lenient:
        try:
            text = render_output(parse_output(pred, strict=False))
        except FormatViolation:
            pass
    levels = {"region": ["region"], "pixel": ["region", "pixel"],
              "contour": ["region", "pixel", "contour"]}[task]
    try:
        result = run_pipeline(text, (w, h), segmenter, levels)
    except FormatViolation:
        # unparseable output counts as an empty prediction
        empty = BinaryMask.zeros(h, w)
        if task == "region":
            return EvalPair(sid, [], mask_to_bbox(gt, per_component=True), w, h)
        return EvalPair(sid, empty, _contour_fill(gt) if task == "contour" else gt)
    if task == "region":
        return EvalPair(sid, result.boxes, mask_to_bbox(gt, per_component=True), w, h)
    if task == "pixel":
        return EvalPair(sid, result.union_mask(w, h), gt)
    pred_fill = BinaryMask.zeros(h, w)
    for c in result.contours:
        pred_fill = pred_fill | rasterize_contour(c, w, h)
    return EvalPair(sid, pred_fill, _contour_fill(gt))


def cmd_eval(args) -> int:
    gt = _load_manifest(args.gt)
    preds = _load_predictions(args.pred)
    missing = sorted(set(gt) - set(preds))
    extra = sorted(set(preds) - set(gt))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing predictions for {', '.join(missing)}")
        if extra:
            parts.append(f"predictions without gt: {', '.join(extra)}")
        raise DataError("IdMismatch: " + "; ".join(parts))
    try:
        segmenter = _make_segmenter(args, [g["mask"] for g in gt.values()])
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    pairs = []
    for sid in sorted(gt):
        try:
            pairs.append(_eval_pair(sid, preds[sid], gt[sid]["mask"], args.task, segmenter, args.lenient))
        except SegmenterFailure as exc:
            raise DataError(f"sample {sid}: {exc}") from None
    report = evaluate(pairs, EvalConfig(args.task, _matching(args.matching), args.per_sample))
    suffix = Path(args.out).suffix.lower() if args.out else ".json"
    if suffix == ".csv":
        text = report_csv(report)
    elif suffix == ".md":
        text = report_markdown(report)
    else:
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    _write(args.out, text)
    return EXIT_OK


def cmd_convert(args) -> int:
    if args.template not in available_templates():
        print(f"config error: unknown template {args.template!r} "
              f"(available: {', '.join(available_templates())})", file=sys.stderr)
        return EXIT_USAGE
    if args.manifest:
        samples = _load_manifest(args.manifest)
    else:
        samples = {}
        for f in sorted(Path(args.mask_dir).iterdir()):
            if f.suffix.lower() in (".pbm", ".json"):
                try:
                    samples[f.stem] = {"mask": load_mask(f), "question": "", "mask_ref": f.name}
                except (OSError, MaskFormatError) as exc:
                    raise DataError(f"{f}: {exc}") from None
    lines = []
    for sid in sorted(samples):
        s = samples[sid]
        try:
            rec = build_annotations(s["mask"], s["question"], args.template, sid, s["mask_ref"])
        except EmptyMask:
            raise DataError(f"EmptyMask: sample {sid} has no foreground") from None
        lines.append(json.dumps(rec.to_dict()) + "\n")
    _write(args.out, "".join(lines))
    return EXIT_OK


def cmd_parse(args) -> int:
    if args.input in (None, "-"):
        raw = sys.stdin.buffer.read()
    else:
        raw = Path(args.input).read_bytes()
    try:
        parsed = parse_output(raw, max_length=args.max_length)
    except FormatViolation as exc:
        print(exc.kind.value if exc.index is None else f"{exc.kind.value}({exc.index})")
        if exc.detail:
            print(exc.detail, file=sys.stderr)
        return 1
    print("PASS")
    print(render_boxes(parsed.boxes))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="georeason", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("reward", help="score model outputs against gt boxes")
    r.add_argument("--input", "-i", default="-", help="JSONL of {output, gt_boxes}")
    r.add_argument("--output", "-o", default=None)
    r.add_argument("--matching", choices=[m.value for m in MatchingMode], default="max")
    r.add_argument("--no-format-gate", action="store_true",
                   help="score unparseable output as an empty prediction")
    r.set_defaults(func=cmd_reward)

    t = sub.add_parser("train", help="train the toy box policy with GRPO")
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--steps", type=int, default=200)
    t.add_argument("--group-size", "-n", type=int, default=8)
    t.add_argument("--epsilon", type=float, default=0.2)
    t.add_argument("--beta", type=float, default=0.04)
    t.add_argument("--lr", type=float, default=0.5)
    t.add_argument("--grid", type=int, default=4)
    t.add_argument("--scales", type=int, nargs="+", default=[1])
    t.add_argument("--image-size", type=int, default=64)
    t.add_argument("--target-row", type=int, default=1)
    t.add_argument("--target-col", type=int, default=2)
    t.add_argument("--matching", choices=[m.value for m in MatchingMode], default="max")
    t.add_argument("--kl-mode", choices=["exact", "k3"], default="exact")
    t.add_argument("--curve", default=None, help="CSV training curve (default stdout)")
    t.add_argument("--policy", default=None, help="final policy logits as JSON")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate predictions against gt masks")
    e.add_argument("--pred", required=True, help="JSONL of {id, output} or a mask directory")
    e.add_argument("--gt", required=True, help="JSONL manifest of {id, mask, question}")
    e.add_argument("--task", choices=["region", "pixel", "contour"], default="pixel")
    e.add_argument("--out", default=None, help="report.json / .csv / .md (default JSON on stdout)")
    e.add_argument("--matching", choices=[m.value for m in MatchingMode], default="max")
    e.add_argument("--segmenter", choices=["oracle", "box-fill", "external"], default="box-fill")
    e.add_argument("--iou-gate", type=float, default=0.5)
    e.add_argument("--worker-cmd", default=None)
    e.add_argument("--workdir", default=".georeason-worker")
    e.add_argument("--timeout", type=float, default=60.0)
    e.add_argument("--lenient", action="store_true", help="salvage the answer block from loose output")
    e.add_argument("--per-sample", action="store_true")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("convert", help="derive boxes and contours from gt masks")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", help="JSONL of {id, mask, question}")
    src.add_argument("--mask-dir", help="directory of .pbm / .json masks")
    c.add_argument("--template", default="default")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_convert)

    pa = sub.add_parser("parse", help="check one output against the answer grammar")
    pa.add_argument("input", nargs="?", default=None, help="text file (default stdin)")
    pa.add_argument("--max-length", type=int, default=65536)
    pa.set_defaults(func=cmd_parse)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
