"""Mask serialization: binary PBM (P4) and uncompressed COCO-style RLE JSON."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .geometry import BinaryMask


class MaskFormatError(ValueError):
    pass


def encode_pbm(m: BinaryMask) -> bytes:
    header = f"P4\n{m.width} {m.height}\n".encode("ascii")
    return header + np.packbits(m.data, axis=1).tobytes()


def _pbm_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MaskFormatError("truncated PBM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def decode_pbm(buf: bytes) -> BinaryMask:
    tokens, pos = _pbm_tokens(buf, 3)
    if tokens[0] != b"P4":
        raise MaskFormatError(f"not a binary PBM (magic {tokens[0]!r})")
    try:
        width, height = int(tokens[1]), int(tokens[2])
    except ValueError:
        raise MaskFormatError("bad PBM dimensions") from None
    if width < 1 or height < 1:
        raise MaskFormatError(f"bad PBM dimensions {width}x{height}")
    row_bytes = (width + 7) // 8
    raster = buf[pos:]
    if len(raster) != row_bytes * height:
        raise MaskFormatError(
            f"PBM raster has {len(raster)} bytes, expected {row_bytes * height} for {width}x{height}")
    packed = np.frombuffer(raster, dtype=np.uint8).reshape(height, row_bytes)
    return BinaryMask(np.unpackbits(packed, axis=1)[:, :width].astype(bool))


def encode_rle(m: BinaryMask) -> dict:
    """Run lengths over the column-major flattening, first run is background."""
    flat = m.data.flatten(order="F").astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return {"size": [m.height, m.width], "counts": runs}


def decode_rle(obj: dict) -> BinaryMask:
    try:
        h, w = (int(v) for v in obj["size"])
        counts = [int(c) for c in obj["counts"]]
    except (KeyError, TypeError, ValueError):
        raise MaskFormatError("RLE needs 'size': [H, W] and integer 'counts'") from None
    if h < 1 or w < 1:
        raise MaskFormatError(f"bad RLE size {[h, w]}")
    if any(c < 0 for c in counts):
        raise MaskFormatError("negative run length")
    if sum(counts) != h * w:
        raise MaskFormatError(f"RLE runs cover {sum(counts)} pixels, size says {h * w}")
    values = np.arange(len(counts)) % 2 == 1
    flat = np.repeat(values, counts)
    return BinaryMask(flat.reshape((h, w), order="F"))


def load_mask(path: str | os.PathLike) -> BinaryMask:
    """Read a ``.pbm`` or ``.json`` (RLE) mask file."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        with open(path) as f:
            try:
                obj = json.load(f)
            except json.JSONDecodeError as exc:
                raise MaskFormatError(f"{path}: {exc}") from None
        return decode_rle(obj)
    return decode_pbm(path.read_bytes())


def save_mask(m: BinaryMask, path: str | os.PathLike) -> None:
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(encode_rle(m)))
    else:
        path.write_bytes(encode_pbm(m))
