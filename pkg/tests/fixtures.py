"""Small synthetic dataset shared by pipeline, CLI and acceptance tests."""
import json
from pathlib import Path

import numpy as np

from georeason.geometry import BinaryMask
from georeason.maskio import save_mask

SIZE = 48


def _canvas():
    return np.zeros((SIZE, SIZE), bool)


def fixture_masks() -> dict[str, BinaryMask]:
    out = {}

    a = _canvas()
    a[4:14, 6:20] = True
    out["s01"] = a

    b = _canvas()
    b[2:10, 2:10] = True
    b[30:44, 25:40] = True
    out["s02"] = b

    c = _canvas()  # L shape
    c[10:40, 10:16] = True
    c[34:40, 16:38] = True
    out["s03"] = c

    d = _canvas()  # diagonal staircase, one 8-connected component
    for k in range(12):
        d[20 + k, 5 + k] = True
    out["s04"] = d

    e = _canvas()
    e[24, 24] = True
    out["s05"] = e

    f = _canvas()  # disc plus a notched block
    yy, xx = np.mgrid[:SIZE, :SIZE]
    f |= (yy - 14) ** 2 + (xx - 30) ** 2 <= 64
    f[30:45, 3:20] = True
    f[36:39, 3:12] = False
    out["s06"] = f

    return {k: BinaryMask(v) for k, v in out.items()}


QUESTIONS = {
    "s01": "Where is the warehouse roof?",
    "s02": "Which areas are flooded?",
    "s03": "Find the runway.",
    "s04": "Trace the canal.",
    "s05": "Locate the beacon.",
    "s06": "Where could a helicopter land?",
}


def write_dataset(root: Path) -> Path:
    """Masks as PBM (odd ids) and RLE JSON (even ids) plus a manifest; returns the manifest path."""
    root.mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(exist_ok=True)
    lines = []
    for i, (sid, m) in enumerate(sorted(fixture_masks().items())):
        rel = f"masks/{sid}.{'pbm' if i % 2 == 0 else 'json'}"
        save_mask(m, root / rel)
        lines.append(json.dumps({"id": sid, "mask": rel, "question": QUESTIONS[sid]}))
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest
