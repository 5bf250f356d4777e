"""Loopback segmentation worker: answers every request with the filled prompt box.

Usage: python -m georeason.workers.boxfill <workdir>/request.json
"""
import json
import sys
from pathlib import Path

from georeason.geometry import BBox, BinaryMask
from georeason.maskio import encode_pbm


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print(__doc__, file=sys.stderr)
        return 2
    request_path = Path(argv[0])
    req = json.loads(request_path.read_text())
    mask = BinaryMask.from_box(BBox(*req["box"]), int(req["height"]), int(req["width"]))
    (request_path.parent / "response.pbm").write_bytes(encode_pbm(mask))
    return 0


if __name__ == "__main__":
    sys.exit(main())
