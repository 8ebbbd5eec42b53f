"""Writes interop.femb / interop.jsonl with an independent encoder."""
import json
import struct
import zlib
from pathlib import Path

HERE = Path(__file__).parent

SAMPLES = [
    {"id": "a", "label": 0, "availability": "complete", "image": [0.5, -1.25], "text": [1.0, 2.0, -0.75]},
    {"id": "b", "label": 2, "availability": "image_only", "image": [3.0, 0.125], "text": None},
    {"id": "c", "label": 1, "availability": "text_only", "image": None, "text": [-4.0, 0.0, 0.25]},
]
D_IMAGE, D_TEXT = 2, 3


def lstr(s):
    b = s.encode()
    return struct.pack("<I", len(b)) + b


def section(name, payload):
    return lstr(name) + struct.pack("<Q", len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))


def rows(key):
    present = [s[key] for s in SAMPLES if s[key] is not None]
    out = struct.pack("<Q", len(present))
    for r in present:
        out += struct.pack("<%df" % len(r), *r)
    return out


header = lstr("image") + struct.pack("<I", D_IMAGE) + lstr("text") + struct.pack("<I", D_TEXT)
header += struct.pack("<Q", len(SAMPLES))
blob = b"FEMB" + struct.pack("<HH", 1, 2) + section("header", header)
blob += section("image", rows("image")) + section("text", rows("text"))
(HERE / "interop.femb").write_bytes(blob)

lines = [json.dumps({"format": "FEMB", "version": 1, "count": len(SAMPLES), "n_classes": 3,
                     "d_feature": {"image": D_IMAGE, "text": D_TEXT}})]
for s in SAMPLES:
    lines.append(json.dumps({"id": s["id"], "label": s["label"], "availability": s["availability"],
                             "restored": {"image": False, "text": False}}))
(HERE / "interop.jsonl").write_text("\n".join(lines) + "\n")
