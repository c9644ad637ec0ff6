#!/usr/bin/env python3
"""JPEG 2000 bridge for medroi's external codec interface, built on Pillow.

    MEDROI_CODEC_J2K="python3 scripts/mrf_j2k.py encode"
    MEDROI_DECODE_J2K="python3 scripts/mrf_j2k.py decode"

encode: MRF1 frame on stdin, J2K codestream on stdout.
decode: J2K codestream on stdin, MRF1 frame on stdout.

MEDROI_QUALITY 0 selects the reversible 5/3 transform (lossless); a positive
value is the target compression rate of a single irreversible layer.
Signed 16-bit samples are offset by 32768 so the codestream stays unsigned.
"""

import io
import os
import struct
import sys

import numpy as np
from PIL import Image

MAGIC = b"MRF1"
TYPES = {"u8": np.uint8, "i16": np.int16, "u16": np.uint16}


def fail(msg):
    sys.stderr.write(f"mrf_j2k: {msg}\n")
    sys.exit(1)


def dtype():
    name = os.environ.get("MEDROI_DTYPE", "u8")
    if name not in TYPES:
        fail(f"sample type {name} not supported")
    return name


def encode(data):
    if len(data) < 9 or data[:4] != MAGIC:
        fail("input is not an MRF1 frame")
    width, height, bits = struct.unpack_from("<HHB", data, 4)
    name = dtype()
    samples = np.frombuffer(data[9:], dtype=np.dtype(TYPES[name]).newbyteorder("<"))
    if samples.size != width * height:
        fail("frame sample count does not match its header")
    img = samples.reshape(height, width)
    if name == "i16":
        img = (img.astype(np.int32) + 32768).astype(np.uint16)
    if bits == 8:
        im = Image.fromarray(img.astype(np.uint8), "L")
    else:
        im = Image.frombuffer("I;16", (width, height), img.astype("<u2").tobytes(), "raw", "I;16", 0, 1)
    quality = int(os.environ.get("MEDROI_QUALITY", "0"))
    opts = {"no_jp2": True}
    if quality > 0:
        opts.update(irreversible=True, quality_mode="rates", quality_layers=[quality])
    out = io.BytesIO()
    im.save(out, "JPEG2000", **opts)
    return out.getvalue()


def decode(data):
    name = dtype()
    arr = np.array(Image.open(io.BytesIO(data)))
    height, width = arr.shape
    if name == "i16":
        arr = (arr.astype(np.int32) - 32768).astype(np.int16)
    arr = arr.astype(np.dtype(TYPES[name]).newbyteorder("<"))
    bits = 8 if name == "u8" else 16
    return MAGIC + struct.pack("<HHB", width, height, bits) + arr.tobytes()


def main():
    if len(sys.argv) != 2 or sys.argv[1] not in ("encode", "decode"):
        fail("usage: mrf_j2k.py encode|decode")
    data = sys.stdin.buffer.read()
    out = encode(data) if sys.argv[1] == "encode" else decode(data)
    sys.stdout.buffer.write(out)


if __name__ == "__main__":
    main()
