"""Minimal Netpbm reader/writer (P1, P2, P4, P5).

Only what the pipeline needs: 16-bit big-endian binary graymaps for masks and
frames, plus 1-bit bitmaps and 8/16-bit graymaps for target images.
"""

import numpy as np


def _tokens(data, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PNM header")
        out.append(data[start:pos])
    return out, pos


def read_pnm(path):
    """Read a PBM/PGM file.

    Returns ``(array, maxval)``. Bitmaps come back as uint8 0/1 with ``maxval``
    1, where 1 is black (the Netpbm convention).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic in (b"P1", b"P4"):
        (w, h), pos = _tokens(data, 2, 2)
        w, h = int(w), int(h)
        if magic == b"P4":
            pos += 1
            row_bytes = (w + 7) // 8
            raw = np.frombuffer(data, dtype=np.uint8, count=row_bytes * h, offset=pos)
            bits = np.unpackbits(raw.reshape(h, row_bytes), axis=1)[:, :w]
            return bits.astype(np.uint8), 1
        body = b"".join(data[pos:].split())
        vals = np.frombuffer(body[: w * h], dtype=np.uint8) - ord("0")
        return vals.reshape(h, w).astype(np.uint8), 1
    if magic in (b"P2", b"P5"):
        (w, h, maxval), pos = _tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
        if not 0 < maxval < 65536:
            raise ValueError(f"unsupported maxval {maxval}")
        if magic == b"P5":
            pos += 1
            dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
            arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
            return arr.reshape(h, w).astype(np.uint16 if maxval > 255 else np.uint8), maxval
        vals = np.array(data[pos:].split()[: w * h], dtype=np.int64)
        return vals.reshape(h, w), maxval
    raise ValueError(f"not a PBM/PGM file: magic {magic!r}")


def write_pgm16(path, values):
    """Write integer samples in [0, 65535] as a binary 16-bit graymap."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("graymap must be two-dimensional")
    if values.min(initial=0) < 0 or values.max(initial=0) > 65535:
        raise ValueError("16-bit graymap samples must lie in [0, 65535]")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(values.astype(">u2").tobytes())


def write_pbm(path, bits):
    """Write a 0/1 array (1 = black) as a binary bitmap."""
    bits = np.asarray(bits, dtype=np.uint8)
    h, w = bits.shape
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode("ascii"))
        fh.write(np.packbits(bits, axis=1).tobytes())


def quantize_unit(values):
    """Map reals in [0, 1] to 16-bit levels, ``round(t * 65535)``."""
    return np.rint(np.clip(values, 0.0, 1.0) * 65535.0).astype(np.uint16)
