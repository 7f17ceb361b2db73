"""Minimal binary PPM (P6) and PGM (P5) reading and writing.

PPM carries 8-bit RGB; PGM carries 8-bit or 16-bit grayscale (16-bit
samples big-endian, per the format). Headers may contain '#' comments.
"""

import numpy as np


class NetpbmError(Exception):
    pass


def _read_tokens(data, count):
    tokens = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise NetpbmError("truncated netpbm header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise NetpbmError("unterminated comment in netpbm header")
            pos = nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    return tokens, pos + 1  # consume single whitespace after last token


def write_ppm(path, image):
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise NetpbmError("PPM writer expects a (h, w, 3) uint8 array")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _read_tokens(data, 4)
    if tokens[0] != b"P6":
        raise NetpbmError(f"not a binary PPM file: magic {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise NetpbmError("only 8-bit PPM is supported")
    need = w * h * 3
    body = data[offset:offset + need]
    if len(body) != need:
        raise NetpbmError("truncated PPM pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def write_pgm(path, image):
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype not in (np.uint8, np.uint16):
        raise NetpbmError("PGM writer expects a 2D uint8 or uint16 array")
    h, w = image.shape
    maxval = 255 if image.dtype == np.uint8 else 65535
    body = image.tobytes() if maxval == 255 else image.astype(">u2").tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(body)


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _read_tokens(data, 4)
    if tokens[0] != b"P5":
        raise NetpbmError(f"not a binary PGM file: magic {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval == 255:
        dtype, itemsize = np.uint8, 1
    elif maxval == 65535:
        dtype, itemsize = np.dtype(">u2"), 2
    else:
        raise NetpbmError(f"unsupported PGM maxval {maxval}")
    need = w * h * itemsize
    body = data[offset:offset + need]
    if len(body) != need:
        raise NetpbmError("truncated PGM pixel data")
    out = np.frombuffer(body, dtype=dtype).reshape(h, w)
    return out.astype(np.uint16) if itemsize == 2 else out.copy()
