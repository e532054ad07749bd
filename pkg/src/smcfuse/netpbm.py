"""PGM/PPM (P2, P3, P5, P6) reading and writing; pixel values map linearly to [0, 1]."""

from __future__ import annotations

from pathlib import Path

import numpy as np

_CHANNELS = {b"P2": 1, b"P5": 1, b"P3": 3, b"P6": 3}


class NetpbmError(ValueError):
    pass


def _header_tokens(blob: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos, n = [], 0, len(blob)
    while len(tokens) < count:
        while pos < n and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < n and blob[pos:pos + 1] == b"#":
            while pos < n and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not blob[pos:pos + 1].isspace() and blob[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise NetpbmError("truncated header")
        tokens.append(blob[start:pos])
    return tokens, pos


def decode_pnm(blob: bytes) -> np.ndarray:
    """Parse an image into a float array of shape [C, H, W] in [0, 1]."""
    magic = blob[:2]
    if magic not in _CHANNELS:
        raise NetpbmError(f"unsupported magic {magic!r}; expected P2, P3, P5 or P6")
    (magic, w, h, maxval), pos = _header_tokens(blob, 4)
    try:
        W, H, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise NetpbmError(f"bad header field ({exc})") from exc
    if W < 1 or H < 1 or not 0 < maxval < 65536:
        raise NetpbmError(f"bad header: {W}x{H}, maxval {maxval}")
    C = _CHANNELS[magic]
    count = W * H * C
    if magic in (b"P5", b"P6"):
        body = blob[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        if len(body) < count * dtype.itemsize:
            raise NetpbmError("truncated pixel data")
        values = np.frombuffer(body, dtype=dtype, count=count).astype(np.float64)
    else:
        fields = blob[pos:].split()
        if len(fields) < count:
            raise NetpbmError("truncated pixel data")
        values = np.array([int(f) for f in fields[:count]], dtype=np.float64)
    if values.max(initial=0) > maxval:
        raise NetpbmError("pixel value exceeds maxval")
    return (values / maxval).reshape(H, W, C).transpose(2, 0, 1)


def read_pnm(path: str | Path) -> np.ndarray:
    return decode_pnm(Path(path).read_bytes())


def quantize(image: np.ndarray, maxval: int = 255) -> np.ndarray:
    return np.rint(np.clip(image, 0.0, 1.0) * maxval).astype(np.int64)


def encode_pnm(image: np.ndarray, binary: bool = True, maxval: int = 255) -> bytes:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]
    C, H, W = image.shape
    if C not in (1, 3):
        raise NetpbmError(f"can only write 1 or 3 channels, got {C}")
    magic = {(1, True): "P5", (1, False): "P2", (3, True): "P6", (3, False): "P3"}[C, binary]
    q = quantize(image, maxval).transpose(1, 2, 0).reshape(-1)
    header = f"{magic}\n{W} {H}\n{maxval}\n".encode()
    if binary:
        return header + q.astype(">u2" if maxval > 255 else "u1").tobytes()
    return header + ("\n".join(" ".join(map(str, q[i:i + 12])) for i in range(0, q.size, 12)) + "\n").encode()


def write_pnm(path: str | Path, image: np.ndarray, binary: bool = True) -> None:
    Path(path).write_bytes(encode_pnm(image, binary))
