"""Binary PGM/PPM and 8-bit PNG codecs.

Only the variants the pipeline produces are accepted: PGM ``P5`` / PPM ``P6``
with maxval 255, and non-interlaced 8-bit grayscale or RGB PNG. Anything else
raises :class:`UnsupportedFormatError`.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .image import Image

MAX_PIXELS = 1 << 28
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(ValueError):
    pass


class UnsupportedFormatError(ImageFormatError):
    pass


class TruncatedStreamError(ImageFormatError):
    pass


class DimensionOverflowError(ImageFormatError):
    pass


def _check_dims(w: int, h: int, c: int) -> None:
    if w <= 0 or h <= 0 or w * h * c > MAX_PIXELS:
        raise DimensionOverflowError(f"bad dimensions {w}x{h}x{c}")


def _netpbm_tokens(buf: bytes, count: int) -> tuple[list[int], int]:
    # Header tokens are separated by whitespace; '#' starts a comment to EOL.
    tokens: list[int] = []
    pos = 2
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos] == ord("#"):
            while pos < n and buf[pos] not in (10, 13):
                pos += 1
            continue
        start = pos
        while pos < n and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            if pos >= n:
                raise TruncatedStreamError("truncated netpbm header")
            raise UnsupportedFormatError(f"unexpected byte in netpbm header at {pos}")
        tokens.append(int(buf[start:pos]))
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise TruncatedStreamError("truncated netpbm header")
    return tokens, pos + 1


def _decode_netpbm(buf: bytes) -> Image:
    channels = 1 if buf[:2] == b"P5" else 3
    (w, h, maxval), offset = _netpbm_tokens(buf, 3)
    if maxval != 255:
        raise UnsupportedFormatError(f"maxval {maxval} not supported (need 255)")
    _check_dims(w, h, channels)
    need = w * h * channels
    body = buf[offset:offset + need]
    if len(body) < need:
        raise TruncatedStreamError(f"expected {need} sample bytes, got {len(body)}")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(h, w, channels)
    return Image.from_hwc(arr.astype(np.float64) / 255.0)


def _paeth(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    p = a + b - c
    pa, pb, pc = np.abs(p - a), np.abs(p - b), np.abs(p - c)
    return np.where((pa <= pb) & (pa <= pc), a, np.where(pb <= pc, b, c))


def _unfilter(raw: bytes, w: int, h: int, bpp: int) -> np.ndarray:
    stride = w * bpp
    if len(raw) < h * (stride + 1):
        raise TruncatedStreamError("PNG image data shorter than declared size")
    rows = np.frombuffer(raw[: h * (stride + 1)], dtype=np.uint8).reshape(h, stride + 1)
    out = np.zeros((h, stride), dtype=np.int32)
    prior = np.zeros(stride, dtype=np.int32)
    for y in range(h):
        ftype = int(rows[y, 0])
        line = rows[y, 1:].astype(np.int32)
        if ftype == 0:
            cur = line
        elif ftype == 2:
            cur = (line + prior) & 0xFF
        elif ftype in (1, 3, 4):
            # These filters depend on the reconstructed left neighbour, so they
            # run pixel by pixel.
            cur = np.zeros(stride, dtype=np.int32)
            for x in range(stride):
                left = cur[x - bpp] if x >= bpp else 0
                up = prior[x]
                if ftype == 1:
                    pred = left
                elif ftype == 3:
                    pred = (left + up) >> 1
                else:
                    ul = prior[x - bpp] if x >= bpp else 0
                    pred = int(_paeth(np.int32(left), np.int32(up), np.int32(ul)))
                cur[x] = (line[x] + pred) & 0xFF
        else:
            raise UnsupportedFormatError(f"unknown PNG filter type {ftype}")
        out[y] = cur
        prior = cur
    return out.astype(np.uint8).reshape(h, w, bpp)


def _decode_png(buf: bytes) -> Image:
    pos = len(PNG_SIGNATURE)
    header = None
    idat = []
    while True:
        if pos + 8 > len(buf):
            raise TruncatedStreamError("PNG stream ended before IEND")
        length, ctype = struct.unpack(">I4s", buf[pos:pos + 8])
        data = buf[pos + 8:pos + 8 + length]
        crc = buf[pos + 8 + length:pos + 12 + length]
        if len(data) < length or len(crc) < 4:
            raise TruncatedStreamError(f"PNG chunk {ctype!r} truncated")
        if zlib.crc32(ctype + data) != struct.unpack(">I", crc)[0]:
            raise ImageFormatError(f"PNG chunk {ctype!r} has a bad CRC")
        pos += 12 + length
        if ctype == b"IHDR":
            header = struct.unpack(">IIBBBBB", data)
        elif ctype == b"IDAT":
            idat.append(data)
        elif ctype == b"IEND":
            break
    if header is None:
        raise UnsupportedFormatError("PNG without IHDR")
    w, h, depth, color, comp, filt, interlace = header
    if depth != 8 or color not in (0, 2) or comp != 0 or filt != 0 or interlace != 0:
        raise UnsupportedFormatError(
            f"PNG variant not supported (depth={depth}, color={color}, interlace={interlace})"
        )
    bpp = 1 if color == 0 else 3
    _check_dims(w, h, bpp)
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise TruncatedStreamError(f"PNG image data corrupt: {exc}") from exc
    arr = _unfilter(raw, w, h, bpp)
    return Image.from_hwc(arr.astype(np.float64) / 255.0)


def load_image(data: bytes) -> Image:
    """Decode PGM, PPM or PNG bytes into an :class:`Image` in [0, 1]."""
    if len(data) < 2:
        raise TruncatedStreamError("empty or truncated image stream")
    if data[:2] in (b"P5", b"P6"):
        return _decode_netpbm(data)
    if data[:8] == PNG_SIGNATURE:
        return _decode_png(data)
    if len(data) < 8 and PNG_SIGNATURE.startswith(data):
        raise TruncatedStreamError("truncated PNG signature")
    raise UnsupportedFormatError(f"unrecognised image magic {data[:8]!r}")


def to_bytes8(img: Image) -> np.ndarray:
    """Interleaved uint8 samples, ``round(255 * v)`` with clamping."""
    return np.clip(np.rint(img.to_hwc() * 255.0), 0, 255).astype(np.uint8)


def _png_chunk(ctype: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + ctype + data + struct.pack(">I", zlib.crc32(ctype + data))


def save_image(img: Image, fmt: str) -> bytes:
    """Encode ``img`` as ``"pgm"``, ``"ppm"`` or ``"png"``."""
    fmt = fmt.lower().lstrip(".")
    samples = to_bytes8(img)
    h, w, c = samples.shape
    if fmt in ("pgm", "ppm"):
        want = 1 if fmt == "pgm" else 3
        if c != want:
            raise UnsupportedFormatError(f"{fmt} needs {want} channel(s), image has {c}")
        magic = b"P5" if want == 1 else b"P6"
        return magic + f"\n{w} {h}\n255\n".encode() + samples.tobytes()
    if fmt == "png":
        color = 0 if c == 1 else 2
        rows = np.concatenate([np.zeros((h, 1), np.uint8), samples.reshape(h, w * c)], axis=1)
        ihdr = struct.pack(">IIBBBBB", w, h, 8, color, 0, 0, 0)
        return (
            PNG_SIGNATURE
            + _png_chunk(b"IHDR", ihdr)
            + _png_chunk(b"IDAT", zlib.compress(rows.tobytes(), 9))
            + _png_chunk(b"IEND", b"")
        )
    raise UnsupportedFormatError(f"unknown output format {fmt!r}")


IMAGE_SUFFIXES = {".pgm": "pgm", ".ppm": "ppm", ".png": "png"}


def read_image(path) -> Image:
    return load_image(Path(path).read_bytes())


def write_image(path, img: Image) -> None:
    """Write ``img`` choosing the codec from the file suffix."""
    path = Path(path)
    fmt = IMAGE_SUFFIXES.get(path.suffix.lower())
    if fmt is None:
        raise UnsupportedFormatError(f"no codec for suffix {path.suffix!r}")
    path.write_bytes(save_image(img, fmt))
