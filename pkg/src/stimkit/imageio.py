"""Minimal PNG / PPM / PGM reading and writing.

Only what the CLI needs: 8-bit grayscale and RGB, non-interlaced. PNG
writing uses filter type 0 on every row, so output bytes are fully
deterministic for identical pixel data. The reader handles filter types
0-4 and strips alpha channels; anything fancier (palette, 16-bit,
interlace) raises with a hint to convert to PPM.
"""

import struct
import zlib

import numpy as np

from .errors import StimkitError


class ImageFormatError(StimkitError):
    pass


_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def _chunk(tag, payload):
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def write_png(path, img):
    """Write a uint8 array of shape (H, W) or (H, W, 3) as PNG."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim == 2:
        color_type, channels = 0, 1
    elif img.ndim == 3 and img.shape[2] == 3:
        color_type, channels = 2, 3
    else:
        raise ImageFormatError(f"expected (H,W) or (H,W,3) uint8, got shape {img.shape}")
    h, w = img.shape[:2]
    raw = bytearray()
    flat = img.reshape(h, w * channels)
    for row in range(h):
        raw.append(0)  # filter type 0
        raw.extend(flat[row].tobytes())
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    data = _PNG_SIG + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", zlib.compress(bytes(raw), 6)) + _chunk(b"IEND", b"")
    with open(path, "wb") as f:
        f.write(data)


def _unfilter(raw, h, w, channels):
    stride = w * channels
    bpp = channels
    out = np.zeros((h, stride), dtype=np.uint8)
    pos = 0
    prev = np.zeros(stride, dtype=np.intp)
    for row in range(h):
        ftype = raw[pos]
        pos += 1
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos).astype(np.intp)
        pos += stride
        if ftype == 0:
            cur = line
        elif ftype == 1:  # Sub
            cur = line.copy()
            for i in range(bpp, stride):
                cur[i] = (cur[i] + cur[i - bpp]) & 0xFF
        elif ftype == 2:  # Up
            cur = (line + prev) & 0xFF
        elif ftype == 3:  # Average
            cur = line.copy()
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                cur[i] = (cur[i] + (left + prev[i]) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            cur = line.copy()
            for i in range(stride):
                a = cur[i - bpp] if i >= bpp else 0
                b = prev[i]
                c = prev[i - bpp] if i >= bpp else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                cur[i] = (cur[i] + pred) & 0xFF
        else:
            raise ImageFormatError(f"unsupported PNG filter type {ftype}")
        out[row] = cur.astype(np.uint8)
        prev = cur
    return out.reshape((h, w, channels))


def read_png(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != _PNG_SIG:
        raise ImageFormatError(f"{path}: not a PNG file")
    pos = 8
    width = height = None
    idat = bytearray()
    color_type = bit_depth = interlace = None
    while pos < len(blob):
        (length,) = struct.unpack(">I", blob[pos : pos + 4])
        tag = blob[pos + 4 : pos + 8]
        payload = blob[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            width, height, bit_depth, color_type, _, _, interlace = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break
    if bit_depth != 8 or interlace != 0 or color_type not in (0, 2, 4, 6):
        raise ImageFormatError(
            f"{path}: only 8-bit non-interlaced gray/RGB PNG supported; convert to PPM"
        )
    channels = {0: 1, 2: 3, 4: 2, 6: 4}[color_type]
    raw = zlib.decompress(bytes(idat))
    img = _unfilter(raw, height, width, channels)
    if channels == 2:
        img = img[:, :, :1]
    elif channels == 4:
        img = img[:, :, :3]
    if img.shape[2] == 1:
        img = img[:, :, 0]
    return img


def write_ppm(path, img):
    """Write uint8 (H, W, 3) as binary PPM (P6), or (H, W) as PGM (P5)."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ImageFormatError(f"expected (H,W) or (H,W,3) uint8, got shape {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def read_ppm(path):
    with open(path, "rb") as f:
        blob = f.read()
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"{path}: not a binary PGM/PPM file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 supported")
    channels = 3 if magic == b"P6" else 1
    data = np.frombuffer(blob, dtype=np.uint8, count=h * w * channels, offset=pos)
    img = data.reshape((h, w, channels))
    return img[:, :, 0] if channels == 1 else img


def read_image(path):
    """Read PNG or PPM/PGM by sniffing the header; returns uint8 array."""
    with open(path, "rb") as f:
        head = f.read(8)
    if head[:8] == _PNG_SIG:
        return read_png(path)
    if head[:2] in (b"P5", b"P6"):
        return read_ppm(path)
    raise ImageFormatError(f"{path}: unrecognized image format (PNG/PPM/PGM supported)")


def write_image(path, img):
    path = str(path)
    if path.endswith((".ppm", ".pgm")):
        write_ppm(path, img)
    else:
        write_png(path, img)


def to_gray01(img):
    """uint8 gray or RGB image to float64 grayscale in [0, 1]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = 0.299 * arr[:, :, 0] + 0.587 * arr[:, :, 1] + 0.114 * arr[:, :, 2]
    return arr / 255.0
