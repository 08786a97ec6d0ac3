"""Grayscale image ingestion, resizing and augmentation.

Images are 2-D float32 arrays [height, width] with values in [0, 1].
"""

import csv
import math
import os
import re
from dataclasses import dataclass

import numpy as np

FER_EMOTIONS = ("anger", "disgust", "fear", "happy", "sad", "surprise", "neutral")
FER_USAGES = ("Training", "PublicTest", "PrivateTest")
FER_SIDE = 48


class PgmError(ValueError):
    pass


@dataclass
class FerRecord:
    emotion: int
    image: np.ndarray
    usage: str

    @property
    def emotion_name(self):
        return FER_EMOTIONS[self.emotion]


def parse_fer_csv(text):
    """Parse FER2013 CSV text.

    Returns ``(records, errors)`` where ``errors`` lists ``(line_number,
    message)`` for every malformed row; bad rows are skipped, not fatal.
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != "emotion,pixels,Usage":
        raise ValueError('FER CSV must start with the header "emotion,pixels,Usage"')
    records, errors = [], []
    n_pix = FER_SIDE * FER_SIDE
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.strip().split(",")
        if len(parts) != 3:
            errors.append((lineno, f"expected 3 fields, found {len(parts)}"))
            continue
        emotion, pixels, usage = parts
        try:
            emotion = int(emotion)
        except ValueError:
            errors.append((lineno, f"emotion {emotion!r} is not an integer"))
            continue
        if not 0 <= emotion < len(FER_EMOTIONS):
            errors.append((lineno, f"emotion {emotion} outside 0..6"))
            continue
        tokens = pixels.split()
        if len(tokens) != n_pix:
            errors.append((lineno, f"expected {n_pix} pixels, found {len(tokens)}"))
            continue
        try:
            values = np.array([int(t) for t in tokens], dtype=np.int64)
        except ValueError:
            errors.append((lineno, "non-integer pixel token"))
            continue
        if values.min() < 0 or values.max() > 255:
            errors.append((lineno, "pixel value outside 0..255"))
            continue
        if usage not in FER_USAGES:
            errors.append((lineno, f"unknown usage {usage!r}"))
            continue
        image = (values.astype(np.float32) / np.float32(255.0)).reshape(FER_SIDE, FER_SIDE)
        records.append(FerRecord(emotion, image, usage))
    return records, errors


def format_fer_row(emotion, image, usage="Training"):
    pixels = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(int).ravel()
    return f"{emotion},{' '.join(map(str, pixels))},{usage}"


# ---------------------------------------------------------------- PGM


_PGM_HEADER = re.compile(rb"\A(P\d)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def load_pgm(data):
    """Decode a binary (P5) PGM with maxval 255 into a [0, 1] image."""
    data = bytes(data)
    if data[:2] != b"P5":
        raise PgmError(f"unsupported PGM variant {data[:2]!r}; only binary P5 is read")
    m = _PGM_HEADER.match(data)
    if not m:
        raise PgmError("malformed PGM header")
    width, height, maxval = int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise PgmError(f"unsupported maxval {maxval}; only 255 is read")
    if width < 1 or height < 1:
        raise PgmError("PGM dimensions must be positive")
    payload = data[m.end():]
    if len(payload) < width * height:
        raise PgmError(f"truncated PGM payload: {len(payload)} of {width * height} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8, count=width * height)
    return (pixels.astype(np.float32) / np.float32(255.0)).reshape(height, width)


def read_pgm(path):
    with open(path, "rb") as fh:
        return load_pgm(fh.read())


def encode_pgm(gray):
    """P5 bytes for a uint8 array, or a float array in [0, 1]."""
    gray = np.asarray(gray)
    if gray.dtype != np.uint8:
        gray = np.clip(np.round(gray * 255.0), 0, 255).astype(np.uint8)
    h, w = gray.shape
    return b"P5\n%d %d\n255\n" % (w, h) + gray.tobytes()


def write_pgm(path, gray):
    with open(path, "wb") as fh:
        fh.write(encode_pgm(gray))


# ---------------------------------------------------------------- geometry


def _sample_bilinear(img, ys, xs, clamp):
    h, w = img.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    src = img.astype(np.float64)

    def at(yy, xx):
        if clamp:
            return src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(inside, vals, 0.0)

    top = at(y0, x0) * (1 - fx) + at(y0, x0 + 1) * fx
    bottom = at(y0 + 1, x0) * (1 - fx) + at(y0 + 1, x0 + 1) * fx
    return top * (1 - fy) + bottom * fy


def resize_bilinear(img, out_w, out_h):
    """Align-corners bilinear resize with edge clamping."""
    img = np.asarray(img, dtype=np.float32)
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()

    def coords(n_out, n_in):
        if n_out == 1:
            return np.array([(n_in - 1) / 2.0])
        return np.arange(n_out) * ((n_in - 1) / (n_out - 1))

    ys, xs = np.meshgrid(coords(out_h, h), coords(out_w, w), indexing="ij")
    return _sample_bilinear(img, ys, xs, clamp=True).astype(np.float32)


@dataclass(frozen=True)
class AugmentParams:
    max_rotation_deg: float = 15.0
    shear_factor: float = 0.1
    zoom_range: tuple = (0.9, 1.1)

    def __post_init__(self):
        lo, hi = self.zoom_range
        if not 0 < lo <= hi:
            raise ValueError("zoom range needs 0 < low <= high")
        if self.max_rotation_deg < 0 or self.shear_factor < 0:
            raise ValueError("rotation and shear magnitudes must be non-negative")


def affine_transform(img, rotation_deg=0.0, shear=0.0, zoom=1.0):
    """Apply zoom * rotation * shear about the image center; exposed areas are black.

    Positive rotation turns the content counter-clockwise, matching ``np.rot90``.
    """
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape
    th = math.radians(rotation_deg)
    c, s = math.cos(th), math.sin(th)
    rot = np.array([[c, s], [-s, c]])  # acts on (x, y) with y pointing down
    shear_m = np.array([[1.0, shear], [0.0, 1.0]])
    inv = np.linalg.inv(zoom * rot @ shear_m)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    src_x = inv[0, 0] * xx + inv[0, 1] * yy + cx
    src_y = inv[1, 0] * xx + inv[1, 1] * yy + cy
    # snap roundoff so exact grid hits (identity, quarter turns) read a single pixel
    src_x = np.where(np.abs(src_x - np.round(src_x)) < 1e-9, np.round(src_x), src_x)
    src_y = np.where(np.abs(src_y - np.round(src_y)) < 1e-9, np.round(src_y), src_y)
    out = _sample_bilinear(img, src_y, src_x, clamp=False)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def draw_augment(params, prng):
    rotation, shear, u = prng.random(3)
    lo, hi = params.zoom_range
    return (
        (2.0 * rotation - 1.0) * params.max_rotation_deg,
        (2.0 * shear - 1.0) * params.shear_factor,
        lo + (hi - lo) * u,
    )


def affine_augment(img, params, prng):
    """Random rotation/shear/zoom drawn uniformly from ``params``."""
    return affine_transform(img, *draw_augment(params, prng))


def augment_batch(batch, params, prng):
    """Augment every [C,H,W] image of a batch channel-wise with one draw per sample."""
    out = np.empty_like(batch)
    for n in range(batch.shape[0]):
        draw = draw_augment(params, prng)
        for c in range(batch.shape[1]):
            out[n, c] = affine_transform(batch[n, c], *draw)
    return out


def one_hot(label, n_classes):
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} outside 0..{n_classes - 1}")
    v = np.zeros(n_classes, dtype=np.float32)
    v[label] = 1.0
    return v


# ---------------------------------------------------------------- manifests


def read_manifest(path):
    """``(path, label)`` rows of a manifest CSV; relative paths resolve against its folder."""
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["path", "label"]:
            raise ValueError(f"{path}: manifest header must be 'path,label'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields")
            p, label = row[0].strip(), row[1].strip()
            rows.append((p if os.path.isabs(p) else os.path.join(base, p), label))
    return rows


def write_manifest(path, rows):
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label"])
        for p, label in rows:
            writer.writerow([os.path.relpath(p, base), label])
