"""Small generated datasets that stand in for the real corpora in demos and tests."""

import os

import numpy as np

from . import audio, imaging
from .tensor import Prng

SPEAKER_FREQS = (110.0, 147.0, 196.0, 262.0, 330.0)


def _normal(prng, n):
    # Box-Muller on the library PRNG keeps every dataset a pure function of the seed
    u1, u2 = prng.random(n), prng.random(n)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def tone_clip(freq, prng, sample_rate=16000, seconds=1.0, amplitude=0.5, noise=0.01):
    """Sine at ``freq`` with a random phase plus white noise of relative level ``noise``."""
    n = int(round(sample_rate * seconds))
    phase = 2.0 * np.pi * prng.random(1)[0]
    t = np.arange(n) / sample_rate
    x = amplitude * np.sin(2.0 * np.pi * freq * t + phase) + noise * amplitude * _normal(prng, n)
    return audio.AudioBuffer(np.clip(x, -1.0, 1.0), sample_rate)


def make_speaker_dataset(out_dir, clips_per_class=200, freqs=SPEAKER_FREQS, seed=0, sample_rate=16000):
    """Write one-second WAV clips per synthetic speaker and a ``manifest.csv``; returns its path."""
    prng = Prng(seed)
    rows = []
    for k, f in enumerate(freqs):
        name = f"speaker{k}"
        os.makedirs(os.path.join(out_dir, name), exist_ok=True)
        for i in range(clips_per_class):
            path = os.path.join(out_dir, name, f"{i:04d}.wav")
            audio.write_wav(tone_clip(f, prng, sample_rate), path)
            rows.append((path, name))
    manifest = os.path.join(out_dir, "manifest.csv")
    imaging.write_manifest(manifest, rows)
    return manifest


def blob_image(bright_center, prng, size=64, noise=0.1):
    """Gaussian blob brighter or darker than its background, jittered in place and width."""
    cy, cx = (size - 1) / 2.0 + (prng.random(2) - 0.5) * size * 0.2
    sigma = size * (0.12 + 0.08 * prng.random(1)[0])
    yy, xx = np.mgrid[0:size, 0:size]
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma ** 2))
    background = 0.3 + 0.4 * prng.random(1)[0]
    contrast = 0.25 + 0.2 * prng.random(1)[0]
    img = background + (contrast if bright_center else -contrast) * blob
    img = img + noise * _normal(prng, size * size).reshape(size, size)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_eye_dataset(out_dir, n_images=400, size=64, seed=0):
    """Dark-center ("closed") vs bright-center ("open") PGMs plus ``manifest.csv``."""
    prng = Prng(seed)
    rows = []
    for i in range(n_images):
        label = ("closed", "open")[i % 2]
        os.makedirs(os.path.join(out_dir, label), exist_ok=True)
        path = os.path.join(out_dir, label, f"{i:04d}.pgm")
        imaging.write_pgm(path, blob_image(label == "open", prng, size))
        rows.append((path, label))
    manifest = os.path.join(out_dir, "manifest.csv")
    imaging.write_manifest(manifest, rows)
    return manifest


def grating_image(class_index, prng, n_classes=7, size=48, noise=0.05):
    """Sinusoidal grating whose orientation encodes the class; phase and period vary."""
    angle = np.pi * class_index / n_classes + (prng.random(1)[0] - 0.5) * 0.1
    period = 6.0 + 3.0 * prng.random(1)[0]
    phase = 2.0 * np.pi * prng.random(1)[0]
    yy, xx = np.mgrid[0:size, 0:size]
    proj = xx * np.cos(angle) + yy * np.sin(angle)
    img = 0.5 + 0.35 * np.sin(2.0 * np.pi * proj / period + phase)
    img = img + noise * _normal(prng, size * size).reshape(size, size)
    return np.clip(img, 0.0, 1.0)


def fer_csv_text(per_class=40, seed=0, n_classes=7):
    """FER2013-format CSV text of oriented gratings, one orientation per emotion."""
    prng = Prng(seed)
    lines = ["emotion,pixels,Usage"]
    for i in range(per_class * n_classes):
        k = i % n_classes
        lines.append(imaging.format_fer_row(k, grating_image(k, prng, n_classes)))
    return "\n".join(lines) + "\n"


def make_fer_csv(path, per_class=40, seed=0):
    with open(path, "w") as fh:
        fh.write(fer_csv_text(per_class, seed))
    return path
