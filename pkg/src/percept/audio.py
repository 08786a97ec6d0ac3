"""Speech front end: WAV ingestion through MFCC features, scaling and plot artifacts."""

import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .imaging import encode_pgm


class WavError(ValueError):
    pass


class UnsupportedWavFormat(WavError):
    pass


class TruncatedWav(WavError):
    pass


class MissingWavChunk(WavError):
    pass


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio samples must be finite")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


# ---------------------------------------------------------------- WAV


def parse_wav(data):
    """Decode a RIFF/WAVE PCM-16 file (mono or stereo) into a mono buffer."""
    data = bytes(data)
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedWavFormat("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + 16 > len(data):
                raise TruncatedWav("fmt chunk is truncated")
            fmt = struct.unpack_from("<HHIIHH", data, body)
            code, channels, rate, _, _, bits = fmt
            if code != 1:
                raise UnsupportedWavFormat(f"unsupported WAV format code {code} (only PCM, code 1)")
            if bits != 16:
                raise UnsupportedWavFormat(f"unsupported sample width {bits} bits (only 16)")
            if channels not in (1, 2):
                raise UnsupportedWavFormat(f"unsupported channel count {channels}")
        elif cid == b"data":
            if fmt is None:
                raise MissingWavChunk("data chunk appears before any fmt chunk")
            if body + size > len(data):
                raise TruncatedWav(f"data chunk declares {size} bytes, only {len(data) - body} present")
            channels, rate = fmt[1], fmt[2]
            frame_bytes = 2 * channels
            if size % frame_bytes:
                raise TruncatedWav("data chunk ends mid-frame")
            pcm = np.frombuffer(data, dtype="<i2", count=size // 2, offset=body).astype(np.float64) / 32768.0
            if channels == 2:
                pcm = pcm.reshape(-1, 2).mean(axis=1)
            return AudioBuffer(pcm, rate)
        pos = body + size + (size & 1)  # chunks are word aligned
    if fmt is None:
        raise MissingWavChunk("no fmt chunk found")
    raise MissingWavChunk("no data chunk found")


def read_wav(path):
    with open(path, "rb") as fh:
        return parse_wav(fh.read())


def encode_wav(buf):
    """PCM-16 mono bytes with a canonical 44-byte header."""
    pcm = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, buf.sample_rate, 2 * buf.sample_rate, 2, 16)
    return header + b"data" + struct.pack("<I", len(pcm)) + pcm


def write_wav(buf, path):
    with open(path, "wb") as fh:
        fh.write(encode_wav(buf))


# ---------------------------------------------------------------- framing & spectra


@dataclass(frozen=True)
class MfccConfig:
    frame_len_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 26
    n_coeffs: int = 13
    fft_size: int = None
    fmin: float = 0.0
    fmax: float = None

    def resolve(self, sample_rate):
        """Sample-domain settings for ``sample_rate``: (frame_len, hop, fft_size, fmin, fmax)."""
        frame_len = int(round(sample_rate * self.frame_len_ms / 1000.0))
        hop = int(round(sample_rate * self.hop_ms / 1000.0))
        if frame_len < 2 or hop < 1:
            raise ValueError("frame length and hop are too short for this sample rate")
        fft_size = self.fft_size or 1 << (frame_len - 1).bit_length()
        fmax = sample_rate / 2.0 if self.fmax is None else self.fmax
        if self.n_coeffs > self.n_mels:
            raise ValueError("n_coeffs cannot exceed n_mels")
        if not 0 <= self.fmin < fmax <= sample_rate / 2.0:
            raise ValueError(f"need 0 <= fmin < fmax <= Nyquist, got fmin={self.fmin}, fmax={fmax}")
        if frame_len > fft_size:
            raise ValueError(f"frame length {frame_len} exceeds fft_size {fft_size}")
        return frame_len, hop, fft_size, self.fmin, fmax


def frame_signal(buf, config=MfccConfig()):
    """Overlapping frames [T, frame_len]; a trailing partial frame is dropped."""
    frame_len, hop, *_ = config.resolve(buf.sample_rate)
    x = buf.samples
    if x.size < frame_len:
        raise ValueError(f"signal of {x.size} samples is shorter than one {frame_len}-sample frame")
    n_frames = 1 + (x.size - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def hamming_window(frame):
    """Multiply (the last axis of) ``frame`` by 0.54 - 0.46 cos(2 pi n / (N - 1))."""
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[-1]
    if n < 2:
        raise ValueError("hamming window needs at least 2 samples")
    w = 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))
    return frame * w


def _is_pow2(n):
    return n >= 1 and n & (n - 1) == 0


def _bit_reverse(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_radix2(x):
    """Iterative decimation-in-time radix-2 FFT along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"FFT length {n} is not a power of two")
    lead = x.shape[:-1]
    a = x[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(*lead, n // size, size)
        even = a[..., :half]
        odd = a[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return a.reshape(*lead, n)


def power_spectrum(frame, fft_size):
    """One-sided power |X[k]|^2, k = 0..fft_size/2, of the zero-padded frame(s)."""
    frame = np.asarray(frame, dtype=np.float64)
    if not _is_pow2(fft_size):
        raise ValueError(f"fft_size {fft_size} is not a power of two")
    if frame.shape[-1] > fft_size:
        raise ValueError(f"frame of {frame.shape[-1]} samples exceeds fft_size {fft_size}")
    pad = [(0, 0)] * (frame.ndim - 1) + [(0, fft_size - frame.shape[-1])]
    spec = fft_radix2(np.pad(frame, pad))[..., :fft_size // 2 + 1]
    return spec.real ** 2 + spec.imag ** 2


# ---------------------------------------------------------------- mel & cepstrum


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    out = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("mel value must be non-negative")
    out = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


def filter_center_bins(config, sample_rate):
    """FFT bin of each of the n_mels + 2 mel-spaced edge/center points."""
    _, _, fft_size, fmin, fmax = config.resolve(sample_rate)
    mels = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), config.n_mels + 2)
    bins = np.floor((fft_size + 1) * mel_to_hz(mels) / sample_rate).astype(np.int64)
    return np.minimum(bins, fft_size // 2)


def build_mel_filterbank(config, sample_rate):
    """Triangular filters [n_mels, fft_size/2 + 1], each peaking at exactly 1 on its center bin."""
    _, _, fft_size, _, _ = config.resolve(sample_rate)
    bins = filter_center_bins(config, sample_rate)
    if np.any(np.diff(bins) <= 0):
        raise ValueError(
            f"{config.n_mels} mel filters do not fit distinct FFT bins at fft_size={fft_size}, "
            f"sample_rate={sample_rate}"
        )
    fb = np.zeros((config.n_mels, fft_size // 2 + 1))
    k = np.arange(fft_size // 2 + 1)
    for j in range(config.n_mels):
        lo, mid, hi = bins[j], bins[j + 1], bins[j + 2]
        rise = (k >= lo) & (k < mid)
        fall = (k >= mid) & (k <= hi)
        fb[j, rise] = (k[rise] - lo) / (mid - lo)
        fb[j, fall] = (hi - k[fall]) / (hi - mid)
    return fb


def _dct_matrix(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    m[0] *= math.sqrt(1.0 / n)
    m[1:] *= math.sqrt(2.0 / n)
    return m


def dct2(v, n_coeffs=None):
    """Orthonormal DCT-II along the last axis, keeping the first ``n_coeffs`` terms."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    n_coeffs = n if n_coeffs is None else n_coeffs
    if n_coeffs > n:
        raise ValueError(f"cannot keep {n_coeffs} coefficients of a length-{n} vector")
    return v @ _dct_matrix(n)[:n_coeffs].T


def idct2(c):
    """Inverse of the full orthonormal DCT-II."""
    c = np.asarray(c, dtype=np.float64)
    return c @ _dct_matrix(c.shape[-1])


LOG_FLOOR = 1e-10


def log_mel_energies(buf, config=MfccConfig()):
    _, _, fft_size, _, _ = config.resolve(buf.sample_rate)
    frames = hamming_window(frame_signal(buf, config))
    power = power_spectrum(frames, fft_size)
    return np.log(power @ build_mel_filterbank(config, buf.sample_rate).T + LOG_FLOOR)


def mfcc(buf, config=MfccConfig()):
    """MFCC matrix [T, n_coeffs]: frame, window, power spectrum, mel filterbank, log, DCT-II."""
    return dct2(log_mel_energies(buf, config), config.n_coeffs)


def spectrogram(buf, config=MfccConfig()):
    """Log power spectrogram [T, fft_size/2 + 1] on the MFCC framing."""
    _, _, fft_size, _, _ = config.resolve(buf.sample_rate)
    return np.log(power_spectrum(hamming_window(frame_signal(buf, config)), fft_size) + LOG_FLOOR)


# ---------------------------------------------------------------- scaling & snippets


@dataclass
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, features):
        return scaler_transform(self, features)


def scaler_fit(features):
    """Per-column mean and population standard deviation of a [rows, dims] matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError("scaler needs a 2-D matrix with at least 2 rows")
    return FeatureScaler(features.mean(axis=0), features.std(axis=0))


def scaler_transform(scaler, features):
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != scaler.mean.size:
        raise ValueError(f"feature width {features.shape[-1]} does not match scaler width {scaler.mean.size}")
    std = np.where(scaler.std < 1e-12, 1.0, scaler.std)  # constant columns map to 0
    return (features - scaler.mean) / std


def concat_snippets(buffers, target_seconds):
    """Join clips in order and cut the result to ``target_seconds``."""
    buffers = list(buffers)
    if not buffers:
        raise ValueError("no clips to concatenate")
    rate = buffers[0].sample_rate
    if any(b.sample_rate != rate for b in buffers):
        raise ValueError("clips have different sample rates")
    samples = np.concatenate([b.samples for b in buffers])
    return AudioBuffer(samples[:int(round(target_seconds * rate))], rate)


# ---------------------------------------------------------------- cache & plots


CACHE_MAGIC = b"MFCC"
CACHE_VERSION = 1


def write_feature_cache(path, records):
    """Write ``(label, matrix [T, n_coeffs])`` records as little-endian float32."""
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC + struct.pack("<I", CACHE_VERSION))
        for label, feats in records:
            feats = np.asarray(feats, dtype="<f4")
            fh.write(struct.pack("<III", int(label), feats.shape[0], feats.shape[1]))
            fh.write(np.ascontiguousarray(feats).tobytes())


def read_feature_cache(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: not an MFCC feature cache")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported feature cache version {version}")
    pos = 8
    records = []
    while pos < len(data):
        if pos + 12 > len(data):
            raise ValueError(f"{path}: truncated record header")
        label, t, d = struct.unpack_from("<III", data, pos)
        pos += 12
        nbytes = 4 * t * d
        if pos + nbytes > len(data):
            raise ValueError(f"{path}: truncated record payload")
        feats = np.frombuffer(data, dtype="<f4", count=t * d, offset=pos).reshape(t, d).astype(np.float32)
        records.append((label, feats))
        pos += nbytes
    return records


def write_matrix_csv(path, matrix, header=None):
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(matrix):
            fh.write(",".join(f"{v:.6f}" for v in row) + "\n")


def read_matrix_csv(path, skip_header=False):
    return np.loadtxt(path, delimiter=",", skiprows=1 if skip_header else 0, ndmin=2)


def matrix_to_gray(matrix):
    """Min-max scale to 0..255; a constant matrix maps to a single gray level (0)."""
    m = np.asarray(matrix, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi <= lo:
        return np.zeros(m.shape, dtype=np.uint8)
    return np.round(255.0 * (m - lo) / (hi - lo)).astype(np.uint8)


def _time_image(matrix):
    # rows of ``matrix`` are frames; time runs left to right, low index at the bottom.
    # A matrix that never changes over time (silence) renders as one flat gray level,
    # even though e.g. the MFCC c0 row differs from the others.
    m = np.asarray(matrix)
    if np.all(m == m[:1]):
        return np.zeros(m.T.shape, dtype=np.uint8)
    return matrix_to_gray(m.T[::-1])


def render_audio_plots(buf, features, out_dir, config=MfccConfig()):
    """Write waveform.csv, spectrogram.{csv,pgm} and mfcc.{csv,pgm}; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in (
        "waveform.csv", "spectrogram.csv", "spectrogram.pgm", "mfcc.csv", "mfcc.pgm")}
    t = np.arange(buf.samples.size) / buf.sample_rate
    write_matrix_csv(paths["waveform.csv"], np.column_stack([t, buf.samples]), header=("t", "amplitude"))
    spec = spectrogram(buf, config)
    write_matrix_csv(paths["spectrogram.csv"], spec)
    with open(paths["spectrogram.pgm"], "wb") as fh:
        fh.write(encode_pgm(_time_image(spec)))
    write_matrix_csv(paths["mfcc.csv"], features)
    with open(paths["mfcc.pgm"], "wb") as fh:
        fh.write(encode_pgm(_time_image(features)))
    return paths
