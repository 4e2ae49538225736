"""Classifier input features: mel spectrograms and MFCC vectors.

A 661-sample window under the default STFT settings (256-point FFT, hop
64, periodic Hann) yields 7 frames; 64 mel bands give the 64x7 matrix the
CNN consumes. The GMM baseline takes 20 frame-averaged MFCCs computed from
the same log-mel matrix before normalization.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import FormatError, ParameterError

LOG_FLOOR = 1e-10
N_MELS = 64
N_FRAMES = 7
WINDOW_LEN = 661
N_MFCC = 20


@dataclass(frozen=True)
class StftSpec:
    n_fft: int = 256
    hop: int = 64

    def validate(self) -> None:
        if self.n_fft < 2 or self.n_fft & (self.n_fft - 1):
            raise ParameterError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise ParameterError(f"hop must lie in [1, n_fft], got {self.hop}")

    def n_frames(self, window_len: int) -> int:
        return (window_len - self.n_fft) // self.hop + 1


def hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(window: np.ndarray, spec: StftSpec = StftSpec()) -> np.ndarray:
    """Short-time Fourier transform, bins x frames, no centering.

    Frame t covers samples [t*hop, t*hop + n_fft); each frame is Hann
    windowed and only the non-negative-frequency bins are kept.
    """
    spec.validate()
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 1 or x.size < spec.n_fft:
        raise ParameterError(
            f"window of {x.size} samples is shorter than n_fft={spec.n_fft}"
        )
    n_frames = spec.n_frames(x.size)
    win = hann_periodic(spec.n_fft)
    frames = np.stack(
        [x[t * spec.hop : t * spec.hop + spec.n_fft] for t in range(n_frames)]
    )
    return np.fft.rfft(frames * win, axis=1).T


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _triangle_cell_average(fl: float, fc: float, fr: float, a: float, b: float) -> float:
    """Exact average of the unit triangle (fl, fc, fr) over the interval [a, b]."""

    def seg(lo: float, hi: float, y_lo: float, y_hi: float, u: float, v: float) -> float:
        # integral of the linear segment over [u, v] clipped to [lo, hi]
        u, v = max(u, lo), min(v, hi)
        if v <= u:
            return 0.0
        slope = (y_hi - y_lo) / (hi - lo)
        gu = y_lo + slope * (u - lo)
        gv = y_lo + slope * (v - lo)
        return 0.5 * (gu + gv) * (v - u)

    total = seg(fl, fc, 0.0, 1.0, a, b) + seg(fc, fr, 1.0, 0.0, a, b)
    return total / (b - a)


def mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = 256,
    sample_rate: int = 44100,
    f_min: float = 0.0,
    f_max: float | None = None,
) -> np.ndarray:
    """Triangular mel filterbank, (n_mels, n_fft//2 + 1).

    Filter peaks are equally spaced on the mel scale with 50% overlap and
    every triangle peaks at 1. Weights are the triangle's average over each
    FFT bin's frequency cell rather than a point sample at the bin center;
    a point sample leaves the narrow low-frequency triangles without any
    bin at this resolution, and every band must stay live.
    """
    if f_max is None:
        f_max = sample_rate / 2.0
    if not 0.0 <= f_min < f_max <= sample_rate / 2.0:
        raise ParameterError(
            f"need 0 <= f_min < f_max <= Nyquist, got f_min={f_min}, f_max={f_max}"
        )
    if n_mels < 1:
        raise ParameterError(f"n_mels must be >= 1, got {n_mels}")
    edges = np.asarray(mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)))
    n_bins = n_fft // 2 + 1
    cell = sample_rate / n_fft
    centers = np.arange(n_bins) * cell
    fb = np.zeros((n_mels, n_bins))
    for j in range(n_mels):
        fl, fc, fr = edges[j], edges[j + 1], edges[j + 2]
        lo = max(0, int((fl - cell / 2) // cell))
        hi = min(n_bins - 1, int((fr + cell / 2) // cell) + 1)
        for k in range(lo, hi + 1):
            a, b = centers[k] - cell / 2, centers[k] + cell / 2
            if b > fl and a < fr:
                fb[j, k] = _triangle_cell_average(fl, fc, fr, a, b)
    empty = np.flatnonzero(fb.sum(axis=1) <= 0.0)
    if empty.size:
        raise ParameterError(
            f"{empty.size} empty mel filters at this resolution: indices {empty.tolist()}"
        )
    return fb


_FB_CACHE: dict[tuple, np.ndarray] = {}


def _cached_filterbank(spec: StftSpec, sample_rate: int, n_mels: int) -> np.ndarray:
    key = (n_mels, spec.n_fft, sample_rate)
    if key not in _FB_CACHE:
        _FB_CACHE[key] = mel_filterbank(n_mels=n_mels, n_fft=spec.n_fft, sample_rate=sample_rate)
    return _FB_CACHE[key]


def log_mel(
    window: np.ndarray,
    spec: StftSpec = StftSpec(),
    sample_rate: int = 44100,
    n_mels: int = N_MELS,
) -> np.ndarray:
    """Log-compressed mel power matrix (n_mels, n_frames), no normalization."""
    power = np.square(np.abs(stft(window, spec)))
    fb = _cached_filterbank(spec, sample_rate, n_mels)
    return np.log(fb @ power + LOG_FLOOR)


def normalize_cells(values: np.ndarray) -> np.ndarray:
    """Z-score over all cells (population std). Constant input maps to zeros."""
    mean = float(np.mean(values))
    std = float(np.std(values))
    if std <= 1e-12 * max(1.0, abs(mean)):
        return np.zeros_like(values)
    return (values - mean) / std


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray
    normalized: bool

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


def mel_spectrogram(
    window: np.ndarray,
    spec: StftSpec = StftSpec(),
    sample_rate: int = 44100,
    n_mels: int = N_MELS,
) -> MelSpectrogram:
    """Normalized log-mel spectrogram of one onset-aligned window."""
    return MelSpectrogram(
        values=normalize_cells(log_mel(window, spec, sample_rate, n_mels)), normalized=True
    )


def mfcc(
    window: np.ndarray,
    spec: StftSpec = StftSpec(),
    n_coeffs: int = N_MFCC,
    sample_rate: int = 44100,
    n_mels: int = N_MELS,
) -> np.ndarray:
    """Frame-averaged mel-frequency cepstral coefficients.

    Orthonormal DCT-II along the mel axis of the pre-normalization log-mel
    matrix, truncated to ``n_coeffs`` and averaged across frames.
    """
    return mfcc_from_cells(log_mel(window, spec, sample_rate, n_mels), n_coeffs)


def mfcc_from_cells(cells: np.ndarray, n_coeffs: int = N_MFCC) -> np.ndarray:
    coeffs = dct(np.asarray(cells, dtype=np.float64), type=2, axis=0, norm="ortho")
    return coeffs[:n_coeffs].mean(axis=1)


# --- Feature container (TTFE1) -------------------------------------------------

FEATURE_MAGIC = b"TTFE1"
_CELL_COUNT = N_MELS * N_FRAMES  # 448
_RECORD_PAYLOAD = 2 + 4 * _CELL_COUNT


@dataclass(frozen=True)
class FeatureRecord:
    """One labeled window: class ids plus its pre-normalization log-mel cells.

    ``spin`` is -1 when the window has no spin label. Cells are float32,
    row-major band x frame; consumers z-score them for the CNN/SVM and
    DCT them for MFCCs.
    """

    surface: int
    spin: int
    cells: np.ndarray


def write_feature_file(path: str | Path, records: list[FeatureRecord]) -> None:
    """Write records in the TTFE1 container.

    Layout: magic ``TTFE1``, then per record a little-endian uint32 payload
    length followed by surface id (int8), spin id (int8, -1 = none) and 448
    float32 LE cells.
    """
    chunks = [FEATURE_MAGIC]
    for i, rec in enumerate(records):
        cells = np.asarray(rec.cells, dtype="<f4")
        if cells.shape != (N_MELS, N_FRAMES):
            raise ParameterError(
                f"record {i}: cells must be {N_MELS}x{N_FRAMES}, got {cells.shape}"
            )
        payload = struct.pack("<bb", rec.surface, rec.spin) + cells.tobytes(order="C")
        chunks.append(struct.pack("<I", len(payload)) + payload)
    Path(path).write_bytes(b"".join(chunks))


def read_feature_file(path: str | Path) -> list[FeatureRecord]:
    raw = Path(path).read_bytes()
    if raw[: len(FEATURE_MAGIC)] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic, not a TTFE1 feature file")
    records: list[FeatureRecord] = []
    pos = len(FEATURE_MAGIC)
    while pos < len(raw):
        if pos + 4 > len(raw):
            raise FormatError(f"{path}: truncated record length at byte {pos}")
        (size,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        if size < _RECORD_PAYLOAD or pos + size > len(raw):
            raise FormatError(f"{path}: truncated or undersized record at byte {pos}")
        surface, spin = struct.unpack_from("<bb", raw, pos)
        cells = np.frombuffer(raw, dtype="<f4", count=_CELL_COUNT, offset=pos + 2)
        records.append(
            FeatureRecord(surface=surface, spin=spin, cells=cells.reshape(N_MELS, N_FRAMES))
        )
        pos += size  # honor the declared length; tolerate trailing extensions
    return records
