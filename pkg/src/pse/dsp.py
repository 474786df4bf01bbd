"""Windowed framing, STFT, and overlap-add inverse reconstruction.

Every consumer (time-frequency masking, SNR features, segmental metrics)
shares one framing convention, fixed here:

* frame ``j`` covers samples ``[H*j, H*j + N - 1]``; frame 0 starts at
  sample 0 with no centering or pre-padding,
* the tail is zero-padded, so a length-``L`` signal always yields
  ``ceil(L / H)`` frames,
* the analysis window is a length-``N`` Hann, applied before the DFT,
* the DFT is the unnormalized forward transform (``numpy.fft.rfft``,
  ``N/2 + 1`` non-negative bins); the inverse carries the ``1/N`` factor,
  so per-frame energies satisfy ``sum_k c_k |X_k|^2 == N * sum_i x_i^2``
  with ``c_k = 2`` except ``c_0 = c_{N/2} = 1``,
* the inverse transform applies the same Hann as a synthesis window and
  normalizes by the accumulated squared window, which cancels exactly
  wherever window coverage is nonzero.

All functions are pure and operate on immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 16000

# Samples whose accumulated squared-window coverage falls below this fraction
# of the peak coverage cannot be reconstructed reliably (the analysis window
# was near zero there, so division would amplify spectral leakage without
# bound); overlap-add outputs zero for them. With the default Hann/1024/256
# setup this affects only the first ~128 samples of a signal.
REL_COVERAGE_FLOOR = 1e-2


def live_coverage(coverage: np.ndarray) -> np.ndarray:
    """Boolean mask of samples with enough window coverage to normalize."""
    return coverage > max(1e-12, REL_COVERAGE_FLOOR * float(coverage.max()))


def _as_signal(samples) -> np.ndarray:
    out = np.array(samples, dtype=np.float64, copy=True)
    if out.ndim != 1:
        raise ValueError(f"expected a 1-D sample array, got shape {out.shape}")
    if out.size == 0:
        raise ValueError("empty signal")
    if not np.all(np.isfinite(out)):
        raise ValueError("signal contains NaN or Inf samples")
    return out


@dataclass(frozen=True)
class Waveform:
    """A finite, real-valued, uniformly sampled signal."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = _as_signal(self.samples)
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        if not isinstance(self.sample_rate, (int, np.integer)) or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size


def require_same_rate(*waveforms: Waveform) -> None:
    rates = {w.sample_rate for w in waveforms}
    if len(rates) > 1:
        raise ValueError(f"mismatched sample rates: {sorted(rates)}")


def hann_window(frame_size: int) -> np.ndarray:
    return np.hanning(frame_size)


@dataclass(frozen=True)
class SegmentalConfig:
    """Frame size, hop, and analysis window shared by all framed operations."""

    frame_size: int = 1024
    hop: int = 256
    window: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.frame_size <= 0:
            raise ValueError("frame_size must be positive")
        if not 0 < self.hop <= self.frame_size:
            raise ValueError(f"hop must satisfy 0 < hop <= frame_size, got {self.hop}")
        window = self.window
        if window is None:
            window = hann_window(self.frame_size)
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (self.frame_size,):
            raise ValueError(f"window must have length {self.frame_size}, got {window.shape}")
        if window.min() < 0.0 or window.max() > 1.0:
            raise ValueError("window coefficients must lie in [0, 1]")
        window = window.copy()
        window.flags.writeable = False
        object.__setattr__(self, "window", window)

    @property
    def num_bins(self) -> int:
        return self.frame_size // 2 + 1


@dataclass(frozen=True)
class Spectrogram:
    """Complex time-frequency representation: (frame_count, N/2 + 1) bins."""

    bins: np.ndarray
    config: SegmentalConfig

    def __post_init__(self):
        bins = np.array(self.bins, dtype=np.complex128, copy=True)
        if bins.ndim != 2:
            raise ValueError(f"expected 2-D bins, got shape {bins.shape}")
        if bins.shape[1] != self.config.num_bins:
            raise ValueError(
                f"expected {self.config.num_bins} frequency bins, got {bins.shape[1]}"
            )
        if not np.all(np.isfinite(bins)):
            raise ValueError("spectrogram contains non-finite entries")
        bins.flags.writeable = False
        object.__setattr__(self, "bins", bins)

    @property
    def num_frames(self) -> int:
        return self.bins.shape[0]


def frame_count(length: int, config: SegmentalConfig) -> int:
    """Number of frames covering a length-``length`` signal: ``ceil(L / H)``."""
    if length <= 0:
        raise ValueError(f"signal length must be positive, got {length}")
    return -(-int(length) // config.hop)


def frame_signal(samples: np.ndarray, config: SegmentalConfig) -> np.ndarray:
    """Windowed frame matrix (J, N) with the tail zero-padded."""
    samples = np.asarray(samples, dtype=np.float64)
    length = samples.size
    count = frame_count(length, config)
    n, hop = config.frame_size, config.hop
    padded = np.zeros((count - 1) * hop + n, dtype=np.float64)
    padded[:length] = samples
    stride = padded.strides[0]
    frames = np.lib.stride_tricks.as_strided(
        padded, shape=(count, n), strides=(hop * stride, stride), writeable=False
    )
    return frames * config.window


def extract_frame(x: Waveform, j: int, config: SegmentalConfig) -> np.ndarray:
    """Windowed frame ``j``: ``w * x[H*j : H*j + N]`` with zero-padded tail."""
    count = frame_count(len(x), config)
    if not 0 <= j < count:
        raise ValueError(f"frame index {j} out of range [0, {count})")
    start = j * config.hop
    segment = np.zeros(config.frame_size, dtype=np.float64)
    chunk = x.samples[start : start + config.frame_size]
    segment[: chunk.size] = chunk
    return segment * config.window


def stft(x: Waveform, config: SegmentalConfig) -> Spectrogram:
    """Forward transform: row ``j`` is the rfft of the windowed frame ``j``."""
    frames = frame_signal(x.samples, config)
    return Spectrogram(np.fft.rfft(frames, axis=1), config)


def overlap_add(frames: np.ndarray, config: SegmentalConfig, length: int) -> np.ndarray:
    """Weighted overlap-add of time-domain frames, normalized by window energy.

    Under-covered samples (see ``live_coverage``) come out as zero.
    """
    frames = np.asarray(frames, dtype=np.float64)
    count, n = frames.shape
    hop, window = config.hop, config.window
    total = (count - 1) * hop + n
    acc = np.zeros(total, dtype=np.float64)
    coverage = np.zeros(total, dtype=np.float64)
    wsq = window * window
    for j in range(count):
        start = j * hop
        acc[start : start + n] += window * frames[j]
        coverage[start : start + n] += wsq
    out = np.zeros(length, dtype=np.float64)
    usable = min(length, total)
    ok = live_coverage(coverage)[:usable]
    out[:usable][ok] = acc[:usable][ok] / coverage[:usable][ok]
    return out


def istft(spec: Spectrogram, length: int) -> Waveform:
    """Inverse transform by synthesis-windowed overlap-add, cut to ``length``."""
    expected = frame_count(length, spec.config)
    if expected != spec.num_frames:
        raise ValueError(
            f"length {length} implies {expected} frames, spectrogram has {spec.num_frames}"
        )
    frames = np.fft.irfft(spec.bins, n=spec.config.frame_size, axis=1)
    return Waveform(overlap_add(frames, spec.config, length))
