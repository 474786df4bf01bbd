"""Loss functions and quality measures.

Segmental SNR values are clamped to [-30, +30] dB so regression targets stay
finite and bounded; SI-SDR is clamped to [-60, +60] dB so perfect (or
catastrophic) reconstructions do not poison aggregate statistics. Frames
where both signal and residual energy fall below 1e-12 are scored 0 dB,
which the logistic converts to a neutral 0.5 weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import SegmentalConfig, Waveform, frame_count, frame_signal, require_same_rate

SEGSNR_CLAMP_DB = 30.0
SI_SDR_CLAMP_DB = 60.0
SILENT_ENERGY = 1e-12


def _check_pair(target: Waveform, estimate: Waveform) -> None:
    require_same_rate(target, estimate)
    if len(target) != len(estimate):
        raise ValueError(f"length mismatch: target {len(target)}, estimate {len(estimate)}")


def mse(target: Waveform, estimate: Waveform) -> float:
    """Time-domain mean squared error, averaged over samples."""
    _check_pair(target, estimate)
    diff = target.samples - estimate.samples
    return float(np.mean(diff * diff))


@dataclass(frozen=True)
class SegSnrVector:
    """Per-frame SNRs in dB, clamped to [-30, +30]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 1:
            raise ValueError("per-frame SNRs must be 1-D")
        if not np.all(np.isfinite(values)):
            raise ValueError("per-frame SNRs must be finite")
        if np.any(np.abs(values) > SEGSNR_CLAMP_DB + 1e-12):
            raise ValueError(f"per-frame SNRs must lie in [-{SEGSNR_CLAMP_DB}, {SEGSNR_CLAMP_DB}]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class PurificationWeights:
    """Per-frame SNR estimates (dB logits) and their logistic weights."""

    alpha_hat: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha_hat, dtype=np.float64, copy=True)
        p = np.array(self.p, dtype=np.float64, copy=True)
        if alpha.shape != p.shape or alpha.ndim != 1:
            raise ValueError("alpha_hat and p must be matching 1-D vectors")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(p))):
            raise ValueError("purification weights must be finite")
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise ValueError("weights must lie strictly inside (0, 1)")
        alpha.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "alpha_hat", alpha)
        object.__setattr__(self, "p", p)

    def __len__(self) -> int:
        return self.p.size


def frame_energies(samples: np.ndarray, config: SegmentalConfig) -> np.ndarray:
    frames = frame_signal(samples, config)
    return np.sum(frames * frames, axis=1)


def segmental_snr(
    target: Waveform, estimate: Waveform, config: SegmentalConfig
) -> SegSnrVector:
    """Frame-by-frame SNR of ``estimate`` against ``target`` in dB.

    Per frame: 10*log10(windowed target energy / windowed residual energy),
    residual = target - estimate, clamped to +/-30 dB. Frames where both
    energies sit below 1e-12 score 0 dB.
    """
    _check_pair(target, estimate)
    signal_e = frame_energies(target.samples, config)
    residual_e = frame_energies(target.samples - estimate.samples, config)

    values = np.zeros(signal_e.size, dtype=np.float64)
    silent = (signal_e < SILENT_ENERGY) & (residual_e < SILENT_ENERGY)
    zero_den = (residual_e == 0.0) & ~silent
    zero_num = (signal_e == 0.0) & ~silent & ~zero_den
    regular = ~silent & ~zero_den & ~zero_num
    values[zero_den] = SEGSNR_CLAMP_DB
    values[zero_num] = -SEGSNR_CLAMP_DB
    values[regular] = 10.0 * np.log10(signal_e[regular] / residual_e[regular])
    np.clip(values, -SEGSNR_CLAMP_DB, SEGSNR_CLAMP_DB, out=values)
    return SegSnrVector(values)


def logistic_weights(alpha_hat: np.ndarray) -> PurificationWeights:
    """Convert per-frame dB logits to weights: p = 1 / (1 + exp(-alpha))."""
    alpha = np.asarray(alpha_hat, dtype=np.float64)
    if alpha.ndim != 1:
        raise ValueError("alpha_hat must be a 1-D vector")
    if not np.all(np.isfinite(alpha)):
        raise ValueError("alpha_hat contains NaN or Inf")
    p = 1.0 / (1.0 + np.exp(-alpha))
    return PurificationWeights(alpha, p)


def segmental_mse(
    target: Waveform,
    estimate: Waveform,
    weights: np.ndarray,
    config: SegmentalConfig,
) -> float:
    """Weighted mean of per-frame windowed MSEs.

    (1/J) * sum_j p_j * (1/N) * sum_i (w_i*target_i - w_i*estimate_i)^2,
    frame index ranges and tail padding as in the shared framing convention.
    """
    _check_pair(target, estimate)
    p = np.asarray(weights, dtype=np.float64)
    count = frame_count(len(target), config)
    if p.shape != (count,):
        raise ValueError(f"expected {count} weights, got shape {p.shape}")
    diff_frames = frame_signal(target.samples, config) - frame_signal(estimate.samples, config)
    per_frame = np.mean(diff_frames * diff_frames, axis=1)
    return float(np.mean(p * per_frame))


def si_sdr(target: Waveform, estimate: Waveform) -> float:
    """Scale-invariant SDR in dB, clamped to [-60, +60].

    The estimate is projected onto the target; the ratio of projected-target
    energy to residual energy is reported.
    """
    _check_pair(target, estimate)
    s = target.samples
    y = estimate.samples
    s_energy = float(np.dot(s, s))
    if s_energy <= 0.0:
        raise ValueError("target has zero energy")
    scale = float(np.dot(y, s)) / s_energy
    projected = scale * s
    distortion = y - projected
    num = float(np.dot(projected, projected))
    den = float(np.dot(distortion, distortion))
    if num == 0.0:
        return -SI_SDR_CLAMP_DB
    if den == 0.0:
        return SI_SDR_CLAMP_DB
    return float(np.clip(10.0 * np.log10(num / den), -SI_SDR_CLAMP_DB, SI_SDR_CLAMP_DB))
