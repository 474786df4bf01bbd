"""Corpus management and online mixture synthesis.

Corpora are immutable after loading. All stochastic choices are pure
functions of (corpus, seed, draw index): each training example draws from a
fresh generator seeded with ``[seed, index]``, so independent streams can be
regenerated bit-exactly and consumed from multiple threads without
coordination.

The synthetic generator is a desk-scale stand-in for real speech/noise
corpora: per-speaker harmonic voices with formant-like spectral emphasis and
hard inter-syllable gaps, and two noise families with distinct spectral
tilts (a low-heavy family for premixture noise, a flatter one for training
noise).
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, SegmentalConfig, Waveform
from .metrics import SegSnrVector, segmental_snr

ROLE_GENERALIST = "generalist-speech"
ROLE_SPEAKER = "speaker"
ROLE_PREMIX_NOISE = "premixture-noise"
ROLE_TRAIN_NOISE = "training-noise"
SPEECH_ROLES = (ROLE_GENERALIST, ROLE_SPEAKER)
NOISE_ROLES = (ROLE_PREMIX_NOISE, ROLE_TRAIN_NOISE)
_ROLE_CODES = {role: i for i, role in enumerate(SPEECH_ROLES + NOISE_ROLES)}


class WavFormatError(ValueError):
    """File decoded but is not 16-bit PCM mono at 16 kHz."""


class WavParseError(ValueError):
    """File is not a well-formed RIFF/WAVE container."""


@dataclass(frozen=True)
class Clip:
    clip_id: str
    label: str
    waveform: Waveform


@dataclass(frozen=True)
class Corpus:
    role: str
    clips: tuple
    speaker_id: str | None = None

    def __post_init__(self):
        if self.role not in _ROLE_CODES:
            raise ValueError(f"unknown corpus role {self.role!r}")
        object.__setattr__(self, "clips", tuple(self.clips))
        rates = {c.waveform.sample_rate for c in self.clips}
        if rates and rates != {SAMPLE_RATE}:
            raise ValueError(f"all clips must be {SAMPLE_RATE} Hz, got {sorted(rates)}")
        if self.role == ROLE_SPEAKER and self.clips:
            labels = {c.label for c in self.clips}
            if len(labels) > 1:
                raise ValueError(f"speaker corpus mixes identifiers: {sorted(labels)}")
            if self.speaker_id is None:
                object.__setattr__(self, "speaker_id", self.clips[0].label)

    def __len__(self) -> int:
        return len(self.clips)


@dataclass(frozen=True)
class MixSpec:
    """Online-augmentation parameters for one example stream."""

    segment_length: int = SAMPLE_RATE
    premix_snr_range: tuple = (0.0, 15.0)
    mix_snr_range: tuple = (-5.0, 5.0)
    seed: int = 0

    def __post_init__(self):
        if self.segment_length <= 0:
            raise ValueError("segment_length must be positive")
        for name in ("premix_snr_range", "mix_snr_range"):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"{name} must satisfy low <= high, got ({low}, {high})")
            object.__setattr__(self, name, (float(low), float(high)))


@dataclass(frozen=True)
class TrainingExample:
    """One online-synthesized training pair.

    The loss path consumes ``mixture`` and ``target`` only (plus the
    optional oracle frame-SNR labels). The originating clean speech stays
    behind ``clean_reference()`` for evaluation and diagnostics; no training
    code path may call it.
    """

    mixture: Waveform
    target: Waveform
    snr_labels: SegSnrVector | None = None
    _clean: Waveform = field(default=None, repr=False)

    def __post_init__(self):
        lengths = {len(self.mixture), len(self.target)}
        if self._clean is not None:
            lengths.add(len(self._clean))
        if len(lengths) != 1:
            raise ValueError("mixture, target, and clean reference must share one length")

    def clean_reference(self) -> Waveform:
        """Evaluation-only accessor for the hidden clean speech."""
        if self._clean is None:
            raise ValueError("example carries no clean reference")
        return self._clean


def sample_segment(corpus: Corpus, rng: np.random.Generator, segment_length: int = SAMPLE_RATE) -> Waveform:
    """A uniformly chosen clip's uniformly chosen contiguous window.

    Clips shorter than ``segment_length`` are cyclically tiled up to it.
    Draw order: clip index, then (for long-enough clips) window start.
    """
    if len(corpus) == 0:
        raise ValueError(f"cannot sample from empty corpus (role {corpus.role})")
    clip = corpus.clips[int(rng.integers(0, len(corpus)))]
    samples = clip.waveform.samples
    if samples.size >= segment_length:
        start = int(rng.integers(0, samples.size - segment_length + 1))
        window = samples[start : start + segment_length]
    else:
        reps = -(-segment_length // samples.size)
        window = np.tile(samples, reps)[:segment_length]
    return Waveform(window)


def scale_to_snr(signal: Waveform, noise: Waveform, target_snr_db: float) -> Waveform:
    """Scale ``noise`` so the signal-to-noise energy ratio hits the target dB."""
    if len(signal) != len(noise):
        raise ValueError("signal and noise must have equal length")
    signal_e = float(np.dot(signal.samples, signal.samples))
    noise_e = float(np.dot(noise.samples, noise.samples))
    if signal_e <= 0.0:
        raise ValueError("signal has zero energy")
    if noise_e <= 0.0:
        raise ValueError("noise has zero energy")
    gain = math.sqrt(signal_e / (noise_e * 10.0 ** (target_snr_db / 10.0)))
    return Waveform(gain * noise.samples)


def make_premixture(speech: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Speech plus SNR-scaled noise, added sample-wise."""
    return Waveform(speech.samples + scale_to_snr(speech, noise, snr_db).samples)


def make_mixture(base: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Base signal (clean or premixture) plus SNR-scaled training noise."""
    return make_premixture(base, noise, snr_db)


def make_se_example(
    speech: Corpus,
    train_noise: Corpus,
    spec: MixSpec,
    index: int,
    segmental: SegmentalConfig | None = None,
) -> TrainingExample:
    """Fully supervised pair: (mixture, clean target).

    With a segmental config, the clamped frame SNRs of the mixture against
    the clean speech are attached as labels (the regression target for SNR
    prediction).
    """
    rng = np.random.default_rng([spec.seed, index])
    s = sample_segment(speech, rng, spec.segment_length)
    n = sample_segment(train_noise, rng, spec.segment_length)
    snr = float(rng.uniform(*spec.mix_snr_range))
    x = make_mixture(s, n, snr)
    labels = segmental_snr(s, x, segmental) if segmental is not None else None
    return TrainingExample(mixture=x, target=s, snr_labels=labels, _clean=s)


def make_pse_example(
    speaker: Corpus,
    premix_noise: Corpus,
    train_noise: Corpus,
    spec: MixSpec,
    index: int,
    segmental: SegmentalConfig | None = None,
) -> TrainingExample:
    """Self-supervised pair: (doubly corrupted mixture, premixture target).

    The target is the pseudo-source (speech + premixture noise); the clean
    speech never reaches the training pair. With a segmental config, the
    true frame SNRs of the premixture are attached as oracle purification
    labels for upper-bound experiments.
    """
    rng = np.random.default_rng([spec.seed, index])
    s = sample_segment(speaker, rng, spec.segment_length)
    m = sample_segment(premix_noise, rng, spec.segment_length)
    premix_snr = float(rng.uniform(*spec.premix_snr_range))
    pseudo_source = make_premixture(s, m, premix_snr)
    n = sample_segment(train_noise, rng, spec.segment_length)
    mix_snr = float(rng.uniform(*spec.mix_snr_range))
    x = make_mixture(pseudo_source, n, mix_snr)
    labels = segmental_snr(s, pseudo_source, segmental) if segmental is not None else None
    return TrainingExample(mixture=x, target=pseudo_source, snr_labels=labels, _clean=s)


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------

_SPEECH_PEAK = 0.5
_NOISE_PEAK = 0.5
# (spectral tilt exponent, burst rate Hz, burst depth) per noise family
_NOISE_FAMILIES = {
    ROLE_PREMIX_NOISE: (-1.3, 2.5, 0.85),
    ROLE_TRAIN_NOISE: (-0.35, 6.0, 0.6),
}


def speaker_voice(profile: int) -> tuple[float, float]:
    """(fundamental Hz, formant-center Hz) for a synthetic speaker profile."""
    return 95.0 + 55.0 * profile, 520.0 * (1.45**profile)


def _speech_clip(rng: np.random.Generator, length: int, profile: int) -> np.ndarray:
    f0, formant = speaker_voice(profile)
    sr = SAMPLE_RATE
    t = np.arange(length) / sr

    # slowly drifting pitch contour, integrated to phase
    drift_rate = rng.uniform(0.4, 0.9)
    drift_phase = rng.uniform(0.0, 2.0 * np.pi)
    inst_f0 = f0 * (1.0 + 0.04 * np.sin(2.0 * np.pi * drift_rate * t + drift_phase))
    phase = 2.0 * np.pi * np.cumsum(inst_f0) / sr

    bandwidth = 150.0 + 60.0 * profile
    clip = np.zeros(length)
    for h in range(1, int(6000.0 / f0) + 1):
        freq = h * f0
        resonance = 1.0 / (1.0 + ((freq - formant) / bandwidth) ** 2)
        amp = (0.25 / h + resonance) * rng.uniform(0.8, 1.0)
        clip += amp * np.sin(h * phase + rng.uniform(0.0, 2.0 * np.pi))

    # syllable gating: voiced stretches with hard silence gaps between them
    envelope = np.zeros(length)
    ramp = int(0.012 * sr)
    pos = 0
    while pos < length:
        voiced = int(rng.uniform(0.10, 0.28) * sr)
        level = rng.uniform(0.55, 1.0)
        seg = np.full(min(voiced, length - pos), level)
        if seg.size > 2 * ramp:
            fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
            seg[:ramp] *= fade
            seg[-ramp:] *= fade[::-1]
        envelope[pos : pos + seg.size] = seg
        pos += voiced + int(rng.uniform(0.07, 0.20) * sr)
    clip *= envelope

    peak = np.abs(clip).max()
    if peak > 0.0:
        clip *= _SPEECH_PEAK / peak
    return clip


def _noise_clip(rng: np.random.Generator, length: int, role: str) -> np.ndarray:
    tilt, burst_rate, burst_depth = _NOISE_FAMILIES[role]
    white = rng.standard_normal(length)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(length, d=1.0 / SAMPLE_RATE)
    spectrum *= (1.0 + freqs / 300.0) ** tilt
    shaped = np.fft.irfft(spectrum, n=length)

    # burst envelope: random per-segment levels, smoothed
    seg = max(1, int(SAMPLE_RATE / burst_rate))
    nseg = -(-length // seg)
    levels = rng.uniform(1.0 - burst_depth, 1.0, nseg)
    envelope = np.repeat(levels, seg)[:length]
    kernel = np.hanning(max(3, seg // 2))
    envelope = np.convolve(envelope, kernel / kernel.sum(), mode="same")
    shaped *= 0.2 + envelope

    peak = np.abs(shaped).max()
    if peak > 0.0:
        shaped *= _NOISE_PEAK / peak
    return shaped


def generate_synthetic_corpus(
    role: str,
    num_clips: int,
    clip_length: int,
    speaker_profile: int = 0,
    seed: int = 0,
) -> Corpus:
    """Deterministic pseudo-speech or pseudo-noise corpus.

    Same arguments give a bit-identical corpus; distinct speaker profiles
    give spectrally distinct voices.
    """
    if num_clips <= 0:
        raise ValueError("num_clips must be positive")
    if clip_length <= 0:
        raise ValueError("clip_length must be positive")
    if role not in _ROLE_CODES:
        raise ValueError(f"unknown corpus role {role!r}")

    clips = []
    speech = role in SPEECH_ROLES
    label = f"spk{speaker_profile:02d}" if speech else role
    for i in range(num_clips):
        rng = np.random.default_rng([seed, _ROLE_CODES[role], speaker_profile, i])
        if speech:
            samples = _speech_clip(rng, clip_length, speaker_profile)
        else:
            samples = _noise_clip(rng, clip_length, role)
        clips.append(Clip(f"{label}_clip{i:03d}", label, Waveform(samples)))
    speaker_id = label if role == ROLE_SPEAKER else None
    return Corpus(role=role, clips=tuple(clips), speaker_id=speaker_id)


def merge_corpora(corpora, role: str = ROLE_GENERALIST) -> Corpus:
    """Pool clips from several corpora (e.g. build a generalist pool)."""
    clips = []
    for c in corpora:
        clips.extend(c.clips)
    return Corpus(role=role, clips=tuple(clips))


# ---------------------------------------------------------------------------
# WAV and manifest I/O
# ---------------------------------------------------------------------------


def save_wav(path, w: Waveform) -> None:
    """Write 16-bit PCM mono RIFF/WAVE; amplitudes quantized by 32768."""
    ints = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(w.sample_rate)
        f.writeframes(ints.tobytes())


def load_wav(path) -> Waveform:
    """Read 16-bit PCM mono 16 kHz RIFF/WAVE; amplitudes mapped to [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as f:
            channels = f.getnchannels()
            width = f.getsampwidth()
            rate = f.getframerate()
            if channels != 1:
                raise WavFormatError(f"{path}: expected mono, got {channels} channels")
            if width != 2:
                raise WavFormatError(f"{path}: expected 16-bit samples, got {8 * width}-bit")
            if rate != SAMPLE_RATE:
                raise WavFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
            raw = f.readframes(f.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavParseError(f"{path}: malformed WAVE file ({exc})") from exc
    ints = np.frombuffer(raw, dtype="<i2")
    if ints.size == 0:
        raise WavParseError(f"{path}: no audio frames")
    return Waveform(ints.astype(np.float64) / 32768.0)


def write_manifest(path, entries) -> None:
    """One clip per line: ``<relative_path>\\t<speaker_or_noise_id>``."""
    lines = [f"{rel}\t{label}\n" for rel, label in entries]
    Path(path).write_text("".join(lines), encoding="utf-8", newline="\n")


def read_manifest(path):
    entries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected '<path>\\t<id>', got {line!r}")
        entries.append((parts[0], parts[1]))
    return entries


def load_corpus(manifest_path, role: str) -> Corpus:
    """Load every clip listed in a manifest; paths resolve against it."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    clips = tuple(
        Clip(rel, label, load_wav(base / rel)) for rel, label in read_manifest(manifest_path)
    )
    return Corpus(role=role, clips=clips)


def split_manifest(manifest_path, train_path, eval_path, train_fraction: float = 0.8) -> None:
    """Split a manifest into disjoint train/eval manifests, in listed order."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    entries = read_manifest(manifest_path)
    if len(entries) < 2:
        raise ValueError(f"{manifest_path}: need at least 2 clips to split")
    cut = max(1, min(len(entries) - 1, round(train_fraction * len(entries))))
    write_manifest(train_path, entries[:cut])
    write_manifest(eval_path, entries[cut:])


def manifest_overlap(entries_a, entries_b):
    """Clip paths appearing in both manifests (order of first manifest)."""
    paths_b = {rel for rel, _ in entries_b}
    return [rel for rel, _ in entries_a if rel in paths_b]
