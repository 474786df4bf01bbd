"""Test-time measurement: SI-SDR improvement on held-out mixtures.

Evaluation mixtures combine held-out speaker utterances with held-out
training-family noise clips at mixture SNRs in the configured range; the
premixture-noise family is never read here. Mixture generation is a pure
function of (corpora, seed, mixture index), so repeated runs give identical
CSVs.

Aggregates use linear interpolation between closest ranks for quartiles.
The comparison table carries two granularities: statistics over per-speaker
mean improvements, and statistics over all mixtures pooled; every aggregate
is recomputable from the emitted rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Corpus, sample_segment, scale_to_snr
from .dsp import SegmentalConfig, Spectrogram, Waveform, stft
from .metrics import si_sdr
from .neural import ModelParams, forward_mask, features, apply_mask_and_reconstruct, load_checkpoint

MODE_DISPLAY = {
    "se": "SE",
    "pse": "PSE",
    "pse-dp": "PSE+DP",
    "se-pse": "SE->PSE",
    "se-pse-dp": "SE->PSE+DP",
}
MODE_ORDER = ("SE", "PSE", "PSE+DP", "SE->PSE", "SE->PSE+DP")

_STATS = ("mean", "median", "q1", "q3", "min", "max")


@dataclass(frozen=True)
class EvalResult:
    speaker_id: str
    config_label: str
    hidden_dim: int
    input_sisdr: np.ndarray
    output_sisdr: np.ndarray

    @property
    def improvement(self) -> np.ndarray:
        return self.output_sisdr - self.input_sisdr

    @property
    def mean_improvement(self) -> float:
        return float(np.mean(self.improvement))

    def aggregates(self) -> dict:
        return summarize(self.improvement)


def summarize(values) -> dict:
    values = np.asarray(values, dtype=np.float64)
    return {
        "mean": float(np.mean(values)),
        "median": float(np.median(values)),
        "q1": float(np.percentile(values, 25)),
        "q3": float(np.percentile(values, 75)),
        "min": float(np.min(values)),
        "max": float(np.max(values)),
    }


def checkpoint_denoiser(params: ModelParams):
    """Wrap mask-model parameters as a denoising mask function."""

    def mask_fn(spec: Spectrogram, clean=None, scaled_noise=None):
        return forward_mask(params, features(spec))

    return mask_fn


def identity_denoiser(spec: Spectrogram, clean=None, scaled_noise=None):
    return np.ones(spec.bins.shape)


def oracle_denoiser(spec: Spectrogram, clean: Waveform, scaled_noise: Waveform):
    """Magnitude-ratio mask computed from the known mixture components."""
    clean_mag = np.abs(stft(clean, spec.config).bins)
    noise_mag = np.abs(stft(scaled_noise, spec.config).bins)
    return clean_mag / (clean_mag + noise_mag + 1e-12)


def eval_mixture(speech: Corpus, noise: Corpus, seed: int, index: int,
                 mix_snr_range, segment_length: int):
    """Deterministic (clean, scaled noise, mixture) triple for one index."""
    rng = np.random.default_rng([seed, index])
    s = sample_segment(speech, rng, segment_length)
    n = sample_segment(noise, rng, segment_length)
    snr = float(rng.uniform(*mix_snr_range))
    scaled = scale_to_snr(s, n, snr)
    x = Waveform(s.samples + scaled.samples)
    return s, scaled, x


def evaluate(
    mask_fn,
    speech: Corpus,
    noise: Corpus,
    num_mixtures: int,
    seed: int,
    *,
    segmental: SegmentalConfig | None = None,
    mix_snr_range=(-5.0, 5.0),
    segment_length: int = 16000,
    speaker_id: str = "",
    config_label: str = "",
    hidden_dim: int = 0,
) -> EvalResult:
    """Run the denoiser over deterministic held-out mixtures, score SI-SDR."""
    if num_mixtures <= 0:
        raise ValueError("num_mixtures must be positive")
    segmental = segmental or SegmentalConfig()
    inputs = np.empty(num_mixtures)
    outputs = np.empty(num_mixtures)
    for i in range(num_mixtures):
        s, scaled, x = eval_mixture(speech, noise, seed, i, mix_snr_range, segment_length)
        spec = stft(x, segmental)
        mask = mask_fn(spec, s, scaled)
        y = apply_mask_and_reconstruct(spec, mask, len(x))
        inputs[i] = si_sdr(s, x)
        outputs[i] = si_sdr(s, y)
    return EvalResult(speaker_id, config_label, hidden_dim, inputs, outputs)


def evaluate_checkpoint(checkpoint_path, speech, noise, num_mixtures, seed, **kwargs) -> EvalResult:
    params, extra = load_checkpoint(checkpoint_path)
    kwargs.setdefault("config_label", MODE_DISPLAY.get(extra.get("mode", ""), extra.get("mode", "")))
    kwargs.setdefault("hidden_dim", params.config.hidden_dim)
    return evaluate(checkpoint_denoiser(params), speech, noise, num_mixtures, seed, **kwargs)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def write_eval_csv(path, result: EvalResult) -> None:
    """Per-mixture rows plus an aggregate block, dB at 4 decimals."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(
            ["row_type", "speaker_id", "config", "hidden_dim", "index_or_stat",
             "input_sisdr_db", "output_sisdr_db", "sisdri_db"]
        )
        for i in range(len(result.input_sisdr)):
            w.writerow(
                ["mixture", result.speaker_id, result.config_label, result.hidden_dim, i,
                 _fmt(result.input_sisdr[i]), _fmt(result.output_sisdr[i]),
                 _fmt(result.improvement[i])]
            )
        in_stats = summarize(result.input_sisdr)
        out_stats = summarize(result.output_sisdr)
        imp_stats = result.aggregates()
        for stat in _STATS:
            w.writerow(
                ["aggregate", result.speaker_id, result.config_label, result.hidden_dim,
                 stat, _fmt(in_stats[stat]), _fmt(out_stats[stat]), _fmt(imp_stats[stat])]
            )


def read_eval_csv(path):
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def _config_sort_key(label: str, hidden: int):
    order = MODE_ORDER.index(label) if label in MODE_ORDER else len(MODE_ORDER)
    return (hidden, order)


def aggregate_suite(results) -> dict:
    """Comparison table: per-speaker means plus two aggregate granularities."""
    results = list(results)
    if not results:
        raise ValueError("no evaluation results to aggregate")
    per_speaker = [
        {
            "config": r.config_label,
            "hidden_dim": r.hidden_dim,
            "speaker_id": r.speaker_id,
            "mean_sisdri": r.mean_improvement,
        }
        for r in sorted(
            results, key=lambda r: (*_config_sort_key(r.config_label, r.hidden_dim), r.speaker_id)
        )
    ]
    cells = sorted(
        {(r.config_label, r.hidden_dim) for r in results},
        key=lambda c: _config_sort_key(*c),
    )
    speaker_means = {}
    pooled = {}
    for label, hidden in cells:
        group = [r for r in results if (r.config_label, r.hidden_dim) == (label, hidden)]
        speaker_means[(label, hidden)] = summarize([r.mean_improvement for r in group])
        pooled[(label, hidden)] = summarize(np.concatenate([r.improvement for r in group]))
    return {"per_speaker": per_speaker, "speaker_means": speaker_means, "pooled": pooled}


def write_comparison_csv(path, table: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["section", "config", "hidden_dim", "speaker_id", "stat", "value_db"])
        for row in table["per_speaker"]:
            w.writerow(
                ["per_speaker", row["config"], row["hidden_dim"], row["speaker_id"],
                 "mean_sisdri", _fmt(row["mean_sisdri"])]
            )
        for section, stats_by_cell in (
            ("aggregate_speaker_means", table["speaker_means"]),
            ("aggregate_pooled", table["pooled"]),
        ):
            for (label, hidden), stats in stats_by_cell.items():
                for stat in _STATS:
                    w.writerow([section, label, hidden, "", stat, _fmt(stats[stat])])


def format_summary_table(table: dict) -> str:
    """Human-readable per-size mean improvement, modes in fixed order."""
    hiddens = sorted({hidden for _, hidden in table["speaker_means"]})
    lines = ["mean SI-SDR improvement (dB) over per-speaker means"]
    header = f"{'config':<12}" + "".join(f"h={h:<8}" for h in hiddens)
    lines.append(header)
    for label in MODE_ORDER:
        cells = []
        for hidden in hiddens:
            stats = table["speaker_means"].get((label, hidden))
            cells.append(f"{stats['mean']:<10.4f}" if stats else f"{'-':<10}")
        if any(c.strip() != "-" for c in cells):
            lines.append(f"{label:<12}" + "".join(cells))
    return "\n".join(lines) + "\n"
