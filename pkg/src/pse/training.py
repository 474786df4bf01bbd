"""The training configurations and their orchestration.

Five denoiser configurations share one loop: the supervised baseline trains
against clean targets; the self-supervised variants train against noisy
pseudo-sources (premixtures), optionally warm-started from a supervised
checkpoint, optionally with frame weighting that purifies the pseudo-source
by down-weighting low-SNR frames. A sixth mode trains the frame-SNR
regressor that supplies those weights.

Every run is a pure function of (corpora, config, seed): parameter init
draws from the config seed, examples from (mix seed, step index, batch
slot), and gradient accumulation follows a fixed order, so repeated runs
produce bit-identical checkpoints.

Purification weights come from the premixture (the stored pseudo-source),
never the doubly corrupted input, and the weight model is frozen: it runs
outside the gradient tape. The self-supervised loss paths read nothing but
``mixture``/``target``/``snr_labels`` from an example; clean speech stays
behind the evaluation-only accessor.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .config import ConfigurationError
from .data import (
    Corpus,
    MixSpec,
    load_corpus,
    make_pse_example,
    make_se_example,
    merge_corpora,
    read_manifest,
    write_manifest,
    ROLE_GENERALIST,
    ROLE_PREMIX_NOISE,
    ROLE_SPEAKER,
    ROLE_TRAIN_NOISE,
)
from .dsp import SegmentalConfig, frame_count
from .evaluation import (
    MODE_DISPLAY,
    aggregate_suite,
    evaluate,
    checkpoint_denoiser,
    format_summary_table,
    write_comparison_csv,
    write_eval_csv,
)
from .neural import (
    AdamState,
    GruConfig,
    ModelParams,
    init_params,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
)
from .neural.model import (
    FEATURE_FLOOR,
    HEAD_MASK,
    HEAD_REGRESSION,
    as_graph_params,
    build_forward,
    forward_snr_batch,
)
from .neural import autodiff as ad

MODES = ("se", "pse", "pse-dp", "se-pse", "se-pse-dp")
ALL_MODES = MODES + ("snr-predictor",)
DP_MODES = ("pse-dp", "se-pse-dp")
WARM_MODES = ("se-pse", "se-pse-dp")
PSE_MODES = ("pse", "pse-dp", "se-pse", "se-pse-dp")

LOSS_TIME_MSE = "time-mse"
LOSS_SEGMENTAL = "segmental"


def derive_seed(*parts) -> int:
    """Stable sub-seed from integer parts (suite cells, eval streams)."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)
    return int(state[0] % (2**63))


@dataclass(frozen=True)
class TrainConfig:
    mode: str
    model: GruConfig
    mix: MixSpec
    steps: int
    lr: float = 1e-3
    batch: int = 16
    seed: int = 0
    segmental: SegmentalConfig = field(default_factory=SegmentalConfig)
    init_checkpoint: str | None = None
    snr_predictor_checkpoint: str | None = None
    pse_loss: str = LOSS_TIME_MSE

    def __post_init__(self):
        if self.mode not in ALL_MODES:
            raise ConfigurationError(f"unknown training mode {self.mode!r}")
        if self.steps < 0 or self.batch <= 0 or self.lr <= 0:
            raise ConfigurationError("steps must be >= 0, batch and lr positive")
        if self.mode in DP_MODES and self.snr_predictor_checkpoint is None:
            raise ConfigurationError(f"mode {self.mode} requires an SNR-predictor checkpoint")
        if self.mode in WARM_MODES and self.init_checkpoint is None:
            raise ConfigurationError(f"mode {self.mode} requires a pretrained checkpoint")
        if self.pse_loss not in (LOSS_TIME_MSE, LOSS_SEGMENTAL):
            raise ConfigurationError(f"unknown pse_loss {self.pse_loss!r}")
        if self.mode != "snr-predictor":
            bins = self.segmental.num_bins
            if self.model.head_kind != HEAD_MASK:
                raise ConfigurationError("denoiser modes need a sigmoid-mask head")
            if self.model.input_dim != bins or self.model.output_dim != bins:
                raise ConfigurationError(
                    f"mask model dims must equal {bins} spectrogram bins"
                )
        else:
            if self.model.head_kind != HEAD_REGRESSION:
                raise ConfigurationError("snr-predictor needs a linear-regression head")
            if self.model.output_dim != 1:
                raise ConfigurationError("snr-predictor emits one value per frame")


@dataclass(frozen=True)
class CorpusBundle:
    generalist: Corpus | None = None
    speaker: Corpus | None = None
    premix_noise: Corpus | None = None
    train_noise: Corpus | None = None

    def require(self, *names):
        for name in names:
            if getattr(self, name) is None:
                raise ConfigurationError(f"mode requires the {name} corpus")


@dataclass
class TrainReport:
    mode: str
    seed: int
    steps: int
    loss_trace: list
    checkpoint_path: str | None
    wall_clock_seconds: float
    config_echo: dict
    params: ModelParams | None = field(default=None, repr=False)

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else float("nan")


def write_report(path, report: TrainReport) -> None:
    lines = {
        "mode": report.mode,
        "seed": report.seed,
        "steps": report.steps,
        **report.config_echo,
        "final_loss": repr(report.final_loss),
        "wall_clock_seconds": f"{report.wall_clock_seconds:.3f}",
        "checkpoint": report.checkpoint_path or "",
        "loss_trace": ",".join(repr(v) for v in report.loss_trace),
    }
    text = "".join(f"{k} = {v}\n" for k, v in lines.items())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    tmp.replace(path)


# ---------------------------------------------------------------------------
# Batch assembly and loss graphs
# ---------------------------------------------------------------------------


def step_major_spectrograms(waves, segmental: SegmentalConfig) -> np.ndarray:
    """(J*B, bins) spectrograms of equal-length waveforms, one rfft pass.

    Rows [j*B : (j+1)*B] hold frame j of every example -- the same layout
    the graph builders and the mask reconstruction op use, so batches flow
    through training without any transposition.
    """
    samples = np.stack([w.samples for w in waves])
    batch, length = samples.shape
    num_frames = frame_count(length, segmental)
    n, hop = segmental.frame_size, segmental.hop
    padded = np.zeros((batch, (num_frames - 1) * hop + n))
    padded[:, :length] = samples
    sb, ss = padded.strides
    frames = np.lib.stride_tricks.as_strided(
        padded, shape=(num_frames, batch, n), strides=(hop * ss, sb, ss), writeable=False
    )
    windowed = (frames * segmental.window).reshape(num_frames * batch, n)
    return sfft.rfft(windowed, axis=1, workers=min(2, os.cpu_count() or 1))


def step_major_features(specs_sm: np.ndarray) -> np.ndarray:
    """Log-magnitude features with the shared floor, same layout as input."""
    return np.log(np.maximum(np.abs(specs_sm), FEATURE_FLOOR))


def batch_windowed_frames(samples: np.ndarray, segmental: SegmentalConfig,
                          num_frames: int) -> np.ndarray:
    """Windowed (B, J, N) frames of stacked equal-length signals."""
    batch, length = samples.shape
    n, hop = segmental.frame_size, segmental.hop
    padded = np.zeros((batch, (num_frames - 1) * hop + n))
    padded[:, :length] = samples
    sb, ss = padded.strides
    frames = np.lib.stride_tricks.as_strided(
        padded, shape=(batch, num_frames, n), strides=(sb, hop * ss, ss), writeable=False
    )
    return frames * segmental.window


def _batch_arrays(examples, segmental: SegmentalConfig):
    """Spectrograms, features, and stacked targets for one batch."""
    specs_sm = step_major_spectrograms([ex.mixture for ex in examples], segmental)
    feats_sm = step_major_features(specs_sm)
    targets = np.stack([ex.target.samples for ex in examples])
    return specs_sm, feats_sm, targets


def _mask_loss_step(params, examples, segmental, loss_kind, weights):
    """Forward + backward for one denoiser batch; returns (loss, grads)."""
    batch = len(examples)
    length = len(examples[0].mixture)
    num_frames = frame_count(length, segmental)
    specs_sm, feats_sm, targets = _batch_arrays(examples, segmental)

    gp = as_graph_params(params)
    masks = build_forward(gp, feats_sm, batch, params.config)
    estimate = ad.masked_overlap_add(masks, specs_sm, segmental, length, batch)
    if loss_kind == LOSS_TIME_MSE:
        loss = ad.mean_all(ad.square(ad.sub(estimate, ad.constant(targets))))
    else:
        target_frames = batch_windowed_frames(targets, segmental, num_frames)
        loss = ad.weighted_segmental_mse(estimate, target_frames, weights, segmental)
    ad.backward(loss)
    grads = {
        name: (gp[name].grad if gp[name].grad is not None else np.zeros_like(t))
        for name, t in params.tensors.items()
    }
    return float(loss.data), grads


def _predictor_loss_step(params, examples, segmental):
    """Forward + backward for one frame-SNR regression batch."""
    batch = len(examples)
    _, feats_sm, _ = _batch_arrays(examples, segmental)
    num_frames = feats_sm.shape[0] // batch
    alphas = np.stack([ex.snr_labels.values for ex in examples])  # (B, J)
    targets_sm = np.ascontiguousarray(alphas.T).reshape(num_frames * batch, 1)

    gp = as_graph_params(params)
    preds = build_forward(gp, feats_sm, batch, params.config)
    loss = ad.mean_all(ad.square(ad.sub(preds, ad.constant(targets_sm))))
    ad.backward(loss)
    grads = {
        name: (gp[name].grad if gp[name].grad is not None else np.zeros_like(t))
        for name, t in params.tensors.items()
    }
    return float(loss.data), grads


# ---------------------------------------------------------------------------
# Purification weight sources (all run outside the gradient tape)
# ---------------------------------------------------------------------------


def predictor_weight_source(predictor: ModelParams, segmental: SegmentalConfig):
    """Frame weights from the frozen SNR predictor applied to the targets.

    The predictor analyses the stored pseudo-sources (premixtures), not the
    doubly corrupted inputs; its estimates pass through the logistic.
    """
    if predictor.config.head_kind != HEAD_REGRESSION:
        raise ConfigurationError("purification weights need a regression-head predictor")

    def weights(examples):
        specs_sm = step_major_spectrograms([ex.target for ex in examples], segmental)
        alpha = forward_snr_batch(predictor, step_major_features(specs_sm), len(examples))
        return 1.0 / (1.0 + np.exp(-alpha))

    return weights


def oracle_weight_source(examples):
    """Logistic of the true premixture frame SNRs carried by the examples."""
    alphas = np.stack([ex.snr_labels.values for ex in examples])
    return 1.0 / (1.0 + np.exp(-alphas))


def constant_weight_source(alpha_db: float):
    """Every frame weighted sigma(alpha_db); the degenerate-limit predictor."""

    def weights(examples):
        num_frames = len(examples[0].snr_labels) if examples[0].snr_labels is not None else None
        if num_frames is None:
            raise ValueError("constant weights need examples with frame labels")
        p = 1.0 / (1.0 + np.exp(-alpha_db))
        return np.full((len(examples), num_frames), p)

    return weights


def uniform_weight_source(examples):
    cfg_frames = len(examples[0].snr_labels)
    return np.ones((len(examples), cfg_frames))


# ---------------------------------------------------------------------------
# Training entry points
# ---------------------------------------------------------------------------


def _load_init(config: TrainConfig) -> ModelParams:
    if config.init_checkpoint is not None:
        params, _ = load_checkpoint(config.init_checkpoint)
        if params.config != config.model:
            raise ConfigurationError(
                "init checkpoint architecture does not match the configured model"
            )
        return params
    return init_params(config.model, config.seed)


def _run_loop(config: TrainConfig, draw, step_fn, out_dir, echo) -> TrainReport:
    params = _load_init(config)
    state = AdamState()
    trace = []
    started = time.perf_counter()
    for step in range(config.steps):
        examples = [draw(step * config.batch + slot) for slot in range(config.batch)]
        loss, grads = step_fn(params, examples)
        optimizer_step(params, grads, state, config.lr)
        trace.append(loss)
    wall = time.perf_counter() - started

    checkpoint_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = str(out_dir / "model.ckpt")
        save_checkpoint(
            checkpoint_path,
            params,
            extra={"mode": config.mode, "seed": config.seed, "steps": config.steps},
        )
    report = TrainReport(
        mode=config.mode,
        seed=config.seed,
        steps=config.steps,
        loss_trace=trace,
        checkpoint_path=checkpoint_path,
        wall_clock_seconds=wall,
        config_echo=echo,
        params=params,
    )
    if out_dir is not None:
        write_report(Path(out_dir) / "report.txt", report)
    return report


def _echo(config: TrainConfig) -> dict:
    return {
        "lr": repr(config.lr),
        "batch": config.batch,
        "hidden_dim": config.model.hidden_dim,
        "num_layers": config.model.num_layers,
        "segment_length": config.mix.segment_length,
        "premix_snr_range": "{},{}".format(*config.mix.premix_snr_range),
        "mix_snr_range": "{},{}".format(*config.mix.mix_snr_range),
        "pse_loss": config.pse_loss,
    }


def train_se(config: TrainConfig, corpora: CorpusBundle, out_dir=None) -> TrainReport:
    """Supervised baseline: clean targets from the generalist pool."""
    corpora.require("generalist", "train_noise")

    def draw(index):
        return make_se_example(corpora.generalist, corpora.train_noise, config.mix, index)

    def step_fn(params, examples):
        return _mask_loss_step(params, examples, config.segmental, LOSS_TIME_MSE, None)

    return _run_loop(config, draw, step_fn, out_dir, _echo(config))


def train_pse(config: TrainConfig, corpora: CorpusBundle, out_dir=None) -> TrainReport:
    """Self-supervised training against premixture pseudo-sources.

    Supports warm starts from a supervised checkpoint and an optional
    segmental (uniform-weight) loss variant.
    """
    corpora.require("speaker", "premix_noise", "train_noise")
    segmental = config.segmental

    def draw(index):
        return make_pse_example(
            corpora.speaker, corpora.premix_noise, corpora.train_noise,
            config.mix, index, segmental,
        )

    if config.pse_loss == LOSS_SEGMENTAL:
        def step_fn(params, examples):
            weights = uniform_weight_source(examples)
            return _mask_loss_step(params, examples, segmental, LOSS_SEGMENTAL, weights)
    else:
        def step_fn(params, examples):
            return _mask_loss_step(params, examples, segmental, LOSS_TIME_MSE, None)

    return _run_loop(config, draw, step_fn, out_dir, _echo(config))


def train_pse_dp(
    config: TrainConfig, corpora: CorpusBundle, out_dir=None, weight_source=None
) -> TrainReport:
    """Purified self-supervised training: frame-weighted segmental loss.

    ``weight_source`` defaults to the frozen predictor named in the config;
    "oracle" uses the true premixture frame SNRs carried by the examples,
    and any callable mapping an example batch to a (batch, frames) weight
    array is accepted.
    """
    corpora.require("speaker", "premix_noise", "train_noise")
    segmental = config.segmental
    if weight_source is None:
        predictor, _ = load_checkpoint(config.snr_predictor_checkpoint)
        weight_source = predictor_weight_source(predictor, segmental)
    elif weight_source == "oracle":
        weight_source = oracle_weight_source

    def draw(index):
        return make_pse_example(
            corpora.speaker, corpora.premix_noise, corpora.train_noise,
            config.mix, index, segmental,
        )

    def step_fn(params, examples):
        weights = weight_source(examples)
        return _mask_loss_step(params, examples, segmental, LOSS_SEGMENTAL, weights)

    return _run_loop(config, draw, step_fn, out_dir, _echo(config))


def train_snr_predictor(config: TrainConfig, corpora: CorpusBundle, out_dir=None) -> TrainReport:
    """Frame-SNR regression on generalist mixtures (never the test speaker)."""
    corpora.require("generalist", "train_noise")
    segmental = config.segmental

    def draw(index):
        return make_se_example(
            corpora.generalist, corpora.train_noise, config.mix, index, segmental
        )

    def step_fn(params, examples):
        return _predictor_loss_step(params, examples, segmental)

    return _run_loop(config, draw, step_fn, out_dir, _echo(config))


_TRAINERS = {
    "se": train_se,
    "pse": train_pse,
    "se-pse": train_pse,
    "pse-dp": train_pse_dp,
    "se-pse-dp": train_pse_dp,
    "snr-predictor": train_snr_predictor,
}


def train(config: TrainConfig, corpora: CorpusBundle, out_dir=None, **kwargs) -> TrainReport:
    return _TRAINERS[config.mode](config, corpora, out_dir, **kwargs)


# ---------------------------------------------------------------------------
# Configuration suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuiteSpec:
    corpus_dir: Path
    speakers: tuple
    hidden_dims: tuple = (32,)
    modes: tuple = MODES
    steps: int = 600
    predictor_steps: int = 800
    predictor_hidden: int = 32
    predictor_layers: int = 2
    lr: float = 1e-3
    batch: int = 8
    eval_mixtures: int = 32
    train_fraction: float = 0.8
    seed: int = 0
    segment_length: int = 16000
    premix_snr_range: tuple = (0.0, 15.0)
    mix_snr_range: tuple = (-5.0, 5.0)
    frame_size: int = 1024
    hop: int = 256
    jobs: int = 1

    def __post_init__(self):
        unknown = [m for m in self.modes if m not in MODES]
        if unknown:
            raise ConfigurationError(f"unknown suite modes: {unknown}")
        if not self.speakers:
            raise ConfigurationError("suite needs at least one speaker")
        if len(self.speakers) < 2:
            raise ConfigurationError(
                "suite needs >= 2 speakers: the generalist pool for each "
                "speaker draws from the others"
            )

    @property
    def segmental(self) -> SegmentalConfig:
        return SegmentalConfig(frame_size=self.frame_size, hop=self.hop)

    def mask_model(self, hidden: int) -> GruConfig:
        bins = self.segmental.num_bins
        return GruConfig(input_dim=bins, hidden_dim=hidden, num_layers=2,
                         output_dim=bins, head_kind=HEAD_MASK)

    def predictor_model(self) -> GruConfig:
        return GruConfig(
            input_dim=self.segmental.num_bins,
            hidden_dim=self.predictor_hidden,
            num_layers=self.predictor_layers,
            output_dim=1,
            head_kind=HEAD_REGRESSION,
        )


def _suite_split_paths(spec: SuiteSpec, out_dir: Path) -> dict:
    """Locations of the derived train/eval manifests (no writes)."""
    splits = Path(out_dir) / "splits"
    paths = {
        speaker: (splits / f"{speaker}_train.tsv", splits / f"{speaker}_eval.tsv")
        for speaker in spec.speakers
    }
    paths["train_noise"] = (splits / "training_noise_train.tsv",
                            splits / "training_noise_eval.tsv")
    paths["premix_noise"] = spec.corpus_dir / "premixture_noise.tsv"
    return paths


def _write_suite_splits(spec: SuiteSpec, out_dir: Path) -> dict:
    """Build disjoint train/eval manifests under the run directory.

    Runs once in the orchestrating process before any worker starts, so
    workers only ever read these files.
    """
    paths = _suite_split_paths(spec, out_dir)
    (Path(out_dir) / "splits").mkdir(parents=True, exist_ok=True)
    for speaker in spec.speakers:
        src = spec.corpus_dir / f"{speaker}.tsv"
        if not src.exists():
            raise ConfigurationError(f"missing speaker manifest: {src}")
        _split_to(src, *paths[speaker], spec.train_fraction)
    noise_src = spec.corpus_dir / "training_noise.tsv"
    if not noise_src.exists():
        raise ConfigurationError(f"missing noise manifest: {noise_src}")
    if not paths["premix_noise"].exists():
        raise ConfigurationError(f"missing noise manifest: {paths['premix_noise']}")
    _split_to(noise_src, *paths["train_noise"], spec.train_fraction)
    return paths


def _split_to(src, train_path, eval_path, fraction):
    # split manifests live under the run dir while clips stay in the corpus
    # dir, so entries are rebased relative to their new location
    entries = read_manifest(src)
    if len(entries) < 2:
        raise ConfigurationError(f"{src}: need at least 2 clips to split")
    rel_prefix = Path(src).parent.resolve()
    base = Path(train_path).parent.resolve()
    rebased = [
        (os.path.relpath((rel_prefix / rel).resolve(), base), label)
        for rel, label in entries
    ]
    cut = max(1, min(len(rebased) - 1, round(fraction * len(rebased))))
    write_manifest(train_path, rebased[:cut])
    write_manifest(eval_path, rebased[cut:])


def _cell_dir(out_dir: Path, speaker: str, mode: str, hidden: int) -> Path:
    return Path(out_dir) / speaker / f"{mode}_h{hidden}"


def _cell_done(cell: Path) -> bool:
    return (cell / "model.ckpt").exists() and (cell / "report.txt").exists()


def run_speaker_column(spec: SuiteSpec, out_dir, speaker_index: int, resume: bool):
    """Train and evaluate every requested cell for one speaker.

    Returns a list of per-cell dicts: status, paths, and EvalResult on
    success. Designed to run in a worker process.
    """
    out_dir = Path(out_dir)
    speaker = spec.speakers[speaker_index]
    paths = _suite_split_paths(spec, out_dir)  # written by the orchestrator
    segmental = spec.segmental

    speaker_train = load_corpus(paths[speaker][0], ROLE_SPEAKER)
    speaker_eval = load_corpus(paths[speaker][1], ROLE_SPEAKER)
    generalist = merge_corpora(
        [load_corpus(paths[s][0], ROLE_SPEAKER) for s in spec.speakers if s != speaker],
        ROLE_GENERALIST,
    )
    premix_noise = load_corpus(paths["premix_noise"], ROLE_PREMIX_NOISE)
    noise_train = load_corpus(paths["train_noise"][0], ROLE_TRAIN_NOISE)
    noise_eval = load_corpus(paths["train_noise"][1], ROLE_TRAIN_NOISE)

    corpora = CorpusBundle(
        generalist=generalist,
        speaker=speaker_train,
        premix_noise=premix_noise,
        train_noise=noise_train,
    )
    eval_seed = derive_seed(spec.seed, speaker_index, 7777)

    results = []

    def cell_seed(mode: str, hidden: int) -> int:
        return derive_seed(spec.seed, speaker_index, ALL_MODES.index(mode), hidden)

    def cfg(mode, hidden, **over):
        seed = cell_seed(mode, hidden)
        return TrainConfig(
            mode=mode,
            model=spec.mask_model(hidden),
            mix=MixSpec(
                segment_length=spec.segment_length,
                premix_snr_range=spec.premix_snr_range,
                mix_snr_range=spec.mix_snr_range,
                seed=seed,
            ),
            steps=spec.steps,
            lr=spec.lr,
            batch=spec.batch,
            seed=seed,
            segmental=segmental,
            **over,
        )

    predictor_path = None
    need_predictor = any(m in DP_MODES for m in spec.modes)
    if need_predictor:
        pred_dir = out_dir / speaker / "predictor"
        predictor_path = str(pred_dir / "model.ckpt")
        if not (resume and _cell_done(pred_dir)):
            pred_seed = derive_seed(spec.seed, speaker_index, 99)
            pred_config = TrainConfig(
                mode="snr-predictor",
                model=spec.predictor_model(),
                mix=MixSpec(
                    segment_length=spec.segment_length,
                    premix_snr_range=spec.premix_snr_range,
                    mix_snr_range=spec.mix_snr_range,
                    seed=pred_seed,
                ),
                steps=spec.predictor_steps,
                lr=spec.lr,
                batch=spec.batch,
                seed=pred_seed,
                segmental=segmental,
            )
            train_snr_predictor(pred_config, corpora, pred_dir)

    for hidden in spec.hidden_dims:
        se_dir = _cell_dir(out_dir, speaker, "se", hidden)
        need_se = "se" in spec.modes or any(m in WARM_MODES for m in spec.modes)
        if need_se and not (resume and _cell_done(se_dir)):
            train_se(cfg("se", hidden), corpora, se_dir)

        for mode in spec.modes:
            cell = _cell_dir(out_dir, speaker, mode, hidden)
            record = {"speaker": speaker, "mode": mode, "hidden": hidden,
                      "dir": str(cell), "status": "ok", "error": ""}
            try:
                if not (resume and _cell_done(cell)):
                    if mode == "se":
                        pass  # trained above
                    elif mode == "pse":
                        train_pse(cfg(mode, hidden), corpora, cell)
                    elif mode == "pse-dp":
                        train_pse_dp(
                            cfg(mode, hidden, snr_predictor_checkpoint=predictor_path),
                            corpora, cell,
                        )
                    elif mode == "se-pse":
                        train_pse(
                            cfg(mode, hidden, init_checkpoint=str(se_dir / "model.ckpt")),
                            corpora, cell,
                        )
                    elif mode == "se-pse-dp":
                        train_pse_dp(
                            cfg(mode, hidden,
                                init_checkpoint=str(se_dir / "model.ckpt"),
                                snr_predictor_checkpoint=predictor_path),
                            corpora, cell,
                        )
                params, _ = load_checkpoint(cell / "model.ckpt")
                result = evaluate(
                    checkpoint_denoiser(params),
                    speaker_eval,
                    noise_eval,
                    spec.eval_mixtures,
                    eval_seed,
                    segmental=segmental,
                    mix_snr_range=spec.mix_snr_range,
                    segment_length=spec.segment_length,
                    speaker_id=speaker,
                    config_label=MODE_DISPLAY[mode],
                    hidden_dim=hidden,
                )
                write_eval_csv(cell / "eval.csv", result)
                record["result"] = result
            except Exception as exc:  # cell failures are reported, not fatal
                record["status"] = "failed"
                record["error"] = f"{type(exc).__name__}: {exc}"
            results.append(record)
    return results


def run_configuration_suite(spec: SuiteSpec, out_dir, resume: bool = False) -> dict:
    """All requested (speaker, mode, size) cells plus the comparison CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_suite_splits(spec, out_dir)

    if spec.jobs > 1 and len(spec.speakers) > 1:
        with ProcessPoolExecutor(max_workers=min(spec.jobs, len(spec.speakers))) as pool:
            futures = [
                pool.submit(run_speaker_column, spec, str(out_dir), i, resume)
                for i in range(len(spec.speakers))
            ]
            columns = [f.result() for f in futures]  # deterministic merge order
    else:
        columns = [
            run_speaker_column(spec, out_dir, i, resume) for i in range(len(spec.speakers))
        ]

    cells = [record for column in columns for record in column]
    ok = [record["result"] for record in cells if record["status"] == "ok"]
    failed = [record for record in cells if record["status"] == "failed"]

    table = aggregate_suite(ok) if ok else None
    if table is not None:
        write_comparison_csv(out_dir / "comparison.csv", table)
        (out_dir / "summary.txt").write_text(format_summary_table(table), encoding="utf-8")
    return {"cells": cells, "failed": failed, "table": table,
            "comparison_csv": str(out_dir / "comparison.csv") if table else None}
