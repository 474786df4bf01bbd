"""GRU mask estimator and frame-SNR regressor on top of the autodiff tape.

Both network families share one body: unidirectional stacked GRU layers over
log-magnitude spectrogram frames. The mask model ends in a dense head with an
elementwise logistic (masks strictly in (0, 1)); the regressor ends in a
linear head with one output per frame.

The input-to-hidden weights of the first layer double as the input
projection; there is no separate projection layer, and each gate carries a
single bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dsp import SegmentalConfig, Spectrogram, Waveform, istft
from . import autodiff as ad

HEAD_MASK = "sigmoid-mask"
HEAD_REGRESSION = "linear-regression"
FEATURE_LOG_MAGNITUDE = "log-magnitude"
FEATURE_FLOOR = 1e-5

_GATES = ("update", "reset", "candidate")


@dataclass(frozen=True)
class GruConfig:
    input_dim: int = 513
    hidden_dim: int = 128
    num_layers: int = 2
    output_dim: int = 513
    head_kind: str = HEAD_MASK
    feature_kind: str = FEATURE_LOG_MAGNITUDE

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "num_layers", "output_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.head_kind not in (HEAD_MASK, HEAD_REGRESSION):
            raise ValueError(f"unknown head_kind {self.head_kind!r}")
        if self.feature_kind != FEATURE_LOG_MAGNITUDE:
            raise ValueError(f"unknown feature_kind {self.feature_kind!r}")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "output_dim": self.output_dim,
            "head_kind": self.head_kind,
            "feature_kind": self.feature_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GruConfig":
        return cls(**d)


def tensor_names(config: GruConfig):
    """Canonical tensor order; fixed so init, updates, and I/O agree."""
    names = []
    for layer in range(config.num_layers):
        for gate in _GATES:
            names.extend((f"l{layer}.w_{gate}", f"l{layer}.u_{gate}", f"l{layer}.b_{gate}"))
    names.extend(("head.w", "head.b"))
    return names


def tensor_shape(name: str, config: GruConfig):
    if name == "head.w":
        return (config.hidden_dim, config.output_dim)
    if name == "head.b":
        return (config.output_dim,)
    layer = int(name[1 : name.index(".")])
    in_dim = config.input_dim if layer == 0 else config.hidden_dim
    kind = name.split(".")[1][0]  # w / u / b
    if kind == "w":
        return (in_dim, config.hidden_dim)
    if kind == "u":
        return (config.hidden_dim, config.hidden_dim)
    return (config.hidden_dim,)


@dataclass
class ModelParams:
    """Named parameter tensors plus the architecture they instantiate."""

    config: GruConfig
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = tensor_names(self.config)
        if list(self.tensors) != expected:
            raise ValueError(
                f"tensor names {list(self.tensors)} do not match expected {expected}"
            )
        for name, values in self.tensors.items():
            shape = tensor_shape(name, self.config)
            if values.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {values.shape}")
            if not np.all(np.isfinite(values)):
                raise ValueError(f"{name}: non-finite values")

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def allclose(self, other: "ModelParams") -> bool:
        return self.config == other.config and all(
            np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors
        )


def init_params(config: GruConfig, seed: int) -> ModelParams:
    """Uniform init in [-1/sqrt(hidden), +1/sqrt(hidden)], one stream per seed."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(config.hidden_dim)
    tensors = {
        name: rng.uniform(-bound, bound, tensor_shape(name, config))
        for name in tensor_names(config)
    }
    return ModelParams(config, tensors)


def param_count(config: GruConfig) -> int:
    return sum(
        int(np.prod(tensor_shape(name, config))) for name in tensor_names(config)
    )


def features(spec: Spectrogram) -> np.ndarray:
    """Log-magnitude features with a floor: log(max(|S|, 1e-5)), (J, bins)."""
    return np.log(np.maximum(np.abs(spec.bins), FEATURE_FLOOR))


# ---------------------------------------------------------------------------
# Graph builders
# ---------------------------------------------------------------------------


def as_graph_params(params: ModelParams) -> dict:
    return {name: ad.parameter(values) for name, values in params.tensors.items()}


def as_frozen_params(params: ModelParams) -> dict:
    """Constant-wrapped tensors: forward passes build no backward closures."""
    return {name: ad.constant(values) for name, values in params.tensors.items()}


def build_body(graph_params: dict, feats_sm: np.ndarray, batch: int, config: GruConfig) -> ad.Tensor:
    """Stacked GRU over step-major features (J*B, input_dim) -> (J*B, hidden).

    Input projections for a whole layer run as three large matmuls; the
    per-step loop only touches (batch, hidden) blocks.
    """
    rows, in_dim = feats_sm.shape
    if in_dim != config.input_dim:
        raise ValueError(f"expected {config.input_dim} input features, got {in_dim}")
    if rows % batch:
        raise ValueError("feature rows are not a whole number of steps")
    steps = rows // batch
    x = ad.constant(feats_sm)
    for layer in range(config.num_layers):
        p = {g: (graph_params[f"l{layer}.w_{g}"],
                 graph_params[f"l{layer}.u_{g}"],
                 graph_params[f"l{layer}.b_{g}"]) for g in _GATES}
        proj = {g: ad.add(ad.matmul(x, p[g][0]), p[g][2]) for g in _GATES}
        h = ad.constant(np.zeros((batch, config.hidden_dim)))
        outputs = []
        for step in range(steps):
            h = ad.gru_step(
                proj["update"], proj["reset"], proj["candidate"],
                h, p["update"][1], p["reset"][1], p["candidate"][1],
                step, batch,
            )
            outputs.append(h)
        x = ad.stack_rows(outputs)
    return x


def build_head(graph_params: dict, body: ad.Tensor, config: GruConfig) -> ad.Tensor:
    out = ad.add(ad.matmul(body, graph_params["head.w"]), graph_params["head.b"])
    if config.head_kind == HEAD_MASK:
        out = ad.sigmoid(out)
    return out


def build_forward(graph_params: dict, feats_sm: np.ndarray, batch: int, config: GruConfig) -> ad.Tensor:
    return build_head(graph_params, build_body(graph_params, feats_sm, batch, config), config)


# ---------------------------------------------------------------------------
# Public single-example forward passes
# ---------------------------------------------------------------------------


def _forward_single(params: ModelParams, feats: np.ndarray) -> np.ndarray:
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2:
        raise ValueError(f"expected a (frames, input_dim) feature matrix, got {feats.shape}")
    out = build_forward(as_frozen_params(params), feats, batch=1, config=params.config)
    return out.data


def forward_mask(params: ModelParams, feats: np.ndarray) -> np.ndarray:
    """Per-frame masks in (0, 1), shape (frames, output_dim)."""
    if params.config.head_kind != HEAD_MASK:
        raise ValueError(f"forward_mask needs a {HEAD_MASK} head, got {params.config.head_kind}")
    return _forward_single(params, feats)


def forward_snr(params: ModelParams, feats: np.ndarray) -> np.ndarray:
    """Per-frame SNR logits in dB, shape (frames,)."""
    if params.config.head_kind != HEAD_REGRESSION:
        raise ValueError(
            f"forward_snr needs a {HEAD_REGRESSION} head, got {params.config.head_kind}"
        )
    return _forward_single(params, feats)[:, 0]


def forward_snr_batch(params: ModelParams, feats_sm: np.ndarray, batch: int) -> np.ndarray:
    """Inference-only batched regression: step-major feats -> (batch, frames)."""
    out = build_forward(as_frozen_params(params), feats_sm, batch, params.config)
    steps = feats_sm.shape[0] // batch
    return out.data.reshape(steps, batch).T.copy()


def apply_mask_and_reconstruct(
    spec: Spectrogram, mask: np.ndarray, length: int | None = None
) -> Waveform:
    """Scale spectrogram magnitudes by a real mask (phase kept), then invert."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != spec.bins.shape:
        raise ValueError(f"mask shape {mask.shape} != spectrogram shape {spec.bins.shape}")
    if length is None:
        length = spec.num_frames * spec.config.hop
    return istft(Spectrogram(mask * spec.bins, spec.config), length)
