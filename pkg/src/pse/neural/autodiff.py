"""Tape-based reverse-mode automatic differentiation over float64 arrays.

Just enough surface for this pipeline: dense algebra and activations for the
GRU, a fused GRU recurrence step (hand-derived adjoint, so the hot loop stays
a handful of BLAS calls per frame), and two linear signal ops with custom
adjoints -- windowed framing and mask-then-overlap-add reconstruction.

Sequences are laid out step-major: a batch of B examples over J frames lives
in a (J*B, width) matrix whose rows [s*B : (s+1)*B] belong to step s.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import fft as sfft

from ..dsp import SegmentalConfig, live_coverage

_FFT_WORKERS = min(2, os.cpu_count() or 1)


class Tensor:
    """A node in the computation graph. ``data`` is a float64 ndarray."""

    __slots__ = ("data", "grad", "parents", "bwd", "requires_grad")

    def __init__(self, data, parents=(), bwd=None, requires_grad=None):
        self.data = data
        self.parents = parents
        self.bwd = bwd
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape


def constant(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=False)


def parameter(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


def _acc(t: Tensor, g) -> None:
    """Accumulate a gradient contribution; copies on first touch."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)  # own the first contribution
    else:
        t.grad += g


def _acc_new(t: Tensor, g: np.ndarray) -> None:
    """Accumulate a contribution the caller freshly allocated for ``t`` alone.

    Takes ownership on first touch instead of copying; never pass an array
    that any other tensor or later computation can still reference.
    """
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad += g


def backward(root: Tensor) -> None:
    """Reverse-mode sweep from a scalar root; accumulates into ``.grad``."""
    if root.data.shape != ():
        raise ValueError(f"backward root must be scalar, got shape {root.data.shape}")
    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    root.grad = np.ones(())
    for node in reversed(topo):
        if node.bwd is not None and node.grad is not None:
            node.bwd(node.grad)


# ---------------------------------------------------------------------------
# Dense algebra
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1-D ``b`` broadcasts as a bias over rows of ``a``."""
    out_data = a.data + b.data

    def bwd(g):
        _acc(a, g)
        if b.data.ndim == 1 and a.data.ndim == 2:
            _acc_new(b, g.sum(axis=0))
        else:
            _acc(b, g)

    return Tensor(out_data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def bwd(g):
        _acc(a, g)
        if b.requires_grad:
            _acc_new(b, -g)

    return Tensor(out_data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; a differentiable operand must match the output
    shape (constants may broadcast)."""
    out_data = a.data * b.data
    for t in (a, b):
        if t.requires_grad and t.data.shape != out_data.shape:
            raise ValueError("mul gradients need operand shape == output shape")

    def bwd(g):
        if a.requires_grad:
            _acc_new(a, g * b.data)
        if b.requires_grad:
            _acc_new(b, g * a.data)

    return Tensor(out_data, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            _acc_new(a, g @ b.data.T)
        if b.requires_grad:
            _acc_new(b, a.data.T @ g)

    return Tensor(out_data, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    def bwd(g):
        _acc_new(a, c * g)

    return Tensor(c * a.data, (a,), bwd)


def square(a: Tensor) -> Tensor:
    def bwd(g):
        _acc_new(a, 2.0 * a.data * g)

    return Tensor(a.data * a.data, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        _acc_new(a, g * out_data * (1.0 - out_data))

    return Tensor(out_data, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bwd(g):
        _acc_new(a, g * (1.0 - out_data * out_data))

    return Tensor(out_data, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        _acc(a, np.broadcast_to(g, a.data.shape))

    return Tensor(np.asarray(np.sum(a.data)), (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    size = a.data.size

    def bwd(g):
        _acc(a, np.broadcast_to(g / size, a.data.shape))

    return Tensor(np.asarray(np.mean(a.data)), (a,), bwd)


def stack_rows(parts) -> Tensor:
    """Concatenate a list of equally shaped 2-D tensors along axis 0."""
    parts = list(parts)
    rows = parts[0].data.shape[0]
    out_data = np.concatenate([p.data for p in parts], axis=0)

    def bwd(g):
        for i, p in enumerate(parts):
            _acc(p, g[i * rows : (i + 1) * rows])

    return Tensor(out_data, tuple(parts), bwd)


# ---------------------------------------------------------------------------
# Fused GRU recurrence step
# ---------------------------------------------------------------------------


def gru_step(
    xz_all: Tensor,
    xr_all: Tensor,
    xc_all: Tensor,
    h_prev: Tensor,
    uz: Tensor,
    ur: Tensor,
    uc: Tensor,
    step: int,
    batch: int,
) -> Tensor:
    """One GRU step over a (batch, hidden) state.

    ``x*_all`` hold bias-included input projections for the whole sequence in
    step-major layout; this op reads rows ``[step*batch, (step+1)*batch)`` and
    scatters their gradients back. Gating:

        z = sigmoid(xz + h @ Uz)          update
        r = sigmoid(xr + h @ Ur)          reset
        c = tanh(xc + (r * h) @ Uc)       candidate
        h' = z * h + (1 - z) * c
    """
    rows = slice(step * batch, (step + 1) * batch)
    h = h_prev.data
    z = 1.0 / (1.0 + np.exp(-(xz_all.data[rows] + h @ uz.data)))
    r = 1.0 / (1.0 + np.exp(-(xr_all.data[rows] + h @ ur.data)))
    rh = r * h
    c = np.tanh(xc_all.data[rows] + rh @ uc.data)
    out_data = z * h + (1.0 - z) * c

    def bwd(g):
        dz = g * (h - c)
        dc = g * (1.0 - z)
        dh = g * z
        dac = dc * (1.0 - c * c)
        drh = dac @ uc.data.T
        dh += drh * r
        dr = drh * h
        dar = dr * r * (1.0 - r)
        dh += dar @ ur.data.T
        daz = dz * z * (1.0 - z)
        dh += daz @ uz.data.T
        if uc.requires_grad:
            _acc_new(uc, rh.T @ dac)
        if ur.requires_grad:
            _acc_new(ur, h.T @ dar)
        if uz.requires_grad:
            _acc_new(uz, h.T @ daz)
        for t, d in ((xc_all, dac), (xr_all, dar), (xz_all, daz)):
            if t.requires_grad:
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad[rows] += d
        _acc_new(h_prev, dh)

    return Tensor(out_data, (xz_all, xr_all, xc_all, h_prev, uz, ur, uc), bwd)


# ---------------------------------------------------------------------------
# Signal ops with custom adjoints
# ---------------------------------------------------------------------------

_coverage_cache: dict = {}


def _inverse_coverage(num_frames: int, config: SegmentalConfig) -> np.ndarray:
    """1/coverage with under-covered samples zeroed; cached per geometry."""
    key = (num_frames, config.frame_size, config.hop)
    inv = _coverage_cache.get(key)
    if inv is None:
        n, hop = config.frame_size, config.hop
        cov = np.zeros((num_frames - 1) * hop + n)
        wsq = config.window * config.window
        for j in range(num_frames):
            cov[j * hop : j * hop + n] += wsq
        live = live_coverage(cov)
        inv = np.zeros_like(cov)
        inv[live] = 1.0 / cov[live]
        _coverage_cache[key] = inv
    return inv


def _strided_frames(padded: np.ndarray, num_frames: int, n: int, hop: int) -> np.ndarray:
    """Read-only (B, J, N) frame view over a padded (B, total) buffer."""
    batch = padded.shape[0]
    sb, ss = padded.strides
    return np.lib.stride_tricks.as_strided(
        padded, shape=(batch, num_frames, n), strides=(sb, hop * ss, ss), writeable=False
    )


def frame_rows(y: Tensor, config: SegmentalConfig, num_frames: int) -> Tensor:
    """Windowed frames of each row: (B, L) -> (B, J*N), tail zero-padded."""
    batch, length = y.data.shape
    n, hop, window = config.frame_size, config.hop, config.window
    total = (num_frames - 1) * hop + n
    padded = np.zeros((batch, total))
    padded[:, :length] = y.data
    frames = _strided_frames(padded, num_frames, n, hop) * window

    def bwd(g):
        if not y.requires_grad:
            return
        gf = g.reshape(batch, num_frames, n)
        gy = np.zeros((batch, total))
        for j in range(num_frames):  # scatter-add; writes overlap
            gy[:, j * hop : j * hop + n] += window * gf[:, j, :]
        _acc(y, gy[:, :length])

    return Tensor(frames.reshape(batch, num_frames * n), (y,), bwd)


def weighted_segmental_mse(
    y: Tensor,
    target_frames: np.ndarray,
    weights: np.ndarray,
    config: SegmentalConfig,
) -> Tensor:
    """Frame-weighted windowed MSE against precomputed target frames.

    loss = (1/(B*J)) * sum_{b,j} w_bj * (1/N) * sum_i
           (window_i * target_bji - window_i * y_b[H*j+i])^2

    ``target_frames`` is (B, J, N) already windowed; ``weights`` is (B, J).
    Fused: the (B, J, N) difference is materialized once and reused by the
    adjoint.
    """
    batch, length = y.data.shape
    num_frames, n, hop = target_frames.shape[1], config.frame_size, config.hop
    if weights.shape != (batch, num_frames):
        raise ValueError(f"weights shape {weights.shape} != {(batch, num_frames)}")
    total = (num_frames - 1) * hop + n
    window = config.window
    padded = np.zeros((batch, total))
    padded[:, :length] = y.data
    diff = _strided_frames(padded, num_frames, n, hop) * window
    diff -= target_frames
    per_frame = np.einsum("bjn,bjn->bj", diff, diff)
    norm = 1.0 / (batch * num_frames * n)
    loss = np.asarray(np.sum(weights * per_frame) * norm)

    def bwd(g):
        if not y.requires_grad:
            return
        gframes = diff * (2.0 * norm * float(g) * weights)[:, :, None]
        gframes *= window
        gy = np.zeros((batch, total))
        for j in range(num_frames):
            gy[:, j * hop : j * hop + n] += gframes[:, j, :]
        _acc_new(y, gy[:, :length].copy())

    return Tensor(loss, (y,), bwd)


def masked_overlap_add(
    masks: Tensor, specs_sm: np.ndarray, config: SegmentalConfig, length: int, batch: int
) -> Tensor:
    """Apply real masks to complex spectrogram constants and reconstruct.

    ``masks`` and ``specs_sm`` share the step-major (J*B, bins) layout, so
    masking is one flat elementwise product. Output is the (batch, length)
    matrix of reconstructed waveforms. The adjoint runs the exact transpose:
    normalize by window coverage, gather synthesis-windowed frames, apply
    the rfft-based irfft adjoint, and weight by the conjugate spectrogram.
    """
    rows, bins = specs_sm.shape
    n, hop, window = config.frame_size, config.hop, config.window
    if masks.data.shape != specs_sm.shape:
        raise ValueError(f"masks shape {masks.data.shape} != specs shape {specs_sm.shape}")
    if rows % batch:
        raise ValueError("spectrogram rows are not a whole number of steps")
    num_frames = rows // batch
    total = (num_frames - 1) * hop + n
    if not (num_frames - 1) * hop < length <= num_frames * hop:
        raise ValueError(f"length {length} inconsistent with {num_frames} frames")

    frames = sfft.irfft(masks.data * specs_sm, n=n, axis=1, workers=_FFT_WORKERS)
    frames *= window
    acc = np.zeros((batch, total))
    for j in range(num_frames):
        acc[:, j * hop : j * hop + n] += frames[j * batch : (j + 1) * batch]
    inv_cov = _inverse_coverage(num_frames, config)
    usable = min(length, total)
    out_data = np.zeros((batch, length))
    out_data[:, :usable] = acc[:, :usable] * inv_cov[:usable]

    # irfft adjoint weights: interior bins count twice (conjugate symmetry)
    coeff = np.full(bins, 2.0 / n)
    coeff[0] = 1.0 / n
    if n % 2 == 0:
        coeff[-1] = 1.0 / n

    def bwd(g):
        if not masks.requires_grad:
            return
        gn = np.zeros((batch, total))
        gn[:, :usable] = g[:, :usable] * inv_cov[:usable]
        gframes = np.empty((rows, n))
        for j in range(num_frames):
            gframes[j * batch : (j + 1) * batch] = gn[:, j * hop : j * hop + n]
        gframes *= window
        gspec = sfft.rfft(gframes, n=n, axis=1, workers=_FFT_WORKERS)
        gspec *= coeff
        gmask = gspec.real * specs_sm.real
        gmask += gspec.imag * specs_sm.imag
        _acc_new(masks, gmask)

    return Tensor(out_data, (masks,), bwd)
