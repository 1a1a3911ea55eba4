"""Dense float32 tensor kernels with a fixed, reproducible accumulation order.

Every reduction in this module accumulates in ascending index order, so each
kernel is bit-reproducible across runs and `matmul` is bit-for-bit equal to a
naive triple loop. Tensors are numpy float32 arrays of rank 1..4; kernels are
pure functions and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    import numba
except ImportError:  # pure-numpy fallback path stays bit-identical
    numba = None

from .errors import ConfigError, ShapeError

MAX_RANK = 4


def tensor(data) -> np.ndarray:
    """Coerce ``data`` to a float32 array of rank 1..4."""
    arr = np.asarray(data, dtype=np.float32)
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ShapeError(f"tensor rank must be 1..{MAX_RANK}, got rank {arr.ndim}")
    return arr


def _as_f32(x, rank, name):
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != rank:
        raise ShapeError(f"{name} must have rank {rank}, got shape {arr.shape}")
    return arr


# accumulator elements per output-column block (~384 KiB of float32), sized
# so the running block stays cache-resident through the whole k sweep
_BLOCK_BUDGET = 98304


def _matmul_numpy(a_t, b, out):
    inner, m = a_t.shape
    n = b.shape[1]
    block = max(1, min(n, _BLOCK_BUDGET // max(m, 1)))
    acc = np.empty((m, block), np.float32)
    buf = np.empty((m, block), np.float32)
    for j0 in range(0, n, block):
        width = min(block, n - j0)
        acc_v = acc[:, :width]
        buf_v = buf[:, :width]
        acc_v[...] = 0.0
        for k in range(inner):
            np.multiply(a_t[k, :, None], b[k, j0:j0 + width], out=buf_v)
            np.add(acc_v, buf_v, out=acc_v)
        out[:, j0:j0 + width] = acc_v


if numba is not None:
    # strict IEEE mode (no fastmath): each product rounds to float32 and
    # each add rounds to float32, exactly like the numpy fallback; row
    # blocking changes only the traversal across output elements
    @numba.njit(cache=True)
    def _matmul_compiled(a_t, b, out):  # pragma: no cover - compiled
        inner, m = a_t.shape
        n = b.shape[1]
        for i0 in range(0, m, 16):
            i1 = min(i0 + 16, m)
            for i in range(i0, i1):
                for j in range(n):
                    out[i, j] = np.float32(0.0)
            for k in range(inner):
                for i in range(i0, i1):
                    aik = a_t[k, i]
                    for j in range(n):
                        out[i, j] = out[i, j] + aik * b[k, j]
else:
    _matmul_compiled = None


def matmul(a, b) -> np.ndarray:
    """Matrix product ``c[i, j] = sum_k a[i, k] * b[k, j]``.

    Accumulates in float32 in ascending-k order, which makes the result
    bit-for-bit equal to the naive triple loop evaluated left to right.
    The compiled and pure-numpy execution paths produce identical bytes;
    they differ only in how output elements are traversed.
    """
    a = _as_f32(a, 2, "matmul left operand")
    b = _as_f32(b, 2, "matmul right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} vs {b.shape}")
    m, inner = a.shape
    n = b.shape[1]
    a_t = np.ascontiguousarray(a.T)
    out = np.empty((m, n), dtype=np.float32)
    if _matmul_compiled is not None:
        _matmul_compiled(a_t, np.ascontiguousarray(b), out)
    else:
        _matmul_numpy(a_t, b, out)
    return out


def conv2d(x, weight, bias=None, stride=1, padding=0, groups=1) -> np.ndarray:
    """2-D cross-correlation with zero padding.

    ``x`` is (C_in, H, W) and ``weight`` is (C_out, C_in/groups, K_h, K_w).
    ``groups == C_in == C_out`` gives a depthwise convolution; a 1x1 kernel
    with stride 1 and no padding is a pointwise channel mix. Output extents
    must come out as exact positive integers; nothing is silently truncated.
    Taps accumulate in ascending (channel, kernel row, kernel col) order.
    """
    x = _as_f32(x, 3, "conv2d input")
    weight = _as_f32(weight, 4, "conv2d weight")
    if stride < 1:
        raise ConfigError(f"stride must be positive, got {stride}")
    if padding < 0:
        raise ConfigError(f"padding must be non-negative, got {padding}")
    c_in, h, w = x.shape
    c_out, c_in_g, k_h, k_w = weight.shape
    if groups < 1 or c_in % groups or c_out % groups:
        raise ConfigError(
            f"groups={groups} must divide C_in={c_in} and C_out={c_out}"
        )
    if c_in_g != c_in // groups:
        raise ShapeError(
            f"weight expects {c_in_g} channels per group, input provides "
            f"{c_in // groups} ({c_in} channels / {groups} groups)"
        )
    span_h = h + 2 * padding - k_h
    span_w = w + 2 * padding - k_w
    if span_h < 0 or span_h % stride or span_w < 0 or span_w % stride:
        raise ShapeError(
            f"conv2d output extent is not a positive integer for input "
            f"{x.shape}, kernel {k_h}x{k_w}, stride {stride}, padding {padding}"
        )
    out_h = span_h // stride + 1
    out_w = span_w // stride + 1

    if padding:
        padded = np.zeros((c_in, h + 2 * padding, w + 2 * padding), np.float32)
        padded[:, padding:padding + h, padding:padding + w] = x
    else:
        padded = x
    # gather taps into a patch matrix, row-major over (channel, row, col),
    # then contract with the flattened weights; the matmul's ascending-k
    # sweep IS the ascending tap order per output element
    out = np.empty((c_out, out_h, out_w), np.float32)
    c_out_g = c_out // groups
    taps = c_in_g * k_h * k_w
    col = np.empty((taps, out_h * out_w), np.float32)
    weight = np.ascontiguousarray(weight)
    for g in range(groups):
        t = 0
        for ci in range(c_in_g):
            plane = padded[g * c_in_g + ci]
            for i in range(k_h):
                rows = plane[i:i + span_h + 1:stride]
                for j in range(k_w):
                    col[t] = rows[:, j:j + span_w + 1:stride].reshape(-1)
                    t += 1
        flat = weight[g * c_out_g:(g + 1) * c_out_g].reshape(c_out_g, taps)
        out[g * c_out_g:(g + 1) * c_out_g] = \
            matmul(flat, col).reshape(c_out_g, out_h, out_w)
    if bias is not None:
        bias = _as_f32(bias, 1, "conv2d bias")
        if bias.shape[0] != c_out:
            raise ShapeError(
                f"bias has {bias.shape[0]} entries for {c_out} output channels"
            )
        np.add(out, bias[:, None, None], out=out)
    return out


@dataclass(frozen=True)
class BatchNormParams:
    """Per-channel inference-mode normalization parameters."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "beta", "running_mean", "running_var"):
            object.__setattr__(self, name, _as_f32(getattr(self, name), 1, name))
        n = self.gamma.shape[0]
        for name in ("beta", "running_mean", "running_var"):
            if getattr(self, name).shape[0] != n:
                raise ShapeError(
                    f"batch norm {name} has {getattr(self, name).shape[0]} "
                    f"entries, gamma has {n}"
                )
        if np.any(self.running_var < 0):
            raise ConfigError("running_var must be non-negative")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @classmethod
    def identity(cls, channels: int, epsilon: float = 1e-5) -> "BatchNormParams":
        return cls(
            gamma=np.ones(channels, np.float32),
            beta=np.zeros(channels, np.float32),
            running_mean=np.zeros(channels, np.float32),
            running_var=np.ones(channels, np.float32),
            epsilon=epsilon,
        )


def batch_norm(x, p: BatchNormParams) -> np.ndarray:
    """Inference-mode normalization using the stored running statistics."""
    x = _as_f32(x, 3, "batch_norm input")
    if x.shape[0] != p.channels:
        raise ShapeError(
            f"input has {x.shape[0]} channels, params have {p.channels}"
        )
    scale = p.gamma / np.sqrt(p.running_var + np.float32(p.epsilon))
    return (x - p.running_mean[:, None, None]) * scale[:, None, None] \
        + p.beta[:, None, None]


def relu(x) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x, np.float32), np.float32(0))


def softmax_last_axis(x) -> np.ndarray:
    """Stable softmax along the last axis.

    Subtracts the row maximum before exponentiating and runs the internal
    arithmetic in double precision so each output slice sums to 1 well
    within 1e-6.
    """
    x64 = np.asarray(x, np.float64)
    shifted = x64 - np.max(x64, axis=-1, keepdims=True)
    e = np.exp(shifted)
    total = np.cumsum(e, axis=-1)[..., -1:]  # ascending-order sum
    return np.asarray(e / total, np.float32)


def elementwise_add(a, b) -> np.ndarray:
    a = np.asarray(a, np.float32)
    b = np.asarray(b, np.float32)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise_add shapes differ: {a.shape} vs {b.shape}")
    return a + b


def avg_pool2d(x, k: int) -> np.ndarray:
    """Mean over non-overlapping k x k tiles.

    Taps accumulate in ascending order in double precision, so a map that is
    constant over each tile pools to exactly that constant.
    """
    x = _as_f32(x, 3, "avg_pool2d input")
    if k < 1:
        raise ConfigError(f"pool factor must be positive, got {k}")
    c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"extents {h}x{w} not divisible by pool factor {k}")
    acc = np.zeros((c, h // k, w // k), np.float64)
    for di in range(k):
        for dj in range(k):
            acc += x[:, di::k, dj::k]
    return np.asarray(acc / (k * k), np.float32)


def upsample_nearest(x, k: int) -> np.ndarray:
    """Replicate each cell into a k x k tile."""
    x = _as_f32(x, 3, "upsample_nearest input")
    if k < 1:
        raise ConfigError(f"upsample factor must be positive, got {k}")
    return np.repeat(np.repeat(x, k, axis=1), k, axis=2)
