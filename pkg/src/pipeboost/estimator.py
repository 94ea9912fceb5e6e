"""Small residual CNN regressor over masked cost tensors, in plain numpy.

Architecture (fixed): conv 3->8, conv 8->16 + 2x2 max-pool, residual block
16->16, conv 16->24 + 2x2 max-pool, residual block 24->24, global average
pool, linear 24->3. GELU after every conv (tanh approximation), no output
activation. Pools are skipped when a spatial dim is < 2 so tiny test
tensors survive the stack. Everything runs in float64 with hand-written
backward passes; there is no autodiff here.

Total trainable parameters: 224 + 1,168 + 4,640 + 3,480 + 10,416 + 75
= 20,003, asserted at construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar

import numpy as np

from .embedding import EmbeddingTensor, build_embedding, build_mask, masked_input
from .simulator import Mapping
from .workload import DeviceProfile, Workload

PARAM_COUNT = 20_003
_MAGIC = b"EST1"
_VERSION = 1
_GELU_K = 0.7978845608028654  # sqrt(2/pi)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_K * (x + 0.044715 * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    # d/dx [0.5 x (1 + tanh(u))], u = k (x + 0.044715 x^3)
    u = _GELU_K * (x + 0.044715 * x**3)
    t = np.tanh(u)
    du = _GELU_K * (1.0 + 3 * 0.044715 * x**2)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du


# ---------------------------------------------------------------------------
# Primitive layers: 3x3 same-padding conv (im2col), 2x2 max-pool
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray) -> np.ndarray:
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((b, c, 9, h, w), dtype=x.dtype)
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, :, k] = xp[:, :, di : di + h, dj : dj + w]
            k += 1
    return cols.reshape(b, c * 9, h * w)


def _conv_forward(x, w, b):
    bs, c, h, wd = x.shape
    o = w.shape[0]
    cols = _im2col(x)
    out = np.matmul(w.reshape(o, c * 9), cols).reshape(bs, o, h, wd)
    out += b[None, :, None, None]
    return out, (x.shape, cols, w)


def _conv_backward(dout, cache):
    (bs, c, h, wd), cols, w = cache
    o = w.shape[0]
    dflat = dout.reshape(bs, o, h * wd)
    dw = np.matmul(dflat, cols.transpose(0, 2, 1)).sum(axis=0)
    db = dout.sum(axis=(0, 2, 3))
    dcols = np.matmul(w.reshape(o, c * 9).T, dflat).reshape(bs, c, 9, h, wd)
    dxp = np.zeros((bs, c, h + 2, wd + 2))
    k = 0
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di : di + h, dj : dj + wd] += dcols[:, :, k]
            k += 1
    return dxp[:, :, 1 : h + 1, 1 : wd + 1], dw.reshape(w.shape), db


def _pool_forward(x):
    b, c, h, w = x.shape
    if h < 2 or w < 2:
        return x, None
    h2, w2 = h // 2, w // 2
    xr = (
        x[:, :, : 2 * h2, : 2 * w2]
        .reshape(b, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h2, w2, 4)
    )
    idx = xr.argmax(axis=-1)
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def _pool_backward(dout, cache):
    if cache is None:
        return dout
    (b, c, h, w), idx = cache
    h2, w2 = idx.shape[2], idx.shape[3]
    dxr = np.zeros((b, c, h2, w2, 4))
    np.put_along_axis(dxr, idx[..., None], dout[..., None], axis=-1)
    dx = np.zeros((b, c, h, w))
    dx[:, :, : 2 * h2, : 2 * w2] = (
        dxr.reshape(b, c, h2, w2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, 2 * h2, 2 * w2)
    )
    return dx


# ---------------------------------------------------------------------------
# Target preprocessing statistics (z-score, then min-max to [0,1])
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TargetStats:
    mean: np.ndarray
    std: np.ndarray
    mn: np.ndarray
    mx: np.ndarray

    @classmethod
    def fit(cls, targets: np.ndarray) -> "TargetStats":
        """Fit on the training-split raw targets, shape (n, 3)."""
        if targets.ndim != 2 or targets.shape[0] < 2:
            raise ValueError("need at least 2 target rows to fit statistics")
        mean = targets.mean(axis=0)
        std = targets.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        z = (targets - mean) / std
        return cls(mean=mean, std=std, mn=z.min(axis=0), mx=z.max(axis=0))

    def transform(self, y: np.ndarray) -> np.ndarray:
        z = (y - self.mean) / self.std
        span = self.mx - self.mn
        t = np.where(span > 0, (z - self.mn) / np.where(span > 0, span, 1.0), 0.0)
        return np.clip(t, 0.0, 1.0)

    def inverse(self, t: np.ndarray) -> np.ndarray:
        z = t * (self.mx - self.mn) + self.mn
        return z * self.std + self.mean

    def to_floats(self) -> list[float]:
        return [float(v) for arr in (self.mean, self.std, self.mn, self.mx) for v in arr]

    @classmethod
    def from_floats(cls, values) -> "TargetStats":
        a = np.asarray(values, dtype=np.float64)
        if a.shape != (12,):
            raise ValueError(f"expected 12 statistics values, got {a.shape}")
        return cls(mean=a[0:3], std=a[3:6], mn=a[6:9], mx=a[9:12])


# ---------------------------------------------------------------------------
# The network
# ---------------------------------------------------------------------------

_SHAPES = {
    "convA.w": (8, 3, 3, 3),
    "convA.b": (8,),
    "convB.w": (16, 8, 3, 3),
    "convB.b": (16,),
    "r1c1.w": (16, 16, 3, 3),
    "r1c1.b": (16,),
    "r1c2.w": (16, 16, 3, 3),
    "r1c2.b": (16,),
    "convC.w": (24, 16, 3, 3),
    "convC.b": (24,),
    "r2c1.w": (24, 24, 3, 3),
    "r2c1.b": (24,),
    "r2c2.w": (24, 24, 3, 3),
    "r2c2.b": (24,),
    "fc.w": (3, 24),
    "fc.b": (3,),
}


@dataclass
class EstimatorNet:
    params: dict[str, np.ndarray]
    input_shape: tuple[int, int, int]
    target_stats: TargetStats | None = None

    PARAM_ORDER: ClassVar[tuple[str, ...]] = tuple(_SHAPES)

    def __post_init__(self):
        got = {k: v.shape for k, v in self.params.items()}
        want = dict(_SHAPES)
        if got != want:
            raise ValueError(f"parameter shapes {got} do not match the architecture")
        assert self.param_count == PARAM_COUNT

    @classmethod
    def new(cls, input_shape: tuple[int, int, int], seed: int = 0) -> "EstimatorNet":
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in _SHAPES.items():
            if name.endswith(".b"):
                params[name] = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
        return cls(params=params, input_shape=tuple(input_shape))

    @property
    def param_count(self) -> int:
        return sum(v.size for v in self.params.values())

    # -- forward / backward ------------------------------------------------

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ValueError(
                f"input shape {x.shape[1:] if x.ndim == 4 else x.shape} "
                f"does not match expected {self.input_shape}"
            )
        return x

    def forward_with_cache(self, x: np.ndarray):
        p = self.params
        x = self._check(x)
        c = {}

        a_pre, c["convA"] = _conv_forward(x, p["convA.w"], p["convA.b"])
        a = gelu(a_pre)
        b_pre, c["convB"] = _conv_forward(a, p["convB.w"], p["convB.b"])
        b_act = gelu(b_pre)
        b_out, c["pool1"] = _pool_forward(b_act)

        r1a_pre, c["r1c1"] = _conv_forward(b_out, p["r1c1.w"], p["r1c1.b"])
        r1a = gelu(r1a_pre)
        r1b_pre, c["r1c2"] = _conv_forward(r1a, p["r1c2.w"], p["r1c2.b"])
        s1 = b_out + r1b_pre
        r1_out = gelu(s1)

        cc_pre, c["convC"] = _conv_forward(r1_out, p["convC.w"], p["convC.b"])
        cc = gelu(cc_pre)
        c_out, c["pool2"] = _pool_forward(cc)

        r2a_pre, c["r2c1"] = _conv_forward(c_out, p["r2c1.w"], p["r2c1.b"])
        r2a = gelu(r2a_pre)
        r2b_pre, c["r2c2"] = _conv_forward(r2a, p["r2c2.w"], p["r2c2.b"])
        s2 = c_out + r2b_pre
        r2_out = gelu(s2)

        g = r2_out.mean(axis=(2, 3))
        out = g @ p["fc.w"].T + p["fc.b"]

        c["pre"] = (a_pre, b_pre, r1a_pre, s1, cc_pre, r2a_pre, s2)
        c["gap_shape"] = r2_out.shape
        c["g"] = g
        return out, c

    def forward(self, x: np.ndarray) -> np.ndarray:
        single = np.asarray(x).ndim == 3
        out, _ = self.forward_with_cache(x)
        return out[0] if single else out

    def backward(self, cache, dout: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params
        a_pre, b_pre, r1a_pre, s1, cc_pre, r2a_pre, s2 = cache["pre"]
        grads = {}

        grads["fc.w"] = dout.T @ cache["g"]
        grads["fc.b"] = dout.sum(axis=0)
        dg = dout @ p["fc.w"]

        bs, ch, h, w = cache["gap_shape"]
        dr2_out = np.broadcast_to(dg[:, :, None, None], (bs, ch, h, w)) / (h * w)

        ds2 = dr2_out * gelu_grad(s2)
        dr2b, grads["r2c2.w"], grads["r2c2.b"] = _conv_backward(ds2, cache["r2c2"])
        dr2a = dr2b * gelu_grad(r2a_pre)
        dc_out, grads["r2c1.w"], grads["r2c1.b"] = _conv_backward(dr2a, cache["r2c1"])
        dc_out = dc_out + ds2  # skip connection

        dcc = _pool_backward(dc_out, cache["pool2"]) * gelu_grad(cc_pre)
        dr1_out, grads["convC.w"], grads["convC.b"] = _conv_backward(dcc, cache["convC"])

        ds1 = dr1_out * gelu_grad(s1)
        dr1b, grads["r1c2.w"], grads["r1c2.b"] = _conv_backward(ds1, cache["r1c2"])
        dr1a = dr1b * gelu_grad(r1a_pre)
        db_out, grads["r1c1.w"], grads["r1c1.b"] = _conv_backward(dr1a, cache["r1c1"])
        db_out = db_out + ds1  # skip connection

        db_act = _pool_backward(db_out, cache["pool1"]) * gelu_grad(b_pre)
        da, grads["convB.w"], grads["convB.b"] = _conv_backward(db_act, cache["convB"])
        da = da * gelu_grad(a_pre)
        _, grads["convA.w"], grads["convA.b"] = _conv_backward(da, cache["convA"])
        return grads


def predict_throughput(
    net: EstimatorNet,
    stats: TargetStats | None,
    workload: Workload,
    mapping: Mapping,
    embedding: EmbeddingTensor,
    profile: DeviceProfile,
) -> np.ndarray:
    """Masked forward pass, clamped to [0,1] per component."""
    if stats is None:
        raise ValueError("estimator has no fitted target statistics (untrained)")
    x = masked_input(embedding, build_mask(workload, mapping, profile))
    return np.clip(net.forward(x.data), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Weights file: 16-byte header (magic, version, param count), the parameters
# as little-endian float64 in PARAM_ORDER, then the 12 target statistics.
# ---------------------------------------------------------------------------

def save_weights(net: EstimatorNet, path: str | Path) -> None:
    if net.target_stats is None:
        raise ValueError("refusing to save an untrained net (no target statistics)")
    header = _MAGIC + struct.pack("<IQ", _VERSION, net.param_count)
    body = b"".join(
        net.params[k].astype("<f8").tobytes(order="C") for k in EstimatorNet.PARAM_ORDER
    )
    tail = struct.pack("<12d", *net.target_stats.to_floats())
    Path(path).write_bytes(header + body + tail)


def load_weights(path: str | Path, input_shape: tuple[int, int, int]) -> EstimatorNet:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"weights file not found: {p}")
    raw = p.read_bytes()
    if len(raw) < 16 or raw[:4] != _MAGIC:
        raise ValueError(f"{p}: not a weights file (bad magic)")
    version, count = struct.unpack("<IQ", raw[4:16])
    if version != _VERSION:
        raise ValueError(f"{p}: unsupported weights version {version}")
    expected = 16 + (count + 12) * 8
    if count != PARAM_COUNT or len(raw) != expected:
        raise ValueError(f"{p}: malformed weights file ({count} params, {len(raw)} bytes)")
    flat = np.frombuffer(raw[16 : 16 + count * 8], dtype="<f8")
    params = {}
    pos = 0
    for name in EstimatorNet.PARAM_ORDER:
        shape = _SHAPES[name]
        size = int(np.prod(shape))
        params[name] = flat[pos : pos + size].reshape(shape).copy()
        pos += size
    stats = TargetStats.from_floats(struct.unpack("<12d", raw[16 + count * 8 :]))
    return EstimatorNet(params=params, input_shape=tuple(input_shape), target_stats=stats)
