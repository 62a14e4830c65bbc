"""Forward and backward passes for the QCNN layers.

Quaternion feature maps are float64 arrays shaped ``(N, H, W, C, 4)`` with the
components ordered ``(r, i, j, k)``. Each forward function returns its output
and a :class:`LayerCache` that the matching backward call consumes once.

A kernel element with scale ``s`` and angle ``theta`` is the quaternion
``w = s (cos(theta/2) + (i + j + k)/sqrt(3) sin(theta/2))``. Applied to a pixel
``c`` it gives ``(1/s) w c conj(w) = s R(theta) c``: a rotation of the colour
vector about the gray axis followed by scaling. The convolution exploits this
by turning every element into a 3x3 real block and running one matmul.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, StateError
from .features import QuaternionImage
from .quaternion import gray_rotation_matrix, gray_rotation_matrix_dtheta

S_MIN = 1e-4


class LayerCache:
    """Saved forward state; :meth:`take` may be called exactly once."""

    def __init__(self, kind: str, **saved):
        self.kind = kind
        self._saved = saved
        self._consumed = False

    def take(self, kind: str) -> dict:
        if self._consumed:
            raise StateError(f"{self.kind} cache already consumed by a backward pass")
        if kind != self.kind:
            raise StateError(f"backward for {kind} received a {self.kind} cache")
        self._consumed = True
        saved, self._saved = self._saved, {}
        return saved


def _take(cache, kind):
    if cache is None:
        raise StateError(f"{kind} backward called without a forward cache")
    return cache.take(kind)


@dataclass
class QConvLayer:
    scale: np.ndarray  # (out, in, L, L)
    angle: np.ndarray  # (out, in, L, L)

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=np.float64)
        self.angle = np.asarray(self.angle, dtype=np.float64)
        if self.scale.ndim != 4 or self.scale.shape != self.angle.shape:
            raise ShapeError("scale and angle must share an (out, in, L, L) shape")
        if self.scale.shape[2] != self.scale.shape[3]:
            raise ShapeError("kernels must be square")

    @property
    def out_channels(self) -> int:
        return self.scale.shape[0]

    @property
    def in_channels(self) -> int:
        return self.scale.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.scale.shape[2]

    @property
    def param_count(self) -> int:
        return 2 * self.scale.size

    def block_weights(self) -> np.ndarray:
        """Per-element 3x3 maps ``s R(theta)``, shape ``(out, in, L, L, 3, 3)``."""
        return self.scale[..., None, None] * gray_rotation_matrix(self.angle)


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)

    @property
    def param_count(self) -> int:
        return self.weight.size + self.bias.size


def _as_batch(x):
    """Batch view of ``x``; also reports whether a lone QuaternionImage was given.

    Batches are ``(N, H, W, C, 4)`` full quaternions or ``(N, H, W, C, 3)``
    pure quaternions stored as their imaginary parts only.
    """
    if isinstance(x, QuaternionImage):
        return x.data[None], True
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 5 or x.shape[-1] not in (3, 4):
        raise ShapeError(f"expected (N, H, W, C, 4) or (N, H, W, C, 3) quaternion batch, got {x.shape}")
    return x, False


def _unbatch(y, single):
    return QuaternionImage(y[0]) if single else y


def _imag(x):
    return x if x.shape[-1] == 3 else x[..., 1:]


def to_pure(x) -> np.ndarray:
    """Compact ``(..., 3)`` form of a pure quaternion batch; the real part must be zero."""
    x, _ = _as_batch(x)
    if x.shape[-1] == 3:
        return x
    if x[..., 0].any():
        raise ShapeError("quaternion batch is not pure")
    return np.ascontiguousarray(x[..., 1:])


def conv_output_shape(h: int, w: int, kernel: int) -> tuple[int, int]:
    return h - kernel + 1, w - kernel + 1


def qconv2d_forward(x, layer: QConvLayer):
    """Valid, stride-1 quaternion convolution summed over input channels."""
    x, single = _as_batch(x)
    n, h, w, c, q = x.shape
    o, L = layer.out_channels, layer.kernel_size
    if c != layer.in_channels:
        raise ShapeError(f"input has {c} channels, layer expects {layer.in_channels}")
    if h < L or w < L:
        raise ShapeError(f"input {h}x{w} is smaller than the {L}x{L} kernel")
    ho, wo = conv_output_shape(h, w, L)

    # (N, Ho, Wo, C, q, L, L) -> (N*Ho*Wo, L, L, C, q)
    win = np.lib.stride_tricks.sliding_window_view(x, (L, L), axis=(1, 2))
    win = win.transpose(0, 1, 2, 5, 6, 3, 4)
    # matmul only reaches BLAS with contiguous operands
    patches_imag = np.ascontiguousarray(_imag(win).reshape(n * ho * wo, L * L * c * 3))
    patches_real = None
    if q == 4 and x[..., 0].any():
        patches_real = np.ascontiguousarray(win[..., 0].reshape(n * ho * wo, L * L * c))

    blocks = layer.block_weights()  # (O, C, L, L, b, a)
    w_imag = np.ascontiguousarray(blocks.transpose(2, 3, 1, 5, 0, 4).reshape(L * L * c * 3, o * 3))
    w_real = np.ascontiguousarray(layer.scale.transpose(2, 3, 1, 0).reshape(L * L * c, o))

    imag_out = (patches_imag @ w_imag).reshape(n, ho, wo, o, 3)
    if q == 3:
        out = imag_out
    else:
        out = np.zeros((n, ho, wo, o, 4))
        out[..., 1:] = imag_out
        if patches_real is not None:
            out[..., 0] = (patches_real @ w_real).reshape(n, ho, wo, o)
    cache = LayerCache(
        "qconv2d",
        patches_imag=patches_imag,
        patches_real=patches_real,
        w_imag=w_imag,
        w_real=w_real,
        in_shape=x.shape,
        scale=layer.scale.copy(),
        angle=layer.angle.copy(),
    )
    return _unbatch(out, single), cache


def qconv2d_backward(grad_out, cache: LayerCache, input_grad: bool = True):
    """Returns ``(grad_input, grad_scale, grad_angle)``; ``grad_input`` is None when not requested.

    Uses ``f = s R(theta) c``: df/ds = R(theta) c and df/dtheta = s R'(theta) c,
    accumulated over every output position a kernel element touches.
    """
    saved = _take(cache, "qconv2d")
    g, single = _as_batch(grad_out)
    n, h, w, c, q = saved["in_shape"]
    s, theta = saved["scale"], saved["angle"]
    o, _, L, _ = s.shape
    ho, wo = conv_output_shape(h, w, L)
    if g.shape != (n, ho, wo, o, q):
        raise ShapeError(f"gradient shape {g.shape} does not match output {(n, ho, wo, o, q)}")

    g_imag = np.ascontiguousarray(_imag(g).reshape(n * ho * wo, o * 3))
    g_real = None
    if q == 4 and g[..., 0].any():
        g_real = np.ascontiguousarray(g[..., 0].reshape(n * ho * wo, o))

    d_blocks = (saved["patches_imag"].T @ g_imag).reshape(L, L, c, 3, o, 3)
    d_blocks = d_blocks.transpose(4, 2, 0, 1, 5, 3)  # (O, C, L, L, b, a)
    rot = gray_rotation_matrix(theta)
    grad_scale = np.einsum("ocxyba,ocxyba->ocxy", d_blocks, rot)
    grad_angle = s * np.einsum("ocxyba,ocxyba->ocxy", d_blocks, gray_rotation_matrix_dtheta(theta))
    if g_real is not None and saved["patches_real"] is not None:
        grad_scale = grad_scale + (saved["patches_real"].T @ g_real).reshape(L, L, c, o).transpose(3, 2, 0, 1)

    if not input_grad:
        return None, grad_scale, grad_angle
    grad_in = np.zeros((n, h, w, c, q))
    gi_imag = _imag(grad_in)
    w_imag = saved["w_imag"].reshape(L, L, c * 3, o * 3)
    for dy in range(L):
        for dx in range(L):
            part = (g_imag @ w_imag[dy, dx].T).reshape(n, ho, wo, c, 3)
            gi_imag[:, dy : dy + ho, dx : dx + wo] += part
    if g_real is not None:
        w_real = saved["w_real"].reshape(L, L, c, o)
        for dy in range(L):
            for dx in range(L):
                part = (g_real @ w_real[dy, dx].T).reshape(n, ho, wo, c)
                grad_in[:, dy : dy + ho, dx : dx + wo, :, 0] += part
    return _unbatch(grad_in, single), grad_scale, grad_angle


def qrelu(x):
    """Project each pixel onto the colour cube: imaginary parts clamped to [0, 1], real part zeroed."""
    x, single = _as_batch(x)
    out = np.zeros_like(x)
    im = _imag(out)
    np.maximum(_imag(x), 0.0, out=im)
    np.minimum(im, 1.0, out=im)
    return _unbatch(out, single), LayerCache("qrelu", out=out)


def qrelu_backward(grad_out, cache: LayerCache):
    out = _take(cache, "qrelu")["out"]
    g, single = _as_batch(grad_out)
    # a component was strictly inside (0, 1) iff its clipped value is
    im = _imag(out)
    grad = np.zeros_like(g)
    _imag(grad)[...] = np.where((im > 0.0) & (im < 1.0), _imag(g), 0.0)
    return _unbatch(grad, single)


def qmaxpool(x, window: int = 2, stride: int = 2):
    """Keep, per window and channel, the quaternion whose imaginary part has the largest norm.

    Ties go to the earliest row-major position; trailing rows/columns that do
    not fill a window are dropped.
    """
    x, single = _as_batch(x)
    n, h, w, c, q = x.shape
    if h < window or w < window:
        raise ShapeError(f"input {h}x{w} is smaller than the pooling window {window}")
    hp = (h - window) // stride + 1
    wp = (w - window) // stride + 1
    energy = np.sum(_imag(x) ** 2, axis=-1)  # (N, H, W, C)
    ewin = np.lib.stride_tricks.sliding_window_view(energy, (window, window), axis=(1, 2))
    ewin = ewin[:, ::stride, ::stride][:, :hp, :wp].reshape(n, hp, wp, c, window * window)
    arg = np.argmax(ewin, axis=-1)
    rows, cols, nn, cc = _pool_index(arg, window, stride)
    out = x[nn, rows, cols, cc]
    return _unbatch(out, single), LayerCache(
        "qmaxpool", arg=arg, in_shape=x.shape, window=window, stride=stride
    )


def _pool_index(arg, window, stride):
    n, hp, wp, c = arg.shape
    rows = np.arange(hp)[None, :, None, None] * stride + arg // window
    cols = np.arange(wp)[None, None, :, None] * stride + arg % window
    nn = np.arange(n)[:, None, None, None]
    cc = np.arange(c)[None, None, None, :]
    return rows, cols, nn, cc


def qmaxpool_backward(grad_out, cache: LayerCache):
    saved = _take(cache, "qmaxpool")
    g, single = _as_batch(grad_out)
    grad_in = np.zeros(saved["in_shape"])
    rows, cols, nn, cc = _pool_index(saved["arg"], saved["window"], saved["stride"])
    if saved["stride"] >= saved["window"]:
        # windows are disjoint, so every input position is selected at most once
        grad_in[nn, rows, cols, cc] = g
    else:
        np.add.at(grad_in, (nn, rows, cols, cc), g)
    return _unbatch(grad_in, single)


def flatten(x):
    """Imaginary parts as reals, ordered row, column, channel, then (i, j, k)."""
    x, single = _as_batch(x)
    vec = _imag(x).reshape(x.shape[0], -1)
    return (vec[0] if single else vec), LayerCache("flatten", in_shape=x.shape, single=single)


def flatten_backward(grad_out, cache: LayerCache):
    saved = _take(cache, "flatten")
    shape = saved["in_shape"]
    g = np.zeros(shape)
    _imag(g)[...] = np.asarray(grad_out, dtype=np.float64).reshape(shape[:-1] + (3,))
    return _unbatch(g, saved["single"])


def unflatten(vec, height: int, width: int, channels: int) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    out = np.zeros(vec.shape[:-1] + (height, width, channels, 4))
    out[..., 1:] = vec.reshape(vec.shape[:-1] + (height, width, channels, 3))
    return out


def dense_forward(x, layer: DenseLayer):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.weight.shape[1]:
        raise ShapeError(f"input dim {x.shape[-1]} != dense in_dim {layer.weight.shape[1]}")
    return x @ layer.weight.T + layer.bias, LayerCache("dense", x=x, weight=layer.weight.copy())


def dense_backward(grad_out, cache: LayerCache):
    """Returns ``(grad_input, grad_weight, grad_bias)``."""
    saved = _take(cache, "dense")
    g = np.asarray(grad_out, dtype=np.float64)
    x, wt = saved["x"], saved["weight"]
    if g.shape[:-1] != x.shape[:-1] or g.shape[-1] != wt.shape[0]:
        raise ShapeError("gradient shape does not match dense output")
    g2 = g.reshape(-1, wt.shape[0])
    x2 = x.reshape(-1, wt.shape[1])
    return g @ wt, g2.T @ x2, g2.sum(axis=0)


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def dropout(x, p: float, rng: np.random.Generator | None = None, train: bool = True):
    """Inverted dropout; identity outside training or for ``p == 0``."""
    x = np.asarray(x, dtype=np.float64)
    if not train or p == 0.0:
        return x, LayerCache("dropout", mask=None)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, LayerCache("dropout", mask=mask)


def dropout_backward(grad_out, cache: LayerCache):
    mask = _take(cache, "dropout")["mask"]
    g = np.asarray(grad_out, dtype=np.float64)
    return g if mask is None else g * mask
