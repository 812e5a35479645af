"""Hand-written forward and backward passes for the patch classifier.

Layers operate on float64 numpy arrays in NCHW layout. Each layer caches
what its backward pass needs during a train-mode forward; eval-mode forward
is pure and keeps no cache.

Eval-mode matrix products run through fixed-shape row chunks. BLAS kernels
pick different reduction orders for different matrix heights, so naive
batched products are not bit-identical across batch sizes; padding every
product to a constant chunk height makes each output row depend only on its
own input row, which gives bit-exact batching invariance at prediction time.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

# Fixed row-chunk heights for the batching-invariant eval path.
_CONV_CHUNK = 4096
_DENSE_CHUNK = 64


def _chunked_matmul(a: np.ndarray, b: np.ndarray, chunk: int) -> np.ndarray:
    """a @ b computed in fixed (chunk, k) slabs, zero-padding the tail.

    Output rows are bitwise independent of the total row count of `a`.
    """
    m = a.shape[0]
    out = np.empty((m, b.shape[1]), dtype=np.result_type(a, b))
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        if stop - start == chunk:
            out[start:stop] = a[start:stop] @ b
        else:
            slab = np.zeros((chunk, a.shape[1]), dtype=a.dtype)
            slab[: stop - start] = a[start:stop]
            out[start:stop] = (slab @ b)[: stop - start]
    return out


class Layer:
    """Base class: parameters, gradients, and the forward/backward pair."""

    name = "layer"

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def state(self) -> dict[str, np.ndarray]:
        """Params plus any non-trainable tensors that belong in a checkpoint."""
        return self.params()

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        cache = getattr(self, "_cache", None)
        if cache is None:
            raise RuntimeError(f"{self.name}: backward called without a train-mode forward")
        self._cache = None
        return cache


class Conv2d(Layer):
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved)."""

    def __init__(self, name: str, in_channels: int, out_channels: int, dtype=np.float64):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.w = np.zeros((out_channels, in_channels, 3, 3), dtype=dtype)
        self.b = np.zeros(out_channels, dtype=dtype)
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(2, 3))
        # (n, c, h, w, 3, 3) -> rows indexed by (sample, pixel), cols by (c, ki, kj)
        return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * 9)

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"{self.name}: expected (n, {self.in_channels}, h, w) input, got {x.shape}"
            )
        n, _, h, w = x.shape
        cols = self._im2col(x)
        wmat = self.w.reshape(self.out_channels, -1).T
        if train:
            out = cols @ wmat
            self._cache = (cols, x.shape)
        else:
            out = _chunked_matmul(cols, wmat, _CONV_CHUNK)
        out += self.b
        return out.reshape(n, h, w, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad):
        cols, (n, c, h, w) = self._take_cache()
        gmat = grad.transpose(0, 2, 3, 1).reshape(n * h * w, self.out_channels)
        self.grads = {
            "w": (gmat.T @ cols).reshape(self.w.shape),
            "b": gmat.sum(axis=0),
        }
        gcols = (gmat @ self.w.reshape(self.out_channels, -1)).reshape(n, h, w, c, 3, 3)
        gpad = np.zeros((n, h + 2, w + 2, c), dtype=gcols.dtype)
        for ki in range(3):
            for kj in range(3):
                gpad[:, ki : ki + h, kj : kj + w, :] += gcols[:, :, :, :, ki, kj]
        return gpad[:, 1 : h + 1, 1 : w + 1, :].transpose(0, 3, 1, 2)


class ReLU(Layer):
    def __init__(self, name: str):
        self.name = name
        self.grads = {}
        self._cache = None

    def forward(self, x, train=False):
        if train:
            self._cache = x > 0
        return np.maximum(x, 0.0)

    def backward(self, grad):
        return grad * self._take_cache()


class Sigmoid(Layer):
    def __init__(self, name: str):
        self.name = name
        self.grads = {}
        self._cache = None

    def forward(self, x, train=False):
        # Overflow-safe split form; both branches evaluate exp(-|x|).
        z = np.exp(-np.abs(x))
        y = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
        if train:
            self._cache = y
        return y

    def backward(self, grad):
        y = self._take_cache()
        return grad * y * (1.0 - y)


class BatchNorm(Layer):
    """Per-feature normalization; feature axis 1 for 4-d input, 1-d per unit.

    Train mode normalizes with biased batch statistics and folds them into
    the running averages; eval mode applies the running statistics as a
    fixed affine map.
    """

    def __init__(self, name: str, num_features: int, eps: float = 1e-5, momentum: float = 0.1,
                 dtype=np.float64):
        self.name = name
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(num_features, dtype=dtype)
        self.beta = np.zeros(num_features, dtype=dtype)
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)
        self.grads = {}
        self._cache = None

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def state(self):
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "running_mean": self.running_mean,
            "running_var": self.running_var,
        }

    def _shape(self, x):
        if x.ndim == 4:
            return (0, 2, 3), (1, self.num_features, 1, 1)
        if x.ndim == 2:
            return (0,), (1, self.num_features)
        raise ValueError(f"{self.name}: expected 2-d or 4-d input, got {x.ndim}-d")

    def forward(self, x, train=False):
        axes, bshape = self._shape(x)
        if x.shape[1] != self.num_features:
            raise ValueError(
                f"{self.name}: expected {self.num_features} features, got {x.shape[1]}"
            )
        if train:
            if x.shape[0] < 2:
                raise ValueError(f"{self.name}: train-mode batch must have at least 2 samples")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = x.size // self.num_features
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var * m / (m - 1) - self.running_var)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = x - mean.reshape(bshape)
        xhat *= inv_std.reshape(bshape)
        if train:
            self._cache = (xhat, inv_std, axes, bshape)
        out = self.gamma.reshape(bshape) * xhat
        out += self.beta.reshape(bshape)
        return out

    def backward(self, grad):
        xhat, inv_std, axes, bshape = self._take_cache()
        spec = "nf,nf->f" if grad.ndim == 2 else "nfhw,nfhw->f"
        dot_gx = np.einsum(spec, grad, xhat)
        self.grads = {"gamma": dot_gx, "beta": grad.sum(axis=axes)}
        m = grad.size // self.num_features
        gx = grad * self.gamma.reshape(bshape)
        gx -= (self.gamma * self.grads["beta"] / m).reshape(bshape)
        gx -= xhat * (self.gamma * dot_gx / m).reshape(bshape)
        gx *= inv_std.reshape(bshape)
        return gx


class MaxPool2(Layer):
    """Non-overlapping 2x2 max pooling; gradients route to the first argmax
    in row-major scan order of each 2x2 block."""

    def __init__(self, name: str):
        self.name = name
        self.grads = {}
        self._cache = None

    @staticmethod
    def _blocks(x):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"pooling requires even spatial extents, got {h}x{w}")
        return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
            n, c, h // 2, w // 2, 4
        )

    def forward(self, x, train=False):
        blocks = self._blocks(x)
        if train:
            self._cache = (np.argmax(blocks, axis=-1), x.shape)
        return blocks.max(axis=-1)

    def backward(self, grad):
        argmax, (n, c, h, w) = self._take_cache()
        flat = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad.dtype)
        np.put_along_axis(flat, argmax[..., None], grad[..., None], axis=-1)
        return flat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
            n, c, h, w
        )


class Flatten(Layer):
    def __init__(self, name: str):
        self.name = name
        self.grads = {}
        self._cache = None

    def forward(self, x, train=False):
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._take_cache())


class Dense(Layer):
    def __init__(self, name: str, in_features: int, out_features: int, dtype=np.float64):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        self.w = np.zeros((out_features, in_features), dtype=dtype)
        self.b = np.zeros(out_features, dtype=dtype)
        self.grads = {}
        self._cache = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(
                f"{self.name}: expected (n, {self.in_features}) input, got {x.shape}"
            )
        if train:
            self._cache = x
            return x @ self.w.T + self.b
        return _chunked_matmul(x, self.w.T, _DENSE_CHUNK) + self.b

    def backward(self, grad):
        x = self._take_cache()
        self.grads = {"w": grad.T @ x, "b": grad.sum(axis=0)}
        return grad @ self.w


def bce_loss(y: np.ndarray, t: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross entropy and its gradient with respect to y.

    Predictions are clamped to [1e-7, 1 - 1e-7] before the logs, so the loss
    is finite for saturated outputs; the gradient is evaluated at the clamped
    values.
    """
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    n = y.shape[0]
    yc = np.clip(y, 1e-7, 1.0 - 1e-7)
    loss = -np.mean(t * np.log(yc) + (1.0 - t) * np.log(1.0 - yc))
    grad = -(t / yc - (1.0 - t) / (1.0 - yc)) / n
    return float(loss), grad


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. Defaults give the full-size classifier:
    three conv/ReLU/BN/pool blocks (24, 48, 96 channels) over a 2x40x40
    input, then 2400 -> 1200 -> 600 -> 1 sigmoid MLP with 1-d BN."""

    in_channels: int = 2
    patch_size: int = 40
    conv_channels: tuple[int, int, int] = (24, 48, 96)
    hidden_sizes: tuple[int, int] = (1200, 600)
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    # MLP block order is Dense -> Sigmoid -> BN by default (mirroring the
    # conv blocks); set True for Dense -> BN -> Sigmoid instead.
    bn_before_activation: bool = False
    # float64 is the verification build; float32 trades precision for speed.
    dtype: str = "float64"

    def __post_init__(self):
        if self.patch_size % 8 != 0 or self.patch_size < 8:
            raise ValueError("patch_size must be a positive multiple of 8 (three 2x poolings)")
        if len(self.conv_channels) != 3 or len(self.hidden_sizes) != 2:
            raise ValueError("architecture is fixed at 3 conv blocks and 2 hidden layers")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be 'float64' or 'float32'")

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    @property
    def flat_features(self) -> int:
        side = self.patch_size // 8
        return self.conv_channels[2] * side * side


class Model:
    """The full classifier: an ordered layer list ending in one sigmoid unit."""

    def __init__(self, config: ModelConfig = ModelConfig()):
        self.config = config
        c1, c2, c3 = config.conv_channels
        h1, h2 = config.hidden_sizes
        dtype = config.np_dtype

        def bn(name, n):
            return BatchNorm(name, n, eps=config.bn_eps, momentum=config.bn_momentum,
                             dtype=dtype)

        self.layers: list[Layer] = [
            Conv2d("conv1", config.in_channels, c1, dtype=dtype),
            ReLU("relu1"),
            bn("bn1", c1),
            MaxPool2("pool1"),
            Conv2d("conv2", c1, c2, dtype=dtype),
            ReLU("relu2"),
            bn("bn2", c2),
            MaxPool2("pool2"),
            Conv2d("conv3", c2, c3, dtype=dtype),
            ReLU("relu3"),
            bn("bn3", c3),
            MaxPool2("pool3"),
            Flatten("flatten"),
        ]
        for i, (nin, nout) in enumerate([(config.flat_features, h1), (h1, h2)], start=1):
            dense = Dense(f"fc{i}", nin, nout, dtype=dtype)
            act = Sigmoid(f"sig{i}")
            norm = bn(f"bnf{i}", nout)
            if config.bn_before_activation:
                self.layers += [dense, norm, act]
            else:
                self.layers += [dense, act, norm]
        self.layers += [Dense("fc3", h2, 1, dtype=dtype), Sigmoid("sig_out")]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Map a (n, in_channels, patch, patch) batch to n probabilities."""
        expected = (self.config.in_channels, self.config.patch_size, self.config.patch_size)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ValueError(f"expected input shape (n, {expected[0]}, {expected[1]}, "
                             f"{expected[2]}), got {x.shape}")
        out = np.asarray(x, dtype=self.config.np_dtype)
        for layer in self.layers:
            out = layer.forward(out, train=train)
        return out.reshape(-1)

    def backward(self, grad_probs: np.ndarray) -> dict[str, np.ndarray]:
        """Backpropagate d(loss)/d(probability); returns gradients keyed like
        parameters(). Requires a preceding train-mode forward."""
        grad = np.asarray(grad_probs, dtype=self.config.np_dtype).reshape(-1, 1)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return {
            f"{layer.name}.{key}": g
            for layer in self.layers
            for key, g in layer.grads.items()
        }

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable tensors, keyed "<layer>.<tensor>"; arrays are live views."""
        return {
            f"{layer.name}.{key}": v for layer in self.layers for key, v in layer.params().items()
        }

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Everything a checkpoint stores: parameters plus running statistics."""
        return {
            f"{layer.name}.{key}": v for layer in self.layers for key, v in layer.state().items()
        }


def init_model(seed: int, config: ModelConfig = ModelConfig()) -> Model:
    """Build a model with deterministic seeded initialization.

    Conv kernels draw from N(0, 2/fan_in) (He), dense weights from the
    Xavier uniform range; biases start at zero, BN at identity.
    """
    model = Model(config)
    rng = np.random.default_rng(seed)
    for layer in model.layers:
        if isinstance(layer, Conv2d):
            fan_in = layer.in_channels * 9
            layer.w[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=layer.w.shape)
        elif isinstance(layer, Dense):
            limit = np.sqrt(6.0 / (layer.in_features + layer.out_features))
            layer.w[...] = rng.uniform(-limit, limit, size=layer.w.shape)
    return model
