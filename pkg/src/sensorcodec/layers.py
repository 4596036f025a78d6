"""Layer objects wrapping the differentiable ops with their weights.

Shapes passed to ``build`` are per-sample (batch axis excluded). Weights use
Glorot-uniform initialisation and zero biases; LSTM forget-gate biases
start at 1.
"""

import numpy as np

from . import ops
from .tensor import Tensor


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def _param(arr):
    return Tensor(np.asarray(arr, dtype=np.float32), requires_grad=True)


class Layer:
    kind = "layer"

    def build(self, input_shape, rng):
        self.input_shape = tuple(input_shape)
        self.output_shape = self.compute_output_shape(self.input_shape)
        return self.output_shape

    def compute_output_shape(self, input_shape):
        return input_shape

    def params(self):
        return []

    def config(self):
        return {}

    def spec(self):
        return {"kind": self.kind, **self.config()}

    def __call__(self, x, training=False, rng=None):
        raise NotImplementedError

    def __repr__(self):
        cfg = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({cfg})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, units, activation="linear"):
        self.units = units
        self.activation = activation

    def compute_output_shape(self, input_shape):
        return (*input_shape[:-1], self.units)

    def build(self, input_shape, rng):
        fan_in = input_shape[-1]
        self.W = _param(glorot_uniform(rng, (fan_in, self.units), fan_in, self.units))
        self.b = _param(np.zeros(self.units))
        return super().build(input_shape, rng)

    def params(self):
        return [self.W, self.b]

    def config(self):
        return {"units": self.units, "activation": self.activation}

    def __call__(self, x, training=False, rng=None):
        return ops.activation(ops.dense(x, self.W, self.b), self.activation)


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, filters, kernel=3, padding="same", activation="linear"):
        self.filters = filters
        self.kernel = kernel
        self.padding = padding
        self.activation = activation

    def compute_output_shape(self, input_shape):
        t, _ = input_shape
        t_out = t if self.padding == "same" else t - self.kernel + 1
        return (t_out, self.filters)

    def build(self, input_shape, rng):
        c = input_shape[-1]
        self.K = _param(glorot_uniform(rng, (self.kernel, c, self.filters),
                                       self.kernel * c, self.kernel * self.filters))
        self.b = _param(np.zeros(self.filters))
        return super().build(input_shape, rng)

    def params(self):
        return [self.K, self.b]

    def config(self):
        return {"filters": self.filters, "kernel": self.kernel, "padding": self.padding,
                "activation": self.activation}

    def __call__(self, x, training=False, rng=None):
        return ops.activation(ops.conv1d(x, self.K, self.b, self.padding), self.activation)


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, filters, kernel=(3, 3), padding="same", activation="linear"):
        self.filters = filters
        self.kernel = tuple(kernel)
        self.padding = padding
        self.activation = activation

    def compute_output_shape(self, input_shape):
        h, w, _ = input_shape
        if self.padding == "valid":
            h, w = h - self.kernel[0] + 1, w - self.kernel[1] + 1
        return (h, w, self.filters)

    def build(self, input_shape, rng):
        kh, kw = self.kernel
        c = input_shape[-1]
        self.K = _param(glorot_uniform(rng, (kh, kw, c, self.filters),
                                       kh * kw * c, kh * kw * self.filters))
        self.b = _param(np.zeros(self.filters))
        return super().build(input_shape, rng)

    def params(self):
        return [self.K, self.b]

    def config(self):
        return {"filters": self.filters, "kernel": list(self.kernel), "padding": self.padding,
                "activation": self.activation}

    def __call__(self, x, training=False, rng=None):
        return ops.activation(ops.conv2d(x, self.K, self.b, self.padding), self.activation)


class MaxPool(Layer):
    """Max pooling; ``axes`` index the per-sample shape."""

    kind = "maxpool"

    def __init__(self, window, axes):
        self.window = tuple(window)
        self.axes = tuple(axes)

    def compute_output_shape(self, input_shape):
        out = list(input_shape)
        for ax, p in zip(self.axes, self.window):
            out[ax] = -(-out[ax] // p)
        return tuple(out)

    def config(self):
        return {"window": list(self.window), "axes": list(self.axes)}

    def __call__(self, x, training=False, rng=None):
        return ops.max_pool(x, self.window, tuple(a + 1 for a in self.axes))


class UpSample2D(Layer):
    kind = "upsample2d"

    def __init__(self, factor=(2, 2)):
        self.factor = tuple(factor)

    def compute_output_shape(self, input_shape):
        h, w, c = input_shape
        return (h * self.factor[0], w * self.factor[1], c)

    def config(self):
        return {"factor": list(self.factor)}

    def __call__(self, x, training=False, rng=None):
        return ops.upsample2d(x, self.factor)


class LSTM(Layer):
    kind = "lstm"

    def __init__(self, units, return_sequences=False, cell_activation="tanh",
                 output_activation="linear"):
        self.units = units
        self.return_sequences = return_sequences
        self.cell_activation = cell_activation
        self.output_activation = output_activation

    def compute_output_shape(self, input_shape):
        t, _ = input_shape
        return (t, self.units) if self.return_sequences else (self.units,)

    def build(self, input_shape, rng):
        c = input_shape[-1]
        u = self.units
        self.W = _param(glorot_uniform(rng, (c, 4 * u), c, 4 * u))
        self.U = _param(glorot_uniform(rng, (u, 4 * u), u, 4 * u))
        b = np.zeros(4 * u, dtype=np.float32)
        b[u:2 * u] = 1.0
        self.b = _param(b)
        return super().build(input_shape, rng)

    def params(self):
        return [self.W, self.U, self.b]

    def config(self):
        return {"units": self.units, "return_sequences": self.return_sequences,
                "cell_activation": self.cell_activation,
                "output_activation": self.output_activation}

    def __call__(self, x, training=False, rng=None):
        h = ops.lstm(x, self.W, self.U, self.b, self.units, self.return_sequences,
                     self.cell_activation)
        return ops.activation(h, self.output_activation)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate):
        self.rate = rate

    def config(self):
        return {"rate": self.rate}

    def __call__(self, x, training=False, rng=None):
        return ops.dropout(x, self.rate, training, rng)


class Flatten(Layer):
    kind = "flatten"

    def compute_output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def __call__(self, x, training=False, rng=None):
        return ops.flatten(x)


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, target_shape):
        self.target_shape = tuple(target_shape)

    def compute_output_shape(self, input_shape):
        if int(np.prod(input_shape)) != int(np.prod(self.target_shape)):
            raise ValueError(f"cannot reshape {input_shape} to {self.target_shape}")
        return self.target_shape

    def config(self):
        return {"target_shape": list(self.target_shape)}

    def __call__(self, x, training=False, rng=None):
        return ops.reshape(x, (x.shape[0], *self.target_shape))


class RepeatVector(Layer):
    kind = "repeat"

    def __init__(self, n):
        self.n = n

    def compute_output_shape(self, input_shape):
        if len(input_shape) != 1:
            raise ValueError(f"RepeatVector needs a flat input, got {input_shape}")
        return (self.n, input_shape[0])

    def config(self):
        return {"n": self.n}

    def __call__(self, x, training=False, rng=None):
        return ops.repeat_vector(x, self.n)


class TimeDistributed(Layer):
    """Apply ``inner`` independently to every entry of axis 1."""

    kind = "time_distributed"

    def __init__(self, inner):
        self.inner = inner

    def build(self, input_shape, rng):
        self.steps = input_shape[0]
        inner_out = self.inner.build(input_shape[1:], rng)
        self.input_shape = tuple(input_shape)
        self.output_shape = (self.steps, *inner_out)
        return self.output_shape

    def params(self):
        return self.inner.params()

    def config(self):
        return {"inner": self.inner.spec()}

    def __call__(self, x, training=False, rng=None):
        n, s = x.shape[0], x.shape[1]
        folded = ops.reshape(x, (n * s, *x.shape[2:]))
        y = self.inner(folded, training, rng)
        return ops.reshape(y, (n, s, *y.shape[1:]))

    def __repr__(self):
        return f"TimeDistributed({self.inner!r})"
