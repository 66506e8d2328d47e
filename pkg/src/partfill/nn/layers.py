"""Dense layers with explicit forward/backward passes on numpy arrays.

Shared per-point layers use the (batch, channels, points) convention; fully
connected layers use (batch, features). Everything runs in double precision by
default so finite-difference gradient checks are meaningful; pass
dtype=np.float32 for speed.

A layer's backward() consumes the upstream gradient of its last forward(),
accumulates into Parameter.grad, and returns the gradient w.r.t. its input.
Forward/backward on one instance are not thread-safe (caches, running stats);
distinct instances are independent.
"""

from __future__ import annotations

import numpy as np


class Parameter:
    """A learnable array with paired gradient and optimizer state."""

    __slots__ = ("value", "grad", "m1", "m2", "step")

    def __init__(self, value):
        self.value = np.array(value)
        self.grad = np.zeros_like(self.value)
        self.m1 = np.zeros_like(self.value)  # first moment
        self.m2 = np.zeros_like(self.value)  # second moment
        self.step = 0


class Module:
    """Base for layers and networks.

    Children (sub-modules and parameters) are discovered from instance
    attributes in definition order, so parameter naming and initialization
    order are deterministic.
    """

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value

    def _local_params(self):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield name, value

    def named_params(self, prefix: str = ""):
        for name, p in self._local_params():
            yield prefix + name, p
        for name, child in self._children():
            yield from child.named_params(f"{prefix}{name}.")

    def params(self):
        return [p for _, p in self.named_params()]

    def local_buffers(self) -> dict:
        return {}

    def set_local_buffer(self, name: str, value: np.ndarray) -> None:
        raise KeyError(f"{type(self).__name__} has no buffer {name!r}")

    def named_buffers(self, prefix: str = ""):
        for name, arr in self.local_buffers().items():
            yield prefix + name, arr
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def buffer_slots(self, prefix: str = ""):
        """Yield (full name, owning module, local name) for every buffer."""
        for name in self.local_buffers():
            yield prefix + name, self, name
        for name, child in self._children():
            yield from child.buffer_slots(f"{prefix}{name}.")


class ModuleList(Module):
    def __init__(self, modules=()):
        self._items = list(modules)

    def _children(self):
        for i, m in enumerate(self._items):
            yield str(i), m

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _uniform_init(rng: np.random.Generator, fan_in: int, shape, dtype) -> np.ndarray:
    # Kaiming-uniform, fan-in mode
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class SharedLinear(Module):
    """Affine map applied independently at every point (kernel-size-1 conv)."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, dtype=np.float64):
        self.weight = Parameter(_uniform_init(rng, c_in, (c_out, c_in), dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype))
        self.c_in = c_in
        self.c_out = c_out

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.c_in:
            raise ValueError(f"expected (B, {self.c_in}, N) input, got {x.shape}")
        self._x = x
        return np.matmul(self.weight.value, x) + self.bias.value[None, :, None]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x = self._x
        # batched gemm against transpose views; avoids tensordot's big copies
        self.weight.grad += np.matmul(grad_out, x.transpose(0, 2, 1)).sum(axis=0)
        self.bias.grad += grad_out.sum(axis=(0, 2))
        return np.matmul(self.weight.value.T, grad_out)


class Linear(Module):
    """Fully connected affine map on (B, features)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float64):
        self.weight = Parameter(_uniform_init(rng, d_in, (d_out, d_in), dtype))
        self.bias = Parameter(np.zeros(d_out, dtype=dtype))
        self.d_in = d_in
        self.d_out = d_out

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ValueError(f"expected (B, {self.d_in}) input, got {x.shape}")
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        self.weight.grad += grad_out.T @ self._x
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value


class BatchNormPoints(Module):
    """Per-channel batch normalization over the (batch, points) population.

    Train mode normalizes with the current batch statistics and updates the
    running estimates; eval mode applies the running estimates, making the
    layer a fixed per-channel affine map.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float64):
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.channels = channels

    def local_buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def set_local_buffer(self, name, value):
        if name == "running_mean":
            self.running_mean = np.array(value, dtype=self.running_mean.dtype)
        elif name == "running_var":
            self.running_var = np.array(value, dtype=self.running_var.dtype)
        else:
            raise KeyError(f"BatchNormPoints has no buffer {name!r}")

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ValueError(f"expected (B, {self.channels}, N) input, got {x.shape}")
        B, _, N = x.shape
        if train:
            if B * N < 2:
                raise ValueError("batch norm in train mode needs at least 2 values per channel")
            m = B * N
            mean = x.sum(axis=(0, 2)) / m
            var = np.maximum(np.einsum("bcn,bcn->c", x, x) / m - mean * mean, 0.0)
            mom = self.momentum
            self.running_mean = (1.0 - mom) * self.running_mean + mom * mean
            self.running_var = (1.0 - mom) * self.running_var + mom * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        scale = self.gamma.value * inv
        shift = self.beta.value - scale * mean
        self._cache = (x, mean, inv, train)
        return x * scale[None, :, None] + shift[None, :, None]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, mean, inv, train = self._cache
        s1 = grad_out.sum(axis=(0, 2))
        s2 = np.einsum("bcn,bcn->c", grad_out, x)
        dgamma = (s2 - mean * s1) * inv  # equals sum(grad * xhat) without forming xhat
        self.gamma.grad += dgamma
        self.beta.grad += s1
        if not train:
            return grad_out * (self.gamma.value * inv)[None, :, None]
        B, _, N = grad_out.shape
        m = B * N
        # dx = A * grad + Bc * x + C per channel, the closed form of the
        # batch-statistics backward with xhat eliminated
        a = self.gamma.value * inv
        bc = -a * inv * dgamma / m
        c = -a * s1 / m - bc * mean
        return grad_out * a[None, :, None] + x * bc[None, :, None] + c[None, :, None]


class ReLU(Module):
    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, x.dtype.type(0))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return np.where(self._mask, grad_out, grad_out.dtype.type(0))


class Tanh(Module):
    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * (1.0 - self._y * self._y)


class MaxPoolPoints(Module):
    """Max over the points axis of (B, C, N).

    The backward pass routes the gradient only to the argmax positions; ties
    resolve to the first (lowest) index, so routing is deterministic.
    """

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.shape[2] < 1:
            raise ValueError("max pool needs at least one point")
        self._shape = x.shape
        self._idx = x.argmax(axis=2)
        return np.take_along_axis(x, self._idx[:, :, None], axis=2)[:, :, 0]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        out = np.zeros(self._shape, dtype=grad_out.dtype)
        np.put_along_axis(out, self._idx[:, :, None], grad_out[:, :, None], axis=2)
        return out


class Sequential(Module):
    def __init__(self, *layers):
        self.steps = ModuleList(layers)

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        for layer in self.steps:
            x = layer.forward(x, train)
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        for layer in reversed(list(self.steps)):
            grad_out = layer.backward(grad_out)
        return grad_out
