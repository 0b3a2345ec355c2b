import numpy as np

from acvg.tensor import ParamStore, Tensor
from acvg.tensor import functional as F


# He-uniform scale for layers followed by a leaky ReLU; the default keeps
# +-1/sqrt(fan_in) for layers feeding a sigmoid, tanh or nothing.
LEAKY_GAIN = float(np.sqrt(6.0 / (1.0 + F.LEAKY_SLOPE**2)))


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, gain: float = 1.0) -> np.ndarray:
    bound = gain / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def add_conv(
    store: ParamStore,
    name: str,
    c_out: int,
    c_in: int,
    kernel: int,
    rng: np.random.Generator,
    gain: float = 1.0,
) -> None:
    store.add(f"{name}.weight", _uniform(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel, gain))
    store.add(f"{name}.bias", np.zeros(c_out))


def add_conv_transpose(
    store: ParamStore,
    name: str,
    c_in: int,
    c_out: int,
    kernel: int,
    rng: np.random.Generator,
    gain: float = 1.0,
) -> None:
    store.add(f"{name}.weight", _uniform(rng, (c_in, c_out, kernel, kernel), c_in * kernel * kernel, gain))
    store.add(f"{name}.bias", np.zeros(c_out))


def add_dense(
    store: ParamStore, name: str, fan_in: int, fan_out: int, rng: np.random.Generator, gain: float = 1.0
) -> None:
    store.add(f"{name}.weight", _uniform(rng, (fan_in, fan_out), fan_in, gain))
    store.add(f"{name}.bias", np.zeros(fan_out))


def add_conv_lstm(
    store: ParamStore, name: str, c_in: int, hidden: int, kernel: int, rng: np.random.Generator
) -> None:
    fan_in = (c_in + hidden) * kernel * kernel
    store.add(f"{name}.weight", _uniform(rng, (4 * hidden, c_in + hidden, kernel, kernel), fan_in))
    store.add(f"{name}.bias", _forget_bias(hidden))


def add_lstm(store: ParamStore, name: str, n_in: int, hidden: int, rng: np.random.Generator) -> None:
    store.add(f"{name}.weight", _uniform(rng, (n_in + hidden, 4 * hidden), n_in + hidden))
    store.add(f"{name}.bias", _forget_bias(hidden))


def _forget_bias(hidden: int) -> np.ndarray:
    # Gate order is i, f, o, g.
    bias = np.zeros(4 * hidden)
    bias[hidden : 2 * hidden] = 1.0
    return bias


def conv(store: ParamStore, name: str, x: Tensor, stride: int = 1, padding: int = 1) -> Tensor:
    return F.conv2d(x, store[f"{name}.weight"], store[f"{name}.bias"], stride=stride, padding=padding)


def conv_transpose(store: ParamStore, name: str, x: Tensor, stride: int = 1, padding: int = 1) -> Tensor:
    return F.conv2d_transpose(x, store[f"{name}.weight"], store[f"{name}.bias"], stride=stride, padding=padding)


def dense(store: ParamStore, name: str, x: Tensor) -> Tensor:
    return F.dense(x, store[f"{name}.weight"], store[f"{name}.bias"])


def as_input(value) -> Tensor:
    """Wrap raw arrays as constants; tensors pass through unchanged."""
    return value if isinstance(value, Tensor) else Tensor(value)


def zero_parameters(store: ParamStore) -> None:
    for _, param in store.items():
        param.data[...] = 0.0
