from typing import Iterator

import numpy as np

from acvg.tensor.tensor import Tensor


class ParamStore:
    """Named parameters plus their Adam moments and step counters.

    Names are dot-separated paths; iteration is lexicographic so that updates
    and serialization happen in one fixed order.
    """

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self.first_moment: dict[str, np.ndarray] = {}
        self.second_moment: dict[str, np.ndarray] = {}
        self.steps: dict[str, int] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"Parameter {name!r} is already registered.")
        param = Tensor(data, requires_grad=True, name=name)
        self._params[name] = param
        self.first_moment[name] = np.zeros_like(param.data)
        self.second_moment[name] = np.zeros_like(param.data)
        self.steps[name] = 0
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> list[tuple[str, Tensor]]:
        return [(name, self._params[name]) for name in self.names()]

    def values(self) -> list[Tensor]:
        return [self._params[name] for name in self.names()]

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.grad = None

    def requires_grad_(self, flag: bool) -> None:
        for param in self._params.values():
            param.requires_grad = flag

    def snapshot(self) -> dict[str, bytes]:
        """Raw parameter bytes, for bitwise before/after comparisons."""
        return {name: param.data.tobytes() for name, param in self.items()}

    def copy_from(self, other: "ParamStore") -> None:
        for name, param in other.items():
            self._params[name].data = param.data.copy()
            self.first_moment[name] = other.first_moment[name].copy()
            self.second_moment[name] = other.second_moment[name].copy()
            self.steps[name] = other.steps[name]
