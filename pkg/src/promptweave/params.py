"""Named parameter store with a frozen/trainable partition."""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from .numerics import Tensor

NAMESPACES = ("backbone", "mmgm", "prompts")


class ParamStore:
    """Ordered mapping ``name -> Tensor``; ``name`` is dot-separated, first part a namespace."""

    def __init__(self, tensors: dict[str, Tensor] | None = None, trainable: Iterable[str] | None = None):
        self.tensors: dict[str, Tensor] = dict(tensors or {})
        self.trainable: set[str] = set(self.tensors) if trainable is None else set(trainable)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self.tensors:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(value, dtype=np.float32), name=name)
        self.tensors[name] = t
        if trainable:
            self.trainable.add(name)
        return t

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.tensors if n.startswith(prefix)]

    @property
    def frozen(self) -> set[str]:
        return set(self.tensors) - self.trainable

    def set_trainable(self, prefixes: Iterable[str]) -> None:
        """Make exactly the parameters under ``prefixes`` trainable."""
        prefixes = tuple(prefixes)
        self.trainable = {n for n in self.tensors if n.startswith(prefixes)}

    def mark_requires_grad(self) -> None:
        for n, t in self.tensors.items():
            t.requires_grad = n in self.trainable
            t.grad = None

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def count(self, prefix: str = "", names: Iterable[str] | None = None) -> int:
        pool = self.tensors if names is None else {n: self.tensors[n] for n in names}
        return int(sum(t.size for n, t in pool.items() if n.startswith(prefix)))

    def copy(self, dtype=None) -> ParamStore:
        out = ParamStore(trainable=())
        for n, t in self.tensors.items():
            arr = t.data.astype(dtype) if dtype is not None else t.data.copy()
            out.tensors[n] = Tensor(arr, name=n)
        out.trainable = set(self.trainable)
        return out

    def update_from(self, other: ParamStore, names: Iterable[str] | None = None) -> None:
        for n in names if names is not None else other.tensors:
            self.tensors[n] = Tensor(other.tensors[n].data.copy(), name=n)

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.tensors.items()}
