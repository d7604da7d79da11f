"""Flat parameter vectors with a named-segment layout."""

from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutMismatch

Layout = list[tuple[str, tuple[int, ...]]]


@dataclass
class ParamVector:
    """Flat float64 model parameters plus the (name, shape) segment layout.

    Segments are views into ``data``, so in-place optimizer updates through
    ``get`` are visible in the flat vector and vice versa.
    """

    data: np.ndarray
    layout: Layout
    _offsets: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        off = 0
        for name, shape in self.layout:
            size = int(np.prod(shape)) if shape else 1
            self._offsets[name] = (off, shape)
            off += size
        if off != self.data.size:
            raise LayoutMismatch(
                f"layout covers {off} values but data has {self.data.size}"
            )

    @classmethod
    def zeros(cls, layout: Layout) -> "ParamVector":
        size = sum(int(np.prod(s)) if s else 1 for _, s in layout)
        return cls(np.zeros(size), list(layout))

    def get(self, name: str) -> np.ndarray:
        off, shape = self._offsets[name]
        size = int(np.prod(shape)) if shape else 1
        return self.data[off:off + size].reshape(shape)

    def copy(self) -> "ParamVector":
        return ParamVector(self.data.copy(), list(self.layout))

    def same_layout(self, other: "ParamVector") -> bool:
        return self.layout == other.layout

    def __len__(self) -> int:
        return self.data.size
