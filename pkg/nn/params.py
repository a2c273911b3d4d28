"""Flat parameter vectors with a named layout."""

from collections import OrderedDict
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from errors import NumericError, ValidationError


class ParamLayout:
    """Maps tensor names to (offset, shape) slices of one flat vector."""

    def __init__(self, entries: Iterable[Tuple[str, Tuple[int, ...]]] = ()):
        self.entries: "OrderedDict[str, Tuple[int, Tuple[int, ...]]]" = OrderedDict()
        self.size = 0
        for name, shape in entries:
            self.add(name, shape)

    def add(self, name: str, shape: Tuple[int, ...]) -> None:
        if name in self.entries:
            raise ValidationError(f"duplicate parameter name {name!r}")
        shape = tuple(int(d) for d in shape)
        self.entries[name] = (self.size, shape)
        self.size += int(np.prod(shape, dtype=np.int64))

    def slice(self, name: str) -> slice:
        offset, shape = self.entries[name]
        return slice(offset, offset + int(np.prod(shape, dtype=np.int64)))

    def shape(self, name: str) -> Tuple[int, ...]:
        return self.entries[name][1]

    def names(self):
        return list(self.entries)

    def __eq__(self, other):
        return isinstance(other, ParamLayout) and list(self.entries.items()) == list(other.entries.items())

    def __contains__(self, name):
        return name in self.entries


class Params:
    """
    A flat float64 vector plus its layout.

    `view(name)` returns a reshaped view into the vector, so writes through the
    view update the parameters. Gradients use the same layout.
    """

    def __init__(self, layout: ParamLayout, values: Optional[np.ndarray] = None):
        self.layout = layout
        if values is None:
            values = np.zeros(layout.size)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (layout.size,):
            raise ValidationError(f"parameter vector has shape {values.shape}, layout needs ({layout.size},)")
        self.values = values

    def view(self, name: str, vector: Optional[np.ndarray] = None) -> np.ndarray:
        source = self.values if vector is None else vector
        return source[self.layout.slice(name)].reshape(self.layout.shape(name))

    def zeros_like(self) -> np.ndarray:
        return np.zeros_like(self.values)

    def copy(self) -> "Params":
        return Params(self.layout, self.values.copy())

    def with_values(self, values: np.ndarray) -> "Params":
        return Params(self.layout, values)

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise NumericError("parameters contain non-finite values")

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {name: self.view(name) for name in self.layout.names()}

    def __len__(self):
        return self.layout.size
