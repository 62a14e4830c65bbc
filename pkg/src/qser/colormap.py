from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._colormap_data import VIRIDIS


@dataclass(frozen=True)
class Colormap:
    name: str
    table: np.ndarray  # (256, 3), channels in [0, 1]

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.shape != (256, 3):
            raise ValueError(f"colormap needs 256 RGB entries, got shape {t.shape}")
        if t.min() < 0.0 or t.max() > 1.0:
            raise ValueError("colormap channels must lie in [0, 1]")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)


_REGISTRY = {"viridis": VIRIDIS}


def get_colormap(name: str = "viridis") -> Colormap:
    try:
        data = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown colormap {name!r}; available: {sorted(_REGISTRY)}") from None
    return Colormap(name, np.array(data, dtype=np.float64))
