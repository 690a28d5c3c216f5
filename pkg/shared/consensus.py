"""Reduction of per-seed metrics into sweep rows."""

from __future__ import annotations

from typing import Iterable, Mapping, Tuple

import numpy as np


def mean_std(values: Iterable[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation; a single value has std 0."""
    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        raise ValueError("cannot reduce an empty sample")
    std = float(np.std(data, ddof=1)) if data.size > 1 else 0.0
    return float(np.mean(data)), std


def total(samples: Iterable[Mapping[str, float]], key: str) -> int:
    return int(sum(sample[key] for sample in samples))
