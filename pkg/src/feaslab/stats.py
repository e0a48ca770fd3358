"""Small statistics helpers shared by estimators and experiments."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class Estimate(NamedTuple):
    """A probability with its standard error (0 for closed-form values)."""

    value: float
    stderr: float = 0.0


def wilson_stderr(hits: int, n: int) -> float:
    """Standard error of a frequency from the Wilson score interval at z = 1.

    Unlike ``sqrt(p (1 - p) / n)`` it stays positive when ``hits`` is 0 or
    ``n``, which matters because the frequencies of interest are small.
    """
    if n <= 0:
        raise ValueError("need at least one trial")
    p = hits / n
    return math.sqrt(p * (1.0 - p) / n + 1.0 / (4.0 * n * n)) / (1.0 + 1.0 / n)


def frequency(flags) -> Estimate:
    flags = np.asarray(flags, bool)
    n = flags.size
    hits = int(flags.sum())
    return Estimate(hits / n, wilson_stderr(hits, n))


def loglinear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares fit ``log y = a + b x``; returns ``(b, a, r_squared)``."""
    x = np.asarray(x, float)
    ly = np.log(np.asarray(y, float))
    if x.size < 2:
        raise ValueError("need two points with positive frequency to fit a slope")
    b, a = np.polyfit(x, ly, 1)
    resid = ly - (a + b * x)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(b), float(a), r2
