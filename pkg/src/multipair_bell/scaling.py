"""Least-squares scaling fits used to summarise sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_fit(x, y) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise InvalidInputError("need at least two matching points to fit")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(slope), float(intercept), r2)


def _positive(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise InvalidInputError("log fits need strictly positive values")
    return y


def power_fit(x, y) -> LinearFit:
    """Fit ``log y = slope * log x + c``; ``slope`` is the scaling exponent."""
    return linear_fit(np.log(_positive(x)), np.log(_positive(y)))


def exponential_fit(x, y) -> LinearFit:
    """Fit ``log y = slope * x + c``."""
    return linear_fit(x, np.log(_positive(y)))


def loglog_slope(x, y) -> float:
    return power_fit(x, y).slope
