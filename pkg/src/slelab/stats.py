"""Small statistics helpers shared by the Monte Carlo estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass
class Estimate:
    estimate: float
    stderr: float
    replicas: int
    extra: dict = field(default_factory=dict)

    def within(self, target: float, k: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.estimate - target) <= k * self.stderr + slack

    def as_dict(self) -> dict:
        out = {"estimate": self.estimate, "stderr": self.stderr, "replicas": self.replicas}
        out.update(self.extra)
        return out


def mean_estimate(samples, **extra) -> Estimate:
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n == 0:
        raise DomainError("no samples")
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return Estimate(float(x.mean()), se, n, dict(extra))


def proportion_estimate(hits, **extra) -> Estimate:
    x = np.asarray(hits, dtype=float)
    n = len(x)
    p = float(x.mean())
    return Estimate(p, math.sqrt(max(p * (1 - p), 0.0) / n), n, dict(extra))


def median_of_means(samples, blocks: int = 16, axis: int = 0) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    n = x.shape[axis]
    if n < blocks:
        return np.median(x, axis=axis)
    parts = np.array_split(x, blocks, axis=axis)
    return np.median(np.stack([p.mean(axis=axis) for p in parts]), axis=0)


@dataclass
class LineFit:
    slope: float
    intercept: float
    slope_stderr: float


def fit_line(x, y, weights=None) -> LineFit:
    """Weighted least squares ``y ~ intercept + slope x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if len(x) < 2:
        raise DomainError("need at least two points to fit a line")
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    if sxx <= 0:
        raise DomainError("degenerate abscissae")
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    icpt = ym - slope * xm
    if weights is not None:
        se = math.sqrt(1.0 / sxx)
    elif len(x) > 2:
        resid = y - icpt - slope * x
        se = math.sqrt((resid ** 2).sum() / (len(x) - 2) / sxx)
    else:
        se = float("nan")
    return LineFit(float(slope), float(icpt), se)


def log_fit(t, values, stderr=None) -> LineFit:
    """Fit ``log values`` against ``log t``; ``stderr`` gives delta-method weights."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0):
        raise DomainError("log fit needs positive values")
    w = None
    if stderr is not None:
        rel = np.asarray(stderr, dtype=float) / v
        # exact data (zero error bars) falls back to an unweighted fit
        if np.any(rel > 0):
            w = 1.0 / np.maximum(rel, rel[rel > 0].min()) ** 2
    return fit_line(np.log(t), np.log(v), w)
