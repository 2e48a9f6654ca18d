"""
This module provides estimators for heavy-tailed Monte Carlo weights and
weighted two-sample comparisons.
"""

import math
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from src.services.errors import ConfigError, InsufficientData

MIN_BLOCKS = 8


def mean_and_stderr(x: np.ndarray) -> Tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise InsufficientData("no observations")
    stderr = x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else 0.0
    return float(x.mean()), float(stderr)


def median_of_means(x: np.ndarray, blocks: int) -> Tuple[float, float]:
    """
    Median of the means of ``blocks`` equal consecutive blocks (the remainder is dropped).

    Args:
        x (np.ndarray): Observations, in replicate order.
        blocks (int): Number of blocks, at least 8.

    Returns:
        Tuple[float, float]: The estimate and a CI half-width,
        sqrt(pi/2) * sd(block means) / sqrt(blocks), never zero.

    Raises:
        ConfigError: If blocks < 8.
        InsufficientData: If there are fewer observations than blocks.
    """
    if blocks < MIN_BLOCKS:
        raise ConfigError(f"median-of-means needs at least {MIN_BLOCKS} blocks, got {blocks}")
    x = np.asarray(x, dtype=float)
    if x.size < blocks:
        raise InsufficientData(f"{x.size} observations for {blocks} blocks")
    size = x.size // blocks
    means = x[: size * blocks].reshape(blocks, size).mean(axis=1)
    center = float(np.median(means))
    half_width = math.sqrt(math.pi / 2.0) * means.std(ddof=1) / math.sqrt(blocks)
    return center, max(float(half_width), np.finfo(float).eps * max(1.0, abs(center)))


def hill_tail_index(x: np.ndarray, k: Optional[int] = None) -> Optional[float]:
    """
    Hill estimate of the tail exponent of positive observations from the k largest.

    Returns None when the tail is degenerate (k < 2 or the top values are all equal).
    """
    x = np.sort(np.asarray(x, dtype=float)[np.asarray(x) > 0])[::-1]
    if k is None:
        k = int(math.sqrt(x.size))
    if k < 2 or x.size <= k:
        return None
    logs = np.log(x[:k] / x[k])
    mean = float(logs.mean())
    return 1.0 / mean if mean > 0 else None


def effective_sample_size(w: np.ndarray) -> float:
    w = np.asarray(w, dtype=float)
    return float(w.sum() ** 2 / np.sum(w * w))


def weighted_mean_and_stderr(x: np.ndarray, w: np.ndarray) -> Tuple[float, float]:
    """Self-normalized mean sum(w x)/sum(w) with its delta-method standard error."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    total = w.sum()
    mean = float(np.sum(w * x) / total)
    return mean, float(math.sqrt(np.sum(w * w * (x - mean) ** 2)) / total)


def weighted_ks(x: np.ndarray, w: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """
    Two-sample Kolmogorov-Smirnov between the weighted empirical law of x and
    the plain empirical law of y.

    With equal weights this is scipy's exact two-sample test; otherwise the
    statistic is the sup-distance of the ECDFs and the p-value uses the
    Kolmogorov law at the effective size n_eff * n_y / (n_eff + n_y).
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.all(w == w[0]):
        result = stats.ks_2samp(x, y)
        return float(result.statistic), float(result.pvalue)
    order = np.argsort(x)
    xs, cw = x[order], np.cumsum(w[order]) / w.sum()
    ys = np.sort(y)
    grid = np.concatenate([xs, ys])
    fx = np.concatenate([[0.0], cw])[np.searchsorted(xs, grid, side="right")]
    fy = np.searchsorted(ys, grid, side="right") / ys.size
    statistic = float(np.max(np.abs(fx - fy)))
    n_eff = effective_sample_size(w)
    size = max(1, int(round(n_eff * ys.size / (n_eff + ys.size))))
    return statistic, float(stats.kstwo.sf(statistic, size))
