"""
Local-thresholding binarizers from document image analysis.

Niblack thresholds each pixel at T = mu + k * sigma of its window, Sauvola
at T = mu * (1 + k * (sigma / R - 1)). Windows are clipped at the borders
(no padding) and sigma is the population standard deviation. Window
statistics are taken relative to the centre pixel, so a constant window
has exactly zero spread and Niblack is exactly invariant to shifting x.
"""

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tensor.bits import BitTensor
from tensor.real import RealTensor
from utils.exceptions import ConfigError


def check_window(window: int) -> None:
    if window < 3 or window % 2 == 0:
        raise ConfigError(f"Local threshold window must be odd and >= 3, got {window}", key="window")


def window_stats(x: np.ndarray, window: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-pixel (mean offset from the centre pixel, population std) over clipped windows.
    """
    check_window(window)
    r = window // 2
    spatial = ((0, 0), (0, 0), (r, r), (r, r))
    padded = np.pad(x, spatial)
    inside = np.pad(np.ones(x.shape, dtype=bool), spatial)
    cols = sliding_window_view(padded, (window, window), axis=(2, 3))
    mask = sliding_window_view(inside, (window, window), axis=(2, 3))
    count = mask.sum(axis=(-2, -1))
    offsets = np.where(mask, cols - x[..., None, None], 0.0)
    mean_offset = offsets.sum(axis=(-2, -1)) / count
    spread = np.where(mask, offsets - mean_offset[..., None, None], 0.0)
    sigma = np.sqrt((spread * spread).sum(axis=(-2, -1)) / count)
    return mean_offset, sigma


def niblack_margin(x: np.ndarray, k_n: float, window: int) -> np.ndarray:
    """x - T for Niblack; positive means +1."""
    mean_offset, sigma = window_stats(x, window)
    return -(mean_offset + k_n * sigma)


def default_range(x: np.ndarray) -> np.ndarray:
    """Half the dynamic range of every (n, c) map; 1 where the map is constant."""
    span = x.max(axis=(2, 3), keepdims=True) - x.min(axis=(2, 3), keepdims=True)
    half = span / 2.0
    return np.where(half > 0, half, 1.0)


def sauvola_margin(x: np.ndarray, k_s: float, window: int, R: Optional[float] = None) -> np.ndarray:
    """x - T for Sauvola; positive means +1."""
    if R is not None and R <= 0:
        raise ConfigError(f"Sauvola R must be positive, got {R}", key="R")
    mean_offset, sigma = window_stats(x, window)
    r = default_range(x) if R is None else R
    mu = x + mean_offset
    return x - mu * (1.0 + k_s * (sigma / r - 1.0))


def niblack(x: RealTensor, k_n: float = -0.2, window: int = 3) -> BitTensor:
    """
    Niblack binarization: +1 where x > mu + k_n * sigma.

    Args:
        x (RealTensor): Map to binarize.
        k_n (float): Weight of the local standard deviation.
        window (int): Odd window side, at least 3.

    Returns:
        BitTensor: Binary map of x's shape.
    """
    return BitTensor.from_bool(niblack_margin(x.data, k_n, window) > 0)


def sauvola(x: RealTensor, k_s: float = 0.2, window: int = 3, R: Optional[float] = None) -> BitTensor:
    """
    Sauvola binarization: +1 where x > mu * (1 + k_s * (sigma / R - 1)).

    R defaults to half the dynamic range of each map, recomputed per call.
    """
    return BitTensor.from_bool(sauvola_margin(x.data, k_s, window, R) > 0)
