"""
Channel-pair dissimilarity of feature maps.

SSIM is computed over the whole map as a single window with dynamic range
L = 2 (the span of a +-1 map). ENDSIM is
sqrt((mean|a_i - a_j|)^2 + (mean|a_i + a_j|)^2); it is 2 for both
identical and fully inverted +-1 maps.
"""

from itertools import combinations
from typing import Optional, Sequence, Union

import numpy as np
from skimage.metrics import structural_similarity

from schemas.report_schemas import DissimilarityReport, LayerDissimilarity
from tensor.real import RealTensor
from utils.exceptions import ShapeMismatchError
from utils.logger import get_logger

logger = get_logger(__name__)

DYNAMIC_RANGE = 2.0
K1, K2 = 0.01, 0.03

MapLike = Union[RealTensor, np.ndarray]


def _plane(x: MapLike) -> np.ndarray:
    arr = x.data if isinstance(x, RealTensor) else np.asarray(x)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 4:
        if arr.shape[0] != 1 or arr.shape[1] != 1:
            raise ShapeMismatchError(f"Expected a single channel slice, got {arr.shape}")
        arr = arr[0, 0]
    if arr.ndim != 2:
        raise ShapeMismatchError(f"Expected an H x W map, got {arr.shape}")
    return arr


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Maps differ in size: {a.shape} vs {b.shape}")


def ssim(a: MapLike, b: MapLike, window: Optional[int] = None) -> float:
    """
    Structural similarity of two maps.

    Args:
        a, b: Channel slices of identical H x W.
        window (int, optional): Odd window side for the sliding-window
            variant (scikit-image); None is the global single-window SSIM.

    Returns:
        float: SSIM in [-1, 1].
    """
    a, b = _plane(a), _plane(b)
    _check_pair(a, b)
    if window is not None:
        return float(structural_similarity(
            a, b, win_size=window, data_range=DYNAMIC_RANGE, use_sample_covariance=False,
        ))
    c1 = (K1 * DYNAMIC_RANGE) ** 2
    c2 = (K2 * DYNAMIC_RANGE) ** 2
    mu_a, mu_b = a.mean(), b.mean()
    da, db = a - mu_a, b - mu_b
    var_a, var_b = (da * da).mean(), (db * db).mean()
    cov = (da * db).mean()
    return float(((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))


def endsim(a: MapLike, b: MapLike) -> float:
    """Euclidean norm dissimilarity of two channel slices."""
    a, b = _plane(a), _plane(b)
    _check_pair(a, b)
    return float(np.hypot(np.abs(a - b).mean(), np.abs(a + b).mean()))


def _pairwise_ssim(maps: np.ndarray) -> np.ndarray:
    """Global SSIM of every channel pair i < j of a (C, H*W) stack."""
    c1 = (K1 * DYNAMIC_RANGE) ** 2
    c2 = (K2 * DYNAMIC_RANGE) ** 2
    mu = maps.mean(axis=1)
    centered = maps - mu[:, None]
    var = (centered * centered).mean(axis=1)
    cov = centered @ centered.T / maps.shape[1]
    numerator = (2 * np.outer(mu, mu) + c1) * (2 * cov + c2)
    denominator = (mu[:, None] ** 2 + mu[None, :] ** 2 + c1) * (var[:, None] + var[None, :] + c2)
    upper = np.triu_indices(maps.shape[0], k=1)
    return (numerator / denominator)[upper]


def _pairwise_endsim(maps: np.ndarray) -> np.ndarray:
    """ENDSIM of every channel pair i < j of a (C, H*W) stack."""
    values = []
    for i in range(maps.shape[0] - 1):
        rest = maps[i + 1:]
        diff = np.abs(maps[i] - rest).mean(axis=1)
        total = np.abs(maps[i] + rest).mean(axis=1)
        values.append(np.hypot(diff, total))
    return np.concatenate(values)


def layer_dissimilarity(layer: str, x: RealTensor, stage: str = "post", window: Optional[int] = None) -> LayerDissimilarity:
    """
    Mean SSIM and ENDSIM over all unordered channel pairs, averaged per image then over images.

    Raises:
        ShapeMismatchError: If the layer has fewer than 2 channels.
    """
    n, c, h, w = x.data.shape
    if c < 2:
        raise ShapeMismatchError(f"Dissimilarity of {layer} needs at least 2 channels, got {c}")
    per_image_ssim, per_image_endsim = [], []
    for image in range(n):
        maps = x.data[image].reshape(c, h * w).astype(np.float64)
        if window is None:
            ssim_values = _pairwise_ssim(maps)
        else:
            ssim_values = np.array([
                ssim(maps[i].reshape(h, w), maps[j].reshape(h, w), window) for i, j in combinations(range(c), 2)
            ])
        per_image_ssim.append(ssim_values.mean())
        per_image_endsim.append(_pairwise_endsim(maps).mean())
    return LayerDissimilarity(
        layer=layer,
        stage=stage,
        mean_ssim=float(np.mean(per_image_ssim)),
        mean_endsim=float(np.mean(per_image_endsim)),
        pair_count=c * (c - 1) // 2,
        image_count=n,
    )


def pairwise_dissimilarity(
    layers: Sequence[RealTensor],
    names: Optional[Sequence[str]] = None,
    stage: str = "post",
    window: Optional[int] = None,
) -> DissimilarityReport:
    """
    Dissimilarity report over several layers' feature maps.

    Args:
        layers: One (images, C, H, W) tensor per layer.
        names: Layer labels; defaults to layer0, layer1, ...
        stage: "pre" for real maps before binarization, "post" for +-1 maps.
        window: Sliding SSIM window, None for global SSIM.
    """
    names = list(names) if names is not None else [f"layer{i}" for i in range(len(layers))]
    if len(names) != len(layers):
        raise ShapeMismatchError(f"{len(names)} names for {len(layers)} layers")
    rows = []
    for name, x in zip(names, layers):
        row = layer_dissimilarity(name, x, stage, window)
        logger.debug(f"Dissimilarity {name} [{stage}]: SSIM {row.mean_ssim:.4f}, ENDSIM {row.mean_endsim:.4f}")
        rows.append(row)
    return DissimilarityReport(layers=rows)
