"""
Uniqueness ratio of binary convolution outputs.

A binary map A is convolved with every +-1 kernel of size k x k and each
output is binarized again. The ratio of distinct binary outputs n_c to
kernels n_t = 2^(k*k) measures how much of the kernel space survives
binarization.
"""

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional

import numpy as np

from binarize.kinds import BinarizerKind, Lab, SignSTE
from bitconv.binconv import BinConvLayer, binconv
from schemas.report_schemas import LayerUniqueness, UniquenessReport, log_power
from tensor.bits import BitTensor
from tensor.real import RealTensor
from tensor.shape import Padding
from utils.exceptions import ShapeMismatchError, UniquenessLimitError
from utils.logger import get_logger

logger = get_logger(__name__)

MAX_KERNEL_SIZE = 4

# Kernels convolved per binconv call
_KERNEL_CHUNK = 4096


def enumerate_kernels(k: int, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
    """
    Kernels start..stop-1 of the 2^(k*k) enumeration as a (count, 1, k, k) bool array.

    Bit j of the kernel index is tap j in row-major order; a set bit is +1.
    """
    stop = 2 ** (k * k) if stop is None else stop
    index = np.arange(start, stop, dtype=np.uint64)[:, None]
    taps = ((index >> np.arange(k * k, dtype=np.uint64)) & np.uint64(1)).astype(bool)
    return taps.reshape(-1, 1, k, k)


def _channel_binarizer(binarizer: BinarizerKind, channel: int) -> BinarizerKind:
    if isinstance(binarizer, Lab) and binarizer.params.channels > 1:
        return binarizer.channel(channel)
    return binarizer


def _distinct_outputs(a: BitTensor, k: int, binarizer: BinarizerKind, padding: Padding, start: int, stop: int) -> Dict[bytes, List[bytes]]:
    """Digest -> distinct canonical outputs among kernels start..stop-1."""
    layer = BinConvLayer(BitTensor.from_bool(enumerate_kernels(k, start, stop)), padding=padding)
    d = binconv(a, layer).data
    # every kernel output becomes its own single-channel map
    outputs = binarizer.binarize(RealTensor.wrap(d.reshape(-1, 1, d.shape[2], d.shape[3])))
    seen: Dict[bytes, List[bytes]] = {}
    for i in range(outputs.shape.n):
        canonical = outputs.words[i].tobytes()
        bucket = seen.setdefault(hashlib.sha256(canonical).digest(), [])
        if canonical not in bucket:
            bucket.append(canonical)
    return seen


def _merge(into: Dict[bytes, List[bytes]], other: Dict[bytes, List[bytes]]) -> None:
    for digest, outputs in other.items():
        bucket = into.setdefault(digest, [])
        for canonical in outputs:
            # a shared digest only counts once the bytes agree
            if canonical not in bucket:
                bucket.append(canonical)


def uniqueness_eta(
    a: BitTensor,
    k: int,
    binarizer: Optional[BinarizerKind] = None,
    padding: Padding = Padding.valid(),
    threads: int = 1,
) -> UniquenessReport:
    """
    Count the distinct binarized outputs of every k x k binary kernel on `a`.

    Args:
        a (BitTensor): Single-image single-channel binary map.
        k (int): Kernel size, 1 to 4.
        binarizer (BinarizerKind, optional): Applied to each convolution
            output; sign when omitted.
        padding (Padding): Padding of the binary convolution.
        threads (int): Workers enumerating disjoint kernel ranges.

    Returns:
        UniquenessReport: Counts, eta and the logarithmic combination bounds.

    Raises:
        UniquenessLimitError: If k > 4.
        ShapeMismatchError: If `a` is not a single 1 x 1 x H x W map.
    """
    if k > MAX_KERNEL_SIZE:
        raise UniquenessLimitError(f"Enumerating 2^{k * k} kernels is not feasible; k must be <= {MAX_KERNEL_SIZE}")
    if k < 1:
        raise UniquenessLimitError(f"Kernel size must be positive, got {k}")
    if a.shape.n != 1 or a.shape.c != 1:
        raise ShapeMismatchError(f"Uniqueness needs a single-channel single-image map, got {a.shape.as_tuple()}")
    binarizer = binarizer or SignSTE()

    n_t = 2 ** (k * k)
    ranges = [(start, min(start + _KERNEL_CHUNK, n_t)) for start in range(0, n_t, _KERNEL_CHUNK)]
    distinct: Dict[bytes, List[bytes]] = {}
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(lambda r: _distinct_outputs(a, k, binarizer, padding, *r), ranges)
            for part in parts:
                _merge(distinct, part)
    else:
        for start, stop in ranges:
            _merge(distinct, _distinct_outputs(a, k, binarizer, padding, start, stop))
    n_c = sum(len(bucket) for bucket in distinct.values())

    field = k * k * a.shape.c
    cells = a.shape.h * a.shape.w
    return UniquenessReport(
        k=k,
        c_in=a.shape.c,
        height=a.shape.h,
        width=a.shape.w,
        padding=str(padding),
        binarizer=binarizer.label,
        n_t=n_t,
        n_c=n_c,
        log_theoretical_max_N=log_power(field, cells),
        log_alternative_max_N=log_power(field + 1, cells),
    )


def layer_uniqueness(
    layer: str,
    bits: BitTensor,
    binarizer: BinarizerKind,
    k: int = 3,
    padding: Padding = Padding.valid(),
    max_channels: Optional[int] = None,
    threads: int = 1,
) -> LayerUniqueness:
    """
    Mean eta over every (image, channel) map of one layer's binary input.

    LAB layers analyse channel c with that channel's own LAB parameters.
    """
    channels = bits.shape.c if max_channels is None else min(max_channels, bits.shape.c)
    etas = []
    for n in range(bits.shape.n):
        for c in range(channels):
            report = uniqueness_eta(bits.channel(n, c), k, _channel_binarizer(binarizer, c), padding, threads)
            etas.append(report.eta)
    logger.debug(f"Uniqueness {layer} [{binarizer.label}]: mean eta {np.mean(etas):.4f} over {len(etas)} maps")
    return LayerUniqueness(
        layer=layer,
        binarizer=binarizer.label,
        mean_eta=float(np.mean(etas)),
        min_eta=float(np.min(etas)),
        max_eta=float(np.max(etas)),
        maps=len(etas),
        height=bits.shape.h,
        width=bits.shape.w,
    )
