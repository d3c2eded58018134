"""
Post-binarization distribution: fraction of +1 values per channel.
"""

from typing import List

import numpy as np

from schemas.report_schemas import DistributionReport
from tensor.bits import BitTensor


def binary_distribution(b: BitTensor, layer: str = "") -> DistributionReport:
    """
    Fraction of +1 entries of every channel over all images, and their mean.

    Row padding bits are always zero, so popcounting whole words counts
    exactly the +1 entries.
    """
    ones = np.bitwise_count(b.words).sum(axis=(0, 2, 3), dtype=np.int64)
    fractions = ones / (b.shape.n * b.shape.h * b.shape.w)
    return DistributionReport(
        layer=layer,
        channel_fractions=[float(f) for f in fractions],
        mean_fraction=float(fractions.mean()),
        image_count=b.shape.n,
    )


def merge_distributions(reports: List[DistributionReport]) -> DistributionReport:
    """Image-weighted mean of reports of the same layer computed over separate batches."""
    total = sum(r.image_count for r in reports)
    fractions = sum(np.asarray(r.channel_fractions) * r.image_count for r in reports) / total
    return DistributionReport(
        layer=reports[0].layer,
        channel_fractions=[float(f) for f in fractions],
        mean_fraction=float(fractions.mean()),
        image_count=total,
    )
