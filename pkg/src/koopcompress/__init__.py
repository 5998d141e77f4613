"""Compressing data-driven Koopman matrices by row/column co-clustering.

The package covers the full experiment loop: cart-pole data generation,
monomial dictionaries, least-squares Koopman estimation, single-linkage
co-cluster compression with exact recovery accounting, a truncated SVD
baseline, and accuracy/latency/storage reports.
"""

from . import (cartpole, cli, compress, dictionary, edmd, evaluation, hclust,
               svd_baseline)

__version__ = "0.1.0"

__all__ = [
    "cartpole",
    "cli",
    "compress",
    "dictionary",
    "edmd",
    "evaluation",
    "hclust",
    "svd_baseline",
    "__version__",
]
