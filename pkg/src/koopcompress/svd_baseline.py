"""Truncated singular value decomposition baseline.

Keeps the leading rank-r factors of the Koopman matrix and applies them in
factored form, so storage and per-step work both scale with 2 * D * r
instead of D * D.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dictionary import Dictionary, evaluate
from .edmd import KoopmanMatrix


@dataclass(frozen=True)
class SvdFactors:
    """Rank-r factorization K ~ left @ right.

    left is U_r scaled by the singular values (D x r) and right is V_r^T
    (r x D); the element count is therefore 2 * D * r.
    """

    left: np.ndarray
    right: np.ndarray
    source_hash: str = ""

    def __post_init__(self):
        if self.left.ndim != 2 or self.right.ndim != 2:
            raise ValueError("factors must be matrices")
        if self.left.shape[1] != self.right.shape[0]:
            raise ValueError("inner dimensions of the factors must agree")
        if self.left.shape[0] != self.right.shape[1]:
            raise ValueError("factors must compose to a square matrix")

    @property
    def dim(self) -> int:
        return self.left.shape[0]

    @property
    def rank(self) -> int:
        return self.left.shape[1]

    @property
    def element_count(self) -> int:
        return 2 * self.dim * self.rank


def truncate(km: KoopmanMatrix | np.ndarray, rank: int,
             source_hash: str = "") -> SvdFactors:
    """Best rank-r approximation of a square matrix in Frobenius norm."""
    if isinstance(km, KoopmanMatrix):
        k = km.k
        source_hash = source_hash or km.dict_hash
    else:
        k = np.asarray(km, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("expected a square matrix")
    if not 1 <= rank <= k.shape[0]:
        raise ValueError(f"rank must be in [1, {k.shape[0]}], got {rank}")
    u, sigma, vt = np.linalg.svd(k, full_matrices=False)
    return SvdFactors(left=u[:, :rank] * sigma[:rank], right=vt[:rank],
                      source_hash=source_hash)


def reconstruct(factors: SvdFactors) -> np.ndarray:
    return factors.left @ factors.right


def rollout(factors: SvdFactors, dic: Dictionary, initial,
            steps: int) -> np.ndarray:
    """Predict `steps` states ahead, applying the factors right-to-left.

    Row t holds the state predicted t + 1 steps after `initial`, read from
    the degree-1 dictionary entries. Rows from the first non-finite
    iterate onward are NaN.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    psi = evaluate(dic, initial)
    if psi.shape[0] != factors.dim:
        raise ValueError("dictionary size does not match the factorization")
    lin = dic.linear_indices()
    out = np.full((steps, len(lin)), np.nan)
    # Overflow is detected on the iterate and recorded as NaN rows, so
    # numpy's warnings add nothing.
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(steps):
            psi = factors.left @ (factors.right @ psi)
            if not np.all(np.isfinite(psi)):
                break
            out[t] = psi[lin]
    return out


def save_factors(path_prefix, factors: SvdFactors) -> None:
    prefix = Path(path_prefix)
    np.ascontiguousarray(factors.left).tofile(f"{prefix}.left.bin")
    np.ascontiguousarray(factors.right).tofile(f"{prefix}.right.bin")
    doc = {"dimension": factors.dim, "rank": factors.rank,
           "source_hash": factors.source_hash}
    with open(f"{prefix}.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_factors(path_prefix) -> SvdFactors:
    prefix = Path(path_prefix)
    with open(f"{prefix}.json") as fh:
        doc = json.load(fh)
    dim = int(doc["dimension"])
    rank = int(doc["rank"])
    left = np.fromfile(f"{prefix}.left.bin", dtype=np.float64)
    right = np.fromfile(f"{prefix}.right.bin", dtype=np.float64)
    if left.size != dim * rank or right.size != dim * rank:
        raise ValueError("binary payload does not match the stored shape")
    return SvdFactors(left=left.reshape(dim, rank),
                      right=right.reshape(rank, dim),
                      source_hash=doc["source_hash"])
