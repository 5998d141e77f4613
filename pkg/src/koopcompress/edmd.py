"""Least-squares estimation of the Koopman matrix from snapshot pairs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cartpole import SnapshotPairs
from .dictionary import Dictionary, evaluate, evaluate_batch

DEFAULT_SVD_TOLERANCE = 1e-10


class DegenerateDataError(ValueError):
    """Data matrix is identically zero; nothing to fit."""


@dataclass(frozen=True)
class DataMatrices:
    """Dictionary evaluations of the before/after snapshots, column-wise."""

    psi_x1: np.ndarray  # (D, s)
    psi_x2: np.ndarray  # (D, s)

    def __post_init__(self):
        if self.psi_x1.shape != self.psi_x2.shape or self.psi_x1.ndim != 2:
            raise ValueError("psi_x1/psi_x2 must be equal-shape (D, s) arrays")


@dataclass(frozen=True)
class KoopmanMatrix:
    """Square matrix advancing dictionary vectors one time step.

    k maps the dictionary evaluation of a state to (approximately) the
    dictionary evaluation of the next state. dict_hash pins the dictionary
    the matrix was fitted on; residual is the Frobenius training residual.
    """

    k: np.ndarray
    dict_hash: str
    svd_tolerance: float
    residual: float = float("nan")

    def __post_init__(self):
        if self.k.ndim != 2 or self.k.shape[0] != self.k.shape[1]:
            raise ValueError("k must be square")
        if not np.all(np.isfinite(self.k)):
            raise ValueError("k must be finite")

    @property
    def dim(self) -> int:
        return self.k.shape[0]


def build_data_matrices(dic: Dictionary, pairs: SnapshotPairs) -> DataMatrices:
    """Lift snapshot pairs into dictionary space.

    Raises on non-finite dictionary values, naming the first offending
    (pair index, entry index).
    """
    psi_x1 = evaluate_batch(dic, pairs.before)
    psi_x2 = evaluate_batch(dic, pairs.after)
    for name, mat in (("before", psi_x1), ("after", psi_x2)):
        bad = np.argwhere(~np.isfinite(mat))
        if len(bad):
            entry, pair = int(bad[0][0]), int(bad[0][1])
            raise ValueError(
                f"non-finite dictionary value in {name} data at "
                f"pair {pair}, entry {entry}"
            )
    return DataMatrices(psi_x1=psi_x1, psi_x2=psi_x2)


def estimate(data: DataMatrices,
             svd_tolerance: float = DEFAULT_SVD_TOLERANCE,
             dict_hash: str = "") -> KoopmanMatrix:
    """Minimum-norm least-squares fit K = Psi(X2) Psi(X1)^+.

    The pseudo-inverse is computed via SVD; singular values below
    svd_tolerance * sigma_max are treated as zero. Monomial dictionaries at
    high degree are severely ill-conditioned, which is why the cutoff is
    explicit and configurable.
    """
    psi_x1, psi_x2 = data.psi_x1, data.psi_x2
    if not psi_x1.any():
        raise DegenerateDataError("Psi(X1) is identically zero")
    u, sigma, vt = np.linalg.svd(psi_x1, full_matrices=False)
    keep = sigma > svd_tolerance * sigma[0]
    # K = Psi(X2) V S^-1 U^T restricted to the kept singular directions.
    projected = psi_x2 @ vt[keep].T            # (D, r)
    k = (projected / sigma[keep]) @ u[:, keep].T
    # Residual via Pythagoras: K Psi(X1) is the projection of Psi(X2) onto
    # the kept row space, so ||resid||^2 = ||Psi(X2)||^2 - ||projection||^2.
    total = float(np.sum(psi_x2**2))
    explained = float(np.sum(projected**2))
    residual = float(np.sqrt(max(total - explained, 0.0)))
    return KoopmanMatrix(k=k, dict_hash=dict_hash,
                         svd_tolerance=svd_tolerance, residual=residual)


def rollout(km: KoopmanMatrix, dic: Dictionary, initial,
            steps: int) -> np.ndarray:
    """Predict `steps` states ahead by iterating the full matrix.

    Row t holds the state predicted t + 1 steps after `initial`, read from
    the degree-1 dictionary entries. Rows from the first non-finite
    iterate onward are NaN.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    psi = evaluate(dic, initial)
    if psi.shape[0] != km.dim:
        raise ValueError("dictionary size does not match the matrix")
    lin = dic.linear_indices()
    out = np.full((steps, len(lin)), np.nan)
    # Overflow is detected on the iterate and recorded as NaN rows, so
    # numpy's warnings add nothing.
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(steps):
            psi = km.k @ psi
            if not np.all(np.isfinite(psi)):
                break
            out[t] = psi[lin]
    return out


def save_koopman(path_prefix, km: KoopmanMatrix) -> None:
    """Write row-major float64 binary plus a JSON sidecar."""
    prefix = Path(path_prefix)
    np.ascontiguousarray(km.k, dtype=np.float64).tofile(f"{prefix}.bin")
    sidecar = {
        "dimension": km.dim,
        "dict_hash": km.dict_hash,
        "svd_tolerance": km.svd_tolerance,
        "residual": km.residual,
    }
    with open(f"{prefix}.json", "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=1)


def load_koopman(path_prefix) -> KoopmanMatrix:
    prefix = Path(path_prefix)
    with open(f"{prefix}.json") as fh:
        sidecar = json.load(fh)
    dim = int(sidecar["dimension"])
    k = np.fromfile(f"{prefix}.bin", dtype=np.float64)
    if k.size != dim * dim:
        raise ValueError(f"expected {dim * dim} values, found {k.size}")
    return KoopmanMatrix(k=k.reshape(dim, dim),
                         dict_hash=sidecar["dict_hash"],
                         svd_tolerance=float(sidecar["svd_tolerance"]),
                         residual=float(sidecar["residual"]))
