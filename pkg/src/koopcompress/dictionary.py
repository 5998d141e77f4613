"""Monomial observable dictionaries used to lift states into feature space."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from math import comb

import numpy as np

DEFAULT_SIZE_CAP = 10**6


class DictionarySizeError(ValueError):
    """Requested dictionary would exceed the configured size cap."""


class EvaluationOverflowError(ArithmeticError):
    """A dictionary entry evaluated to a non-finite value."""

    def __init__(self, entry_index: int, exponents: tuple[int, ...]):
        self.entry_index = entry_index
        self.exponents = exponents
        super().__init__(
            f"dictionary entry {entry_index} with exponents {exponents} "
            f"evaluated to a non-finite value"
        )


@dataclass(frozen=True)
class Dictionary:
    """Ordered monomial basis over the state variables.

    Entries are exponent tuples in graded order: ascending total degree,
    and within each degree descending lexicographic on the exponents, so
    that for the 4-dimensional cart-pole state the listing starts
    1, x, theta, x_dot, theta_dot, x^2, x*theta, ...
    The first entry is always the constant function.
    """

    state_dim: int
    max_degree: int
    entries: tuple[tuple[int, ...], ...]

    @property
    def size(self) -> int:
        return len(self.entries)

    def exponent_array(self) -> np.ndarray:
        """Entries as an int array of shape (size, state_dim)."""
        return np.array(self.entries, dtype=np.int64)

    def index_of(self, exponents) -> int:
        """Position of an exponent tuple, or raise KeyError."""
        key = tuple(int(e) for e in exponents)
        try:
            return self.entries.index(key)
        except ValueError:
            raise KeyError(f"exponents {key} not in dictionary") from None

    def linear_indices(self) -> np.ndarray:
        """Positions of the degree-1 entries, one per state variable.

        These are the entries used to read a state vector back out of a
        dictionary-space vector.
        """
        if self.max_degree < 1:
            raise ValueError("dictionary has no degree-1 entries")
        idx = []
        for var in range(self.state_dim):
            unit = tuple(1 if v == var else 0 for v in range(self.state_dim))
            idx.append(self.index_of(unit))
        return np.array(idx, dtype=np.int64)

    def to_json(self) -> str:
        doc = {
            "state_dim": self.state_dim,
            "max_degree": self.max_degree,
            "entries": [list(e) for e in self.entries],
        }
        return json.dumps(doc, sort_keys=True)

    def content_hash(self) -> str:
        """SHA-256 of the canonical JSON form; used to pin artifacts."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _compositions(total: int, parts: int):
    """All exponent tuples of length `parts` summing to `total`, in
    descending lexicographic order."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def build(state_dim: int, max_degree: int,
          size_cap: int = DEFAULT_SIZE_CAP) -> Dictionary:
    """Build the monomial dictionary of all total degrees <= max_degree.

    The resulting size is C(state_dim + max_degree, max_degree); for the
    4-dimensional state at degree 10 this is 1001.
    """
    if state_dim < 1:
        raise ValueError("state_dim must be >= 1")
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    size = comb(state_dim + max_degree, max_degree)
    if size > size_cap:
        raise DictionarySizeError(
            f"dictionary size {size} exceeds cap {size_cap}"
        )
    entries = []
    for degree in range(max_degree + 1):
        entries.extend(_compositions(degree, state_dim))
    return Dictionary(state_dim=state_dim, max_degree=max_degree,
                      entries=tuple(entries))


def from_json(doc: str) -> Dictionary:
    data = json.loads(doc)
    entries = tuple(tuple(int(v) for v in e) for e in data["entries"])
    dic = Dictionary(state_dim=int(data["state_dim"]),
                     max_degree=int(data["max_degree"]),
                     entries=entries)
    rebuilt = build(dic.state_dim, dic.max_degree)
    if rebuilt.entries != dic.entries:
        raise ValueError("dictionary entries are not in canonical order")
    return dic


def evaluate(dic: Dictionary, state) -> np.ndarray:
    """Evaluate every dictionary entry at one state.

    Each component is the product of state variables raised to the entry's
    exponents; the constant entry is exactly 1. Raises
    EvaluationOverflowError naming the first entry that overflows.
    """
    x = np.asarray(state, dtype=np.float64)
    if x.shape != (dic.state_dim,):
        raise ValueError(f"state must have shape ({dic.state_dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    exps = dic.exponent_array()
    # inf * 0 inside the product yields NaN; both symptoms are reported
    # through the overflow error below rather than as warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        psi = np.prod(x[None, :] ** exps, axis=1)
    bad = np.flatnonzero(~np.isfinite(psi))
    if bad.size:
        raise EvaluationOverflowError(int(bad[0]), dic.entries[int(bad[0])])
    return psi


def evaluate_batch(dic: Dictionary, states: np.ndarray) -> np.ndarray:
    """Evaluate the dictionary at many states; returns shape (size, n).

    Column j is evaluate(dic, states[j]). Non-finite results are left in
    place; callers that need to report offending (state, entry) pairs can
    locate them with np.isfinite.
    """
    xs = np.ascontiguousarray(states, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != dic.state_dim:
        raise ValueError(f"states must have shape (n, {dic.state_dim})")
    out = np.empty((dic.size, xs.shape[0]))
    with np.errstate(over="ignore", invalid="ignore"):
        for i, exp in enumerate(dic.entries):
            out[i] = np.prod(xs ** np.asarray(exp, dtype=np.float64), axis=1)
    return out
