"""Index algebra over selection strings and sub-Markov parameter tables.

The impulse-response expansion of an affine LPV state-space model has lag-m
coefficients that decompose into constant matrices C_g A_w B_b (one per word
``w`` over the character set {0..npsi}) multiplying products of shifted basis
values.  This module computes those matrices exactly from a known model,
enumerates them in the canonical order used by the FIR regressor, and
evaluates truncated impulse-response predictions from a table of them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DimensionError, MissingKeysError
from .models import BasisFunctionSet, LpvSsModel

__all__ = [
    "SubMarkovKey", "SubMarkovTable", "word_product", "true_sub_markov",
    "true_table", "fir_predict", "enumerate_keys", "enumerate_matrix_keys",
    "nf_count", "all_words", "lagged_regressor", "truncation_energy",
]

Word = Tuple[int, ...]


@dataclass(frozen=True)
class SubMarkovKey:
    """Identifies one sub-Markov matrix.

    ``cab`` form: C_gamma A_alpha B_beta with ``alpha`` a (possibly empty)
    word over {0..npsi}.  ``d`` form: the feed-through block D_s, encoded
    with ``alpha = beta = None`` and ``gamma = s``.
    """

    gamma: int
    alpha: Optional[Word] = None
    beta: Optional[int] = None

    def __post_init__(self):
        if (self.alpha is None) != (self.beta is None):
            raise ValueError("alpha and beta must both be set (cab key) or "
                             "both be None (D key)")
        if self.alpha is not None:
            object.__setattr__(self, "alpha", tuple(int(c) for c in self.alpha))

    @classmethod
    def d(cls, s: int) -> "SubMarkovKey":
        return cls(gamma=int(s))

    @classmethod
    def cab(cls, gamma: int, alpha: Iterable[int], beta: int) -> "SubMarkovKey":
        return cls(gamma=int(gamma), alpha=tuple(alpha), beta=int(beta))

    @property
    def is_d(self) -> bool:
        return self.beta is None

    @property
    def lag(self) -> int:
        """Impulse-response lag this key contributes to (0 for D keys)."""
        return 0 if self.is_d else len(self.alpha) + 1

    def validate(self, npsi: int):
        chars = [self.gamma] + (list(self.alpha) + [self.beta]
                                if not self.is_d else [])
        if any(ch < 0 or ch > npsi for ch in chars):
            raise ValueError(f"key {self} has characters outside 0..{npsi}")

    @property
    def sort_key(self):
        if self.is_d:
            return (0, 0, self.gamma, (), 0)
        return (1, self.lag, self.gamma, self.alpha, self.beta)

    def __lt__(self, other: "SubMarkovKey") -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        if self.is_d:
            return f"D|{self.gamma}"
        return f"{self.gamma}|{'.'.join(map(str, self.alpha))}|{self.beta}"

    @classmethod
    def parse(cls, text: str) -> "SubMarkovKey":
        parts = text.split("|")
        if parts[0] == "D":
            return cls.d(int(parts[1]))
        g, a, b = parts
        alpha = tuple(int(c) for c in a.split(".")) if a else ()
        return cls.cab(int(g), alpha, int(b))


class SubMarkovTable:
    """Map from :class:`SubMarkovKey` to an (ny, nu) matrix."""

    def __init__(self, ny: int, nu: int, npsi: int,
                 entries: Optional[Dict[SubMarkovKey, np.ndarray]] = None):
        self.ny = int(ny)
        self.nu = int(nu)
        self.npsi = int(npsi)
        self._entries: Dict[SubMarkovKey, np.ndarray] = {}
        if entries:
            for key, value in entries.items():
                self.set(key, value)

    def set(self, key: SubMarkovKey, value):
        key.validate(self.npsi)
        value = np.asarray(value, dtype=float)
        if value.shape != (self.ny, self.nu):
            raise DimensionError(
                f"entry for {key} has shape {value.shape}, expected "
                f"{(self.ny, self.nu)}")
        if not np.all(np.isfinite(value)):
            raise ValueError(f"entry for {key} contains non-finite values")
        self._entries[key] = value

    def get(self, key: SubMarkovKey) -> np.ndarray:
        try:
            return self._entries[key]
        except KeyError:
            raise MissingKeysError([key]) from None

    def entry(self, key: SubMarkovKey, i: int, j: int) -> float:
        return float(self.get(key)[i, j])

    def __contains__(self, key: SubMarkovKey) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def keys(self):
        return self._entries.keys()

    def items(self):
        return self._entries.items()

    def missing(self, keys: Iterable[SubMarkovKey]) -> List[SubMarkovKey]:
        return sorted(k for k in set(keys) if k not in self._entries)

    def to_json(self) -> dict:
        return {"dims": {"ny": self.ny, "nu": self.nu, "npsi": self.npsi},
                "entries": {str(k): v.tolist()
                            for k, v in sorted(self._entries.items())}}

    @classmethod
    def from_json(cls, doc: dict) -> "SubMarkovTable":
        dims = doc["dims"]
        table = cls(ny=dims["ny"], nu=dims["nu"], npsi=dims["npsi"])
        for text, value in doc["entries"].items():
            table.set(SubMarkovKey.parse(text), np.array(value))
        return table

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "SubMarkovTable":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# exact computation from a model


def word_product(model: LpvSsModel, alpha: Sequence[int]) -> np.ndarray:
    """A_alpha = A_[alpha]_1 ... A_[alpha]_n, identity for the empty word."""
    out = np.eye(model.nx)
    for ch in alpha:
        out = out @ model.a.coeffs[int(ch)]
    return out


def true_sub_markov(model: LpvSsModel, key: SubMarkovKey) -> np.ndarray:
    """Exact sub-Markov matrix of ``model`` for ``key``."""
    key.validate(model.npsi)
    if key.is_d:
        return model.d.coeffs[key.gamma].copy()
    return (model.c.coeffs[key.gamma] @ word_product(model, key.alpha)
            @ model.b.coeffs[key.beta])


def all_words(npsi: int, max_len: int) -> List[Word]:
    """All words of length 0..max_len over {0..npsi}, shortest first, then
    lexicographic."""
    chars = range(npsi + 1)
    words: List[Word] = [()]
    frontier: List[Word] = [()]
    for _ in range(max_len):
        frontier = [w + (c,) for w in frontier for c in chars]
        words.extend(frontier)
    return words


def true_table(model: LpvSsModel, max_lag: int) -> SubMarkovTable:
    """All sub-Markov matrices with lag <= max_lag, plus all D blocks."""
    npsi = model.npsi
    table = SubMarkovTable(ny=model.ny, nu=model.nu, npsi=npsi)
    for s in range(npsi + 1):
        table.set(SubMarkovKey.d(s), model.d.coeffs[s])
    # prefix products shared across keys
    products: Dict[Word, np.ndarray] = {(): np.eye(model.nx)}
    for word in all_words(npsi, max_lag - 1):
        if word not in products:
            products[word] = products[word[:-1]] @ model.a.coeffs[word[-1]]
        aw = products[word]
        for g in range(npsi + 1):
            ca = model.c.coeffs[g] @ aw
            for b in range(npsi + 1):
                table.set(SubMarkovKey.cab(g, word, b),
                          ca @ model.b.coeffs[b])
    return table


# ---------------------------------------------------------------------------
# canonical key enumeration for the FIR regressor


def nf_count(npsi: int, nh: int, nu: int) -> int:
    """Closed-form regressor row count sum_{i=1..nh+1} (1+npsi)^i * nu."""
    return sum((1 + npsi) ** i for i in range(1, nh + 2)) * nu


def enumerate_matrix_keys(npsi: int, nh: int) -> List[SubMarkovKey]:
    """Matrix-level canonical ordering: lags ascending; within a lag the
    indices (gamma, alpha left-to-right, beta) vary with gamma slowest and
    beta fastest, matching the Kronecker nesting psi_t x psi_{t-1} x ... x u
    of the FIR regressor."""
    keys: List[SubMarkovKey] = [SubMarkovKey.d(s) for s in range(npsi + 1)]
    chars = range(npsi + 1)
    for lag in range(1, nh + 1):
        prefix: List[Word] = [()]
        for _ in range(lag - 1):
            prefix = [w + (c,) for w in prefix for c in chars]
        for g in chars:
            for alpha in prefix:
                for b in chars:
                    keys.append(SubMarkovKey.cab(g, alpha, b))
    return keys


def enumerate_keys(npsi: int, nh: int, nu: int, ny: int,
                   max_columns: int = 2_000_000
                   ) -> Tuple[List[Tuple[SubMarkovKey, int]], int]:
    """Column-level ordering of the FIR regressor: each matrix key expands
    into nu columns (input channel fastest).  Returns the column list and its
    length nf."""
    nf = nf_count(npsi, nh, nu)
    if nf > max_columns:
        raise OverflowError(
            f"regressor would have nf={nf} columns (> cap {max_columns})")
    cols = [(key, j) for key in enumerate_matrix_keys(npsi, nh)
            for j in range(nu)]
    assert len(cols) == nf
    return cols, nf


# ---------------------------------------------------------------------------
# truncated impulse-response prediction


def _shift(x: np.ndarray, lag: int) -> np.ndarray:
    """x delayed by ``lag`` samples with zero padding at the start."""
    if lag == 0:
        return x
    out = np.zeros_like(x)
    out[lag:] = x[:-lag]
    return out


def lagged_regressor(psi: np.ndarray, u: np.ndarray, nh: int) -> np.ndarray:
    """Stacked Kronecker regressor, shape (nf, N).

    Row block for lag m holds psi_t x psi_{t-1} x ... x psi_{t-m} x u_{t-m}
    (column-major at each time step, first factor slowest).  Entries that
    would reach before the start of the data are zero padded.
    """
    n, k = psi.shape
    nu = u.shape[1]
    blocks = []
    for lag in range(nh + 1):
        cur = _shift(u, lag)  # (n, nu)
        for back in range(lag, -1, -1):
            ps = _shift(psi, back)
            cur = np.einsum("ta,tj->taj", ps, cur).reshape(n, -1)
        blocks.append(cur)
    return np.concatenate(blocks, axis=1).T


def fir_predict(table: SubMarkovTable, basis: BasisFunctionSet, nh: int,
                u, p) -> np.ndarray:
    """Truncated impulse-response prediction yhat_t from a table holding all
    keys with lag <= nh (and the D blocks)."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != table.nu:
        u = u.reshape(-1, table.nu)
    psi = basis.series(np.asarray(p, dtype=float).reshape(-1, basis.np_))
    if psi.shape[1] != table.npsi + 1:
        raise DimensionError("basis size does not match the table")
    cols, nf = enumerate_keys(table.npsi, nh, table.nu, table.ny)
    matrix_keys = enumerate_matrix_keys(table.npsi, nh)
    missing = table.missing(matrix_keys)
    if missing:
        raise MissingKeysError(missing)
    theta = np.empty((table.ny, nf))
    for col, (key, j) in enumerate(cols):
        theta[:, col] = table.get(key)[:, j]
    phi = lagged_regressor(psi, u, nh)
    return (theta @ phi).T


def truncation_energy(table: SubMarkovTable) -> Dict[int, float]:
    """Frobenius energy of the table entries per lag, a diagnostic for
    choosing the truncation order."""
    out: Dict[int, float] = {}
    for key, value in table.items():
        out[key.lag] = out.get(key.lag, 0.0) + float(np.sum(value ** 2))
    return dict(sorted(out.items()))
