"""Basis-reduced Ho-Kalman realization from sub-Markov parameter tables.

A selection basis picks ``no`` extended-observability rows (output row,
C index, word) and ``nr`` extended-reachability columns (word, B index,
input column).  The resulting sub-Hankel matrices factor as H = O R,
H_k = O A_k R, and the state-space matrices are recovered either through an
exact pseudo-inverse (when nr equals the state order and H has full rank)
or through an economy SVD with rank-revealing order selection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .exceptions import (DimensionError, MissingKeysError,
                         RankDeficiencyError, SelectionError)
from .markov import SubMarkovKey, SubMarkovTable, Word, all_words
from .models import (AffineMatrixFunction, BasisFunctionSet, LpvSsModel,
                     NoiseFree)

__all__ = ["SelectionBasis", "HankelBlocks", "required_keys",
           "assemble_hankel", "realize_exact", "realize_svd",
           "greedy_selection", "sub_hankel_element_count",
           "full_hankel_element_count"]

RowSel = Tuple[int, int, Word]   # (output row i, gamma, alpha)
ColSel = Tuple[Word, int, int]   # (alpha, beta, input column j)


def _norm_word(w) -> Word:
    return tuple(int(c) for c in w)


@dataclass(frozen=True)
class SelectionBasis:
    """Row selections ``nu_sel`` and column selections ``sigma`` of the
    sub-Hankel matrices."""

    sigma: Tuple[ColSel, ...]
    nu_sel: Tuple[RowSel, ...]

    def __post_init__(self):
        sigma = tuple((_norm_word(a), int(b), int(j)) for a, b, j in self.sigma)
        nu_sel = tuple((int(i), int(g), _norm_word(a))
                       for i, g, a in self.nu_sel)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "nu_sel", nu_sel)
        if not sigma or not nu_sel:
            raise SelectionError("selection must contain at least one row "
                                 "and one column")
        if len(set(sigma)) != len(sigma) or len(set(nu_sel)) != len(nu_sel):
            raise SelectionError("selection entries must be unique")

    @property
    def nr(self) -> int:
        return len(self.sigma)

    @property
    def no(self) -> int:
        return len(self.nu_sel)

    def validate(self, npsi: int, ny: int, nu: int):
        for a, b, j in self.sigma:
            if not (0 <= b <= npsi) or not (0 <= j < nu) or \
                    any(c < 0 or c > npsi for c in a):
                raise SelectionError(f"column selection {(a, b, j)} out of "
                                     "range")
        for i, g, a in self.nu_sel:
            if not (0 <= g <= npsi) or not (0 <= i < ny) or \
                    any(c < 0 or c > npsi for c in a):
                raise SelectionError(f"row selection {(i, g, a)} out of range")

    def to_json(self) -> dict:
        return {"sigma": [[list(a), b, j] for a, b, j in self.sigma],
                "nu": [[i, g, list(a)] for i, g, a in self.nu_sel]}

    @classmethod
    def from_json(cls, doc: dict) -> "SelectionBasis":
        return cls(sigma=tuple((tuple(a), b, j) for a, b, j in doc["sigma"]),
                   nu_sel=tuple((i, g, tuple(a)) for i, g, a in doc["nu"]))


@dataclass(frozen=True)
class HankelBlocks:
    """H = O R plus the shifted/one-sided blocks H_k = O A_k R,
    HB_k = O B_k and HC_k = C_k R, all assembled from table lookups."""

    h: np.ndarray                 # (no, nr)
    hk: Tuple[np.ndarray, ...]    # npsi+1 of (no, nr)
    hb: Tuple[np.ndarray, ...]    # npsi+1 of (no, nu)
    hc: Tuple[np.ndarray, ...]    # npsi+1 of (ny, nr)
    d: Tuple[np.ndarray, ...]     # npsi+1 of (ny, nu) feed-through blocks
    sel: SelectionBasis
    ny: int
    nu: int
    npsi: int


def required_keys(sel: SelectionBasis, npsi: int) -> List[SubMarkovKey]:
    """Every table key needed to assemble the blocks for ``sel`` (including
    the feed-through keys), deduplicated."""
    keys: Dict[SubMarkovKey, None] = {}
    for s in range(npsi + 1):
        keys[SubMarkovKey.d(s)] = None
    for _, g, ar in sel.nu_sel:
        for ac, b, _ in sel.sigma:
            keys[SubMarkovKey.cab(g, ar + ac, b)] = None
            for k in range(npsi + 1):
                keys[SubMarkovKey.cab(g, ar + (k,) + ac, b)] = None
        for k in range(npsi + 1):
            keys[SubMarkovKey.cab(g, ar, k)] = None
    for ac, b, _ in sel.sigma:
        for k in range(npsi + 1):
            keys[SubMarkovKey.cab(k, ac, b)] = None
    return list(keys)


def sub_hankel_element_count(ny: int, nu: int, npsi: int, no: int, nr: int
                             ) -> int:
    """Scalar element count of the sub-Hankel family
    {H, H_k, HB_k, HC_k}."""
    return no * nr + (1 + npsi) * (no * nr + no * nu + ny * nr)


def full_hankel_element_count(ny: int, nu: int, npsi: int, depth: int) -> int:
    """Scalar element count of the unreduced depth-``depth`` Hankel matrix
    whose block rows/columns run over all words up to length ``depth``."""
    rows = ny * sum((1 + npsi) ** l for l in range(1, depth + 1))
    cols = nu * sum((1 + npsi) ** l for l in range(1, depth + 1))
    return rows * cols


def assemble_hankel(table: SubMarkovTable, sel: SelectionBasis
                    ) -> HankelBlocks:
    """Fill every block of the sub-Hankel family by table lookup."""
    sel.validate(table.npsi, table.ny, table.nu)
    npsi = table.npsi
    missing = table.missing(required_keys(sel, npsi))
    if missing:
        raise MissingKeysError(missing)
    no, nr = sel.no, sel.nr
    h = np.empty((no, nr))
    hk = [np.empty((no, nr)) for _ in range(npsi + 1)]
    hb = [np.empty((no, table.nu)) for _ in range(npsi + 1)]
    hc = [np.empty((table.ny, nr)) for _ in range(npsi + 1)]
    for r, (i, g, ar) in enumerate(sel.nu_sel):
        for c, (ac, b, j) in enumerate(sel.sigma):
            h[r, c] = table.get(SubMarkovKey.cab(g, ar + ac, b))[i, j]
            for k in range(npsi + 1):
                hk[k][r, c] = table.get(
                    SubMarkovKey.cab(g, ar + (k,) + ac, b))[i, j]
        for k in range(npsi + 1):
            hb[k][r, :] = table.get(SubMarkovKey.cab(g, ar, k))[i, :]
    for c, (ac, b, j) in enumerate(sel.sigma):
        for k in range(npsi + 1):
            hc[k][:, c] = table.get(SubMarkovKey.cab(k, ac, b))[:, j]
    d = tuple(table.get(SubMarkovKey.d(s)).copy() for s in range(npsi + 1))
    return HankelBlocks(h=h, hk=tuple(hk), hb=tuple(hb), hc=tuple(hc), d=d,
                        sel=sel, ny=table.ny, nu=table.nu, npsi=npsi)


def _default_basis(npsi: int) -> BasisFunctionSet:
    return BasisFunctionSet.poly_linear(npsi)


def _build_model(a_blocks, b_blocks, c_blocks, d_blocks,
                 basis: Optional[BasisFunctionSet], npsi: int) -> LpvSsModel:
    if basis is None:
        basis = _default_basis(npsi)
    return LpvSsModel(a=AffineMatrixFunction(np.stack(a_blocks)),
                      b=AffineMatrixFunction(np.stack(b_blocks)),
                      c=AffineMatrixFunction(np.stack(c_blocks)),
                      d=AffineMatrixFunction(np.stack(d_blocks)),
                      basis=basis, noise=NoiseFree())


def realize_exact(blocks: HankelBlocks,
                  basis: Optional[BasisFunctionSet] = None,
                  rank_tol: float = 1e-8) -> LpvSsModel:
    """Pseudo-inverse realization requiring nr = nx and a full-rank H:
    A_k = pinv(H) H_k, B_k = pinv(H) HB_k, C_k = HC_k."""
    h = blocks.h
    sv = np.linalg.svd(h, compute_uv=False)
    rank = int(np.sum(sv > rank_tol * sv[0])) if sv.size else 0
    if rank < blocks.sel.nr:
        raise RankDeficiencyError(
            f"selection matrix has numerical rank {rank} < nr="
            f"{blocks.sel.nr}; the exact realization hypothesis fails",
            deficiency=blocks.sel.nr - rank)
    h_pinv = np.linalg.pinv(h)
    a_blocks = [h_pinv @ hk for hk in blocks.hk]
    b_blocks = [h_pinv @ hb for hb in blocks.hb]
    c_blocks = [hc.copy() for hc in blocks.hc]
    return _build_model(a_blocks, b_blocks, c_blocks, list(blocks.d),
                        basis, blocks.npsi)


def realize_svd(blocks: HankelBlocks, order="auto", tol: float = 1e-3,
                basis: Optional[BasisFunctionSet] = None
                ) -> Tuple[LpvSsModel, np.ndarray]:
    """Economy-SVD realization H = U S V'; with Opinv = S^{-1/2} U' and
    Rpinv = V S^{-1/2}: A_k = Opinv H_k Rpinv, B_k = Opinv HB_k,
    C_k = HC_k Rpinv.

    ``order`` may be an integer or "auto", which picks the largest gap in
    log singular values among the orders whose trailing singular value
    ratio is below ``tol`` (smaller order at ties).  Returns the model and
    the full singular-value vector of H.
    """
    u, sv, vt = np.linalg.svd(blocks.h, full_matrices=False)
    if order == "auto":
        order = _auto_order(sv, tol)
    order = int(order)
    if order <= 0:
        raise SelectionError("requested order must be positive")
    if order > min(blocks.sel.no, blocks.sel.nr):
        raise SelectionError(
            f"order {order} exceeds the selection size "
            f"({blocks.sel.no}x{blocks.sel.nr})")
    num_rank = int(np.sum(sv > max(sv[0], 0) * 1e-12))
    if order > num_rank:
        warnings.warn(f"requested order {order} exceeds the numerical rank "
                      f"{num_rank}; truncating", RuntimeWarning, stacklevel=2)
        order = num_rank
    s_half = np.sqrt(sv[:order])
    o_pinv = (u[:, :order] / s_half).T          # S^{-1/2} U'
    r_pinv = vt[:order].T / s_half              # V S^{-1/2}
    a_blocks = [o_pinv @ hk @ r_pinv for hk in blocks.hk]
    b_blocks = [o_pinv @ hb for hb in blocks.hb]
    c_blocks = [hc @ r_pinv for hc in blocks.hc]
    model = _build_model(a_blocks, b_blocks, c_blocks, list(blocks.d),
                         basis, blocks.npsi)
    return model, sv


def _auto_order(sv: np.ndarray, tol: float) -> int:
    if sv.size == 0 or sv[0] <= 0:
        raise RankDeficiencyError("selection matrix is numerically zero")
    floor = np.finfo(float).tiny
    logs = np.log10(np.maximum(sv, floor))
    best_order, best_gap = None, -np.inf
    for k in range(1, sv.size):
        if sv[k] / sv[0] >= tol:
            continue  # order k would keep a still-significant value out
        gap = logs[k - 1] - logs[k]
        if gap > best_gap + 1e-12:  # strict improvement -> smaller order wins
            best_order, best_gap = k, gap
    if best_order is None:
        return int(sv.size)  # no value negligible; keep everything
    return best_order


# ---------------------------------------------------------------------------
# greedy selection heuristic


def greedy_selection(table: SubMarkovTable, nx_guess: int, no_target: int,
                     nr_target: int, max_depth: int = 2) -> SelectionBasis:
    """Pick rows/columns of the (virtual) full Hankel matrix by descending
    absolute entry magnitude, accepting a candidate only while it increases
    the numerical rank of the growing selection matrix; afterwards fill up
    to the requested sizes by magnitude alone.  Deterministic: ties are
    broken by canonical key order."""
    if nr_target < nx_guess or no_target < nx_guess:
        raise SelectionError(
            f"targets ({no_target}, {nr_target}) must be at least the "
            f"state-order guess {nx_guess}")
    npsi, ny, nu = table.npsi, table.ny, table.nu
    # candidate rows/columns come from splitting each key of lag <= max_depth
    # (one character on each side of the split marks gamma / beta).
    row_pool: Dict[RowSel, None] = {}
    col_pool: Dict[ColSel, None] = {}
    words = all_words(npsi, max_depth - 1)
    for w in words:
        for g in range(npsi + 1):
            for i in range(ny):
                row_pool[(i, g, w)] = None
        for b in range(npsi + 1):
            for j in range(nu):
                col_pool[(w, b, j)] = None
    rows = list(row_pool)
    cols = list(col_pool)
    missing = table.missing(
        SubMarkovKey.cab(g, ar + ac, b)
        for _, g, ar in rows for ac, b, _ in cols
        if len(ar) + len(ac) + 1 <= max_depth + 1)
    if missing:
        raise MissingKeysError(missing)

    def entry(row: RowSel, col: ColSel) -> float:
        i, g, ar = row
        ac, b, j = col
        key = SubMarkovKey.cab(g, ar + ac, b)
        return table.entry(key, i, j) if key in table else 0.0

    # score candidates by their largest reachable magnitude
    scored: List[Tuple[float, int, RowSel, ColSel]] = []
    for ri, row in enumerate(rows):
        for ci, col in enumerate(cols):
            if len(row[2]) + len(col[0]) + 1 > max_depth + 1:
                continue
            scored.append((-abs(entry(row, col)), ri * len(cols) + ci,
                           row, col))
    scored.sort()

    sel_rows: List[RowSel] = []
    sel_cols: List[ColSel] = []
    rank = 0
    for _, _, row, col in scored:  # phase 1: reach rank nx_guess
        if rank >= nx_guess:
            break
        trial_rows = sel_rows + ([row] if row not in sel_rows else [])
        trial_cols = sel_cols + ([col] if col not in sel_cols else [])
        if len(trial_rows) == len(sel_rows) and \
                len(trial_cols) == len(sel_cols):
            continue
        h = np.array([[entry(r, c) for c in trial_cols] for r in trial_rows])
        _, rdiag, _ = scipy.linalg.qr(h, pivoting=True, mode="economic")
        d = np.abs(np.diag(rdiag))
        new_rank = int(np.sum(d > 1e-10 * d[0])) if d.size and d[0] else 0
        if new_rank > rank:
            sel_rows, sel_cols, rank = trial_rows, trial_cols, new_rank
    if rank < nx_guess:
        raise SelectionError(
            f"greedy search reached rank {rank} < nx_guess={nx_guess} "
            f"within depth {max_depth}", achieved_rank=rank)
    # phase 2: fill up to the targets by magnitude
    for _, _, row, col in scored:
        if len(sel_rows) >= no_target and len(sel_cols) >= nr_target:
            break
        if len(sel_rows) < no_target and row not in sel_rows:
            sel_rows.append(row)
        if len(sel_cols) < nr_target and col not in sel_cols:
            sel_cols.append(col)
    if len(sel_rows) < no_target or len(sel_cols) < nr_target:
        warnings.warn("candidate pool exhausted before reaching the "
                      "requested selection sizes", RuntimeWarning,
                      stacklevel=2)
    return SelectionBasis(sigma=tuple(sel_cols), nu_sel=tuple(sel_rows))
