"""Greedy sparse recovery over Kronecker-structured dictionaries.

Two atom selectors are provided: ``omp_select`` searches the full 3-D
correlation tensor, ``momp_select`` searches one factor dictionary at a time
and then refines the indices by cyclic coordinate ascent. Both plug into
``sparse_recover``, which re-fits all selected coefficients by least squares
after each selection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dictionaries import DictionarySet
from .errors import RankDeficientWarning, ShapeError
from .tensor_core import as_tensor3, kron3, mode_n_product, slice_norm_sq

__all__ = [
    "SupportEntry",
    "RecoveryResult",
    "RecoveryConfig",
    "omp_select",
    "momp_select",
    "joint_correlation",
    "support_least_squares",
    "sparse_recover",
    "recover_on_support",
    "recover",
    "angle_delay_map",
]


class SupportEntry(NamedTuple):
    i_b: int
    i_m: int
    i_s: int


@dataclass
class RecoveryResult:
    support: list[SupportEntry]
    coefficients: np.ndarray
    estimate: np.ndarray
    residual_norms: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class RecoveryConfig:
    selector: str = "momp"
    max_atoms: int = 3
    residual_tol: float = 0.0
    n_refine: int = 3

    def __post_init__(self):
        if self.selector not in ("omp", "momp"):
            raise ValueError(f"unknown selector {self.selector!r}")
        if self.max_atoms < 1:
            raise ValueError("max_atoms must be >= 1")
        if self.n_refine < 0:
            raise ValueError("n_refine must be >= 0")


def _check_dims(residual: np.ndarray, dicts: DictionarySet) -> np.ndarray:
    r = as_tensor3(residual)
    if r.shape != dicts.shape:
        raise ShapeError(f"residual shape {r.shape} does not match dictionaries {dicts.shape}")
    return r


def _first_argmax(v: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. lowest index on ties
    return int(np.argmax(v))


def omp_select(residual: np.ndarray, dicts: DictionarySet) -> SupportEntry | None:
    """Exact atom search over the full correlation tensor.

    Returns ``None`` when the residual is identically zero.
    """
    r = _check_dims(residual, dicts)
    if not np.any(r):
        return None
    d1, d2, d3 = dicts.factors
    c = mode_n_product(r, d1.conj().T, 1)
    c = mode_n_product(c, d2.conj().T, 2)
    c = mode_n_product(c, d3.conj().T, 3)
    # row-major flat argmax == lexicographic tie-break on (i_b, i_m, i_s)
    flat = _first_argmax((c.real**2 + c.imag**2).ravel())
    return SupportEntry(*(int(i) for i in np.unravel_index(flat, c.shape)))


def joint_correlation(residual: np.ndarray, dicts: DictionarySet, entry) -> float:
    """``|<d_b[:, i] o d_m[:, j] o d_s[:, k], R>|^2`` for one index triple."""
    d1, d2, d3 = dicts.factors
    i, j, k = entry
    v = np.einsum("abc,a,b,c->", residual, d1[:, i].conj(), d2[:, j].conj(), d3[:, k].conj())
    return float(abs(v) ** 2)


def momp_select(residual: np.ndarray, dicts: DictionarySet, n_refine: int = 3) -> SupportEntry | None:
    """Sequential per-dictionary atom search followed by ``n_refine`` refinement sweeps.

    A sweep re-optimizes i_b, then i_m, then i_s with the other two fixed. Each
    coordinate update is an exact maximization of the joint correlation, so
    refinement can only increase it.
    """
    r = _check_dims(residual, dicts)
    if not np.any(r):
        return None
    d1, d2, d3 = dicts.factors
    c1 = mode_n_product(r, d1.conj().T, 1)  # (A1, N2, N3)
    i1 = _first_argmax(slice_norm_sq(c1, 1))
    c2 = d2.conj().T @ c1[i1]  # (A2, N3)
    i2 = _first_argmax(np.sum(np.abs(c2) ** 2, axis=1))
    c3 = d3.conj().T @ c2[i2]  # (A3,)
    i3 = _first_argmax(np.abs(c3) ** 2)

    for _ in range(n_refine):
        prev = (i1, i2, i3)
        v = np.einsum("abc,b,c->a", r, d2[:, i2].conj(), d3[:, i3].conj())
        i1 = _keep_or_improve(np.abs(d1.conj().T @ v) ** 2, i1)
        v = np.einsum("abc,a,c->b", r, d1[:, i1].conj(), d3[:, i3].conj())
        i2 = _keep_or_improve(np.abs(d2.conj().T @ v) ** 2, i2)
        v = np.einsum("abc,a,b->c", r, d1[:, i1].conj(), d2[:, i2].conj())
        i3 = _keep_or_improve(np.abs(d3.conj().T @ v) ** 2, i3)
        if (i1, i2, i3) == prev:
            break
    return SupportEntry(i1, i2, i3)


# relative gain a refinement move must exceed; smaller gains are rounding noise
# (e.g. the two end-fire columns of a half-wavelength array are the same atom up to sign)
_REFINE_RTOL = 1e-10


def _keep_or_improve(scores: np.ndarray, current: int) -> int:
    best = _first_argmax(scores)
    return best if scores[best] > scores[current] * (1 + _REFINE_RTOL) else current


def support_least_squares(y: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    """Coefficients minimizing ``||y - atoms @ x||_2`` (SVD-based).

    Emits :class:`RankDeficientWarning` and returns the minimum-norm solution
    when ``atoms`` does not have full column rank.
    """
    y = np.asarray(y).ravel()
    atoms = np.asarray(atoms)
    if atoms.ndim != 2 or atoms.shape[0] != y.size:
        raise ShapeError(f"atoms {atoms.shape} incompatible with y of length {y.size}")
    if atoms.shape[1] == 0:
        return np.zeros(0, dtype=complex)
    x, _, rank, _ = np.linalg.lstsq(atoms, y, rcond=None)
    if rank < atoms.shape[1]:
        warnings.warn(
            f"atom matrix has rank {rank} < {atoms.shape[1]} columns; returning least-norm solution",
            RankDeficientWarning,
            stacklevel=2,
        )
    return x


def _atom(dicts: DictionarySet, e: SupportEntry) -> np.ndarray:
    return kron3(dicts.d_b[:, e.i_b], dicts.d_m[:, e.i_m], dicts.d_s[:, e.i_s])


def recover_on_support(y: np.ndarray, dicts: DictionarySet, support) -> RecoveryResult:
    """LS fit on a fixed support (no selection). Used for frozen-support evaluation."""
    y = _check_dims(y, dicts)
    support = [SupportEntry(*s) for s in support]
    if not support:
        return RecoveryResult([], np.zeros(0, complex), np.zeros_like(y, dtype=complex), [])
    atoms = np.stack([_atom(dicts, e) for e in support], axis=1)
    x = support_least_squares(y.ravel(), atoms)
    est = (atoms @ x).reshape(y.shape)
    return RecoveryResult(support, x, est, [float(np.linalg.norm(y - est))])


def sparse_recover(
    y: np.ndarray,
    dicts: DictionarySet,
    selector: str = "momp",
    max_atoms: int = 3,
    residual_tol: float = 0.0,
    n_refine: int = 3,
) -> RecoveryResult:
    """Greedy recovery: select, append atom, re-fit all coefficients, update residual.

    Stops at ``max_atoms`` atoms, when ``||r|| <= residual_tol * ||y||``, when
    the selector returns an already-selected atom or nothing, or when the
    re-fit fails to reduce the residual (that last atom is then dropped).
    """
    if max_atoms < 1:
        raise ValueError("max_atoms must be >= 1")
    y = _check_dims(y, dicts).astype(complex, copy=False)
    vec = y.ravel()
    y_norm = float(np.linalg.norm(vec))
    support: list[SupportEntry] = []
    atoms = np.zeros((vec.size, 0), dtype=complex)
    x = np.zeros(0, dtype=complex)
    r = vec.copy()
    r_norm = y_norm
    norms: list[float] = []
    if selector == "omp":
        select = lambda res: omp_select(res, dicts)  # noqa: E731
    elif selector == "momp":
        select = lambda res: momp_select(res, dicts, n_refine)  # noqa: E731
    else:
        raise ValueError(f"unknown selector {selector!r}")

    while len(support) < max_atoms and r_norm > residual_tol * y_norm and r_norm > 0:
        entry = select(r.reshape(y.shape))
        if entry is None or entry in support:
            break
        cand = np.column_stack([atoms, _atom(dicts, entry)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficientWarning)
            x_new = support_least_squares(vec, cand)
        r_new = vec - cand @ x_new
        n_new = float(np.linalg.norm(r_new))
        if not n_new < r_norm:
            break
        support.append(entry)
        atoms, x, r, r_norm = cand, x_new, r_new, n_new
        norms.append(r_norm)

    estimate = (vec - r).reshape(y.shape) if support else np.zeros_like(y)
    return RecoveryResult(support, x, estimate, norms)


def recover(y: np.ndarray, dicts: DictionarySet, config: RecoveryConfig) -> RecoveryResult:
    return sparse_recover(y, dicts, config.selector, config.max_atoms, config.residual_tol, config.n_refine)


def angle_delay_map(y: np.ndarray, dicts: DictionarySet) -> np.ndarray:
    """BS-angle x delay energy map, shape ``(A_B, A_S)``.

    Correlates ``y`` with the BS and delay dictionaries and takes the norm
    over the MS mode.
    """
    y = _check_dims(y, dicts)
    c = mode_n_product(y, dicts.d_s.conj().T, 3)
    c = mode_n_product(c, dicts.d_b.conj().T, 1)
    return np.sqrt(np.sum(np.abs(c) ** 2, axis=1))
