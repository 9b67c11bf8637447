"""Method of Optimal Directions (MOD) over a single dictionary dimension."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficiencyError, ShapeError

__all__ = ["ModState", "omp_code", "mod_update", "mod_train"]


@dataclass
class ModState:
    dictionary: np.ndarray  # (N, A)
    code_matrix: np.ndarray  # (A, L)
    observation_matrix: np.ndarray  # (N, L)
    fit_history: list[float]


def omp_code(observations: np.ndarray, dictionary: np.ndarray, max_atoms: int) -> np.ndarray:
    """Sparse codes of every column of ``observations`` by single-dictionary OMP.

    Atoms are chosen by correlation normalized by the atom norm, since learned
    MOD columns have no common scale.
    """
    y = np.asarray(observations)
    d = np.asarray(dictionary)
    if y.ndim != 2 or d.ndim != 2 or y.shape[0] != d.shape[0]:
        raise ShapeError(f"observations {y.shape} and dictionary {d.shape} are incompatible")
    norms = np.linalg.norm(d, axis=0)
    norms[norms == 0] = np.inf
    codes = np.zeros((d.shape[1], y.shape[1]), dtype=complex)
    for col in range(y.shape[1]):
        v = y[:, col]
        r = v.copy()
        supp: list[int] = []
        for _ in range(max_atoms):
            if not np.any(r):
                break
            j = int(np.argmax(np.abs(d.conj().T @ r) / norms))
            if j in supp:
                break
            supp.append(j)
            x, *_ = np.linalg.lstsq(d[:, supp], v, rcond=None)
            r = v - d[:, supp] @ x
        if supp:
            codes[supp, col] = x
    return codes


def mod_update(observations: np.ndarray, codes: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Least-squares dictionary ``D = Y X^H (X X^H)^{-1}``.

    Raises :class:`RankDeficiencyError` if ``X X^H`` is singular, which is
    unavoidable when there are fewer observations than atoms.
    """
    y = np.asarray(observations)
    x = np.asarray(codes)
    if y.shape[1] != x.shape[1]:
        raise ShapeError("observations and codes must have the same number of columns")
    n_atoms, n_obs = x.shape
    if n_obs < n_atoms:
        raise RankDeficiencyError(
            f"MOD needs at least as many observations as atoms (L={n_obs} < A={n_atoms}); X X^H is singular"
        )
    gram = x @ x.conj().T
    s = np.linalg.svd(gram, compute_uv=False)
    if s[-1] <= rcond * max(s[0], np.finfo(float).tiny):
        raise RankDeficiencyError(
            f"X X^H is singular (cond > {1 / rcond:.0e}); the observation count L={n_obs} is not large enough "
            f"relative to A={n_atoms} atoms or some atoms are never used"
        )
    # D gram = Y X^H, solved via the Hermitian system gram D^H = X Y^H
    return np.linalg.solve(gram, x @ y.conj().T).conj().T


def mod_train(
    observations: np.ndarray,
    initial_dictionary: np.ndarray,
    max_atoms: int,
    iterations: int,
) -> ModState:
    """Alternate OMP coding and MOD updates for ``iterations`` rounds.

    Atoms not used by any observation in a round keep their previous value;
    the update is solved over the used atoms only.
    """
    y = np.asarray(observations, dtype=complex)
    d = np.array(initial_dictionary, dtype=complex)
    n_atoms = d.shape[1]
    if y.shape[1] < n_atoms:
        raise RankDeficiencyError(
            f"MOD needs more observations than atoms (L={y.shape[1]} < A={n_atoms})"
        )
    codes = np.zeros((n_atoms, y.shape[1]), dtype=complex)
    fits: list[float] = []
    for _ in range(iterations):
        codes = omp_code(y, d, max_atoms)
        used = np.flatnonzero(np.any(codes != 0, axis=1))
        if used.size == 0:
            break
        d[:, used] = mod_update(y, codes[used])
        fits.append(float(np.linalg.norm(y - d @ codes)))
    return ModState(d, codes, y, fits)
