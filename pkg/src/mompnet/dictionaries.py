"""Factor dictionaries over angle and delay grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel_model import (
    ArrayParams,
    SubcarrierParams,
    coupling_matrix,
    frequency_matrix,
    steering_matrix,
)
from .errors import DomainError

__all__ = [
    "GridSpec",
    "DictionarySet",
    "build_angle_grid",
    "build_delay_grid",
    "build_dictionary_set",
]


@dataclass(frozen=True)
class GridSpec:
    a_b: int
    a_m: int
    a_s: int
    delay_max: float | None = None  # informational; the delay grid spans one FRV period

    def __post_init__(self):
        if min(self.a_b, self.a_m, self.a_s) < 1:
            raise DomainError("grid sizes must be >= 1")


@dataclass(frozen=True)
class DictionarySet:
    d_b: np.ndarray
    d_m: np.ndarray
    d_s: np.ndarray
    angle_grid_b: np.ndarray
    angle_grid_m: np.ndarray
    delay_grid: np.ndarray

    @property
    def factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.d_b, self.d_m, self.d_s

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.d_b.shape[0], self.d_m.shape[0], self.d_s.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int, int]:
        return self.d_b.shape[1], self.d_m.shape[1], self.d_s.shape[1]


def build_angle_grid(count: int) -> np.ndarray:
    """Angles whose cosines are evenly spaced on [-1, 1] (first entry is pi)."""
    if count < 2:
        raise DomainError("angle grid needs at least 2 points")
    c = -1.0 + 2.0 * np.arange(count) / (count - 1)
    return np.arccos(np.clip(c, -1.0, 1.0))


def build_delay_grid(count: int, spacing: float) -> np.ndarray:
    """``count`` delays evenly spaced over one FRV period ``[0, 1/spacing)``."""
    if count < 1 or not spacing > 0:
        raise DomainError("delay grid needs count >= 1 and a positive spacing")
    return np.arange(count) / (count * spacing)


def _angle_grid(count: int) -> np.ndarray:
    # a single-atom angular dictionary degenerates to broadside
    return np.array([np.pi / 2]) if count == 1 else build_angle_grid(count)


def build_dictionary_set(
    bs: ArrayParams,
    ms: ArrayParams,
    sub: SubcarrierParams,
    grid: GridSpec,
    coupling_bs: complex | None = None,
    coupling_ms: complex | None = None,
) -> DictionarySet:
    """Dictionaries ``C_B [e_B(phi_j)]``, ``C_m [e_m(psi_j)]`` and ``[e_f(tau_j)]``.

    Coupling coefficients default to the ones carried by the arrays; pass 0
    for the nominal (identity-coupling) dictionaries.
    """
    cb = bs.coupling if coupling_bs is None else coupling_bs
    cm = ms.coupling if coupling_ms is None else coupling_ms
    gb = _angle_grid(grid.a_b)
    gm = _angle_grid(grid.a_m)
    gd = build_delay_grid(grid.a_s, sub.spacing)
    d_b = steering_matrix(bs, gb)
    if cb != 0:
        d_b = coupling_matrix(cb, bs.size) @ d_b
    d_m = steering_matrix(ms, gm)
    if cm != 0:
        d_m = coupling_matrix(cm, ms.size) @ d_m
    d_s = frequency_matrix(sub, gd)
    return DictionarySet(d_b, d_m, d_s, gb, gm, gd)
