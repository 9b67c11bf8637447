"""Range-bearing MS localization from the strongest recovered path."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel_model import SPEED_OF_LIGHT, unit_direction
from .dictionaries import DictionarySet
from .errors import DomainError
from .sparse_recovery import RecoveryResult

__all__ = ["Pose", "localize", "localization_error", "quantization_bound"]


@dataclass(frozen=True)
class Pose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    array_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        axis = np.asarray(self.array_axis, dtype=float)
        if axis.shape != (3,) or not np.isclose(np.linalg.norm(axis), 1.0) or abs(axis[2]) > 1e-12:
            raise DomainError("array_axis must be a unit vector in the z = 0 plane")
        object.__setattr__(self, "array_axis", axis)
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))

    def rotation(self) -> np.ndarray:
        """Planar rotation taking the local array axis (0, 1, 0) onto ``array_axis``."""
        ax, ay = self.array_axis[0], self.array_axis[1]
        # columns are the images of local x and y
        return np.array([[ay, ax, 0.0], [-ax, ay, 0.0], [0.0, 0.0, 1.0]])


def localize(result: RecoveryResult, dicts: DictionarySet, bs_pose: Pose | None = None) -> np.ndarray | None:
    """MS position from the path with the largest coefficient magnitude.

    Uses its grid AoA and delay as bearing and range. Returns ``None`` if the
    support is empty.
    """
    if not result.support:
        return None
    pose = bs_pose or Pose()
    t = int(np.argmax(np.abs(result.coefficients)))
    entry = result.support[t]
    phi = float(dicts.angle_grid_b[entry.i_b])
    tau = float(dicts.delay_grid[entry.i_s])
    return pose.position + SPEED_OF_LIGHT * tau * (pose.rotation() @ unit_direction(phi))


def localization_error(l_hat, l_true) -> float:
    return float(np.linalg.norm(np.asarray(l_hat, dtype=float) - np.asarray(l_true, dtype=float)))


def quantization_bound(position, n_angles: int, n_delays: int, spacing: float) -> float:
    """Worst-case error of on-grid range-bearing estimation for an off-grid position.

    Half a delay cell in range, plus the arc swept by half an angle cell
    (cells are uniform in cosine, so the angular half-width depends on the
    bearing).
    """
    p = np.asarray(position, dtype=float)
    d = float(np.linalg.norm(p))
    c = p[1] / d if d > 0 else 0.0
    half = 1.0 / (n_angles - 1)
    dphi = max(
        abs(np.arccos(np.clip(c + half, -1, 1)) - np.arccos(c)),
        abs(np.arccos(np.clip(c - half, -1, 1)) - np.arccos(c)),
    )
    dr = SPEED_OF_LIGHT / (2 * n_delays * spacing)
    return dr + (d + dr) * dphi
