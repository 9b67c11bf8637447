"""Physical MIMO-OFDM channel synthesis with hardware impairments.

Geometry conventions: all arrays are ULAs along the world y-axis, and a
path with azimuth ``phi`` (measured from the array axis) has direction
``u(phi) = (sin phi, cos phi, 0)``, so ``p^T u = y * cos(phi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, ShapeError

SPEED_OF_LIGHT = 299_792_458.0

__all__ = [
    "SPEED_OF_LIGHT",
    "ArrayParams",
    "SubcarrierParams",
    "PathSet",
    "ImpairmentSpreads",
    "unit_direction",
    "steering_vector",
    "steering_matrix",
    "frequency_response",
    "frequency_matrix",
    "coupling_matrix",
    "synthesize_channel",
    "sample_impairments",
    "add_noise",
    "nominal_ula",
    "nominal_subcarriers",
    "complex_gaussian",
    "random_multipath",
]


def _check_angle(angle) -> None:
    a = np.asarray(angle, dtype=float)
    if np.any(a < 0.0) or np.any(a > np.pi) or np.any(~np.isfinite(a)):
        raise DomainError(f"angle must lie in [0, pi], got {angle}")


@dataclass(frozen=True)
class ArrayParams:
    """Physical description of one antenna array."""

    positions: np.ndarray  # (n, 3) meters, relative to the centroid
    gain_amplitudes: np.ndarray
    gain_phases: np.ndarray
    coupling: complex = 0j
    wavelength: float = SPEED_OF_LIGHT / 28e9

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        amp = np.atleast_1d(np.asarray(self.gain_amplitudes, dtype=float))
        ph = np.atleast_1d(np.asarray(self.gain_phases, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ShapeError(f"positions must be (n, 3), got {pos.shape}")
        n = pos.shape[0]
        if n < 1 or amp.shape != (n,) or ph.shape != (n,):
            raise ShapeError("positions, gain_amplitudes and gain_phases must share length n >= 1")
        if np.any(amp < 0):
            raise DomainError("gain amplitudes must be non-negative")
        if abs(self.coupling) >= 1:
            raise DomainError(f"|coupling| must be < 1, got {abs(self.coupling)}")
        if not self.wavelength > 0:
            raise DomainError("wavelength must be positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "gain_amplitudes", amp)
        object.__setattr__(self, "gain_phases", ph)
        object.__setattr__(self, "coupling", complex(self.coupling))
        object.__setattr__(self, "wavelength", float(self.wavelength))

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def gains(self) -> np.ndarray:
        return self.gain_amplitudes * np.exp(1j * self.gain_phases)

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "gain_amplitudes": self.gain_amplitudes.tolist(),
            "gain_phases": self.gain_phases.tolist(),
            "coupling": [self.coupling.real, self.coupling.imag],
            "wavelength": self.wavelength,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArrayParams":
        return cls(
            positions=np.array(d["positions"], dtype=float),
            gain_amplitudes=np.array(d["gain_amplitudes"], dtype=float),
            gain_phases=np.array(d["gain_phases"], dtype=float),
            coupling=complex(*d["coupling"]),
            wavelength=d["wavelength"],
        )


@dataclass(frozen=True)
class SubcarrierParams:
    frequencies: np.ndarray  # Hz, strictly increasing
    spacing: float  # Hz
    ppm_offset: float = 0.0

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        if f.ndim != 1 or f.size < 1:
            raise ShapeError("need at least one subcarrier")
        if np.any(np.diff(f) <= 0):
            raise DomainError("subcarrier frequencies must be strictly increasing")
        if not self.spacing > 0:
            raise DomainError("subcarrier spacing must be positive")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "ppm_offset", float(self.ppm_offset))

    @property
    def size(self) -> int:
        return self.frequencies.size

    def to_dict(self) -> dict:
        return {
            "frequencies": self.frequencies.tolist(),
            "spacing": self.spacing,
            "ppm_offset": self.ppm_offset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubcarrierParams":
        return cls(np.array(d["frequencies"], dtype=float), d["spacing"], d.get("ppm_offset", 0.0))


@dataclass(frozen=True)
class PathSet:
    aoa: np.ndarray = field(default_factory=lambda: np.zeros(0))
    aod: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delay: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gain: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        aoa = np.atleast_1d(np.asarray(self.aoa, dtype=float))
        aod = np.atleast_1d(np.asarray(self.aod, dtype=float))
        delay = np.atleast_1d(np.asarray(self.delay, dtype=float))
        gain = np.atleast_1d(np.asarray(self.gain, dtype=complex))
        if not (aoa.shape == aod.shape == delay.shape == gain.shape) or aoa.ndim != 1:
            raise ShapeError("aoa, aod, delay and gain must have the same length")
        _check_angle(aoa)
        _check_angle(aod)
        if np.any(delay < 0):
            raise DomainError("path delays must be non-negative")
        for name, v in (("aoa", aoa), ("aod", aod), ("delay", delay), ("gain", gain)):
            object.__setattr__(self, name, v)

    def __len__(self) -> int:
        return self.aoa.size

    def to_dict(self) -> dict:
        return {
            "aoa": self.aoa.tolist(),
            "aod": self.aod.tolist(),
            "delay": self.delay.tolist(),
            "gain_re": self.gain.real.tolist(),
            "gain_im": self.gain.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PathSet":
        gain = np.array(d["gain_re"]) + 1j * np.array(d["gain_im"])
        return cls(np.array(d["aoa"]), np.array(d["aod"]), np.array(d["delay"]), gain)


@dataclass(frozen=True)
class ImpairmentSpreads:
    """Spreads of the uniform impairment laws.

    Position spreads are in wavelengths; amplitude spreads are absolute;
    phase spreads are radians.
    """

    delta_p: float = 0.0
    delta_q: float = 0.0
    delta_a: float = 0.0
    delta_a_prime: float = 0.0
    delta_phi_B: float = 0.0
    delta_phi_M: float = 0.0
    coupling_true: complex = 0j
    ppm: float = 0.0

    def __post_init__(self):
        for name in ("delta_p", "delta_q", "delta_a", "delta_a_prime", "delta_phi_B", "delta_phi_M"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        if abs(self.coupling_true) >= 1:
            raise DomainError("|coupling_true| must be < 1")
        object.__setattr__(self, "coupling_true", complex(self.coupling_true))

    @classmethod
    def reference_defaults(cls) -> "ImpairmentSpreads":
        """BS gain/position errors, coupling and MS position errors of the reference setup."""
        return cls(
            delta_p=0.24,
            delta_q=0.24,
            delta_a=0.4,
            delta_phi_B=0.4,
            coupling_true=0.15 * np.exp(-1j * np.pi / 6),
        )

    def to_dict(self) -> dict:
        return {
            "delta_p": self.delta_p,
            "delta_q": self.delta_q,
            "delta_a": self.delta_a,
            "delta_a_prime": self.delta_a_prime,
            "delta_phi_B": self.delta_phi_B,
            "delta_phi_M": self.delta_phi_M,
            "coupling_true": [self.coupling_true.real, self.coupling_true.imag],
            "ppm": self.ppm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImpairmentSpreads":
        d = dict(d)
        c = d.pop("coupling_true", [0.0, 0.0])
        return cls(coupling_true=complex(*c), **d)


def unit_direction(angle: float) -> np.ndarray:
    _check_angle(angle)
    return np.array([np.sin(angle), np.cos(angle), 0.0])


def steering_vector(array: ArrayParams, angle: float) -> np.ndarray:
    """Array response ``g_i * exp(-j 2pi/lambda p_i^T u(angle))``; no coupling."""
    u = unit_direction(angle)
    phase = -2j * np.pi / array.wavelength * (array.positions @ u)
    return array.gains * np.exp(phase)


def steering_matrix(array: ArrayParams, angles) -> np.ndarray:
    """Steering vectors for many angles as columns, shape ``(n, len(angles))``."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    _check_angle(angles)
    u = np.stack([np.sin(angles), np.cos(angles), np.zeros_like(angles)])  # (3, A)
    phase = -2j * np.pi / array.wavelength * (array.positions @ u)
    return array.gains[:, None] * np.exp(phase)


def frequency_response(sub: SubcarrierParams, delay) -> np.ndarray:
    if np.any(np.asarray(delay) < 0):
        raise DomainError(f"delay must be non-negative, got {delay}")
    return np.exp(-2j * np.pi * sub.frequencies * float(delay))


def frequency_matrix(sub: SubcarrierParams, delays) -> np.ndarray:
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    if np.any(delays < 0):
        raise DomainError("delays must be non-negative")
    return np.exp(-2j * np.pi * np.outer(sub.frequencies, delays))


def coupling_matrix(c1: complex, n: int) -> np.ndarray:
    """Tridiagonal adjacent-element coupling ``tridiag(c1, 1, c1)``."""
    if abs(c1) >= 1:
        raise DomainError(f"|c1| must be < 1, got {abs(c1)}")
    if n < 1:
        raise DomainError("n must be >= 1")
    c = np.eye(n, dtype=complex)
    idx = np.arange(n - 1)
    c[idx, idx + 1] = c1
    c[idx + 1, idx] = c1
    return c


def synthesize_channel(
    bs: ArrayParams,
    ms: ArrayParams,
    sub: SubcarrierParams,
    paths: PathSet,
    coupling_bs: complex | None = None,
    coupling_ms: complex | None = None,
) -> np.ndarray:
    """Sum of ``alpha_k (C_B e_B) o (C_m e_m) o e_f`` over paths, shape ``(N_B, N_M, N_S)``.

    The coupling coefficients default to the ones stored on the arrays.
    """
    cb = bs.coupling if coupling_bs is None else coupling_bs
    cm = ms.coupling if coupling_ms is None else coupling_ms
    h = np.zeros((bs.size, ms.size, sub.size), dtype=complex)
    if len(paths) == 0:
        return h
    eb = coupling_matrix(cb, bs.size) @ steering_matrix(bs, paths.aoa)
    em = coupling_matrix(cm, ms.size) @ steering_matrix(ms, paths.aod)
    ef = frequency_matrix(sub, paths.delay)
    return np.einsum("k,ak,bk,ck->abc", paths.gain, eb, em, ef)


def nominal_ula(n: int, wavelength: float, spacing: float = 0.5) -> ArrayParams:
    """Unit-gain ULA along y, ``spacing`` wavelengths apart, centered on the origin."""
    y = (np.arange(n) - (n - 1) / 2) * spacing * wavelength
    pos = np.zeros((n, 3))
    pos[:, 1] = y
    return ArrayParams(pos, np.ones(n), np.zeros(n), 0j, wavelength)


def nominal_subcarriers(n: int, spacing: float, carrier: float = 0.0) -> SubcarrierParams:
    """``n`` subcarriers ``spacing`` apart, centered on ``carrier``."""
    f = carrier + (np.arange(n) - (n - 1) / 2) * spacing
    return SubcarrierParams(f, spacing, 0.0)


def _perturb_array(nominal: ArrayParams, delta_pos, delta_amp, delta_phase, coupling, rng) -> ArrayParams:
    n = nominal.size
    pos = nominal.positions.copy()
    eps = rng.uniform(-delta_pos, delta_pos, n) if delta_pos > 0 else np.zeros(n)
    pos[:, 1] += nominal.wavelength * eps
    amp = nominal.gain_amplitudes + (rng.uniform(-delta_amp, 0.0, n) if delta_amp > 0 else 0.0)
    ph = nominal.gain_phases + (rng.uniform(-delta_phase, delta_phase, n) if delta_phase > 0 else 0.0)
    return ArrayParams(pos, np.maximum(amp, 0.0), ph, coupling, nominal.wavelength)


def sample_impairments(
    nominal_bs: ArrayParams,
    nominal_ms: list[ArrayParams],
    nominal_sub: SubcarrierParams,
    spreads: ImpairmentSpreads,
    seed,
) -> tuple[ArrayParams, list[ArrayParams], SubcarrierParams]:
    """Draw one realization of the true (impaired) system.

    Only the y-coordinate of each element moves. The BS takes the coupling
    coefficient from ``spreads``; MS coupling stays at its nominal value.
    Subcarrier ``i`` (1-based) is shifted by ``i * ppm * spacing``.
    """
    rng = np.random.default_rng(seed)
    bs = _perturb_array(
        nominal_bs, spreads.delta_p, spreads.delta_a, spreads.delta_phi_B, spreads.coupling_true, rng
    )
    ms = [
        _perturb_array(m, spreads.delta_q, spreads.delta_a_prime, spreads.delta_phi_M, m.coupling, rng)
        for m in nominal_ms
    ]
    idx = np.arange(1, nominal_sub.size + 1)
    f = nominal_sub.frequencies + idx * spreads.ppm * nominal_sub.spacing
    sub = replace(nominal_sub, frequencies=f, ppm_offset=nominal_sub.ppm_offset + spreads.ppm)
    return bs, ms, sub


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric CN(0, variance) samples (re/im each N(0, variance/2))."""
    s = np.sqrt(variance / 2)
    return s * rng.standard_normal(shape) + 1j * s * rng.standard_normal(shape)


def add_noise(h: np.ndarray, snr_db: float, seed) -> tuple[np.ndarray, float]:
    """Return ``(Y, sigma2)`` with ``Y = H + N`` and ``||H||^2 / (N sigma2) = 10^(snr/10)``.

    ``snr_db = inf`` gives the noiseless observation.
    """
    h = np.asarray(h)
    if np.isinf(snr_db) and snr_db > 0:
        return h.copy(), 0.0
    energy = float(np.sum(np.abs(h) ** 2))
    if energy == 0.0:
        raise DomainError("cannot set a finite SNR on an all-zero channel")
    sigma2 = energy / (h.size * 10 ** (snr_db / 10))
    rng = np.random.default_rng(seed)
    return h + complex_gaussian(rng, h.shape, sigma2), sigma2


def random_multipath(
    rng: np.random.Generator,
    n_paths: int,
    ms_distance_range: tuple[float, float] = (15.0, 150.0),
    bearing_range: tuple[float, float] = (0.1 * np.pi, 0.9 * np.pi),
    max_delay: float | None = None,
    max_excess_delay: float = 300e-9,
    decay_db: float = 3.0,
) -> tuple[PathSet, np.ndarray]:
    """Synthetic geometry-consistent multipath for one MS drop.

    The MS is placed in the half-plane faced by the BS array (BS at the
    origin, array along y). Path 0 is the LoS path whose AoA and delay follow
    from the MS position; the other ``n_paths - 1`` paths get random angles,
    delays after the LoS delay and amplitudes decaying by ``decay_db`` per path.

    Returns the path set and the MS position (3-vector, meters).
    """
    d = rng.uniform(*ms_distance_range)
    phi = rng.uniform(*bearing_range)
    position = d * np.array([np.sin(phi), np.cos(phi), 0.0])
    tau0 = d / SPEED_OF_LIGHT
    aoa = [phi]
    aod = [np.pi - phi]  # MS array also along y; it sees the BS in the opposite direction
    delay = [tau0]
    gain = [np.exp(2j * np.pi * rng.uniform())]
    for k in range(1, n_paths):
        aoa.append(np.arccos(rng.uniform(-1, 1)))
        aod.append(np.arccos(rng.uniform(-1, 1)))
        hi = tau0 + max_excess_delay
        if max_delay is not None:
            hi = min(hi, max_delay)
        delay.append(rng.uniform(tau0, max(hi, tau0)))
        amp = 10 ** (-k * decay_db / 20)
        gain.append(amp * np.exp(2j * np.pi * rng.uniform()))
    return PathSet(np.array(aoa), np.array(aod), np.array(delay), np.array(gain)), position
