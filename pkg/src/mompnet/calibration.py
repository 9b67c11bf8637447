"""Unfolded MOMP/OMP estimator with learnable physical parameters.

The network's forward pass is :func:`~mompnet.sparse_recovery.sparse_recover`
run on dictionaries built from a parameter vector ``theta`` (antenna
positions, gains, BS coupling and optionally a subcarrier ppm offset). It is
trained without ground truth by minimizing the mini-batch cost

    C(theta) = 1/B * sum_Y ||H_theta(Y) - Y||_F^2.

Gradients treat the selected support as piecewise constant. For a fixed
support the estimate is the LS projection of Y onto the selected atoms, so
the per-observation cost is ``||r||^2`` with ``r = y - A x*``. Because
``A^H r = 0`` at the LS optimum, the sensitivity of ``x*`` drops out and

    d||r||^2 / dt = -2 Re( r^H (dA/dt) x* ),

which only needs the derivatives of the selected factor columns.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channel_model import ArrayParams, SubcarrierParams, coupling_matrix
from .dictionaries import DictionarySet, GridSpec, build_dictionary_set
from .errors import ShapeError
from .sparse_recovery import RecoveryConfig, RecoveryResult, recover, recover_on_support

log = logging.getLogger(__name__)

__all__ = [
    "NominalSystem",
    "ThetaParams",
    "TrainConfig",
    "MOMPNet",
    "train",
    "param_mae",
    "finite_difference_gradient",
]


@dataclass(frozen=True)
class NominalSystem:
    """Nominal (assumed) hardware: the reference that ``theta`` offsets apply to."""

    bs: ArrayParams
    ms: tuple[ArrayParams, ...]
    sub: SubcarrierParams

    @property
    def n_users(self) -> int:
        return len(self.ms)


_GROUPS = (
    "bs_y_offsets",
    "bs_gain_amps",
    "bs_gain_phases",
    "coupling",
    "ms_y_offsets",
    "ms_gain_amps",
    "ms_gain_phases",
    "ppm_offset",
)


@dataclass
class ThetaParams:
    """Learnable physical parameters.

    Position offsets are y-displacements (meters) from the nominal element
    positions. The packed vector holds, in order: BS offsets, BS gain
    amplitudes, BS gain phases, coupling (re, im), MS offsets (user-major),
    then MS gain amplitudes/phases if ``include_ms_gains`` and the ppm offset
    if ``include_ppm``.
    """

    bs_y_offsets: np.ndarray
    bs_gain_amps: np.ndarray
    bs_gain_phases: np.ndarray
    coupling: complex
    ms_y_offsets: np.ndarray  # (M, N_M)
    ms_gain_amps: np.ndarray  # (M, N_M)
    ms_gain_phases: np.ndarray  # (M, N_M)
    ppm_offset: float = 0.0
    include_ms_gains: bool = False
    include_ppm: bool = False

    def __post_init__(self):
        self.bs_y_offsets = np.asarray(self.bs_y_offsets, dtype=float).copy()
        self.bs_gain_amps = np.asarray(self.bs_gain_amps, dtype=float).copy()
        self.bs_gain_phases = np.asarray(self.bs_gain_phases, dtype=float).copy()
        self.ms_y_offsets = np.atleast_2d(np.asarray(self.ms_y_offsets, dtype=float)).copy()
        self.ms_gain_amps = np.atleast_2d(np.asarray(self.ms_gain_amps, dtype=float)).copy()
        self.ms_gain_phases = np.atleast_2d(np.asarray(self.ms_gain_phases, dtype=float)).copy()
        self.coupling = complex(self.coupling)
        self.ppm_offset = float(self.ppm_offset)
        n_b = self.bs_y_offsets.size
        if self.bs_gain_amps.shape != (n_b,) or self.bs_gain_phases.shape != (n_b,):
            raise ShapeError("BS parameter groups must share length N_B")
        shape = self.ms_y_offsets.shape
        if self.ms_gain_amps.shape != shape or self.ms_gain_phases.shape != shape:
            raise ShapeError("MS parameter groups must share shape (M, N_M)")

    @property
    def n_b(self) -> int:
        return self.bs_y_offsets.size

    @property
    def n_users(self) -> int:
        return self.ms_y_offsets.shape[0]

    @property
    def n_m(self) -> int:
        return self.ms_y_offsets.shape[1]

    @classmethod
    def nominal(cls, system: NominalSystem, include_ms_gains=False, include_ppm=False) -> "ThetaParams":
        m, n_m = system.n_users, system.ms[0].size
        return cls(
            bs_y_offsets=np.zeros(system.bs.size),
            bs_gain_amps=system.bs.gain_amplitudes,
            bs_gain_phases=system.bs.gain_phases,
            coupling=system.bs.coupling,
            ms_y_offsets=np.zeros((m, n_m)),
            ms_gain_amps=np.stack([a.gain_amplitudes for a in system.ms]),
            ms_gain_phases=np.stack([a.gain_phases for a in system.ms]),
            ppm_offset=system.sub.ppm_offset,
            include_ms_gains=include_ms_gains,
            include_ppm=include_ppm,
        )

    @classmethod
    def from_system(
        cls,
        system: NominalSystem,
        bs: ArrayParams,
        ms: list[ArrayParams],
        sub: SubcarrierParams,
        include_ms_gains=False,
        include_ppm=False,
    ) -> "ThetaParams":
        """Express a concrete (e.g. true) hardware realization relative to ``system``."""
        return cls(
            bs_y_offsets=bs.positions[:, 1] - system.bs.positions[:, 1],
            bs_gain_amps=bs.gain_amplitudes,
            bs_gain_phases=bs.gain_phases,
            coupling=bs.coupling,
            ms_y_offsets=np.stack([a.positions[:, 1] - n.positions[:, 1] for a, n in zip(ms, system.ms)]),
            ms_gain_amps=np.stack([a.gain_amplitudes for a in ms]),
            ms_gain_phases=np.stack([a.gain_phases for a in ms]),
            ppm_offset=sub.ppm_offset,
            include_ms_gains=include_ms_gains,
            include_ppm=include_ppm,
        )

    def copy(self) -> "ThetaParams":
        return replace(self)

    def layout(self) -> dict[str, slice]:
        """Slices of each packed group inside the flat vector."""
        sizes = [
            ("bs_y_offsets", self.n_b),
            ("bs_gain_amps", self.n_b),
            ("bs_gain_phases", self.n_b),
            ("coupling", 2),
            ("ms_y_offsets", self.n_users * self.n_m),
        ]
        if self.include_ms_gains:
            sizes += [("ms_gain_amps", self.n_users * self.n_m), ("ms_gain_phases", self.n_users * self.n_m)]
        if self.include_ppm:
            sizes.append(("ppm_offset", 1))
        out, start = {}, 0
        for name, n in sizes:
            out[name] = slice(start, start + n)
            start += n
        return out

    @property
    def size(self) -> int:
        return max(s.stop for s in self.layout().values())

    def pack(self) -> np.ndarray:
        parts = [
            self.bs_y_offsets,
            self.bs_gain_amps,
            self.bs_gain_phases,
            np.array([self.coupling.real, self.coupling.imag]),
            self.ms_y_offsets.ravel(),
        ]
        if self.include_ms_gains:
            parts += [self.ms_gain_amps.ravel(), self.ms_gain_phases.ravel()]
        if self.include_ppm:
            parts.append(np.array([self.ppm_offset]))
        return np.concatenate(parts)

    def unpack(self, vec: np.ndarray) -> "ThetaParams":
        """New parameters with the packed groups taken from ``vec``."""
        vec = np.asarray(vec, dtype=float)
        lay = self.layout()
        if vec.shape != (self.size,):
            raise ShapeError(f"packed vector must have length {self.size}, got {vec.shape}")
        out = self.copy()
        out.bs_y_offsets = vec[lay["bs_y_offsets"]].copy()
        out.bs_gain_amps = vec[lay["bs_gain_amps"]].copy()
        out.bs_gain_phases = vec[lay["bs_gain_phases"]].copy()
        c = vec[lay["coupling"]]
        out.coupling = complex(c[0], c[1])
        shape = self.ms_y_offsets.shape
        out.ms_y_offsets = vec[lay["ms_y_offsets"]].reshape(shape).copy()
        if self.include_ms_gains:
            out.ms_gain_amps = vec[lay["ms_gain_amps"]].reshape(shape).copy()
            out.ms_gain_phases = vec[lay["ms_gain_phases"]].reshape(shape).copy()
        if self.include_ppm:
            out.ppm_offset = float(vec[lay["ppm_offset"]][0])
        return out

    def user_slices(self, m: int) -> list[slice]:
        """Packed ranges that belong to user ``m`` only."""
        lay = self.layout()
        n = self.n_m
        out = []
        for name in ("ms_y_offsets", "ms_gain_amps", "ms_gain_phases"):
            if name in lay:
                s = lay[name].start + m * n
                out.append(slice(s, s + n))
        return out

    def shared_mask(self) -> np.ndarray:
        """Boolean mask of the parameters shared by all users (BS and subcarriers)."""
        mask = np.ones(self.size, dtype=bool)
        for m in range(self.n_users):
            for s in self.user_slices(m):
                mask[s] = False
        return mask

    # -- physical realizations -------------------------------------------------
    def bs_array(self, system: NominalSystem) -> ArrayParams:
        pos = system.bs.positions.copy()
        pos[:, 1] += self.bs_y_offsets
        return ArrayParams(pos, np.abs(self.bs_gain_amps), self.bs_gain_phases, _clip_coupling(self.coupling),
                           system.bs.wavelength)

    def ms_array(self, system: NominalSystem, m: int) -> ArrayParams:
        nom = system.ms[m]
        pos = nom.positions.copy()
        pos[:, 1] += self.ms_y_offsets[m]
        return ArrayParams(pos, np.abs(self.ms_gain_amps[m]), self.ms_gain_phases[m], nom.coupling, nom.wavelength)

    def subcarriers(self, system: NominalSystem) -> SubcarrierParams:
        sub = system.sub
        delta = self.ppm_offset - sub.ppm_offset
        idx = np.arange(1, sub.size + 1)
        return SubcarrierParams(sub.frequencies + idx * delta * sub.spacing, sub.spacing, self.ppm_offset)

    def to_dict(self) -> dict:
        return {
            "bs_y_offsets": self.bs_y_offsets.tolist(),
            "bs_gain_amps": self.bs_gain_amps.tolist(),
            "bs_gain_phases": self.bs_gain_phases.tolist(),
            "coupling": [self.coupling.real, self.coupling.imag],
            "ms_y_offsets": self.ms_y_offsets.tolist(),
            "ms_gain_amps": self.ms_gain_amps.tolist(),
            "ms_gain_phases": self.ms_gain_phases.tolist(),
            "ppm_offset": self.ppm_offset,
            "include_ms_gains": self.include_ms_gains,
            "include_ppm": self.include_ppm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ThetaParams":
        d = dict(d)
        d["coupling"] = complex(*d["coupling"])
        return cls(**d)


def _clip_coupling(c: complex) -> complex:
    # keep the coupling matrix well-posed if an update overshoots
    r = abs(c)
    return c if r < 0.99 else c * 0.99 / r


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    learning_rate: float = 1e-3
    epochs: int = 10
    optimizer: str = "adam"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    frozen: tuple[str, ...] = ()

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        bad = set(self.frozen) - set(_GROUPS)
        if bad:
            raise ValueError(f"unknown parameter groups {sorted(bad)}")
        object.__setattr__(self, "frozen", tuple(self.frozen))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class _Factors:
    """Dictionaries for one user plus the pieces needed for derivatives."""

    dicts: DictionarySet
    bs: ArrayParams
    ms: ArrayParams
    sub: SubcarrierParams


class MOMPNet:
    """Physically parameterized unfolded sparse-recovery estimator.

    Parameters
    ----------
    system:
        Nominal hardware, the reference for ``theta``.
    grid:
        Angle/delay grid sizes.
    recovery:
        Selector and stopping rule used in the forward pass.
    """

    def __init__(self, system: NominalSystem, grid: GridSpec, recovery: RecoveryConfig | None = None):
        self.system = system
        self.grid = grid
        self.recovery = recovery or RecoveryConfig()

    def _factors(self, theta: ThetaParams, m: int, cache: dict | None = None) -> _Factors:
        key = m
        if cache is not None and key in cache:
            return cache[key]
        bs = theta.bs_array(self.system)
        ms = theta.ms_array(self.system, m)
        sub = theta.subcarriers(self.system)
        f = _Factors(build_dictionary_set(bs, ms, sub, self.grid), bs, ms, sub)
        if cache is not None:
            cache[key] = f
        return f

    def dictionaries(self, theta: ThetaParams, ms_index: int) -> DictionarySet:
        return self._factors(theta, ms_index).dicts

    def forward(self, y: np.ndarray, theta: ThetaParams, ms_index: int) -> RecoveryResult:
        """Run the recovery with dictionaries built from ``theta`` for user ``ms_index``."""
        if not 0 <= ms_index < self.system.n_users:
            raise IndexError(f"ms_index {ms_index} out of range")
        return recover(y, self.dictionaries(theta, ms_index), self.recovery)

    def forward_estimate(self, y: np.ndarray, theta: ThetaParams, ms_index: int) -> np.ndarray:
        return self.forward(y, theta, ms_index).estimate

    def cost(self, batch, theta: ThetaParams) -> float:
        """Mean squared Frobenius distance between the estimate and the observation."""
        batch = list(batch)
        if not batch:
            raise ValueError("batch must be nonempty")
        cache: dict = {}
        total = 0.0
        for y, m in batch:
            res = recover(y, self._factors(theta, m, cache).dicts, self.recovery)
            total += float(np.sum(np.abs(res.estimate - y) ** 2))
        return total / len(batch)

    def cost_on_support(self, batch, theta: ThetaParams, supports) -> float:
        """Cost with every observation's support frozen (no atom selection)."""
        batch = list(batch)
        cache: dict = {}
        total = 0.0
        for (y, m), supp in zip(batch, supports):
            res = recover_on_support(y, self._factors(theta, m, cache).dicts, supp)
            total += float(np.sum(np.abs(res.estimate - y) ** 2))
        return total / len(batch)

    def gradient(self, batch, theta: ThetaParams, return_supports: bool = False):
        """Fixed-support gradient of :meth:`cost` w.r.t. the packed parameters.

        Returns ``(cost, grad)`` or ``(cost, grad, supports)``.
        """
        batch = list(batch)
        if not batch:
            raise ValueError("batch must be nonempty")
        cache: dict = {}
        grad = np.zeros(theta.size)
        lay = theta.layout()
        total = 0.0
        supports = []
        for y, m in batch:
            fac = self._factors(theta, m, cache)
            res = recover(y, fac.dicts, self.recovery)
            supports.append(res.support)
            r = np.asarray(y) - res.estimate
            total += float(np.sum(np.abs(r) ** 2))
            if res.support:
                self._accumulate(grad, lay, theta, fac, m, res, r)
        n = len(batch)
        out = (total / n, grad / n)
        return out + (supports,) if return_supports else out

    def _accumulate(self, grad, lay, theta, fac: _Factors, m, res: RecoveryResult, r):
        supp = np.array(res.support)  # (T, 3)
        x = res.coefficients
        dicts = fac.dicts
        U = dicts.d_b[:, supp[:, 0]]
        V = dicts.d_m[:, supp[:, 1]]
        W = dicts.d_s[:, supp[:, 2]]
        rc = r.conj()
        # back-projections of the residual onto each factor, weighted by x_t
        qb = np.einsum("abc,bt,ct->ta", rc, V, W) * x[:, None]
        qm = np.einsum("abc,at,ct->tb", rc, U, W) * x[:, None]

        # BS: column = C_B (g * e(phi))
        phi = dicts.angle_grid_b[supp[:, 0]]
        zb = qb @ coupling_matrix(fac.bs.coupling, fac.bs.size)  # rows = C^T q_t (C symmetric)
        d_pos, d_amp, d_ph, s = _array_terms(fac.bs, phi, zb)
        grad[lay["bs_y_offsets"]] += -2 * d_pos
        grad[lay["bs_gain_amps"]] += -2 * d_amp * np.sign(theta.bs_gain_amps + (theta.bs_gain_amps == 0))
        grad[lay["bs_gain_phases"]] += -2 * d_ph
        n = fac.bs.size
        # dC/dRe(c1) = tridiag(1, 0, 1); dC/dIm(c1) = j * tridiag(1, 0, 1)
        ts = np.zeros_like(s)
        ts[:, 1:] += s[:, :-1]
        ts[:, :-1] += s[:, 1:]
        dc = np.sum(qb * ts) if n > 1 else 0.0
        c = theta.coupling
        if abs(c) >= 0.99:
            dc = 0.0  # clipped region is flat to first order in this parameterization
        grad[lay["coupling"]] += -2 * np.array([np.real(dc), np.real(1j * dc)])

        # MS of user m: column = C_m (g_m * e(psi))
        psi = dicts.angle_grid_m[supp[:, 1]]
        zm = qm @ coupling_matrix(fac.ms.coupling, fac.ms.size)
        d_pos, d_amp, d_ph, _ = _array_terms(fac.ms, psi, zm)
        k = theta.n_m
        sl = slice(lay["ms_y_offsets"].start + m * k, lay["ms_y_offsets"].start + (m + 1) * k)
        grad[sl] += -2 * d_pos
        if theta.include_ms_gains:
            amps = theta.ms_gain_amps[m]
            sl = slice(lay["ms_gain_amps"].start + m * k, lay["ms_gain_amps"].start + (m + 1) * k)
            grad[sl] += -2 * d_amp * np.sign(amps + (amps == 0))
            sl = slice(lay["ms_gain_phases"].start + m * k, lay["ms_gain_phases"].start + (m + 1) * k)
            grad[sl] += -2 * d_ph

        if theta.include_ppm:
            qs = np.einsum("abc,at,bt->tc", rc, U, V) * x[:, None]
            tau = dicts.delay_grid[supp[:, 2]]
            sub = fac.sub
            idx = np.arange(1, sub.size + 1)
            dw = W.T * (-2j * np.pi * np.outer(tau, idx * sub.spacing))  # d column / d xi
            grad[lay["ppm_offset"]] += -2 * np.real(np.sum(qs * dw))


def _array_terms(array: ArrayParams, angles: np.ndarray, z: np.ndarray):
    """Real parts of ``sum_t z_t . d(g * e(angle_t))`` per element.

    ``z`` has one row per selected atom and already includes the coupling
    transpose. Returns derivatives w.r.t. y-offset, amplitude, phase, and
    the uncoupled columns ``s_t = g * e(angle_t)`` as rows.
    """
    k = 2 * np.pi / array.wavelength
    u = np.stack([np.sin(angles), np.cos(angles), np.zeros_like(angles)], axis=1)  # (T, 3)
    e = np.exp(-1j * k * (u @ array.positions.T))  # (T, n)
    g = array.gains
    s = e * g[None, :]
    unit = np.exp(1j * array.gain_phases)
    d_pos = np.real(np.sum(z * s * (-1j * k * np.cos(angles))[:, None], axis=0))
    d_amp = np.real(np.sum(z * e * unit[None, :], axis=0))
    d_ph = np.real(np.sum(z * s * 1j, axis=0))
    return d_pos, d_amp, d_ph, s


def finite_difference_gradient(net: MOMPNet, batch, theta: ThetaParams, supports, coords, step=1e-6, scales=None):
    """Central differences of the frozen-support cost along packed coordinates ``coords``."""
    base = theta.pack()
    out = np.zeros(len(coords))
    for n, i in enumerate(coords):
        h = step * (1.0 if scales is None else scales[i])
        plus, minus = base.copy(), base.copy()
        plus[i] += h
        minus[i] -= h
        fp = net.cost_on_support(batch, theta.unpack(plus), supports)
        fm = net.cost_on_support(batch, theta.unpack(minus), supports)
        out[n] = (fp - fm) / (2 * h)
    return out


def coordinate_scales(theta: ThetaParams, wavelength: float) -> np.ndarray:
    """Natural unit of every packed coordinate (wavelengths for positions)."""
    lay = theta.layout()
    s = np.ones(theta.size)
    s[lay["bs_y_offsets"]] = wavelength
    s[lay["ms_y_offsets"]] = wavelength
    if "ppm_offset" in lay:
        s[lay["ppm_offset"]] = 1e-3
    return s


@dataclass
class TrainResult:
    theta: ThetaParams
    loss_history: list[float] = field(default_factory=list)


def train(net: MOMPNet, dataset, theta0: ThetaParams, cfg: TrainConfig) -> TrainResult:
    """Mini-batch training of the physical parameters.

    ``dataset`` is a sequence of ``(Y, ms_index)`` pairs; true channels are
    never needed. In every batch only the shared (BS/subcarrier) parameters
    and the parameters of users present in the batch are updated; the
    optimizer state of other users is left untouched.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset must be nonempty")
    rng = np.random.default_rng(cfg.seed)
    theta = theta0.copy()
    vec = theta.pack()
    scales = coordinate_scales(theta, net.system.bs.wavelength)
    lay = theta.layout()
    trainable = np.ones(vec.size, dtype=bool)
    for name in cfg.frozen:
        if name in lay:
            trainable[lay[name]] = False
    shared = theta.shared_mask()
    m1 = np.zeros(vec.size)
    m2 = np.zeros(vec.size)
    steps = np.zeros(vec.size, dtype=np.int64)
    history = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        costs = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [dataset[i] for i in order[start:start + cfg.batch_size]]
            c, g = net.gradient(batch, theta)
            costs.append((c, len(batch)))
            active = shared.copy()
            for m in {mi for _, mi in batch}:
                for s in theta.user_slices(m):
                    active[s] = True
            active &= trainable
            gz = g * scales  # gradient w.r.t. coordinates measured in natural units
            if cfg.optimizer == "sgd":
                vec[active] -= cfg.learning_rate * scales[active] * gz[active]
            else:
                steps[active] += 1
                m1[active] = cfg.beta1 * m1[active] + (1 - cfg.beta1) * gz[active]
                m2[active] = cfg.beta2 * m2[active] + (1 - cfg.beta2) * gz[active] ** 2
                mh = m1[active] / (1 - cfg.beta1 ** steps[active])
                vh = m2[active] / (1 - cfg.beta2 ** steps[active])
                vec[active] -= cfg.learning_rate * scales[active] * mh / (np.sqrt(vh) + cfg.eps)
            theta = theta.unpack(vec)
        total = sum(c * n for c, n in costs) / sum(n for _, n in costs)
        history.append(total)
        log.info("epoch %d/%d  cost %.6g", epoch + 1, cfg.epochs, total)
    return TrainResult(theta, history)


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def param_mae(theta_hat: ThetaParams, theta_true: ThetaParams, align: bool = False) -> dict[str, float]:
    """Mean absolute error of each physical parameter group.

    The recovery cost is invariant to a common scale and a common phase of
    the BS gains, and to a common translation of each array (these are
    absorbed by the path coefficients). With ``align=True`` each group is
    first aligned to the truth along its invariance before the MAE is taken:
    least-squares amplitude scale, circular-mean phase shift, mean offset.
    """
    if theta_hat.pack().shape != theta_true.pack().shape or theta_hat.ms_y_offsets.shape != theta_true.ms_y_offsets.shape:
        raise ShapeError("parameter packings differ")
    amp_hat = np.abs(theta_hat.bs_gain_amps)
    ph_hat = theta_hat.bs_gain_phases
    pos_hat = theta_hat.bs_y_offsets
    ms_hat = theta_hat.ms_y_offsets
    if align:
        a = theta_true.bs_gain_amps
        den = float(amp_hat @ amp_hat)
        if den > 0:
            amp_hat = amp_hat * float(amp_hat @ a) / den
        ph_hat = ph_hat + np.angle(np.sum(np.exp(1j * (theta_true.bs_gain_phases - ph_hat))))
        pos_hat = pos_hat + np.mean(theta_true.bs_y_offsets - pos_hat)
        ms_hat = ms_hat + np.mean(theta_true.ms_y_offsets - ms_hat, axis=1, keepdims=True)
    return {
        "gain_amplitude": float(np.mean(np.abs(amp_hat - theta_true.bs_gain_amps))),
        "gain_phase": float(np.mean(np.abs(_wrap(ph_hat - theta_true.bs_gain_phases)))),
        "position": float(np.mean(np.abs(pos_hat - theta_true.bs_y_offsets))),
        "ms_position": float(np.mean(np.abs(ms_hat - theta_true.ms_y_offsets))),
        "coupling": float(abs(theta_hat.coupling - theta_true.coupling)),
    }
