"""Scenario configuration, dataset generation and evaluation pipelines."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import io
from .calibration import MOMPNet, NominalSystem, ThetaParams, TrainConfig, param_mae, train
from .channel_model import (
    SPEED_OF_LIGHT,
    ArrayParams,
    ImpairmentSpreads,
    PathSet,
    SubcarrierParams,
    add_noise,
    nominal_subcarriers,
    nominal_ula,
    random_multipath,
    sample_impairments,
    synthesize_channel,
)
from .dictionaries import GridSpec, build_dictionary_set
from .errors import ConfigError, RankDeficiencyError
from .localization import localization_error, localize
from .mod_baseline import mod_train, omp_code
from .sparse_recovery import RecoveryConfig, angle_delay_map, recover

log = logging.getLogger(__name__)

__all__ = [
    "ModCompareConfig",
    "ExperimentConfig",
    "Scenario",
    "Observation",
    "Dataset",
    "rng_for",
    "build_scenario",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "nmse",
    "eval_nmse",
    "run_training",
    "localization_table",
    "admap",
    "compare_mod",
    "theta_report",
]

# stream tags for seed derivation
_IMPAIR, _TRAIN_GEO, _TRAIN_NOISE, _TEST_GEO, _TEST_NOISE, _SHUFFLE, _MOD = range(7)


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``(seed, *keys)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass(frozen=True)
class ModCompareConfig:
    """Single-dimension (BS angle) OMPnet vs MOD comparison."""

    l_values: tuple[int, ...] = (1, 4, 16, 64, 256)
    snr_db: float = 10.0
    snr_db_list: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0)
    l_for_snr_sweep: int = 256
    test_count: int = 200
    mod_iterations: int = 8
    ompnet_epochs: int = 15
    ompnet_batch_size: int = 16
    ompnet_learning_rate: float = 1e-2


@dataclass(frozen=True)
class ExperimentConfig:
    n_b: int = 8
    n_m: int = 4
    n_s: int = 32
    n_users: int = 3
    positions_per_user: int = 40
    test_positions_per_user: int = 70
    a_b: int = 32
    a_m: int = 16
    a_s: int = 64
    carrier_hz: float = 28e9
    spacing_hz: float = 1.44e6
    spreads: ImpairmentSpreads = field(default_factory=ImpairmentSpreads.reference_defaults)
    snr_db_list: tuple[float, ...] = (0.0, 5.0, 15.0)
    train_snr_db: float = 5.0
    paths_per_channel: int = 3
    distance_range_m: tuple[float, float] = (15.0, 150.0)
    max_excess_delay_s: float = 300e-9
    path_decay_db: float = 3.0
    selector: str = "momp"
    max_atoms: int = 3
    n_refine: int = 3
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(batch_size=10, learning_rate=1e-3, epochs=50, optimizer="adam")
    )
    mod: ModCompareConfig = field(default_factory=ModCompareConfig)
    seed: int = 0

    def __post_init__(self):
        counts = ("n_b", "n_m", "n_s", "n_users", "positions_per_user", "a_b", "a_m", "a_s",
                  "paths_per_channel", "max_atoms")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.test_positions_per_user < 0:
            raise ConfigError("test_positions_per_user must be >= 0")
        if min(self.a_b, self.a_m) < 2:
            raise ConfigError("angle grids need at least 2 points")
        if self.selector not in ("omp", "momp"):
            raise ConfigError(f"unknown selector {self.selector!r}")
        lo, hi = self.distance_range_m
        if not 0 < lo <= hi:
            raise ConfigError("distance_range_m must satisfy 0 < lo <= hi")
        if hi / SPEED_OF_LIGHT >= 1 / self.spacing_hz:
            raise ConfigError("maximum MS distance exceeds the unambiguous delay range c / spacing")

    # -- (de)serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["spreads"] = self.spreads.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "spreads" in d:
                d["spreads"] = ImpairmentSpreads.from_dict(d["spreads"])
            if "train" in d:
                t = dict(d["train"])
                if "frozen" in t:
                    t["frozen"] = tuple(t["frozen"])
                d["train"] = TrainConfig(**t)
            if "mod" in d:
                m = dict(d["mod"])
                for k in ("l_values", "snr_db_list"):
                    if k in m:
                        m[k] = tuple(m[k])
                d["mod"] = ModCompareConfig(**m)
            for k in ("snr_db_list", "distance_range_m"):
                if k in d:
                    d[k] = tuple(d[k])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.a_b, self.a_m, self.a_s, 1.0 / self.spacing_hz)

    @property
    def recovery(self) -> RecoveryConfig:
        return RecoveryConfig(self.selector, self.max_atoms, 0.0, self.n_refine)


@dataclass(frozen=True)
class Scenario:
    """Nominal and true hardware of one seeded experiment."""

    config: ExperimentConfig
    nominal: NominalSystem
    true_bs: ArrayParams
    true_ms: tuple[ArrayParams, ...]
    true_sub: SubcarrierParams

    def net(self, recovery: RecoveryConfig | None = None) -> MOMPNet:
        return MOMPNet(self.nominal, self.config.grid, recovery or self.config.recovery)

    def theta_nominal(self) -> ThetaParams:
        return ThetaParams.nominal(self.nominal)

    def theta_true(self) -> ThetaParams:
        return ThetaParams.from_system(self.nominal, self.true_bs, list(self.true_ms), self.true_sub)


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    lam = cfg.wavelength
    bs = nominal_ula(cfg.n_b, lam)
    ms = tuple(nominal_ula(cfg.n_m, lam) for _ in range(cfg.n_users))
    sub = nominal_subcarriers(cfg.n_s, cfg.spacing_hz, cfg.carrier_hz)
    tb, tm, ts = sample_impairments(bs, list(ms), sub, cfg.spreads, rng_for(cfg.seed, _IMPAIR))
    return Scenario(cfg, NominalSystem(bs, ms, sub), tb, tuple(tm), ts)


@dataclass
class Observation:
    ms_index: int
    position: np.ndarray
    paths: PathSet
    h: np.ndarray
    y: np.ndarray | None = None
    sigma2: float = 0.0


@dataclass
class Dataset:
    scenario: Scenario
    train: list[Observation]
    test_h: list[Observation]
    test_y: dict[float, np.ndarray]  # snr -> (count, N_B, N_M, N_S)

    def training_pairs(self) -> list[tuple[np.ndarray, int]]:
        """Observations only; true channels are deliberately not exposed."""
        return [(o.y, o.ms_index) for o in self.train]


def _draw(scn: Scenario, m: int, rng: np.random.Generator) -> Observation:
    cfg = scn.config
    paths, pos = random_multipath(
        rng,
        cfg.paths_per_channel,
        ms_distance_range=cfg.distance_range_m,
        max_delay=0.999 / cfg.spacing_hz,
        max_excess_delay=cfg.max_excess_delay_s,
        decay_db=cfg.path_decay_db,
    )
    h = synthesize_channel(scn.true_bs, scn.true_ms[m], scn.true_sub, paths)
    return Observation(m, pos, paths, h)


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def generate_dataset(cfg: ExperimentConfig, threads: int = 1) -> Dataset:
    """Seeded training split (noisy at ``train_snr_db``) and held-out split at every SNR."""
    scn = build_scenario(cfg)
    seed = cfg.seed

    def train_obs(i):
        m = i % cfg.n_users
        o = _draw(scn, m, rng_for(seed, _TRAIN_GEO, i))
        o.y, o.sigma2 = add_noise(o.h, cfg.train_snr_db, rng_for(seed, _TRAIN_NOISE, i))
        return o

    def test_obs(i):
        return _draw(scn, i % cfg.n_users, rng_for(seed, _TEST_GEO, i))

    n_train = cfg.n_users * cfg.positions_per_user
    n_test = cfg.n_users * cfg.test_positions_per_user
    train_set = _map(train_obs, range(n_train), threads)
    test_set = _map(test_obs, range(n_test), threads)
    test_y = {}
    for k, snr in enumerate(cfg.snr_db_list):
        test_y[float(snr)] = np.stack(
            [add_noise(o.h, snr, rng_for(seed, _TEST_NOISE, k, i))[0] for i, o in enumerate(test_set)]
        ) if test_set else np.zeros((0, cfg.n_b, cfg.n_m, cfg.n_s), complex)
    return Dataset(scn, train_set, test_set, test_y)


# -- persistence ---------------------------------------------------------------
def _snr_tag(snr: float) -> str:
    return f"{snr:g}".replace("-", "m").replace(".", "p")


def save_dataset(ds: Dataset, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ds.scenario.config
    shape = (0, cfg.n_b, cfg.n_m, cfg.n_s)
    files = [out / "train_Y.bin", out / "test_H.bin"]
    io.write_tensors(files[0], np.stack([o.y for o in ds.train]) if ds.train else np.zeros(shape, complex))
    io.write_tensors(files[1], np.stack([o.h for o in ds.test_h]) if ds.test_h else np.zeros(shape, complex))
    for snr, arr in ds.test_y.items():
        p = out / f"test_Y_snr{_snr_tag(snr)}.bin"
        io.write_tensors(p, arr)
        files.append(p)
    scn = ds.scenario
    sidecar = {
        "config": cfg.to_dict(),
        "nominal": {
            "bs": scn.nominal.bs.to_dict(),
            "ms": [a.to_dict() for a in scn.nominal.ms],
            "sub": scn.nominal.sub.to_dict(),
        },
        "true": {
            "bs": scn.true_bs.to_dict(),
            "ms": [a.to_dict() for a in scn.true_ms],
            "sub": scn.true_sub.to_dict(),
        },
        "train": [
            {"ms_index": o.ms_index, "position": o.position.tolist(), "sigma2": o.sigma2, "paths": o.paths.to_dict()}
            for o in ds.train
        ],
        "test": [
            {"ms_index": o.ms_index, "position": o.position.tolist(), "paths": o.paths.to_dict()}
            for o in ds.test_h
        ],
        "test_snr_files": {f"{snr:g}": f"test_Y_snr{_snr_tag(snr)}.bin" for snr in ds.test_y},
    }
    io.write_json(out / "dataset.json", sidecar)
    files.append(out / "dataset.json")
    return files


def load_dataset(out_dir) -> Dataset:
    out = Path(out_dir)
    side = io.read_json(out / "dataset.json")
    cfg = ExperimentConfig.from_dict(side["config"])
    nominal = NominalSystem(
        ArrayParams.from_dict(side["nominal"]["bs"]),
        tuple(ArrayParams.from_dict(a) for a in side["nominal"]["ms"]),
        SubcarrierParams.from_dict(side["nominal"]["sub"]),
    )
    scn = Scenario(
        cfg,
        nominal,
        ArrayParams.from_dict(side["true"]["bs"]),
        tuple(ArrayParams.from_dict(a) for a in side["true"]["ms"]),
        SubcarrierParams.from_dict(side["true"]["sub"]),
    )
    ty = io.read_tensors(out / "train_Y.bin")
    train_set = [
        Observation(e["ms_index"], np.array(e["position"]), PathSet.from_dict(e["paths"]), None, ty[i], e["sigma2"])
        for i, e in enumerate(side["train"])
    ]
    th = io.read_tensors(out / "test_H.bin")
    test_set = [
        Observation(e["ms_index"], np.array(e["position"]), PathSet.from_dict(e["paths"]), th[i])
        for i, e in enumerate(side["test"])
    ]
    test_y = {float(k): io.read_tensors(out / v) for k, v in side["test_snr_files"].items()}
    return Dataset(scn, train_set, test_set, test_y)


# -- evaluation ------------------------------------------------------------------
def nmse(h_hat: np.ndarray, h: np.ndarray) -> float:
    return float(np.sum(np.abs(h_hat - h) ** 2) / np.sum(np.abs(h) ** 2))


def _dicts_for(scn: Scenario, which: str, theta: ThetaParams | None, m: int):
    cfg = scn.config
    if which == "ideal":
        return build_dictionary_set(scn.true_bs, scn.true_ms[m], scn.true_sub, cfg.grid)
    if which == "nominal":
        return build_dictionary_set(scn.nominal.bs, scn.nominal.ms[m], scn.nominal.sub, cfg.grid, 0, 0)
    if which == "trained":
        if theta is None:
            raise ValueError("trained estimator needs theta")
        return scn.net().dictionaries(theta, m)
    raise ValueError(f"unknown dictionary kind {which!r}")


ESTIMATORS = ("ls", "nominal", "trained", "ideal")


def eval_nmse(
    ds: Dataset,
    estimators=ESTIMATORS,
    theta: ThetaParams | None = None,
    recovery: RecoveryConfig | None = None,
    threads: int = 1,
) -> dict[float, dict[str, float]]:
    """Mean held-out NMSE per SNR for each estimator.

    ``ls`` returns the observation itself; the others run sparse recovery
    with nominal, trained (``theta``) or true dictionaries.
    """
    scn = ds.scenario
    rec = recovery or scn.config.recovery
    dicts = {}
    for kind in estimators:
        if kind != "ls":
            for m in range(scn.config.n_users):
                dicts[kind, m] = _dicts_for(scn, kind, theta, m)
    out: dict[float, dict[str, float]] = {}
    for snr, ys in ds.test_y.items():
        def one(i):
            o = ds.test_h[i]
            row = {}
            for kind in estimators:
                if kind == "ls":
                    est = ys[i]
                else:
                    est = recover(ys[i], dicts[kind, o.ms_index], rec).estimate
                row[kind] = nmse(est, o.h)
            return row

        rows = _map(one, range(len(ds.test_h)), threads)
        out[snr] = {k: float(np.mean([r[k] for r in rows])) for k in estimators}
    return out


def run_training(ds: Dataset, cfg: TrainConfig | None = None, theta0: ThetaParams | None = None):
    scn = ds.scenario
    tc = cfg or scn.config.train
    net = scn.net()
    return train(net, ds.training_pairs(), theta0 or scn.theta_nominal(), tc)


def localization_table(ds: Dataset, theta: ThetaParams, snr: float | None = None) -> list[dict]:
    """Per-position localization before (nominal) and after (trained) calibration."""
    scn = ds.scenario
    snr = scn.config.train_snr_db if snr is None else snr
    if snr not in ds.test_y:
        snr = next(iter(ds.test_y))
    ys = ds.test_y[snr]
    rows = []
    for phase, kind in (("before", "nominal"), ("after", "trained")):
        dicts = {m: _dicts_for(scn, kind, theta, m) for m in range(scn.config.n_users)}
        for i, o in enumerate(ds.test_h):
            d = dicts[o.ms_index]
            res = recover(ys[i], d, scn.config.recovery)
            est = localize(res, d)
            err = float("nan") if est is None else localization_error(est, o.position)
            est = np.full(3, np.nan) if est is None else est
            rows.append(
                {
                    "ms_id": o.ms_index,
                    "true_x": o.position[0],
                    "true_y": o.position[1],
                    "est_x": est[0],
                    "est_y": est[1],
                    "error_m": err,
                    "phase": phase,
                }
            )
    return rows


def admap(ds: Dataset, index: int = 0, which: str = "nominal", snr: float | None = None) -> tuple[np.ndarray, object]:
    scn = ds.scenario
    o = ds.test_h[index]
    y = o.h if snr is None else ds.test_y[snr][index]
    d = _dicts_for(scn, which, None, o.ms_index)
    return angle_delay_map(y, d), d


# -- single-dimension MOD comparison ---------------------------------------------
def _snapshots(scn: Scenario, count: int, snr: float, stream: int) -> tuple[np.ndarray, np.ndarray]:
    """``count`` BS-array snapshots (mode-1 fibers of fresh channels), noiseless and noisy."""
    cfg = scn.config
    h = np.zeros((cfg.n_b, count), complex)
    y = np.zeros_like(h)
    for i in range(count):
        rng = rng_for(cfg.seed, _MOD, stream, i)
        o = _draw(scn, i % cfg.n_users, rng)
        b = int(rng.integers(cfg.n_m))
        s = int(rng.integers(cfg.n_s))
        h[:, i] = o.h[:, b, s]
        y[:, i] = add_noise(h[:, i], snr, rng)[0]
    return h, y


def _bs_only_net(scn: Scenario) -> MOMPNet:
    """OMPnet: the unfolded estimator restricted to the BS angle dictionary."""
    cfg = scn.config
    lam = cfg.wavelength
    single = nominal_ula(1, lam)
    system = NominalSystem(scn.nominal.bs, (single,), SubcarrierParams(np.array([cfg.carrier_hz]), cfg.spacing_hz))
    return MOMPNet(system, GridSpec(cfg.a_b, 1, 1), RecoveryConfig("omp", cfg.max_atoms, 0.0, 0))


def _omp_nmse(h: np.ndarray, y: np.ndarray, d: np.ndarray, max_atoms: int) -> float:
    codes = omp_code(y, d, max_atoms)
    est = d @ codes
    return float(np.mean(np.sum(np.abs(est - h) ** 2, axis=0) / np.sum(np.abs(h) ** 2, axis=0)))


def compare_mod(cfg: ExperimentConfig) -> tuple[list[dict], list[dict]]:
    """NMSE of nominal, OMPnet and MOD dictionaries vs training size and vs SNR."""
    scn = build_scenario(cfg)
    mc = cfg.mod
    d_nominal = build_dictionary_set(scn.nominal.bs, scn.nominal.ms[0], scn.nominal.sub, cfg.grid, 0, 0).d_b
    d_ideal = build_dictionary_set(scn.true_bs, scn.true_ms[0], scn.true_sub, cfg.grid).d_b
    net = _bs_only_net(scn)
    tc = TrainConfig(
        batch_size=mc.ompnet_batch_size,
        learning_rate=mc.ompnet_learning_rate,
        epochs=mc.ompnet_epochs,
        optimizer="adam",
        seed=cfg.seed,
        frozen=("ms_y_offsets",),
    )

    def point(l_count: int, snr: float, stream: int) -> dict:
        h_test, y_test = _snapshots(scn, mc.test_count, snr, 1000 + stream)
        _, y_train = _snapshots(scn, l_count, snr, stream)
        data = [(y_train[:, i].reshape(-1, 1, 1), 0) for i in range(l_count)]
        res = train(net, data, ThetaParams.nominal(net.system), tc)
        d_ompnet = net.dictionaries(res.theta, 0).d_b
        row = {
            "L": l_count,
            "snr_db": snr,
            "nominal": _omp_nmse(h_test, y_test, d_nominal, cfg.max_atoms),
            "ideal": _omp_nmse(h_test, y_test, d_ideal, cfg.max_atoms),
            "ompnet": _omp_nmse(h_test, y_test, d_ompnet, cfg.max_atoms),
        }
        try:
            state = mod_train(y_train, d_nominal, cfg.max_atoms, mc.mod_iterations)
            row["mod"] = _omp_nmse(h_test, y_test, state.dictionary, cfg.max_atoms)
        except RankDeficiencyError:
            row["mod"] = None
        return row

    vs_l = [point(l, mc.snr_db, 10 * k) for k, l in enumerate(mc.l_values)]
    vs_snr = [point(mc.l_for_snr_sweep, s, 500 + 10 * k) for k, s in enumerate(mc.snr_db_list)]
    return vs_l, vs_snr


def theta_report(scn: Scenario, theta: ThetaParams) -> dict[str, dict[str, float]]:
    true = scn.theta_true()
    nom = scn.theta_nominal()
    return {
        "nominal": param_mae(nom, true),
        "trained": param_mae(theta, true),
        "nominal_aligned": param_mae(nom, true, align=True),
        "trained_aligned": param_mae(theta, true, align=True),
    }
