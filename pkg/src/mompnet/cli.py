"""Command line interface.

Every verb is a pure function of (config, seed): it writes its outputs to
``--out`` together with a ``manifest_<verb>.json`` listing file digests.
Verbs reuse the dataset and checkpoint already present in ``--out`` when
they were produced from the same config, and regenerate them otherwise.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .calibration import ThetaParams
from .errors import ConfigError, RankDeficiencyError
from .experiments import (
    Dataset,
    ExperimentConfig,
    admap,
    compare_mod,
    eval_nmse,
    generate_dataset,
    load_dataset,
    localization_table,
    run_training,
    save_dataset,
    theta_report,
)

log = logging.getLogger("mompnet")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else f"{float(v):.12g}"
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest(out: Path, verb: str, cfg: ExperimentConfig, files) -> None:
    io.write_json(
        out / f"manifest_{verb}.json",
        {
            "command": verb,
            "config_digest": cfg.digest(),
            "seed": cfg.seed,
            "files": {Path(f).name: _sha256(Path(f)) for f in files},
        },
    )


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, train=replace(cfg.train, seed=args.seed))
    overrides = {k: v for k, v in (("optimizer", args.optimizer), ("learning_rate", args.lr),
                                   ("epochs", args.epochs)) if v is not None}
    if overrides:
        try:
            cfg = replace(cfg, train=replace(cfg.train, **overrides))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def _ensure_dataset(cfg: ExperimentConfig, out: Path, threads: int) -> tuple[Dataset, list[Path]]:
    side = out / "dataset.json"
    if side.exists():
        try:
            d = io.read_json(side)
            if ExperimentConfig.from_dict(d["config"]).digest() == cfg.digest():
                files = [out / "train_Y.bin", out / "test_H.bin"]
                files += [out / f for f in d["test_snr_files"].values()]
                return load_dataset(out), files + [side]
        except (KeyError, ConfigError):
            pass
    ds = generate_dataset(cfg, threads)
    return ds, save_dataset(ds, out)


_CHECKPOINT_FILES = ("checkpoint.json", "loss_history.csv", "params_mae.csv")


def _ensure_theta(cfg: ExperimentConfig, ds: Dataset, out: Path) -> tuple[ThetaParams, list[Path]]:
    ckpt = out / "checkpoint.json"
    if ckpt.exists():
        d = io.read_json(ckpt)
        if d.get("config_digest") == cfg.digest() and all((out / f).exists() for f in _CHECKPOINT_FILES):
            return ThetaParams.from_dict(d["theta"]), [out / f for f in _CHECKPOINT_FILES]
    res = run_training(ds)
    theta = res.theta
    files = [ckpt]
    io.write_json(
        ckpt,
        {
            "theta": theta.to_dict(),
            "packed": theta.pack().tolist(),
            "epoch": cfg.train.epochs,
            "loss_history": res.loss_history,
            "config_digest": cfg.digest(),
            "train_config_digest": cfg.train.digest(),
        },
    )
    files.append(
        write_csv(out / "loss_history.csv", ["epoch", "cost"], [(i + 1, c) for i, c in enumerate(res.loss_history)])
    )
    rep = theta_report(ds.scenario, theta)
    keys = list(next(iter(rep.values())))
    files.append(write_csv(out / "params_mae.csv", ["model", *keys], [(k, *v.values()) for k, v in rep.items()]))
    return theta, files


def cmd_generate(cfg, out, args):
    ds = generate_dataset(cfg, args.threads)
    return save_dataset(ds, out)


def cmd_train(cfg, out, args):
    ds, files = _ensure_dataset(cfg, out, args.threads)
    (out / "checkpoint.json").unlink(missing_ok=True)
    _, more = _ensure_theta(cfg, ds, out)
    return files + more


def cmd_eval(cfg, out, args):
    ds, files = _ensure_dataset(cfg, out, args.threads)
    theta, more = _ensure_theta(cfg, ds, out)
    res = eval_nmse(ds, theta=theta, threads=args.threads)
    rows = [(snr, r["ls"], r["nominal"], r["trained"], r["ideal"]) for snr, r in sorted(res.items())]
    path = write_csv(out / "nmse_vs_snr.csv", ["snr_db", "ls", "nominal_momp", "trained_momp", "ideal_momp"], rows)
    return files + more + [path]


def cmd_localize(cfg, out, args):
    ds, files = _ensure_dataset(cfg, out, args.threads)
    theta, more = _ensure_theta(cfg, ds, out)
    rows = localization_table(ds, theta)
    header = ["ms_id", "true_x", "true_y", "est_x", "est_y", "error_m", "phase"]
    path = write_csv(out / "localization.csv", header, [[r[h] for h in header] for r in rows])
    return files + more + [path]


def cmd_admap(cfg, out, args):
    ds, files = _ensure_dataset(cfg, out, args.threads)
    m, d = admap(ds, args.index, args.dictionary)
    header = ["angle_rad", *[f"{t:.6e}" for t in d.delay_grid]]
    rows = [(a, *row) for a, row in zip(d.angle_grid_b, m)]
    return files + [write_csv(out / "angle_delay_map.csv", header, rows)]


def cmd_compare_mod(cfg, out, args):
    vs_l, vs_snr = compare_mod(cfg)
    header = ["L", "snr_db", "nominal", "ompnet", "mod", "ideal"]
    a = write_csv(out / "nmse_vs_L.csv", header, [[r[h] for h in header] for r in vs_l])
    b = write_csv(out / "nmse_vs_snr_mod.csv", header, [[r[h] for h in header] for r in vs_snr])
    return [a, b]


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "localize": cmd_localize,
    "admap": cmd_admap,
    "compare-mod": cmd_compare_mod,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config JSON (defaults: desk-scale scenario)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, default=Path("run"), help="output directory")
    common.add_argument("--optimizer", choices=("sgd", "adam"), help="override the training optimizer")
    common.add_argument("--lr", type=float, help="override the training learning rate")
    common.add_argument("--epochs", type=int, help="override the number of training epochs")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="mompnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "admap":
            sp.add_argument("--index", type=int, default=0, help="held-out channel index")
            sp.add_argument("--dictionary", choices=("nominal", "ideal"), default="nominal")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](cfg, out, args)
        _manifest(out, args.command, cfg, files)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RankDeficiencyError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
