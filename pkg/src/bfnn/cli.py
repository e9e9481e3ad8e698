"""Command-line pipeline: gen, estimate, train, eval, flops, report.

Every command reads one flat TOML config, applies explicit flag overrides,
prints a single machine-readable JSON summary line on success and exits
nonzero on failure: 64 for config problems, 65 for data problems (dimension
or provenance mismatches), 74 for I/O and file-format errors, 70 otherwise.
Artifacts are stamped with the hash of the resolved config that produced
them; eval refuses to mix artifacts from different configs unless
--allow-mixed is passed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import tomli

from . import accel, container
from .channel import ChannelConfig, ChannelDataset, derive_seed, generate_dataset
from .estimator import EstimatorConfig, estimate_batch
from .experiment import (
    SweepSpec,
    emit_csv,
    emit_manifest,
    emit_plot,
    gain_at_target_se,
    parse_csv,
    run_sweep,
)
from .network import build_model, count_flops, load_model, save_model
from .training import TrainConfig, make_training_arrays, train

EXIT_OK = 0
EXIT_CONFIG = 64
EXIT_DATA = 65
EXIT_INTERNAL = 70
EXIT_IO = 74

# stage tags for seed derivation from the master seed
STAGE_GEN_TRAIN, STAGE_GEN_VAL, STAGE_GEN_TEST = 0, 1, 2
STAGE_ESTIMATE, STAGE_TRAIN, STAGE_EVAL = 3, 4, 5


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


CONFIG_DEFAULTS: dict = {
    "n_t": 64,
    "l_paths": 3,
    "los_gain_var": 1.0,
    "nlos_gain_var": 10.0 ** -0.5,
    "snr_db_min": -20.0,
    "snr_db_max": 20.0,
    "train_count": 100000,
    "val_count": 10000,
    "test_count": 10000,
    "pnr_db": 0.0,
    "l_est": 3,
    "grid_size": 256,
    "lr": 0.001,
    "batch_size": 256,
    "epochs": 30,
    "beta1": 0.9,
    "beta2": 0.999,
    "adam_eps": 1e-8,
    "lr_schedule": "plateau",
    "plateau_patience": 5,
    "warmup_steps": 0,
    "tail_epochs": 0,
    "tail_lr": None,
    "seed": 1,
    "snr_grid_db": [-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
    "pnr_list_db": [-20.0, 0.0, 20.0],
    "l_est_list": [1, 2, 3],
    "methods": ["bfnn", "egt_on_estimate", "perfect_bound"],
    "threads": None,
}


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as f:
                user = tomli.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except tomli.TOMLDecodeError as e:
            raise ConfigError(f"invalid TOML in {path}: {e}") from e
        unknown = set(user) - set(CONFIG_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(user)
    for key, val in (overrides or {}).items():
        if val is not None:
            cfg[key] = val
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(
        {k: v for k, v in cfg.items() if k != "threads"}, sort_keys=True
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def channel_config(cfg: dict) -> ChannelConfig:
    try:
        cc = ChannelConfig(
            n_t=cfg["n_t"],
            l_paths=cfg["l_paths"],
            los_gain_var=cfg["los_gain_var"],
            nlos_gain_var=cfg["nlos_gain_var"],
            snr_db_min=cfg["snr_db_min"],
            snr_db_max=cfg["snr_db_max"],
        )
        cc.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad channel config: {e}") from e
    return cc


def train_config(cfg: dict) -> TrainConfig:
    try:
        tc = TrainConfig(
            learning_rate=cfg["lr"],
            batch_size=cfg["batch_size"],
            epochs=cfg["epochs"],
            beta1=cfg["beta1"],
            beta2=cfg["beta2"],
            eps=cfg["adam_eps"],
            seed=derive_seed(cfg["seed"], STAGE_TRAIN),
            lr_schedule=cfg["lr_schedule"],
            plateau_patience=cfg["plateau_patience"],
            warmup_steps=cfg["warmup_steps"],
            tail_epochs=cfg["tail_epochs"],
            tail_lr=cfg["tail_lr"],
        )
        tc.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad training config: {e}") from e
    return tc


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def cmd_gen(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed})
    cc = channel_config(cfg)
    chash = config_hash(cfg)
    scale = args.count_scale
    if scale <= 0:
        raise ConfigError(f"count-scale must be positive, got {scale}")
    from pathlib import Path

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"cmd": "gen", "config_hash": chash}
    stages = [
        ("train", cfg["train_count"], STAGE_GEN_TRAIN),
        ("val", cfg["val_count"], STAGE_GEN_VAL),
        ("test", cfg["test_count"], STAGE_GEN_TEST),
    ]
    for name, count, stage in stages:
        n = max(1, int(round(count * scale)))
        ds = generate_dataset(cc, derive_seed(cfg["seed"], stage), n)
        ds.meta["config_hash"] = chash
        path = out / f"{name}.ds"
        container.save_dataset(ds, path)
        summary[name] = {
            "path": str(path),
            "count": n,
            "sha256": container.file_digest(path),
        }
    _emit(summary)
    return EXIT_OK


def _load_dataset_checked(path) -> ChannelDataset:
    return container.load_dataset(path)


def cmd_estimate(args) -> int:
    cfg = load_config(
        args.config,
        {
            "pnr_db": args.pnr_db,
            "l_est": args.l_est,
            "grid_size": args.grid_size,
            "seed": args.seed,
        },
    )
    ds = _load_dataset_checked(args.dataset)
    try:
        ecfg = EstimatorConfig(
            pnr_db=cfg["pnr_db"], l_est=cfg["l_est"], grid_size=cfg["grid_size"]
        )
        ecfg.validate()
    except ValueError as e:
        raise ConfigError(f"bad estimator config: {e}") from e
    master = derive_seed(cfg["seed"], STAGE_ESTIMATE)
    estimates = estimate_batch(ds, ecfg, master)
    meta = {
        "estimator": ecfg.to_dict(),
        "master_seed": master,
        "config_hash": config_hash(cfg),
        "source_dataset_sha256": container.file_digest(args.dataset),
    }
    container.save_estimates(estimates, ds.n_t, ecfg.l_est, meta, args.out)
    _emit(
        {
            "cmd": "estimate",
            "out": str(args.out),
            "count": len(estimates),
            "pnr_db": ecfg.pnr_db,
            "l_est": ecfg.l_est,
            "sha256": container.file_digest(args.out),
        }
    )
    return EXIT_OK


def _aligned_estimates(ds, est_path):
    if est_path is None:
        return None
    estimates, meta = container.load_estimates(est_path)
    if len(estimates) != len(ds.samples):
        raise DataError(
            f"estimate count {len(estimates)} does not match dataset {len(ds.samples)}"
        )
    by_seed = {e.source_seed: e for e in estimates}
    try:
        return [by_seed[s.seed] for s in ds.samples]
    except KeyError as e:
        raise DataError(f"estimates missing for sample seed {e}") from e


def cmd_train(args) -> int:
    cfg = load_config(
        args.config,
        {
            "lr": args.lr,
            "batch_size": args.batch_size,
            "epochs": args.epochs,
            "seed": args.seed,
        },
    )
    tc = train_config(cfg)
    ds_train = _load_dataset_checked(args.train_data)
    ds_val = _load_dataset_checked(args.val_data)
    if ds_train.n_t != ds_val.n_t:
        raise DataError("train and validation sets disagree on n_t")
    est_train = _aligned_estimates(ds_train, args.train_est)
    est_val = _aligned_estimates(ds_val, args.val_est)
    model = build_model(
        ds_train.n_t,
        seed=derive_seed(cfg["seed"], STAGE_TRAIN, 1),
        meta={"config_hash": config_hash(cfg)},
    )
    result = train(
        model,
        make_training_arrays(ds_train, est_train),
        make_training_arrays(ds_val, est_val),
        tc,
    )
    save_model(result.model, args.out)
    _emit(
        {
            "cmd": "train",
            "out": str(args.out),
            "epochs": tc.epochs,
            "picked": result.picked,
            "final_val_loss": result.model.meta.get("final_val_loss"),
            "sha256": container.file_digest(args.out),
        }
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed})
    ds = _load_dataset_checked(args.dataset)
    model = load_model(args.model)
    if model.n_t != ds.n_t:
        raise DataError(f"model n_t={model.n_t} does not match dataset n_t={ds.n_t}")
    mhash = model.meta.get("config_hash")
    dhash = ds.meta.get("config_hash")
    if not args.allow_mixed and mhash and dhash and mhash != dhash:
        raise DataError(
            "model and dataset come from different configs; pass --allow-mixed to override"
        )
    spec = SweepSpec(
        snr_grid_db=tuple(cfg["snr_grid_db"]),
        pnr_list_db=tuple(cfg["pnr_list_db"]),
        l_est_list=tuple(cfg["l_est_list"]),
        methods=tuple(cfg["methods"]),
        test_count=args.test_count,
        grid_size=cfg["grid_size"],
        estimate_seed=derive_seed(cfg["seed"], STAGE_EVAL),
        arbitrary_meta={
            "config_hash": config_hash(cfg),
            "model_sha256": container.file_digest(args.model),
            "dataset_sha256": container.file_digest(args.dataset),
        },
    )
    report = run_sweep(spec, model, ds)
    emit_csv(report, args.out)
    if args.plot:
        emit_plot(report, args.plot)
    if args.manifest:
        emit_manifest(report, args.manifest)
    _emit(
        {
            "cmd": "eval",
            "out": str(args.out),
            "rows": len(report.rows),
            "sha256": container.file_digest(args.out),
        }
    )
    return EXIT_OK


def cmd_flops(args) -> int:
    if args.model:
        model = load_model(args.model)
    else:
        model = build_model(args.n_t)
    print(count_flops(model))
    return EXIT_OK


def cmd_report(args) -> int:
    report = parse_csv(args.csv)
    if args.plot:
        emit_plot(report, args.plot)
    summary = {"cmd": "report", "rows": len(report.rows)}
    if args.gain_at is not None:
        summary["gain_db"] = gain_at_target_se(
            report,
            "bfnn",
            "egt_on_estimate",
            args.gain_at,
            pnr_db=args.pnr_db,
            l_est=args.l_est,
        )
        summary["target_se"] = args.gain_at
    _emit(summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bfnn",
        description="analog beamformer design pipelines: data, estimation, training, evaluation",
    )
    p.add_argument("--threads", type=int, default=None, help="worker threads (or BFNN_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate train/val/test channel datasets")
    g.add_argument("--config", default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--count-scale", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(fn=cmd_gen)

    e = sub.add_parser("estimate", help="estimate channels from a dataset")
    e.add_argument("--config", default=None)
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--pnr-db", type=float, default=None)
    e.add_argument("--l-est", type=int, default=None)
    e.add_argument("--grid-size", type=int, default=None)
    e.add_argument("--seed", type=int, default=None)
    e.set_defaults(fn=cmd_estimate)

    t = sub.add_parser("train", help="train the beamforming network")
    t.add_argument("--config", default=None)
    t.add_argument("--train-data", required=True)
    t.add_argument("--train-est", default=None, help="estimates file; omit for perfect CSI")
    t.add_argument("--val-data", required=True)
    t.add_argument("--val-est", default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(fn=cmd_train)

    v = sub.add_parser("eval", help="sweep rate vs SNR and emit a CSV report")
    v.add_argument("--config", default=None)
    v.add_argument("--model", required=True)
    v.add_argument("--dataset", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--plot", default=None)
    v.add_argument("--manifest", default=None)
    v.add_argument("--test-count", type=int, default=None)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--allow-mixed", action="store_true")
    v.set_defaults(fn=cmd_eval)

    f = sub.add_parser("flops", help="print the dense-layer FLOP count")
    f.add_argument("--model", default=None)
    f.add_argument("--n-t", type=int, default=64)
    f.set_defaults(fn=cmd_flops)

    r = sub.add_parser("report", help="render a CSV report: plot and gain readout")
    r.add_argument("--csv", required=True)
    r.add_argument("--plot", default=None)
    r.add_argument("--gain-at", type=float, default=None, help="target SE for the gain readout")
    r.add_argument("--pnr-db", type=float, default=None)
    r.add_argument("--l-est", type=int, default=None)
    r.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    accel.set_kernel_threads(accel.resolve_threads(args.threads))
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except container.ContainerError as e:
        print(f"file error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {e!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
