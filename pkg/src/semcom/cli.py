"""Command-line entry point: one subcommand per pipeline stage.

Every stage reads its upstream artifacts from the output directory, checks
them against the sha256 recorded in their ``.meta.json`` sidecars, and writes
its own file plus sidecar.  Exit codes: 0 success, 2 missing or corrupt
artifact, 3 invalid configuration, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import allocation, channel, datasets, ib_mask, pipeline, transceiver
from .config import RunConfig, load_config
from .errors import ArtifactError, ConfigError, DivergenceError, SemcomError

EXIT_OK, EXIT_ARTIFACT, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 2, 3, 4

log = logging.getLogger("semcom")


def _path(cfg: RunConfig, key: str) -> Path:
    return Path(cfg.out) / pipeline.ARTIFACTS[key]


def _read_dataset(cfg: RunConfig) -> datasets.Dataset:
    path = _path(cfg, "dataset")
    _, meta = pipeline.read_artifact(path)
    return datasets.from_csv(path, num_classes=meta.get("num_classes"))


def _read_model(cfg: RunConfig) -> transceiver.TscModel:
    raw, _ = pipeline.read_artifact(_path(cfg, "model"))
    return transceiver.model_from_bytes(raw)


def _read_mask(cfg: RunConfig, m: int | None = None) -> ib_mask.RobustnessMask:
    path = _path(cfg, "mask")
    pipeline.read_artifact(path)
    mask = ib_mask.load_mask(path)
    if m is not None and mask.m != m:
        raise ConfigError(f"mask has {mask.m} units but the model encodes {m}")
    return mask


def _splits(cfg: RunConfig):
    return pipeline.split_dataset(_read_dataset(cfg), cfg)


def cmd_gen_data(cfg: RunConfig, args) -> None:
    ds = pipeline.make_dataset(cfg)
    path = _path(cfg, "dataset")
    path.parent.mkdir(parents=True, exist_ok=True)
    datasets.to_csv(ds, path)
    pipeline.seal_artifact(path, cfg, num_classes=ds.num_classes, num_samples=len(ds))
    log.info("dataset: %d samples, %d classes", len(ds), ds.num_classes)


def cmd_train(cfg: RunConfig, args) -> None:
    tr, te = _splits(cfg)
    model = pipeline.train_model(tr, cfg, tr.num_classes)
    raw = transceiver.model_to_bytes(model)
    pipeline.write_artifact(_path(cfg, "model"), raw, cfg, m=model.m)
    log.info("model: m=%d, clean test accuracy %.4f", model.m, transceiver.evaluate_accuracy(model, te, 0.0))


def cmd_mask(cfg: RunConfig, args) -> None:
    model = _read_model(cfg)
    tr, _ = _splits(cfg)
    mask = pipeline.make_mask(model, tr, cfg)
    pipeline.write_artifact(_path(cfg, "mask"), ib_mask.mask_to_json(mask), cfg, m=mask.m)
    log.info("mask: %d units, %d flagged robust", mask.m, int(mask.robust_flags.sum()))


def cmd_allocate(cfg: RunConfig, args) -> None:
    mask = _read_mask(cfg)
    if args.csi:
        if not Path(args.csi).exists():
            raise ArtifactError(f"CSI file {args.csi} not found")
        subs = channel.csi_from_csv(args.csi, capacity=cfg.channel.capacity)
    else:
        subs = pipeline.sample_csi(cfg)
    plan = pipeline.make_plan(mask, subs, args.strategy, cfg)
    channel.csi_to_csv(subs, _path(cfg, "csi"))
    pipeline.seal_artifact(_path(cfg, "csi"), cfg, source=str(args.csi or "sampled"))
    allocation.plan_to_csv(plan, subs, mask.r, _path(cfg, "plan"))
    pipeline.seal_artifact(_path(cfg, "plan"), cfg, strategy=args.strategy)
    log.info("plan: %s over %d subchannels", args.strategy, subs.s)


def cmd_sweep(cfg: RunConfig, args) -> None:
    model = _read_model(cfg)
    mask = _read_mask(cfg, model.m)
    _, te = _splits(cfg)
    report = pipeline.run_sweep(model, mask, te, cfg)
    pipeline.write_artifact(_path(cfg, "sweep"), report.to_csv(), cfg)
    for var in cfg.sweep.variance_list_db:
        for snr in cfg.sweep.snr_points_db:
            accs = "  ".join(f"{s}={report.get(snr, var, s).mean_accuracy:.4f}" for s in cfg.sweep.strategies)
            log.info("var=%g snr=%g  %s", var, snr, accs)


def cmd_halfsplit(cfg: RunConfig, args) -> None:
    model = _read_model(cfg)
    mask = _read_mask(cfg, model.m)
    tr, te = _splits(cfg)
    report = pipeline.run_halfsplit(model, mask, te, tr, cfg)
    pipeline.write_artifact(_path(cfg, "halfsplit"), report.to_json(), cfg)
    pipeline.write_artifact(_path(cfg, "halfsplit_coords"), report.coords_csv(), cfg)
    for c in report.conditions:
        log.info("%s/%s accuracy %.4f silhouette %.4f", c.half, c.channel, c.accuracy, c.silhouette)


def cmd_run(cfg: RunConfig, args) -> None:
    for step in (cmd_gen_data, cmd_train, cmd_mask, cmd_allocate, cmd_sweep, cmd_halfsplit):
        step(cfg, args)


COMMANDS = {
    "gen-data": (cmd_gen_data, "generate or import the dataset"),
    "train": (cmd_train, "train and freeze the transceiver"),
    "mask": (cmd_mask, "compute the per-unit robustness mask"),
    "allocate": (cmd_allocate, "assign feature units to subchannels"),
    "sweep": (cmd_sweep, "accuracy vs mean SNR for each allocation strategy"),
    "halfsplit": (cmd_halfsplit, "robust vs non-robust half analysis"),
    "run": (cmd_run, "all stages in order"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults if omitted)")
    common.add_argument("--seed", type=int, help="global seed; overrides SEMCOM_SEED and the config file")
    common.add_argument("--out", help="artifact directory")
    common.add_argument("--paper-scale", action="store_true", help="m=512 units, 256 subchannels, capacity 2")
    common.add_argument("-q", "--quiet", action="store_true")
    parser = argparse.ArgumentParser(prog="semcom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name in ("allocate", "run"):
            p.add_argument("--csi", help="CSV of per-subchannel SNR (subchannel_index,snr_db)")
            p.add_argument("--strategy", default="proposed", choices=allocation.STRATEGIES)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr, force=True)
    try:
        cfg = load_config(args.config, args.seed, args.out, args.paper_scale)
        COMMANDS[args.command][0](cfg, args)
    except ArtifactError as exc:
        log.error("error: %s", exc)
        return EXIT_ARTIFACT
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DivergenceError as exc:
        log.error("diverged: %s", exc)
        return EXIT_DIVERGENCE
    except SemcomError as exc:
        log.error("error: %s", exc)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
