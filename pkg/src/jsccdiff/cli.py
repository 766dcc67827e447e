"""Command-line entry point.

Every ``ExperimentConfig`` field is also a flag, e.g. ``--jscc.c_out 4`` or
``--eval.snr_list "[-5, 0, 5]"``; flag values are parsed as YAML and override
the ``--config`` file.

Exit codes: 0 success, 2 configuration error, 3 missing artifact,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import yaml

from .config import ConfigError, ExperimentConfig, load_config, save_config
from .errors import MissingArtifactError, NumericalError

EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("jsccdiff")


def _field_paths(cls, prefix=""):
    for f in dataclasses.fields(cls):
        default = getattr(cls(), f.name)
        if dataclasses.is_dataclass(default):
            yield from _field_paths(type(default), f"{prefix}{f.name}.")
        else:
            yield f"{prefix}{f.name}"


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment YAML; defaults apply when omitted")
    g = p.add_argument_group("config overrides")
    for path in _field_paths(ExperimentConfig):
        g.add_argument(f"--{path}", dest=f"cfg:{path}", metavar="VALUE", default=argparse.SUPPRESS)


def _config(args) -> ExperimentConfig:
    overrides = {k[4:]: yaml.safe_load(v) for k, v in vars(args).items() if k.startswith("cfg:")}
    if args.config is not None:
        return load_config(args.config, overrides)
    data: dict = {}
    for key, value in overrides.items():
        node = data
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return ExperimentConfig.from_dict(data)


def _ckpt_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir) / "checkpoints"


def cmd_make_dataset(args) -> None:
    from .harness.data import write_shapes_dataset

    out = write_shapes_dataset(args.out, args.n, args.size, args.seed)
    print(f"wrote {args.n} images to {out}")


def cmd_train_jscc(args) -> None:
    from .deepjscc import save_jscc, train_jscc
    from .harness import load_and_split

    cfg = _config(args)
    train, val, _ = load_and_split(cfg)
    model, history = train_jscc(cfg, train, val)
    name = "deepjscc.pt" if cfg.operator.kind == "identity" else "jscc.pt"
    out = Path(args.out) if args.out else _ckpt_dir(cfg) / name
    save_jscc(out, model, cfg, history)
    save_config(cfg, out.with_suffix(".config.yaml"))
    print(f"saved {out} (k={model.k}, rho={model.rho:.6f}, best val loss {min(h['val_loss'] for h in history):.6f})")


def cmd_train_ddpm(args) -> None:
    from .diffusion import save_ddpm, train_ddpm
    from .harness import load_and_split

    cfg = _config(args)
    train, _, _ = load_and_split(cfg)
    model, history = train_ddpm(cfg, train)
    out = Path(args.out) if args.out else _ckpt_dir(cfg) / "ddpm.pt"
    save_ddpm(out, model, cfg, history)
    save_config(cfg, out.with_suffix(".config.yaml"))
    print(f"saved {out} (final loss {history[-1]['train_loss']:.5f})")


def cmd_transmit(args) -> None:
    from .deepjscc import load_jscc
    from .diffusion import load_ddpm, schedule_from_config
    from .harness import read_image, stream, transmit_pipeline, write_image

    cfg = _config(args)
    ck = _ckpt_dir(cfg)
    jscc_path = Path(args.jscc or ck / "jscc.pt")
    ddpm_path = None if args.no_diffusion else Path(args.ddpm or ck / "ddpm.pt")
    for p in filter(None, [jscc_path, ddpm_path, Path(args.input)]):
        if not p.is_file():
            raise MissingArtifactError(f"not found: {p}")
    jscc = load_jscc(jscc_path)
    ddpm = schedule = None
    if ddpm_path is not None:
        ddpm, schedule = load_ddpm(ddpm_path)
        schedule = schedule or schedule_from_config(cfg)
    x = read_image(args.input, jscc.op.in_shape[-1])
    x_deg, x_hat = transmit_pipeline(
        x,
        jscc,
        ddpm,
        jscc.op,
        args.snr,
        generator=stream(args.seed, 0),
        schedule=schedule,
        steps=cfg.diffusion.sampling_steps,
        restore_generator=stream(args.seed, 1),
        travel_length=cfg.diffusion.travel_length,
        travel_repeat=cfg.diffusion.travel_repeat,
    )
    write_image(args.output, x_hat)
    if args.degraded_out:
        write_image(args.degraded_out, x_deg)
    print(f"wrote {args.output}")


def cmd_sweep(args) -> None:
    from .harness import run_sweep

    cfg = _config(args)
    out = Path(args.out or Path(cfg.output_dir) / "sweep.csv")
    result = run_sweep(cfg, args.methods, args.jscc, args.deepjscc, args.ddpm, out_csv=out)
    print(f"wrote {len(result.rows)} rows to {out}")


def cmd_plot(args) -> None:
    from .harness import SweepResult, export_plots

    if not Path(args.csv).is_file():
        raise MissingArtifactError(f"not found: {args.csv}")
    for p in export_plots(SweepResult.from_csv(args.csv), args.out_dir):
        print(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jsccdiff", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="render the synthetic shapes set to PNG files")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train-jscc", help="train a DeepJSCC(-Degraded) checkpoint")
    _add_config_flags(p)
    p.add_argument("--out", help="checkpoint path (default: <output_dir>/checkpoints/{jscc,deepjscc}.pt)")
    p.set_defaults(func=cmd_train_jscc)

    p = sub.add_parser("train-ddpm", help="train the restoration DDPM")
    _add_config_flags(p)
    p.add_argument("--out", help="checkpoint path (default: <output_dir>/checkpoints/ddpm.pt)")
    p.set_defaults(func=cmd_train_ddpm)

    p = sub.add_parser("transmit", help="send one PNG through the full pipeline")
    _add_config_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--degraded-out", help="also write the decoded degraded image")
    p.add_argument("--snr", type=float, required=True, help="channel SNR in dB ('inf' for noiseless)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jscc")
    p.add_argument("--ddpm")
    p.add_argument("--no-diffusion", action="store_true", help="pseudo-inverse upsample instead of restoration")
    p.set_defaults(func=cmd_transmit)

    p = sub.add_parser("sweep", help="evaluate methods over the SNR list and write a CSV")
    _add_config_flags(p)
    p.add_argument("--methods", nargs="+", choices=["ours", "upsample", "deepjscc"])
    p.add_argument("--jscc", action="append", help="degraded-target checkpoint; repeat for several rho")
    p.add_argument("--deepjscc", action="append", help="identity-operator checkpoint; repeat for several rho")
    p.add_argument("--ddpm")
    p.add_argument("--out", help="CSV path (default: <output_dir>/sweep.csv)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render PSNR/perceptual-vs-SNR figures from a sweep CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out-dir", required=True, type=Path)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
