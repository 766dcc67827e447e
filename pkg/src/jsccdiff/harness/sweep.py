"""Sweeps over SNR and bandwidth ratio, with CSV and plot export."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch
from torch import Tensor

from ..config import ExperimentConfig, save_config
from ..deepjscc import JsccModel, load_jscc
from ..diffusion import load_ddpm, restore, schedule_from_config
from ..errors import MissingArtifactError
from ..linops import OperatorKind
from ..metrics import MetricReport, make_perceptual, psnr_batch
from .data import load_and_split
from .pipeline import receive_degraded, stream

log = logging.getLogger(__name__)

CSV_COLUMNS = ["method", "rho", "snr", "psnr", "psnr_std", "lpips", "lpips_std", "n"]
METHODS = ("ours", "upsample", "deepjscc")
# per-image stream purposes
_CHANNEL, _RESTORE = 0, 1


@dataclass
class SweepResult:
    rows: list[dict] = field(default_factory=list)

    def rhos(self) -> list[float]:
        return sorted({r["rho"] for r in self.rows})

    def select(self, method: str, rho: float | None = None) -> list[dict]:
        return [
            r for r in self.rows if r["method"] == method and (rho is None or math.isclose(r["rho"], rho, rel_tol=1e-9))
        ]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow(
                    [
                        r["method"],
                        f"{r['rho']:.6f}",
                        f"{r['snr']:g}",
                        f"{r['psnr']:.6f}",
                        f"{r['psnr_std']:.6f}",
                        f"{r['lpips']:.6f}",
                        f"{r['lpips_std']:.6f}",
                        r["n"],
                    ]
                )
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> SweepResult:
        rows = []
        with Path(path).open(newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append(
                    {"method": r["method"], "n": int(r["n"])}
                    | {k: float(r[k]) for k in ("rho", "snr", "psnr", "psnr_std", "lpips", "lpips_std")}
                )
        return cls(rows)


def default_checkpoints(cfg: ExperimentConfig) -> dict[str, Path]:
    d = Path(cfg.output_dir) / "checkpoints"
    return {"jscc": d / "jscc.pt", "deepjscc": d / "deepjscc.pt", "ddpm": d / "ddpm.pt"}


def _row(method: str, rho: float, snr: float, psnrs, dists) -> dict:
    rep = MetricReport.from_samples(psnrs, dists)
    return {
        "method": method,
        "rho": rho,
        "snr": float(snr),
        "psnr": rep.psnr_db,
        "psnr_std": rep.psnr_std,
        "lpips": rep.perceptual,
        "lpips_std": rep.perceptual_std,
        "n": rep.n,
    }


def run_sweep(
    cfg: ExperimentConfig,
    methods: Sequence[str] | None = None,
    jscc_paths: Sequence[str | Path] | None = None,
    deepjscc_paths: Sequence[str | Path] | None = None,
    ddpm_path: str | Path | None = None,
    out_csv: str | Path | None = None,
    test: Tensor | None = None,
) -> SweepResult:
    """Evaluate every (method, ρ, SNR) on the test split.

    ``ours`` and ``upsample`` share the degraded-target JSCC checkpoints in
    ``jscc_paths`` (one per ρ) and see identical channel noise; ``deepjscc``
    uses identity-operator checkpoints. Metrics are per-image mean and
    standard deviation over all test images and ``cfg.eval.seeds``.

    Raises:
        MissingArtifactError: before any evaluation, if a needed checkpoint
            is absent.
    """
    methods = list(methods or cfg.eval.methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
    defaults = default_checkpoints(cfg)
    jscc_paths = [Path(p) for p in (jscc_paths or [defaults["jscc"]])]
    deepjscc_paths = [Path(p) for p in (deepjscc_paths or [defaults["deepjscc"]])]
    ddpm_path = Path(ddpm_path or defaults["ddpm"])

    needed: list[Path] = []
    if {"ours", "upsample"} & set(methods):
        needed += jscc_paths
    if "ours" in methods:
        needed.append(ddpm_path)
    if "deepjscc" in methods:
        needed += deepjscc_paths
    missing = [str(p) for p in needed if not p.is_file()]
    if missing:
        raise MissingArtifactError(f"missing checkpoint(s): {', '.join(missing)}")

    if test is None:
        _, _, test = load_and_split(cfg)
    if cfg.eval.max_images is not None:
        test = test[: cfg.eval.max_images]
    metric = make_perceptual(cfg.eval.perceptual)
    ddpm = schedule = None
    if "ours" in methods:
        ddpm, schedule = load_ddpm(ddpm_path)
        schedule = schedule or schedule_from_config(cfg)

    rows: list[dict] = []
    if {"ours", "upsample"} & set(methods):
        for path in jscc_paths:
            jscc = load_jscc(path)
            rows += _sweep_model(cfg, jscc, test, metric, [m for m in ("ours", "upsample") if m in methods], ddpm, schedule)
    if "deepjscc" in methods:
        for path in deepjscc_paths:
            jscc = load_jscc(path)
            if jscc.op.kind is not OperatorKind.IDENTITY:
                raise ValueError(f"{path}: deepjscc baseline needs an identity-operator checkpoint")
            rows += _sweep_model(cfg, jscc, test, metric, ["deepjscc"], None, None)

    order = {m: i for i, m in enumerate(METHODS)}
    rows.sort(key=lambda r: (r["rho"], order[r["method"]], r["snr"]))
    result = SweepResult(rows)
    if out_csv is not None:
        result.to_csv(out_csv)
        save_config(cfg, Path(out_csv).with_suffix(".config.yaml"))
    return result


def _sweep_model(cfg, jscc: JsccModel, test: Tensor, metric, methods, ddpm, schedule) -> list[dict]:
    op = jscc.op
    b = cfg.eval.batch
    rows = []
    for si, snr in enumerate(cfg.eval.snr_list):
        acc = {m: ([], []) for m in methods}
        for seed in cfg.eval.seeds:
            for i0 in range(0, len(test), b):
                x = test[i0 : i0 + b]
                idx = range(i0, i0 + len(x))
                x_deg_hat = receive_degraded(jscc, x, snr, [stream(seed, si, i, _CHANNEL) for i in idx])
                for m in methods:
                    if m == "ours":
                        gens = [stream(seed, si, i, _RESTORE) for i in idx]
                        x_hat = restore(
                            ddpm,
                            schedule,
                            op,
                            x_deg_hat,
                            gens,
                            cfg.diffusion.sampling_steps,
                            cfg.diffusion.travel_length,
                            cfg.diffusion.travel_repeat,
                        )
                    else:
                        x_hat = op.apply_pinv(x_deg_hat)
                    acc[m][0].extend(psnr_batch(x, x_hat))
                    acc[m][1].extend(metric(x, x_hat).tolist())
        for m in methods:
            rows.append(_row(m, jscc.rho, snr, *acc[m]))
            log.info("%s rho=%.4f snr=%g psnr=%.3f lpips=%.4f", m, jscc.rho, snr, rows[-1]["psnr"], rows[-1]["lpips"])
    return rows


def metric_figure(result: SweepResult, rho: float, metric: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    label = {"psnr": "PSNR (dB)", "lpips": "perceptual distance"}[metric]
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    for method in METHODS:
        rows = sorted(result.select(method, rho), key=lambda r: r["snr"])
        if not rows:
            continue
        ax.errorbar(
            [r["snr"] for r in rows],
            [r[metric] for r in rows],
            yerr=[r[f"{metric}_std"] for r in rows],
            marker="o",
            capsize=3,
            label=method,
        )
    ax.set_xlabel("SNR_test (dB)")
    ax.set_ylabel(label)
    ax.set_title(f"rho = {rho:.4f}")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def export_plots(result: SweepResult, out_dir: str | Path) -> list[Path]:
    """Write one PSNR and one perceptual figure per ρ, plus the CSV."""
    import matplotlib.pyplot as plt

    if not result.rows:
        raise ValueError("sweep result has no rows to plot")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create plot directory {out_dir}: {e}") from e
    written = [result.to_csv(out_dir / "sweep.csv")]
    for rho in result.rhos():
        for metric in ("psnr", "lpips"):
            fig = metric_figure(result, rho, metric)
            path = out_dir / f"{metric}_vs_snr_rho{rho:.4f}.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)
    return written
