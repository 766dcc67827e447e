import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from jsccdiff.channel import awgn_transmit, power_normalize, real_to_complex, snr_to_sigma
from jsccdiff.cli import main
from jsccdiff.config import ConfigError, ExperimentConfig, load_config, save_config
from jsccdiff.deepjscc import JsccArch, JsccModel, load_jscc, save_jscc
from jsccdiff.diffusion import DiffusionModel, UNetArch, load_ddpm, make_linear_schedule, restore, save_ddpm
from jsccdiff.errors import MissingArtifactError
from jsccdiff.harness import (
    CSV_COLUMNS,
    SweepResult,
    export_plots,
    ingest_folder,
    load_and_split,
    make_shapes,
    read_image,
    run_sweep,
    split_indices,
    stream,
    transmit_pipeline,
    write_image,
)
from jsccdiff.harness.sweep import metric_figure
from jsccdiff.linops import make_operator

SIZE = 16


# ---------------------------------------------------------------- data


@pytest.mark.parametrize("n, sizes", [(10, (8, 1, 1)), (30000, (24000, 3000, 3000)), (3, (1, 1, 1))])
def test_split_sizes(n, sizes):
    assert tuple(len(s) for s in split_indices(n, (0.8, 0.1, 0.1), 0)) == sizes


def test_split_deterministic():
    a, b = split_indices(100, seed=4), split_indices(100, seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(split_indices(100, seed=5)[0], a[0])
    with pytest.raises(ValueError):
        split_indices(0)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 5000), seed=st.integers(0, 2**31 - 1))
def test_split_disjoint_and_exhaustive(n, seed):
    parts = split_indices(n, (0.8, 0.1, 0.1), seed)
    joined = np.concatenate(parts)
    assert len(joined) == n and len(np.unique(joined)) == n
    assert joined.min() == 0 and joined.max() == n - 1


def test_shapes_dataset_is_deterministic_and_in_range():
    a, b = make_shapes(5, SIZE), make_shapes(5, SIZE)
    assert torch.equal(a, b) and a.shape == (5, 3, SIZE, SIZE)
    assert a.min() >= 0 and a.max() <= 1
    assert not torch.equal(a[0], a[1])


def test_shapes_style_options():
    flat = make_shapes(20, SIZE, max_shapes=1, background="flat")
    # one shape covers at most ~37% of the frame, so the fill colour is the mode
    for img in flat:
        _, counts = img.reshape(3, -1).T.unique(dim=0, return_counts=True)
        assert counts.max() >= 0.4 * SIZE * SIZE
    assert not torch.equal(flat, make_shapes(20, SIZE))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"dataset": {"background": "noise"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"dataset": {"max_shapes": 0}})


def test_image_round_trip(tmp_path):
    x = make_shapes(1, SIZE)[0]
    write_image(tmp_path / "a.png", x)
    y = read_image(tmp_path / "a.png")
    assert (x - y).abs().max() <= 0.5 / 255 + 1e-6
    assert read_image(tmp_path / "a.png", 8).shape == (3, 8, 8)


def test_folder_ingestion_skips_corrupt(tmp_path, caplog):
    for i in range(3):
        write_image(tmp_path / f"{i}.png", make_shapes(3, SIZE)[i])
    Image.new("L", (20, 24)).save(tmp_path / "gray.jpg")
    (tmp_path / "broken.png").write_bytes(b"not a png")
    images, skipped = ingest_folder(tmp_path, SIZE)
    assert images.shape == (4, 3, SIZE, SIZE)
    assert skipped == [str(tmp_path / "broken.png")]
    assert "skipped 1" in caplog.text


def test_folder_dataset_via_env(tmp_path, monkeypatch):
    for i in range(10):
        write_image(tmp_path / f"{i:02d}.png", make_shapes(10, SIZE)[i])
    monkeypatch.setenv("JSCCDIFF_DATA_ROOT", str(tmp_path))
    cfg = ExperimentConfig.from_dict({"dataset": {"name": "folder", "image_size": SIZE}})
    assert cfg.dataset_root() == tmp_path
    train, val, test = load_and_split(cfg)
    assert (len(train), len(val), len(test)) == (8, 1, 1)
    monkeypatch.setenv("JSCCDIFF_DATA_ROOT", str(tmp_path / "nowhere"))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"dataset": {"name": "folder"}})


def test_empty_folder(tmp_path):
    with pytest.raises(ValueError):
        ingest_folder(tmp_path, SIZE)


# ---------------------------------------------------------------- config


def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.split_ratios == (0.8, 0.1, 0.1)
    assert cfg.jscc.lr == 1e-4 and cfg.jscc.batch == 64 and cfg.jscc.patience == 10
    assert cfg.jscc.snr_range == (-5.0, 5.0) and cfg.jscc.c_out == 2
    assert cfg.diffusion.T == 1000 and cfg.diffusion.sampling_steps == 100
    assert cfg.diffusion.travel_length == 0
    assert cfg.eval.snr_list == (-5, -3, -1, 1, 3, 5)
    assert cfg.channel.P_avg == 1.0


def test_config_yaml_round_trip_and_overrides(tmp_path):
    cfg = ExperimentConfig.from_dict({"jscc": {"c_out": 4}})
    save_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg
    over = load_config(tmp_path / "c.yaml", {"jscc.lr": 0.5, "eval.snr_list": [0, 1]})
    assert over.jscc.lr == 0.5 and over.eval.snr_list == (0, 1) and over.jscc.c_out == 4


@pytest.mark.parametrize(
    "bad",
    [
        {"split_ratios": [0.5, 0.5, 0.5]},
        {"jscc": {"snr_range": [5, -5]}},
        {"jscc": {"not_a_field": 1}},
        {"diffusion": {"sampling_steps": 2000}},
        {"diffusion": {"schedule": "cosine"}},
        {"dataset": {"name": "imagenet"}},
        {"channel": {"P_avg": 0}},
        {"jscc": 3},
    ],
)
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("jscc: [unclosed")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


# ---------------------------------------------------------------- models


OP = make_operator("avg_pool", (3, SIZE, SIZE), 2)
SCHED = make_linear_schedule(1000)


def tiny_jscc(op=OP, seed=0):
    torch.manual_seed(seed)
    return JsccModel(op, JsccArch(base_filters=8, n_down=3, c_out=2)).eval()


def tiny_ddpm(seed=0):
    torch.manual_seed(seed)
    m = DiffusionModel((3, SIZE, SIZE), UNetArch(base_channels=8, channel_mult=(1, 2), attention_res=()))
    torch.nn.init.normal_(m.net.out.weight, std=0.1)
    return m.eval()


def sweep_cfg(tmp_path, **eval_):
    base = {"snr_list": [-5, -3, -1, 1, 3, 5], "max_images": 4, "batch": 3}
    return ExperimentConfig.from_dict(
        {
            "dataset": {"image_size": SIZE, "n_images": 40},
            "jscc": {"base_filters": 8},
            "diffusion": {"base_channels": 8, "channel_mult": [1, 2], "attention_res": [], "sampling_steps": 4},
            "eval": base | eval_,
            "output_dir": str(tmp_path),
        }
    )


@pytest.fixture
def artifacts(tmp_path):
    cfg = sweep_cfg(tmp_path)
    ck = tmp_path / "checkpoints"
    save_jscc(ck / "jscc.pt", tiny_jscc(), cfg)
    save_jscc(ck / "deepjscc.pt", tiny_jscc(make_operator("identity", (3, SIZE, SIZE))), cfg)
    save_ddpm(ck / "ddpm.pt", tiny_ddpm(), cfg)
    return cfg, ck


# ---------------------------------------------------------------- pipeline


def test_pipeline_equals_manual_composition():
    jscc, ddpm = tiny_jscc(), tiny_ddpm()
    x = make_shapes(2, SIZE)
    x_deg, x_hat = transmit_pipeline(x, jscc, ddpm, OP, 3.0, stream(0, 0), SCHED, 4, stream(0, 1))
    sigma = snr_to_sigma(3.0)
    with torch.no_grad():
        z = power_normalize(real_to_complex(jscc.encode(x, sigma)))
        manual_deg = jscc.decode(awgn_transmit(z, sigma, stream(0, 0)), sigma)
        manual = restore(ddpm, SCHED, OP, manual_deg, stream(0, 1), 4)
    assert torch.equal(x_deg, manual_deg) and torch.equal(x_hat, manual)
    assert (OP.apply(x_hat) - x_deg).abs().max() <= 2 / 255


def test_pipeline_deterministic_and_single_image():
    jscc, ddpm = tiny_jscc(), tiny_ddpm()
    x = make_shapes(1, SIZE)[0]
    a = transmit_pipeline(x, jscc, ddpm, OP, 0.0, stream(1), SCHED, 3)
    b = transmit_pipeline(x, jscc, ddpm, OP, 0.0, stream(1), SCHED, 3)
    assert a[1].shape == (3, SIZE, SIZE) and a[0].shape == (3, SIZE // 2, SIZE // 2)
    assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])


def test_identity_pipeline_is_plain_deepjscc():
    ident = make_operator("identity", (3, SIZE, SIZE))
    jscc = tiny_jscc(ident)
    x = make_shapes(2, SIZE)
    x_deg, x_hat = transmit_pipeline(x, jscc, None, ident, 1.0, stream(2))
    assert torch.equal(x_deg, x_hat) and x_hat.shape == x.shape


def test_noiseless_pipeline():
    jscc = tiny_jscc()
    x = make_shapes(2, SIZE)
    a = transmit_pipeline(x, jscc, None, OP, math.inf, stream(3))
    b = transmit_pipeline(x, jscc, None, OP, math.inf, stream(4))
    assert torch.equal(a[0], b[0])
    torch.testing.assert_close(a[1], OP.apply_pinv(a[0]))


def test_pipeline_rejects_mismatch():
    with pytest.raises(ValueError):
        transmit_pipeline(make_shapes(1, SIZE), tiny_jscc(), None, make_operator("identity", (3, SIZE, SIZE)), 0.0)
    with pytest.raises(ValueError):
        transmit_pipeline(make_shapes(1, SIZE), tiny_jscc(), tiny_ddpm(), OP, 0.0)


def test_stream_keys_are_independent():
    draw = lambda *k: torch.randn(4, generator=stream(0, *k))  # noqa: E731
    assert torch.equal(draw(1, 2), draw(1, 2))
    assert not torch.equal(draw(1, 2), draw(2, 1))
    assert not torch.equal(draw(1, 2, 0), draw(1, 2, 1))


# ---------------------------------------------------------------- sweep and plots


def test_sweep_rows_and_reproducibility(artifacts, tmp_path):
    cfg, ck = artifacts
    a = run_sweep(cfg, ["ours", "upsample"], out_csv=tmp_path / "a.csv")
    run_sweep(cfg, ["ours", "upsample"], out_csv=tmp_path / "b.csv")
    assert len(a.rows) == 12
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header.split(",") == CSV_COLUMNS
    assert (tmp_path / "a.config.yaml").is_file()
    back = SweepResult.from_csv(tmp_path / "a.csv")
    assert [r["method"] for r in back.rows] == [r["method"] for r in a.rows]
    assert {r["n"] for r in a.rows} == {4}


def test_sweep_matches_pipeline_noise(artifacts):
    # both methods see the same x̂_deg, so they agree on A x̂
    cfg, ck = artifacts
    cfg.eval.snr_list = (0.0,)
    res = run_sweep(cfg, ["upsample"])
    jscc = load_jscc(ck / "jscc.pt")
    _, _, test = load_and_split(cfg)
    x = test[:4]
    from jsccdiff.harness import receive_degraded
    from jsccdiff.metrics import psnr_batch

    x_deg = receive_degraded(jscc, x, 0.0, [stream(0, 0, i, 0) for i in range(4)])
    want = float(np.mean(psnr_batch(x, OP.apply_pinv(x_deg))))
    assert res.rows[0]["psnr"] == pytest.approx(want, rel=1e-9)


def test_sweep_deepjscc_baseline(artifacts):
    cfg, _ = artifacts
    res = run_sweep(cfg, ["deepjscc"])
    assert len(res.rows) == 6 and res.rows[0]["rho"] == pytest.approx(4 / (3 * SIZE * SIZE))


def test_sweep_missing_checkpoint(tmp_path):
    cfg = sweep_cfg(tmp_path)
    with pytest.raises(MissingArtifactError, match="ddpm.pt"):
        run_sweep(cfg, ["ours"])
    with pytest.raises(ValueError):
        run_sweep(cfg, ["bicubic"])


def _rows(rho):
    return [
        {"method": m, "rho": rho, "snr": s, "psnr": 20 + s + i, "psnr_std": 1.0, "lpips": 0.3 - 0.01 * s, "lpips_std": 0.02, "n": 8}
        for i, m in enumerate(("ours", "upsample"))
        for s in (-5.0, 0.0, 5.0)
    ]


def test_plots_for_each_rho(tmp_path):
    written = export_plots(SweepResult(_rows(0.0052) + _rows(0.0104)), tmp_path / "plots")
    pngs = sorted(p.name for p in written if p.suffix == ".png")
    assert pngs == [
        "lpips_vs_snr_rho0.0052.png",
        "lpips_vs_snr_rho0.0104.png",
        "psnr_vs_snr_rho0.0052.png",
        "psnr_vs_snr_rho0.0104.png",
    ]
    assert all(p.stat().st_size > 0 for p in written)


def test_plot_axes_cover_data():
    import matplotlib.pyplot as plt

    res = SweepResult(_rows(0.0052))
    fig = metric_figure(res, 0.0052, "psnr")
    ax = fig.axes[0]
    lo, hi = ax.get_ylim()
    assert lo <= min(r["psnr"] - r["psnr_std"] for r in res.rows) and hi >= max(r["psnr"] + r["psnr_std"] for r in res.rows)
    assert ax.get_xlim()[0] <= -5 and ax.get_xlim()[1] >= 5
    assert ax.get_xlabel() and ax.get_ylabel()
    plt.close(fig)


def test_plots_refuse_empty(tmp_path):
    with pytest.raises(ValueError):
        export_plots(SweepResult([]), tmp_path)


# ---------------------------------------------------------------- CLI


def test_cli_transmit_and_exit_codes(artifacts, tmp_path, capsys):
    cfg, ck = artifacts
    save_config(cfg, tmp_path / "cfg.yaml")
    img = tmp_path / "in.png"
    write_image(img, make_shapes(1, SIZE)[0])
    base = ["--config", str(tmp_path / "cfg.yaml")]
    out = tmp_path / "out.png"
    assert main(["transmit", *base, "--input", str(img), "--output", str(out), "--snr", "3", "--degraded-out", str(tmp_path / "deg.png")]) == 0
    assert read_image(out).shape == (3, SIZE, SIZE) and read_image(tmp_path / "deg.png").shape == (3, SIZE // 2, SIZE // 2)
    assert main(["transmit", *base, "--input", str(img), "--output", str(out), "--snr", "3", "--no-diffusion"]) == 0

    assert main(["transmit", *base, "--input", str(tmp_path / "nope.png"), "--output", str(out), "--snr", "0"]) == 3
    assert main(["sweep", *base, "--methods", "ours", "--ddpm", str(tmp_path / "gone.pt")]) == 3
    assert main(["plot", "--csv", str(tmp_path / "none.csv"), "--out-dir", str(tmp_path)]) == 3
    assert main(["transmit", *base, "--split_ratios", "[0.9, 0.9, 0.9]", "--input", str(img), "--output", str(out), "--snr", "0"]) == 2
    assert main(["sweep", "--config", str(tmp_path / "absent.yaml")]) == 2

    # non-finite weights surface as a numerical failure
    bad = tiny_ddpm()
    with torch.no_grad():
        bad.net.out.bias.fill_(float("nan"))
    save_ddpm(ck / "nan.pt", bad, cfg)
    assert main(["transmit", *base, "--input", str(img), "--output", str(out), "--snr", "0", "--ddpm", str(ck / "nan.pt")]) == 4
    err = capsys.readouterr().err
    assert "missing artifact" in err and "config error" in err and "numerical failure" in err


def test_cli_sweep_and_plot(artifacts, tmp_path):
    cfg, _ = artifacts
    save_config(cfg, tmp_path / "cfg.yaml")
    csv = tmp_path / "s.csv"
    argv = ["sweep", "--config", str(tmp_path / "cfg.yaml"), "--methods", "ours", "upsample", "--out", str(csv)]
    assert main([*argv, "--eval.snr_list", "[0, 5]"]) == 0
    assert len(SweepResult.from_csv(csv).rows) == 4
    assert main(["plot", "--csv", str(csv), "--out-dir", str(tmp_path / "plots")]) == 0
    assert len(list((tmp_path / "plots").glob("*.png"))) == 2


def test_cli_training_commands(tmp_path):
    flags = [
        "--dataset.image_size", str(SIZE), "--dataset.n_images", "20", "--output_dir", str(tmp_path),
        "--jscc.base_filters", "4", "--jscc.max_epochs", "1", "--jscc.batch", "8",
        "--diffusion.base_channels", "8", "--diffusion.channel_mult", "[1, 2]",
        "--diffusion.attention_res", "[]", "--diffusion.epochs", "1",
    ]  # fmt: skip
    assert main(["train-jscc", *flags]) == 0
    assert main(["train-jscc", *flags, "--operator.kind", "identity"]) == 0
    assert main(["train-ddpm", *flags]) == 0
    ck = tmp_path / "checkpoints"
    assert load_jscc(ck / "jscc.pt").op == OP
    assert load_jscc(ck / "deepjscc.pt").op.kind.value == "identity"
    model, sched = load_ddpm(ck / "ddpm.pt")
    assert sched.T == 1000 and (ck / "ddpm.config.yaml").is_file()


def test_cli_make_dataset(tmp_path):
    assert main(["make-dataset", "--out", str(tmp_path / "d"), "--n", "3", "--size", "8"]) == 0
    assert len(list((tmp_path / "d").glob("*.png"))) == 3
