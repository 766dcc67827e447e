import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from jsccdiff.harness import make_shapes
from jsccdiff.metrics import MetricReport, make_perceptual, mse, perceptual_distance, psnr, psnr_batch, register_backend


def test_psnr_examples():
    x = torch.full((3, 4, 4), 0.5)
    assert psnr(x, x) == math.inf
    assert psnr(torch.zeros(3, 4, 4), torch.ones(3, 4, 4)) == pytest.approx(0.0)
    assert psnr(x, x + 0.1) == pytest.approx(20.0)
    # same number as 8-bit PSNR at peak 255
    assert psnr(x * 255, (x + 0.1) * 255, peak=255.0) == pytest.approx(20.0)
    with pytest.raises(ValueError):
        psnr(x, x[:1])


def test_psnr_matches_numpy_oracle(gen):
    a, b = torch.rand(3, 8, 8, generator=gen), torch.rand(3, 8, 8, generator=gen)
    want = 10 * np.log10(1.0 / np.mean((a.numpy().astype(np.float64) - b.numpy()) ** 2))
    assert psnr(a, b) == pytest.approx(want, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), lo=st.floats(0.01, 0.2), gap=st.floats(0.01, 0.2))
def test_psnr_decreases_with_error(seed, lo, gap):
    g = torch.Generator().manual_seed(seed)
    x = torch.rand(3, 8, 8, generator=g, dtype=torch.float64)
    noise = torch.randn(3, 8, 8, generator=g, dtype=torch.float64)
    assert psnr(x, x + lo * noise) > psnr(x, x + (lo + gap) * noise)


def test_psnr_permutation_invariant(gen):
    a, b = torch.rand(3, 8, 8, generator=gen), torch.rand(3, 8, 8, generator=gen)
    perm = torch.randperm(a.numel(), generator=gen)
    pa, pb = a.reshape(-1)[perm].reshape(a.shape), b.reshape(-1)[perm].reshape(b.shape)
    assert psnr(pa, pb) == pytest.approx(psnr(a, b), rel=1e-9)
    assert psnr(a, b) == psnr(b, a)


def test_psnr_batch():
    x = torch.zeros(2, 1, 2, 2)
    y = x.clone()
    y[1] += 0.1
    out = psnr_batch(x, y)
    assert out[0] == math.inf and out[1] == pytest.approx(20.0)
    assert mse(x, y) == pytest.approx(0.005)


@pytest.fixture(scope="module")
def metric():
    return make_perceptual("random-conv")


def test_perceptual_zero_and_symmetric(metric, gen):
    x = make_shapes(4)
    y = (x + 0.1 * torch.randn(x.shape, generator=gen)).clamp(0, 1)
    assert torch.all(metric(x, x) == 0)
    torch.testing.assert_close(metric(x, y), metric(y, x))
    assert metric(x[0], y[0]).dim() == 0


def test_perceptual_monotone_in_noise(metric, gen):
    x = make_shapes(20)
    noise = torch.randn(x.shape, generator=gen)
    scores = [metric(x, (x + s * noise).clamp(0, 1)).mean().item() for s in (0.02, 0.08, 0.2)]
    assert scores[0] < scores[1] < scores[2]


def test_perceptual_prefers_sharp_over_blurred(metric):
    x = make_shapes(16)
    blurred = torch.nn.functional.avg_pool2d(x, 4).repeat_interleave(4, -1).repeat_interleave(4, -2)
    mild = torch.nn.functional.avg_pool2d(x, 2).repeat_interleave(2, -1).repeat_interleave(2, -2)
    assert metric(x, mild).mean() < metric(x, blurred).mean()


def test_perceptual_seeded_and_default(gen):
    x = make_shapes(2)
    y = (x + 0.1 * torch.randn(x.shape, generator=gen)).clamp(0, 1)
    torch.testing.assert_close(make_perceptual(seed=0)(x, y), make_perceptual(seed=0)(x, y))
    torch.testing.assert_close(perceptual_distance(x, y), make_perceptual()(x, y))


def test_unknown_backend_and_registration():
    with pytest.raises(ValueError):
        make_perceptual("vgg-from-nowhere")
    register_backend("mse-test", lambda: lambda a, b: (a - b).square().flatten(1).mean(1).double())
    d = make_perceptual("mse-test")
    assert d(torch.zeros(1, 3, 2, 2), torch.ones(1, 3, 2, 2)).item() == 1.0


def test_report_excludes_exact_reconstructions():
    with pytest.warns(UserWarning):
        r = MetricReport.from_samples([20.0, math.inf, 30.0], [0.1, 0.0, 0.2])
    assert r.psnr_db == 25.0 and r.psnr_std == 5.0
    assert r.n == 3 and r.n_inf == 1
    assert r.perceptual == pytest.approx(0.1)
