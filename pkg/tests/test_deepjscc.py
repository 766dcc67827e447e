import pytest
import torch

from jsccdiff.channel import power_normalize, real_to_complex, snr_to_sigma
from jsccdiff.config import ExperimentConfig
from jsccdiff.deepjscc import (
    JsccArch,
    JsccModel,
    channel_pass,
    decode,
    degraded_mse_loss,
    encode,
    load_jscc,
    save_jscc,
    train_jscc,
)
from jsccdiff.harness import make_shapes
from jsccdiff.linops import make_operator


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(0)
    op = make_operator("avg_pool", (3, 32, 32), 2)
    return JsccModel(op, JsccArch(base_filters=16, n_down=3, c_out=2)).eval()


def tiny_cfg(**jscc):
    base = {"base_filters": 8, "n_down": 3, "c_out": 2, "batch": 16}
    return ExperimentConfig.from_dict({"jscc": base | jscc})


def test_bandwidth_from_c_out(model):
    # k = c_out * (W / 2^n) * (H / 2^n) / 2
    assert model.k == 2 * 4 * 4 // 2 == 16
    assert model.rho == pytest.approx(16 / 3072)


def test_encode_shape_and_determinism(model):
    x = make_shapes(4)
    a = encode(model, x, 0.5)
    assert a.shape == (4, 2 * model.k)
    assert torch.equal(a, encode(model, x, 0.5))


def test_encode_depends_on_snr(model):
    x = make_shapes(2)
    lo = encode(model, x, snr_to_sigma(0.0))
    hi = encode(model, x, snr_to_sigma(10.0))
    assert (lo - hi).abs().max() > 1e-6


def test_batch_permutation(model):
    x = make_shapes(6)
    perm = torch.tensor([3, 0, 5, 1, 4, 2])
    torch.testing.assert_close(encode(model, x[perm], 1.0), encode(model, x, 1.0)[perm], atol=1e-5, rtol=1e-5)


def test_decode_shape_and_clamp(model, gen):
    y = torch.randn(5, model.k, dtype=torch.cfloat, generator=gen) * 50
    out = decode(model, y, 1.0)
    assert out.shape == (5, 3, 16, 16)
    assert out.min() >= 0 and out.max() <= 1


def test_shape_errors(model):
    with pytest.raises(ValueError):
        encode(model, torch.zeros(1, 3, 16, 16), 1.0)
    with pytest.raises(ValueError):
        decode(model, torch.zeros(1, model.k + 1, dtype=torch.cfloat), 1.0)


def test_identity_operator_is_standard_deepjscc():
    op = make_operator("identity", (3, 32, 32))
    m = JsccModel(op, JsccArch(base_filters=8, n_down=3, c_out=2))
    y = torch.zeros(2, m.k, dtype=torch.cfloat)
    assert decode(m, y, 1.0).shape == (2, 3, 32, 32)


def test_decolorize_output_is_single_channel():
    m = JsccModel(make_operator("decolorize", (3, 32, 32)), JsccArch(base_filters=8, n_down=3, c_out=2))
    assert decode(m, torch.zeros(1, m.k, dtype=torch.cfloat), 1.0).shape == (1, 1, 32, 32)


def test_bad_architecture_rejected():
    with pytest.raises(ValueError):
        JsccModel(make_operator("avg_pool", (3, 32, 32), 16), JsccArch(base_filters=4, n_down=3))
    with pytest.raises(ValueError):
        JsccModel(make_operator("avg_pool", (3, 12, 12), 2), JsccArch(base_filters=4, n_down=3))


def test_degraded_mse_loss_examples():
    op = make_operator("avg_pool", (1, 2, 2), 2)
    x = torch.tensor([[[1.0, 3.0], [5.0, 7.0]]])
    assert degraded_mse_loss(op, x, op.apply(x)).item() == 0.0
    # normalizer is C*H*W of the input, not the degraded size
    assert degraded_mse_loss(op, x, torch.tensor([[[5.0]]])).item() == pytest.approx(0.25)
    with pytest.raises(ValueError):
        degraded_mse_loss(op, x, torch.zeros(1, 2, 2))


def test_degraded_mse_loss_permutation_invariant(gen):
    op = make_operator("avg_pool", (3, 8, 8), 2)
    x = torch.rand(3, 8, 8, generator=gen)
    err = torch.zeros(3, 4, 4)
    err[0, 0, 0], err[2, 3, 1] = 0.5, -0.25
    swapped = torch.zeros(3, 4, 4)
    swapped[1, 2, 2], swapped[0, 1, 3] = -0.5, 0.25
    a = degraded_mse_loss(op, x, op.apply(x) + err)
    b = degraded_mse_loss(op, x, op.apply(x) + swapped)
    assert a.item() == pytest.approx(b.item(), rel=1e-6)


def test_power_constraint_every_batch(model):
    z = power_normalize(real_to_complex(encode(model, make_shapes(8), 1.0)), model.P_avg)
    assert torch.all((z.abs().square().mean(-1) - 1.0).abs() <= 1e-5)


def fd_gradient_check(n_probes: int = 12, eps: float = 1e-6):
    """Backprop vs central differences on a 2-filter, 4x4-input model; returns relative errors."""
    torch.manual_seed(0)
    op = make_operator("avg_pool", (3, 4, 4), 2)
    m = JsccModel(op, JsccArch(base_filters=2, n_down=1, c_out=2, attention=False)).double()
    x = torch.rand(2, 3, 4, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
    sigma = torch.tensor([0.5, 1.0], dtype=torch.float64)

    def loss():
        g = torch.Generator().manual_seed(99)  # same channel noise on every call
        return degraded_mse_loss(op, x, channel_pass(m, x, sigma, g))

    m.zero_grad()
    loss().backward()
    params = [p for name, p in m.named_parameters() if name.startswith("encoder")]
    probes = []
    g = torch.Generator().manual_seed(3)
    while len(probes) < n_probes:
        p = params[int(torch.randint(len(params), (1,), generator=g))]
        idx = int(torch.randint(p.numel(), (1,), generator=g))
        if abs(p.grad.view(-1)[idx].item()) > 1e-7:
            probes.append((p, idx))
    errors = []
    with torch.no_grad():
        for p, idx in probes:
            flat = p.view(-1)
            orig = flat[idx].item()
            flat[idx] = orig + eps
            up = loss().item()
            flat[idx] = orig - eps
            down = loss().item()
            flat[idx] = orig
            fd = (up - down) / (2 * eps)
            bp = p.grad.view(-1)[idx].item()
            errors.append(abs(fd - bp) / max(abs(bp), abs(fd)))
    return errors


def test_gradient_matches_finite_differences():
    errors = fd_gradient_check()
    assert len(errors) >= 10
    assert max(errors) <= 1e-3


def test_checkpoint_round_trip(tmp_path, model):
    path = save_jscc(tmp_path / "m.pt", model, tiny_cfg(), history=[{"epoch": 0, "val_loss": 1.0}])
    loaded = load_jscc(path)
    x = make_shapes(2)
    assert torch.equal(encode(loaded, x, 1.0), encode(model, x, 1.0))
    assert loaded.op == model.op and loaded.arch == model.arch


def test_training_reduces_validation_loss():
    data = make_shapes(200)
    cfg = tiny_cfg(lr=1e-3)
    model, history = train_jscc(cfg, data[:160], data[160:], max_epochs=5)
    assert len(history) == 6
    assert min(h["val_loss"] for h in history[1:]) < history[0]["val_loss"]
    assert not model.training


def test_early_stopping_after_patience():
    data = make_shapes(40)
    cfg = tiny_cfg(lr=0.0, patience=10, base_filters=4)
    _, history = train_jscc(cfg, data[:32], data[32:], max_epochs=50)
    # epoch 0 is the reference; ten stagnant epochs follow
    assert len(history) == 1 + 10


def test_training_deterministic():
    data = make_shapes(48)
    cfg = tiny_cfg(base_filters=4)
    _, h1 = train_jscc(cfg, data[:32], data[32:], max_epochs=1)
    _, h2 = train_jscc(cfg, data[:32], data[32:], max_epochs=1)
    assert h1 == h2


def test_training_rejects_empty():
    with pytest.raises(ValueError):
        train_jscc(tiny_cfg(), torch.zeros(0, 3, 32, 32), make_shapes(2))
