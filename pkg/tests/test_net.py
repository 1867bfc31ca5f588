import numpy as np
import pytest

from fuelmap.errors import ShapeMismatchError, StaleCacheError
from fuelmap.net import (
    SegModel,
    backward,
    conv1x1_backward,
    conv1x1_forward,
    conv3x3_backward,
    conv3x3_forward,
    ema_update,
    forward,
    gelu_backward,
    gelu_forward,
    load_checkpoint,
    maxpool_backward,
    maxpool_forward,
    predict_proba,
    save_checkpoint,
    upsample_backward,
    upsample_forward,
)


def numeric_grad(f, x, h=1e-3):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


def conv3x3_naive(x, w, b):
    n, h, wd, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.zeros((n, h, wd, w.shape[-1]))
    for r in range(h):
        for c in range(wd):
            out[:, r, c] = np.einsum("nijc,ijco->no", xp[:, r : r + 3, c : c + 3], w) + b
    return out


def test_conv3x3_matches_naive(rng):
    x = rng.normal(size=(2, 5, 6, 3))
    w = rng.normal(size=(3, 3, 3, 4))
    b = rng.normal(size=4)
    out, _ = conv3x3_forward(x, w, b)
    np.testing.assert_allclose(out, conv3x3_naive(x, w, b), atol=1e-12)


def test_conv3x3_gradients(rng):
    x = rng.normal(size=(1, 4, 4, 2))
    w = rng.normal(size=(3, 3, 2, 3))
    b = rng.normal(size=3)
    r = rng.normal(size=(1, 4, 4, 3))
    loss = lambda: float((conv3x3_forward(x, w, b)[0] * r).sum())
    _, cols = conv3x3_forward(x, w, b)
    dx, dw, db = conv3x3_backward(r, cols, x.shape, w)
    assert rel_err(dx, numeric_grad(loss, x)) < 1e-6
    assert rel_err(dw, numeric_grad(loss, w)) < 1e-6
    assert rel_err(db, numeric_grad(loss, b)) < 1e-6


def test_gelu_gradient_and_values(rng):
    z = rng.normal(size=(50,)) * 3
    out, t = gelu_forward(z.copy())
    assert gelu_forward(np.array([0.0]))[0][0] == 0.0
    assert out[z > 5] == pytest.approx(z[z > 5], rel=1e-5)
    r = rng.normal(size=z.shape)
    loss = lambda: float((gelu_forward(z)[0] * r).sum())
    assert rel_err(gelu_backward(r, z, t), numeric_grad(loss, z)) < 1e-6


def test_pool_upsample_conv1x1_gradients(rng):
    x = rng.normal(size=(2, 4, 6, 3))
    out, idx = maxpool_forward(x)
    assert out.shape == (2, 2, 3, 3)
    assert out[0, 0, 0, 0] == x[0, :2, :2, 0].max()
    r = rng.normal(size=out.shape)
    loss = lambda: float((maxpool_forward(x)[0] * r).sum())
    assert rel_err(maxpool_backward(r, idx), numeric_grad(loss, x)) < 1e-6

    u = upsample_forward(x)
    assert u.shape == (2, 8, 12, 3) and u[0, 1, 1, 0] == x[0, 0, 0, 0]
    r = rng.normal(size=u.shape)
    loss = lambda: float((upsample_forward(x) * r).sum())
    assert rel_err(upsample_backward(r), numeric_grad(loss, x)) < 1e-6

    w = rng.normal(size=(3, 5))
    b = rng.normal(size=5)
    r = rng.normal(size=(2, 4, 6, 5))
    loss = lambda: float((conv1x1_forward(x, w, b) * r).sum())
    dx, dw, db = conv1x1_backward(r, x, w)
    assert rel_err(dx, numeric_grad(loss, x)) < 1e-6
    assert rel_err(dw, numeric_grad(loss, w)) < 1e-6


def test_end_to_end_parameter_gradients(rng):
    model = SegModel.init(in_bands=4, widths=(3, 4), seed=5, dtype=np.float64)
    x = rng.normal(size=(4, 8, 8))
    r = rng.normal(size=(9, 8, 8))

    def loss():
        return float((forward(model, x)[0] * r).sum())

    logits, cache = forward(model, x)
    grads = backward(model, cache, r)
    for name in ("enc1.w", "enc2.b", "dec1.w", "dec2.w", "head.w", "head.b"):
        num = numeric_grad(loss, model.params[name], h=1e-5)
        assert rel_err(grads[name], num) < 1e-5, name


def test_shapes_and_validation(rng):
    model = SegModel.init(in_bands=12, widths=(4, 8, 8))
    logits, _ = forward(model, rng.random((12, 16, 24)))
    assert logits.shape == (9, 16, 24)
    batched, _ = forward(model, rng.random((3, 12, 8, 8)))
    assert batched.shape == (3, 9, 8, 8)
    with pytest.raises(ShapeMismatchError):
        forward(model, rng.random((12, 12, 12)))
    with pytest.raises(ShapeMismatchError):
        forward(model, rng.random((5, 16, 16)))


def test_init_is_seeded_and_bounded():
    a, b = SegModel.init(seed=3), SegModel.init(seed=3)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert not np.array_equal(a.params["enc1.w"], SegModel.init(seed=4).params["enc1.w"])
    bound = np.sqrt(6 / (9 * 12))
    assert np.abs(a.params["enc1.w"]).max() <= bound
    assert not a.params["enc1.b"].any()


def test_zero_head_gives_uniform_probabilities(rng):
    model = SegModel.init(widths=(4, 4), zero_head=True)
    p = predict_proba(model, rng.random((12, 8, 8)))
    np.testing.assert_allclose(p, 1 / 9, atol=1e-12)


def test_stale_cache_is_rejected(rng):
    model = SegModel.init(widths=(4,))
    _, cache = forward(model, rng.random((12, 4, 4)))
    model.touch()
    with pytest.raises(StaleCacheError):
        backward(model, cache, np.zeros((9, 4, 4)))


def test_ema_endpoints_and_midpoint():
    s = SegModel.init(widths=(4,), seed=1)
    t = SegModel.init(widths=(4,), seed=2)
    t0 = t.copy()
    ema_update(t, s, 1.0)
    assert all(np.array_equal(t.params[k], t0.params[k]) for k in t.params)
    ema_update(t, s, 0.5)
    np.testing.assert_allclose(t.params["head.w"], 0.5 * (t0.params["head.w"] + s.params["head.w"]), rtol=1e-6)
    ema_update(t, s, 0.0)
    assert all(np.array_equal(t.params[k], s.params[k]) for k in t.params)
    with pytest.raises(ValueError):
        ema_update(t, s, 1.5)
    with pytest.raises(ShapeMismatchError):
        ema_update(t, SegModel.init(widths=(5,)), 0.5)


def test_checkpoint_round_trip(tmp_path, rng):
    model = SegModel.init(widths=(4, 8), seed=9)
    save_checkpoint(model, tmp_path / "ck", iteration=7, extra={"note": "x"})
    back, manifest = load_checkpoint(tmp_path / "ck")
    assert manifest["iteration"] == 7 and manifest["note"] == "x"
    assert back.widths == model.widths
    assert all(back.params[k].tobytes() == model.params[k].tobytes() for k in model.params)
    x = rng.random((12, 8, 8))
    assert np.array_equal(forward(back, x)[0], forward(model, x)[0])


def test_matches_torch_reference(rng):
    torch = pytest.importorskip("torch")
    F = torch.nn.functional
    model = SegModel.init(in_bands=5, widths=(3, 4, 6), seed=4, dtype=np.float64)
    tp = {k: torch.tensor(v, requires_grad=True) for k, v in model.params.items()}

    def conv(x, name):
        w = tp[name + ".w"].permute(3, 2, 0, 1)
        return F.gelu(F.conv2d(x, w, tp[name + ".b"], padding=1), approximate="tanh")

    x = rng.normal(size=(2, 5, 8, 8))
    a = torch.tensor(x)
    skips = []
    for lvl in (1, 2, 3):
        e = conv(a, f"enc{lvl}")
        skips.append(e)
        a = F.max_pool2d(e, 2)
    for lvl in (3, 2, 1):
        u = F.interpolate(a, scale_factor=2, mode="nearest")
        a = conv(torch.cat([u, skips[lvl - 1]], dim=1), f"dec{lvl}")
    ref = torch.einsum("nchw,ck->nkhw", a, tp["head.w"]) + tp["head.b"][None, :, None, None]

    logits, cache = forward(model, x)
    np.testing.assert_allclose(logits, ref.detach().numpy(), rtol=1e-10, atol=1e-12)
    r = rng.normal(size=logits.shape)
    (ref * torch.tensor(r)).sum().backward()
    grads = backward(model, cache, r)
    for k, t in tp.items():
        np.testing.assert_allclose(grads[k], t.grad.numpy(), rtol=1e-9, atol=1e-11, err_msg=k)
