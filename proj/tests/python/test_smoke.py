import numpy as np
import pytest

import advad


@pytest.fixture(scope="module")
def trained():
    model, acc = advad.train(per_class=60, size=16, epochs=4, seed=1)
    images, labels = advad.synthetic(per_class=10, size=16, seed=7)
    return model, acc, images, labels


def test_schedule_lambdas_sum_to_final_ratio():
    s = advad.Schedule.linear(100)
    assert s.steps == 100
    total = sum(s.lam(t) for t in range(1, 101))
    assert total == pytest.approx(s.noise_ratio(100), rel=1e-9)


def test_synthetic_shapes_and_range():
    images, labels = advad.synthetic(classes=3, per_class=4, size=16, seed=2)
    assert images.shape == (12, 16, 16, 3)
    assert set(labels.tolist()) == {0, 1, 2}
    assert images.min() >= 0 and images.max() <= 255


def test_model_roundtrip(tmp_path, trained):
    model, acc, images, _ = trained
    assert 0.0 <= acc <= 1.0
    assert model.input_shape == (16, 16, 3)
    path = tmp_path / "m.advm"
    model.save(str(path))
    back = advad.Model.load(str(path))
    # Parameters are stored as float32.
    np.testing.assert_allclose(back.logits(images[0]), model.logits(images[0]), rtol=1e-5, atol=1e-6)
    back.save(str(path))
    np.testing.assert_array_equal(advad.Model.load(str(path)).logits(images[0]), back.logits(images[0]))
    assert model.cam(images[0], 0).shape[0] > 0


def test_attack_respects_budget_and_is_deterministic(trained):
    model, _, images, labels = trained
    x, y = images[0], int(labels[0])
    a = advad.attack(model, x, y, steps=50, seed=3)
    b = advad.attack(model, x, y, steps=50, seed=3)
    np.testing.assert_array_equal(a["x_adv_raw"], b["x_adv_raw"])
    assert np.abs(a["x_adv_raw"] - x).max() <= 8.0 + 1e-9
    assert advad.linf(a["x_adv_quantized"], x) <= 8.0 / 255 + 1e-12
    assert a["x_adv_quantized"].dtype == np.float64


def test_advadx_trace(trained):
    model, _, images, labels = trained
    r = advad.attack(model, images[1], int(labels[1]), mode="advadx", steps=30, trace=True)
    assert len(r["trace"]) == 30
    assert r["guided_steps"] == sum(not s["skipped"] for s in r["trace"])


def test_verify_report_passes(trained):
    model, _, images, labels = trained
    rep = advad.verify(model, images[2], int(labels[2]), steps=40)
    assert rep["pass"] is True


def test_pgd_and_metrics(trained):
    model, _, images, labels = trained
    x = images[3]
    r = advad.pgd(model, x, int(labels[3]), xi=4, steps=5)
    assert advad.linf(r["x_adv_raw"], x) <= 4.0 / 255 + 1e-12
    assert advad.ssim(x, x) == 1.0
    assert advad.psnr(x, x + 1.0) == pytest.approx(48.1308, abs=1e-3)
    assert advad.l2(x, x) == 0.0


def test_errors_are_raised(trained):
    model, _, images, _ = trained
    with pytest.raises(advad.AdvadError):
        advad.attack(model, images[0], 0, mode="nope")
    with pytest.raises(advad.AdvadError):
        advad.attack(model, images[0][:, :, :1], 0)
    with pytest.raises(advad.AdvadError):
        advad.attack(model, images[0], 0, precision="f16")
