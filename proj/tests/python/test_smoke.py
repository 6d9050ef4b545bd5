import json
import math

import numpy as np
import pytest

import fdnet


def test_units_round_trip():
    assert fdnet.dbz_to_pixel(-10.0) == 0
    assert fdnet.dbz_to_pixel(60.0) == 255
    for p in range(256):
        assert fdnet.dbz_to_pixel(fdnet.pixel_to_dbz(p)) == p
    assert fdnet.dbz_to_rainrate(0.0) == pytest.approx((1.0 / 58.53) ** (1 / 1.56))


def test_confusion_and_skill():
    target = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    pred = np.array([[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    c = fdnet.confusion(pred, target, 0.5)
    assert c == {"tp": 2, "fp": 1, "tn": 4, "fn": 1}
    csi, hss = fdnet.skill_scores(**c)
    assert csi == pytest.approx(0.5)
    assert hss == pytest.approx(7 / 30)


def test_balanced_errors_uniform():
    rng = np.random.default_rng(0)
    a, b = rng.random((3, 4, 4)), rng.random((3, 4, 4))
    bmse, bmae = fdnet.balanced_errors(a, b, "uniform")
    assert bmse == pytest.approx(((a - b) ** 2).sum() / 3)
    assert bmae == pytest.approx(np.abs(a - b).sum() / 3)
    with pytest.raises(ValueError):
        fdnet.balanced_errors(a, b, "nope")


def test_windows():
    assert fdnet.window_count(41, 21, 20) == 1
    assert fdnet.window_count(40, 21, 20) == 0


def test_synthetic_is_deterministic():
    a = fdnet.gen_synthetic(num_sequences=2, length=5, height=16, width=16, seed=4)
    b = fdnet.gen_synthetic(num_sequences=2, length=5, height=16, width=16, seed=4)
    assert list(a) == ["seq_0000", "seq_0001"]
    assert a["seq_0000"].shape == (5, 1, 16, 16)
    assert np.array_equal(a["seq_0001"], b["seq_0001"])
    assert a["seq_0000"].min() >= 0 and a["seq_0000"].max() <= 1
    with pytest.raises(fdnet.ConfigError):
        fdnet.gen_synthetic(radius=[-1, 2])


def test_predict_shapes():
    frames = fdnet.gen_synthetic(num_sequences=1, length=3, height=16, width=16)["seq_0000"]
    inputs = frames[:, None]  # [J, N=1, 1, H, W]
    model = dict(height=16, width=16, flow_hidden=4, flow_head_hidden=4, def_hidden=4)
    out = fdnet.predict_random(inputs, 2, seed=1, **model)
    assert out.shape == (2, 1, 1, 16, 16)
    assert math.isfinite(out.sum()) and out.min() >= 0 and out.max() <= 1
    with pytest.raises(ValueError):
        fdnet.predict_random(inputs[:1], 2, **model)
