import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssmdenoise import training
from ssmdenoise.audio import power
from ssmdenoise.errors import DivergenceError
from ssmdenoise.training import (
    AdamW,
    ToyTask,
    clip_by_global_norm,
    decays,
    lr_at,
    smooth_l1,
    smooth_l1_grad,
    train_toy,
)

finite = st.floats(-10, 10, allow_nan=False)


class TestSmoothL1:
    @pytest.mark.parametrize("pred,target,want", [([1.0], [1.0], 0.0), ([0.5], [0.0], 0.25), ([2.0], [0.0], 1.75)])
    def test_examples(self, pred, target, want):
        assert smooth_l1(pred, target) == pytest.approx(want, abs=1e-15)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            smooth_l1(np.zeros(3), np.zeros(4))

    @given(arrays(float, 5, elements=finite), arrays(float, 5, elements=finite))
    def test_non_negative_and_symmetric(self, a, b):
        assert smooth_l1(a, b) >= 0 and smooth_l1(a, b) == smooth_l1(b, a)

    @given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite))
    def test_gradient_matches_difference(self, a, b):
        g = smooth_l1_grad(a, b)
        eps = 1e-6
        for i in range(4):
            if abs(abs(a[i] - b[i]) - 0.5) < 1e-4:
                continue  # kink of the quadratic/linear switch
            e = np.zeros(4)
            e[i] = eps
            fd = (smooth_l1(a + e, b) - smooth_l1(a - e, b)) / (2 * eps)
            assert g[i] == pytest.approx(fd, abs=1e-7)


class TestSchedule:
    def test_warmup_then_cosine(self):
        total = 2000
        lrs = [lr_at(s, total) for s in range(total)]
        assert lrs[19] == pytest.approx(5e-3)  # 1% warmup = 20 steps, peak at its end
        assert lrs[0] == pytest.approx(5e-3 / 20)
        assert np.all(np.diff(lrs[:20]) > 0) and np.all(np.diff(lrs[20:]) <= 0)
        assert lrs[-1] < 1e-7

    def test_tiny_run_has_one_warmup_step(self):
        assert lr_at(0, 1) == pytest.approx(5e-3)


class TestOptimizer:
    def test_clip(self):
        g = {"a": np.array([3.0, 4.0])}
        clipped, norm = clip_by_global_norm(g, 1.0)
        assert norm == 5.0 and np.linalg.norm(clipped["a"]) == pytest.approx(1.0)
        same, _ = clip_by_global_norm({"a": np.array([0.3])}, 1.0)
        assert same["a"][0] == 0.3

    def test_decay_groups(self):
        assert decays("enc0.down.weight") and decays("enc1.ssm.B") and decays("enc1.ssm.C")
        assert not decays("enc0.down.bias") and not decays("enc0.norm.weight")
        assert not decays("enc0.ssm.a_r") and not decays("enc0.ssm.dt")

    @given(arrays(float, 6, elements=st.floats(-1e6, 1e6)))
    def test_dt_stays_positive(self, g):
        params = {"x.ssm.dt": np.full(6, 1e-3)}
        opt = AdamW()
        for _ in range(3):
            opt.step(params, {"x.ssm.dt": g.copy()}, lr=0.5)
        assert np.all(params["x.ssm.dt"] > 0)

    def test_decoupled_decay_without_gradient(self):
        params = {"w.weight": np.ones(2), "w.bias": np.ones(2)}
        AdamW(weight_decay=0.1).step(params, {"w.weight": np.zeros(2), "w.bias": np.zeros(2)}, lr=1.0)
        assert np.allclose(params["w.weight"], 0.9) and np.allclose(params["w.bias"], 1.0)


class TestToyTask:
    def test_batch_properties(self):
        task = ToyTask(seed=3)
        noisy, clean = task.batch(4, np.random.default_rng(0))
        assert noisy.shape == clean.shape == (4, 1, 2048)
        assert np.all((task.freqs >= 200) & (task.freqs <= 3000))
        for b in range(4):
            rms_db = 10 * math.log10(power(noisy[b, 0]))
            assert -35 - 1e-6 <= rms_db <= -15 + 1e-6
            snr = 10 * math.log10(power(clean[b, 0]) / power(noisy[b, 0] - clean[b, 0]))
            assert abs(snr) < 1e-9

    def test_tones_fixed_per_seed(self):
        assert np.array_equal(ToyTask(seed=1).freqs, ToyTask(seed=1).freqs)
        assert not np.array_equal(ToyTask(seed=1).freqs, ToyTask(seed=2).freqs)


class TestTrainToy:
    def test_zero_steps_rejected(self):
        with pytest.raises(ValueError):
            train_toy(0)

    def test_one_step_and_sink(self):
        sink = io.StringIO()
        _, m = train_toy(1, seed=0, length=512, h=8, metrics_sink=sink, eval_size=2)
        rows = [json.loads(line) for line in sink.getvalue().splitlines()]
        assert rows == [{"step": 0, "loss": m["loss"][0], "lr": m["lr"][0]}]
        assert math.isfinite(m["loss"][0]) and m["max_abar"][0] < 1

    def test_deterministic(self):
        a = train_toy(3, seed=5, length=512, h=8, eval_size=2)[1]
        b = train_toy(3, seed=5, length=512, h=8, eval_size=2)[1]
        assert a["loss"] == b["loss"] and a["output_snr_db"] == b["output_snr_db"]

    def test_length_alignment(self):
        with pytest.raises(ValueError):
            train_toy(1, length=500)

    def test_divergence(self, monkeypatch):
        monkeypatch.setattr(training, "train_step", lambda *a, **k: (float("nan"), 0.0))
        with pytest.raises(DivergenceError) as info:
            train_toy(2, length=512, h=8, eval_size=2)
        assert info.value.step == 0

    def test_short_run_learns(self):
        _, m = train_toy(60, seed=0, length=1024, h=16, eval_size=4)
        assert m["loss"][-1] < m["loss"][0]
        assert all(a < 1 for a in m["max_abar"])
