import json

import numpy as np
import pytest

from ssmdenoise.audio import AudioBuffer, read_wav, write_wav
from ssmdenoise.cli import main, mode_deviation
from ssmdenoise.config import default_config
from ssmdenoise.network import build_network
from ssmdenoise.weights import save_weights


def run_json(capsys, *argv):
    code = main([*argv, "--json"])
    return code, json.loads(capsys.readouterr().out)


class TestDescribe:
    def test_default(self, capsys):
        code, r = run_json(capsys, "describe")
        assert code == 0
        assert r["latency_ms"] == 46.5 and r["latency_samples"] == 744
        assert abs(r["parameters"] - 0.84e6) <= 0.15 * 0.84e6
        assert abs(r["macs_per_second"] - 0.33e9) <= 0.25 * 0.33e9

    @pytest.mark.parametrize("flag,ms", [(["--no-preconv"], 16.0), (["--preconv", "encoder"], 31.25)])
    def test_preconv_variants(self, capsys, flag, ms):
        assert run_json(capsys, "describe", *flag)[1]["latency_ms"] == ms

    def test_text(self, capsys):
        assert main(["describe"]) == 0
        out = capsys.readouterr().out
        assert "46.50 ms" in out and "parameters" in out

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{not json")
        assert main(["describe", "--config", str(cfg)]) == 2
        assert "error" in capsys.readouterr().err


class TestPlan:
    @pytest.mark.parametrize(
        "dims,order",
        [("1,256,16,16,1024", "input-project-first"), ("16,256,1,1,1024", "kernel-first")],
    )
    def test_examples(self, capsys, dims, order):
        code, r = run_json(capsys, "plan", "--dims", dims)
        assert code == 0 and r["order"] == order

    def test_costs(self, capsys):
        r = run_json(capsys, "plan", "--dims", "1,256,16,16,1024")[1]
        assert r["cost_input_project_first"] == 8_650_752
        assert r["cost_kernel_first"] == 67_436_544

    @pytest.mark.parametrize("dims", ["1,2,3", "a,b,c,d,e", "1,2,3,4,0"])
    def test_malformed(self, dims):
        with pytest.raises(SystemExit) as info:
            main(["plan", "--dims", dims])
        assert info.value.code == 2


class TestVerify:
    def test_pass_and_deterministic(self, capsys):
        code, r = run_json(capsys, "verify", "--seed", "0", "--len", "4096")
        assert code == 0 and r["pass"] and r["relative_deviation"] < 1e-4
        assert run_json(capsys, "verify", "--seed", "0", "--len", "4096")[1] == r

    def test_zero_tolerance_fails(self, capsys):
        assert main(["verify", "--len", "2048", "--tol", "0"]) == 1

    def test_double(self):
        assert mode_deviation(1, 2048, dtype=np.float64) < 1e-8

    def test_misaligned_length(self):
        assert main(["verify", "--len", "1000"]) == 2


@pytest.fixture(scope="module")
def small_weights(tmp_path_factory):
    path = tmp_path_factory.mktemp("w") / "net.bin"
    save_weights(build_network(default_config().replace(ssm_state_size=8), seed=4), path)
    return path


@pytest.fixture
def noisy_wav(tmp_path):
    x = np.random.default_rng(0).uniform(-0.5, 0.5, 3000)
    path = tmp_path / "in.wav"
    write_wav(AudioBuffer(x, 16000), path)
    return path


class TestProcess:
    def test_stream_matches_batch(self, small_weights, noisy_wav, tmp_path, capsys):
        outs = {}
        for mode in ("stream", "batch"):
            out = tmp_path / f"{mode}.wav"
            argv = ["process", "--weights", str(small_weights), "--input", str(noisy_wav), "--output", str(out)]
            assert main([*argv, "--mode", mode]) == 0
            outs[mode] = read_wav(out).samples
        assert outs["stream"].size == 3000
        # both files are 16-bit; allow one quantization step
        assert np.abs(outs["stream"] - outs["batch"]).max() <= 1 / 32768 + 1e-12

    def test_bad_chunk(self, small_weights, noisy_wav, tmp_path, capsys):
        argv = ["process", "--weights", str(small_weights), "--input", str(noisy_wav),
                "--output", str(tmp_path / "o.wav"), "--chunk", "100"]
        assert main(argv) == 2

    def test_missing_weights(self, noisy_wav, tmp_path, capsys):
        missing = tmp_path / "absent.bin"
        argv = ["process", "--weights", str(missing), "--input", str(noisy_wav), "--output", str(tmp_path / "o.wav")]
        assert main(argv) == 2
        assert "absent.bin" in capsys.readouterr().err

    def test_wrong_rate(self, small_weights, tmp_path):
        wav = tmp_path / "8k.wav"
        write_wav(AudioBuffer(np.zeros(256), 8000), wav)
        argv = ["process", "--weights", str(small_weights), "--input", str(wav), "--output", str(tmp_path / "o.wav")]
        assert main(argv) == 2


class TestDegrade:
    def test_levels_and_hold(self, noisy_wav, tmp_path):
        out = tmp_path / "d.wav"
        assert main(["degrade", "--bits", "4", "--rate", "4000", str(noisy_wav), str(out)]) == 0
        y = read_wav(out).samples
        assert y.size == 3000 and np.unique(y).size <= 15
        assert np.all(y[:2000].reshape(-1, 4) == y[:2000].reshape(-1, 4)[:, :1])

    def test_identity(self, noisy_wav, tmp_path):
        out = tmp_path / "d.wav"
        assert main(["degrade", str(noisy_wav), str(out)]) == 0
        assert np.array_equal(read_wav(out).samples, read_wav(noisy_wav).samples)

    def test_unsupported_rate(self, noisy_wav, tmp_path):
        assert main(["degrade", "--rate", "3000", str(noisy_wav), str(tmp_path / "d.wav")]) == 2

    def test_not_wav(self, tmp_path):
        bogus = tmp_path / "x.wav"
        bogus.write_bytes(b"hello")
        assert main(["degrade", str(bogus), str(tmp_path / "d.wav")]) == 2


def test_train_toy_writes_weights_and_metrics(tmp_path, capsys, monkeypatch):
    from ssmdenoise import cli, training

    monkeypatch.setattr(cli, "train_toy", lambda steps, seed, metrics_sink: training.train_toy(
        steps, seed=seed, length=512, h=8, metrics_sink=metrics_sink, eval_size=2))
    metrics, weights = tmp_path / "m.jsonl", tmp_path / "w.bin"
    code = main(["train-toy", "--steps", "2", "--metrics", str(metrics), "--output", str(weights)])
    assert code == 0 and weights.stat().st_size > 0
    rows = [json.loads(line) for line in metrics.read_text().splitlines()]
    assert [r["step"] for r in rows] == [0, 1]
