import math

import numpy as np
import pytest

import srlsep


SMALL_CFG = """\
frame.sample_rate = 2000
frame.window_length = 50
frame.hop_length = 25
frame.fft_size = 64
data.num_speakers = 6
data.utterances_per_speaker = 2
data.duration_s = 1
data.validation_fraction = 0.34
pretrain.num_speakers = 6
pretrain.utterances_per_speaker = 4
pretrain.max_epochs = 2
train.max_epochs = 2
train.patience = 0
"""


def test_loss_examples():
    assert srlsep.srl_objective(0.3, 1.0, 0.5) == pytest.approx(0.8, abs=1e-12)
    assert srlsep.triplet_hinge(0.0, 2.0, 1.0) == 0.0
    assert srlsep.triplet_hinge(0.7, 0.7, 1.0) == 1.0
    l_tri = srlsep.triplet_hinge(1.2, 0.4, 1.0)
    assert srlsep.triplet_objective(0.3, l_tri, 0.5) == pytest.approx(1.04, abs=1e-12)


def test_srl_distance():
    assert srlsep.srl_distance(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == pytest.approx(2.0)
    assert srlsep.srl_distance(np.array([1.0, 0.0]), np.array([0.0, 3.0])) == pytest.approx(
        math.sqrt(2.0)
    )
    with pytest.raises(ValueError):
        srlsep.srl_distance(np.ones(2), np.ones(3))


def test_mse_loss():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert srlsep.mse_loss(a, np.zeros((2, 2))) == 7.5


def test_stft_round_trip():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 8000)
    mag, phase = srlsep.stft(x)
    assert mag.shape[1] == 257
    y = srlsep.istft(mag, phase)
    inner = slice(400, len(y) - 400)
    err = np.linalg.norm(y[inner] - x[inner]) / np.linalg.norm(x[inner])
    assert err < 1e-6


def test_si_sdr_scale_invariant():
    rng = np.random.default_rng(1)
    ref = rng.normal(size=1000)
    est = ref + 0.1 * rng.normal(size=1000)
    assert srlsep.si_sdr(2.0 * est, ref) == pytest.approx(srlsep.si_sdr(est, ref), abs=1e-9)


def test_wav_round_trip(tmp_path):
    x = np.linspace(-1, 1, 501)
    path = str(tmp_path / "x.wav")
    srlsep.write_wav(path, x, 8000.0)
    y, rate = srlsep.read_wav(path)
    assert rate == 8000.0
    assert np.max(np.abs(y - x)) <= 1.0 / 32768.0


def test_gradient_suite_passes():
    entries = srlsep.gradient_suite()
    assert entries and all(e["passed"] for e in entries)
    bad = srlsep.gradient_suite(inject_wrong_grad=True)
    assert not bad[-1]["passed"]


def test_cli_pipeline(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL_CFG)
    corpus, enc, run_dir = tmp_path / "corpus", tmp_path / "enc.srlf", tmp_path / "run"
    assert srlsep.run(["gen-data", "--config", str(cfg), "--out", str(corpus)])[0] == 0
    assert srlsep.run(["pretrain-encoder", "--config", str(cfg), "--out", str(enc)])[0] == 0
    code, _, err = srlsep.run(
        ["train", "--config", str(cfg), "--data", str(corpus), "--encoder", str(enc),
         "--loss", "triplet-clean", "--out", str(run_dir)]
    )
    assert code == 0, err

    encoder = srlsep.Encoder.load(str(enc))
    separator = srlsep.Separator.load(str(run_dir / "separator.srlf"))
    noisy, rate = srlsep.read_wav(str(corpus / "wav" / "ex00000.noisy.wav"))
    ref, _ = srlsep.read_wav(str(corpus / "wav" / "ex00000.reference.wav"))
    frames = dict(sample_rate=rate, window=50, hop=25, fft_size=64)
    noisy_mag, _ = srlsep.stft(noisy, **frames)
    ref_mag, _ = srlsep.stft(ref, **frames)
    dvec = encoder.enroll(ref_mag)
    assert dvec.shape == (encoder.dim,)
    enhanced, residual, mask = separator.separate(noisy_mag, dvec)
    assert np.array_equal(enhanced + residual, noisy_mag)
    assert mask.min() >= 0.0 and mask.max() <= 1.0

    assert srlsep.run(["frobnicate"])[0] == 1
