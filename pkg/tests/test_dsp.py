"""Audio I/O, framing, filterbank, and scaling contracts."""

import wave as wave_mod

import numpy as np
import pytest

from ndf import autodiff as ad, dsp
from ndf.errors import DegenerateInputError, DimensionError, FormatError
from ndf.optim import grad_check
from ndf.profiles import DESK, FULL


def test_wav_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    clip = dsp.AudioClip(rng.uniform(-1, 1, size=2000))
    path = tmp_path / "x.wav"
    dsp.save_wav(path, clip)
    back = dsp.load_wav(path)
    assert np.abs(back.samples - clip.samples).max() <= 1.0 / 32768


def test_wav_rejects_too_long(tmp_path):
    clip = dsp.AudioClip(np.zeros(2 * dsp.SAMPLE_RATE))
    path = tmp_path / "long.wav"
    dsp.save_wav(path, clip)
    with pytest.raises(FormatError):
        dsp.load_wav(path)


def test_wav_rejects_stereo(tmp_path):
    path = tmp_path / "stereo.wav"
    with wave_mod.open(str(path), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(dsp.SAMPLE_RATE)
        wf.writeframes(b"\x00\x00" * 200)
    with pytest.raises(FormatError):
        dsp.load_wav(path)


def test_wav_rejects_wrong_rate(tmp_path):
    path = tmp_path / "rate.wav"
    with wave_mod.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(44100)
        wf.writeframes(b"\x00\x00" * 100)
    with pytest.raises(FormatError):
        dsp.load_wav(path)


# -- preprocess ----------------------------------------------------------------


def test_preprocess_mask_and_peak():
    n = DESK.clip_len // 2
    clip = dsp.AudioClip(0.25 * np.sin(np.linspace(0, 20, n)))
    out, mask = dsp.preprocess(clip, DESK.clip_len)
    assert mask.sum() == n
    assert np.all(mask[:n] == 1) and np.all(mask[n:] == 0)
    assert np.abs(out.samples).max() == pytest.approx(1.0)
    assert np.all(out.samples[n:] == 0.0)


def test_preprocess_idempotent():
    rng = np.random.default_rng(1)
    clip = dsp.AudioClip(rng.uniform(-1, 1, size=100))
    once, mask1 = dsp.preprocess(clip, DESK.clip_len)
    twice, mask2 = dsp.preprocess(once, DESK.clip_len)
    assert np.allclose(once.samples, twice.samples)
    assert np.array_equal(mask1, mask2)


def test_preprocess_rejects_silence_and_overlong():
    with pytest.raises(DegenerateInputError):
        dsp.preprocess(dsp.AudioClip(np.zeros(50)), DESK.clip_len)
    with pytest.raises(DimensionError):
        dsp.preprocess(dsp.AudioClip(np.ones(DESK.clip_len + 1)), DESK.clip_len)


def test_canonical_length_is_hop_aligned():
    assert FULL.clip_len == 22016
    assert FULL.clip_len % FULL.hop == 0
    assert FULL.n_frames == 86
    assert DESK.clip_len % DESK.hop == 0


# -- stft ------------------------------------------------------------------------


def test_stft_zero_signal_zero_matrix():
    win = dsp.hann_window(DESK.win_len)
    m = dsp.stft_magnitude(np.zeros(DESK.clip_len), win, DESK.hop, DESK.n_fft)
    assert m.shape == (DESK.n_fft_bins, DESK.n_frames)
    assert np.all(m == 0.0)


def test_stft_frame_count_law():
    win = dsp.hann_window(FULL.win_len)
    m = dsp.stft_magnitude(np.zeros(FULL.clip_len), win, FULL.hop, FULL.n_fft)
    assert m.shape == (1025, 86)


def test_stft_sine_peaks_at_fft_bin():
    k = 100
    t = np.arange(FULL.clip_len)
    sine = np.sin(2 * np.pi * (k / FULL.n_fft) * t)
    win = dsp.hann_window(FULL.win_len)
    mags = dsp.stft_magnitude(sine, win, FULL.hop, FULL.n_fft)
    mid = mags.shape[1] // 2
    assert int(mags[:, mid].argmax()) == k


def test_stft_nonnegative():
    rng = np.random.default_rng(2)
    win = dsp.hann_window(DESK.win_len)
    m = dsp.stft_magnitude(rng.normal(size=DESK.clip_len), win, DESK.hop, DESK.n_fft)
    assert np.all(m >= 0.0)


def test_stft_gradient_vs_fd():
    rng = np.random.default_rng(3)
    win = dsp.hann_window(DESK.win_len)
    x = ad.param(rng.normal(size=DESK.clip_len) * 0.4)

    def f():
        return ad.sum_all(ad.square(dsp.stft_magnitude(x, win, DESK.hop, DESK.n_fft)))

    assert grad_check(f, [x], max_coords_per_param=48) < 1e-4


# -- filterbank --------------------------------------------------------------------


def test_filterbank_shape_and_coverage():
    fb = dsp.mel_filterbank(FULL.n_fft_bins, FULL.n_mels)
    assert fb.shape == (1025, 512)
    assert np.all(fb >= 0.0)
    assert np.all(fb.sum(axis=0) > 0.0)  # every mel bin reachable
    assert np.allclose(fb.sum(axis=0), 1.0)  # unit-sum filters


def test_filterbank_all_ones_spectrum_positive():
    fb = dsp.mel_filterbank(DESK.n_fft_bins, DESK.n_mels)
    mel = dsp.stft_to_mel(np.ones((DESK.n_fft_bins, 4)), fb)
    assert np.all(mel > 0.0)


def test_stft_to_mel_matches_per_filter_oracle():
    rng = np.random.default_rng(4)
    fb = dsp.mel_filterbank(DESK.n_fft_bins, DESK.n_mels)
    mags = rng.uniform(size=(DESK.n_fft_bins, DESK.n_frames))
    fast = dsp.stft_to_mel(mags, fb)
    slow = np.empty_like(fast)
    for m in range(fb.shape[1]):
        for t in range(mags.shape[1]):
            slow[m, t] = float(np.dot(fb[:, m], mags[:, t]))
    assert np.abs(fast - slow).max() < 1e-10


def test_stft_to_mel_zero_and_dims():
    fb = dsp.mel_filterbank(DESK.n_fft_bins, DESK.n_mels)
    assert np.all(dsp.stft_to_mel(np.zeros((DESK.n_fft_bins, 3)), fb) == 0.0)
    with pytest.raises(DimensionError):
        dsp.stft_to_mel(np.zeros((7, 3)), fb)


def test_mel_gradient_is_filter_row_sums():
    # d sum(mel) / d stft[f, t] = sum_m fb[f, m], independent of t
    fb = dsp.mel_filterbank(9, 4, rate=DESK.sample_rate)
    x = ad.param(np.random.default_rng(5).uniform(size=(9, 3)))
    out = ad.sum_all(dsp.stft_to_mel(x, fb))
    out.backward()
    expect = np.repeat(fb.sum(axis=1)[:, None], 3, axis=1)
    assert np.allclose(x.grad.data, expect, atol=1e-12)


def test_zero_chain_through_dsp():
    # zero waveform -> zero stft -> zero mel
    pipe = dsp.MelPipeline.from_profile(DESK)
    assert np.all(pipe.mel(np.zeros(DESK.clip_len)) == 0.0)


# -- scaling -----------------------------------------------------------------------


def test_log_standardize_round_trip():
    rng = np.random.default_rng(6)
    stats = dsp.fit_scaling_stats([rng.uniform(0.01, 2.0, size=(8, 4)) for _ in range(16)])
    mel = rng.uniform(0.0, 3.0, size=(8, 4))
    back = dsp.destandardize_exp(dsp.log_standardize(mel, stats), stats)
    rel = np.abs(back - mel) / np.maximum(mel, dsp.EPS_LOG)
    assert rel.max() < 1e-5


def test_scaling_stats_normalize_training_set():
    rng = np.random.default_rng(7)
    mels = [rng.uniform(0.05, 3.0, size=(6, 5)) for _ in range(400)]
    stats = dsp.fit_scaling_stats(mels)
    scaled = np.stack([dsp.log_standardize(m, stats) for m in mels])
    assert np.abs(scaled.mean(axis=0)).max() < 1e-6
    unfloored = stats.std > dsp.STD_FLOOR
    assert np.abs(scaled.var(axis=0)[unfloored] - 1.0).max() < 1e-6


def test_log_floor_keeps_zero_entries_finite():
    stats = dsp.ScalingStats(mean=np.zeros((2, 2)), std=np.ones((2, 2)))
    out = dsp.log_standardize(np.zeros((2, 2)), stats)
    assert np.all(np.isfinite(out))


def test_scaling_shape_mismatch():
    stats = dsp.ScalingStats(mean=np.zeros((2, 2)), std=np.ones((2, 2)))
    with pytest.raises(DimensionError):
        dsp.log_standardize(np.zeros((3, 2)), stats)
