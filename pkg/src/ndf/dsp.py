"""Audio I/O and spectral transforms.

Everything here is a pure function; the STFT magnitude and the mel
projection also exist as differentiable graph ops because the waveform
estimator's losses are computed through them.
"""

import wave
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import autodiff as ad
from .errors import DegenerateInputError, DimensionError, FormatError

SAMPLE_RATE = 22050
EPS_LOG = 1e-4
STD_FLOOR = 1e-3
PCM_SCALE = 32768  # round-trip error stays within 1/32768


@dataclass
class AudioClip:
    """Mono waveform in [-1, 1]; original_len counts samples before padding."""

    samples: np.ndarray
    rate: int = SAMPLE_RATE
    original_len: int = -1

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise FormatError("AudioClip expects a 1-d sample vector")
        if self.original_len < 0:
            self.original_len = len(self.samples)


def load_wav(path):
    """Read a mono 16-bit PCM file at the canonical rate; clips over 1 s are rejected."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise FormatError(f"{path}: expected mono, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise FormatError(f"{path}: expected 16-bit PCM")
        if wf.getframerate() != SAMPLE_RATE:
            raise FormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {wf.getframerate()}")
        n = wf.getnframes()
        if n > SAMPLE_RATE:
            raise FormatError(f"{path}: longer than 1 second ({n} samples)")
        raw = wf.readframes(n)
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    return AudioClip(samples=samples, rate=SAMPLE_RATE, original_len=n)


def save_wav(path, clip):
    q = np.clip(np.rint(clip.samples * PCM_SCALE), -PCM_SCALE, PCM_SCALE - 1).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.rate)
        wf.writeframes(q.tobytes())


def preprocess(clip, clip_len):
    """Peak-normalize and zero-pad to the canonical length; returns (clip, mask).

    The mask marks the original support: mask[i] == 1 iff i < original_len.
    Idempotent on already-canonical clips. Silence is rejected.
    """
    n = clip.original_len
    if n <= 0 or n > clip_len:
        raise DimensionError(f"clip length {n} outside (0, {clip_len}]")
    x = clip.samples[:n]
    peak = np.max(np.abs(x))
    if peak == 0.0:
        raise DegenerateInputError("silent clip cannot be normalized")
    out = np.zeros(clip_len)
    out[:n] = x / peak
    mask = np.zeros(clip_len, dtype=np.uint8)
    mask[:n] = 1
    return AudioClip(samples=out, rate=clip.rate, original_len=n), mask


# -- STFT -------------------------------------------------------------------


def hann_window(win_len):
    n = np.arange(win_len)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / win_len))


def _frame_positions(sig_len, hop):
    if sig_len % hop != 0:
        raise DimensionError(f"signal length {sig_len} not a multiple of hop {hop}")
    return sig_len // hop


def _stft_mag_forward(x, window, hop, n_fft):
    win_len = len(window)
    pad = win_len // 2
    n_frames = _frame_positions(len(x), hop)
    padded = np.pad(x, (pad, pad), mode="reflect")
    frames = sliding_window_view(padded, win_len)[::hop][:n_frames]  # [T, win]
    spec = np.fft.rfft(frames * window, n=n_fft, axis=1)             # [T, bins]
    return np.abs(spec), spec, n_frames


def stft_magnitude(x, window, hop, n_fft):
    """Magnitude spectrogram [n_fft//2+1, T] with T == len(x)//hop.

    Frames are centered via symmetric reflect padding of win_len//2.
    Accepts a plain array or a DiffValue (differentiable w.r.t. the signal).
    """
    if not isinstance(x, ad.DiffValue):
        mag, _, _ = _stft_mag_forward(np.asarray(x, dtype=np.float64), window, hop, n_fft)
        return np.ascontiguousarray(mag.T)

    sig = x.data
    win_len = len(window)
    pad = win_len // 2
    mag, spec, n_frames = _stft_mag_forward(sig, window, hop, n_fft)
    out = np.ascontiguousarray(mag.T)  # [bins, T]

    def backward(g):
        gt = g.T  # [T, bins]
        safe = np.where(mag == 0.0, 1.0, mag)
        gc = np.where(mag == 0.0, 0.0, gt / safe) * spec  # complex, one-sided
        gc[:, 1:-1] *= 0.5                                # interior bins counted twice by irfft
        gframes = n_fft * np.fft.irfft(gc, n=n_fft, axis=1)[:, :win_len] * window
        gpad = np.zeros(len(sig) + 2 * pad)
        for t in range(n_frames):
            gpad[t * hop:t * hop + win_len] += gframes[t]
        gx = gpad[pad:pad + len(sig)].copy()
        gx[1:pad + 1] += gpad[:pad][::-1]                 # reflect-pad adjoint, left
        gx[len(sig) - 1 - pad:len(sig) - 1] += gpad[pad + len(sig):][::-1]
        x._accumulate(gx)

    return ad._make(out, (x,), backward)


# -- mel projection ----------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_fft_bins, n_mels, rate=SAMPLE_RATE):
    """Triangular filterbank [n_fft_bins, n_mels], each filter unit-sum.

    Spans 0 Hz to rate/2. Filters narrower than one FFT bin keep a single
    weight at the bin nearest their center so no mel bin is ever empty.
    """
    n_fft = (n_fft_bins - 1) * 2
    bin_hz = np.arange(n_fft_bins) * rate / n_fft
    pts = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(rate / 2.0), n_mels + 2))
    fb = np.zeros((n_fft_bins, n_mels))
    for m in range(n_mels):
        lo, cen, hi = pts[m], pts[m + 1], pts[m + 2]
        rising = (bin_hz - lo) / max(cen - lo, 1e-12)
        falling = (hi - bin_hz) / max(hi - cen, 1e-12)
        w = np.maximum(0.0, np.minimum(rising, falling))
        if w.sum() == 0.0:
            w[np.argmin(np.abs(bin_hz - cen))] = 1.0
        fb[:, m] = w / w.sum()
    return fb


def stft_to_mel(stft_mags, fb):
    """Project magnitudes [bins, T] to mel [n_mels, T]: mel = fb.T @ stft.

    Differentiable when stft_mags is a DiffValue (the projection is linear).
    """
    if not isinstance(stft_mags, ad.DiffValue):
        mags = np.asarray(stft_mags, dtype=np.float64)
        if mags.shape[0] != fb.shape[0]:
            raise DimensionError(f"stft bins {mags.shape[0]} != filterbank rows {fb.shape[0]}")
        return fb.T @ mags

    if stft_mags.shape[0] != fb.shape[0]:
        raise DimensionError(f"stft bins {stft_mags.shape[0]} != filterbank rows {fb.shape[0]}")

    def backward(g):
        stft_mags._accumulate(fb @ g)

    return ad._make(fb.T @ stft_mags.data, (stft_mags,), backward)


@dataclass
class MelPipeline:
    """Window/hop/FFT/filterbank bundle for one profile."""

    window: np.ndarray
    hop: int
    n_fft: int
    filterbank: np.ndarray

    @classmethod
    def from_profile(cls, profile):
        return cls(window=hann_window(profile.win_len), hop=profile.hop,
                   n_fft=profile.n_fft,
                   filterbank=mel_filterbank(profile.n_fft_bins, profile.n_mels,
                                             profile.sample_rate))

    def mel(self, x):
        """Mel magnitudes of a waveform (array or DiffValue)."""
        return stft_to_mel(stft_magnitude(x, self.window, self.hop, self.n_fft),
                           self.filterbank)


# -- log-scaling and per-element standardization ------------------------------


@dataclass
class ScalingStats:
    """Per-element mean/std of log-mel values over the training split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape:
            raise DimensionError("scaling stats mean/std shapes differ")
        if np.any(self.std <= 0):
            raise ValueError("scaling std must be positive")


def fit_scaling_stats(mels):
    """Fit ScalingStats from training-split mel spectrograms only."""
    logs = np.stack([np.log(np.asarray(m) + EPS_LOG) for m in mels])
    std = logs.std(axis=0)
    return ScalingStats(mean=logs.mean(axis=0), std=np.maximum(std, STD_FLOOR))


def log_standardize(mel, stats):
    mel = np.asarray(mel, dtype=np.float64)
    if mel.shape != stats.mean.shape:
        raise DimensionError(f"mel {mel.shape} vs stats {stats.mean.shape}")
    return (np.log(mel + EPS_LOG) - stats.mean) / stats.std


def destandardize_exp(scaled, stats):
    scaled = np.asarray(scaled, dtype=np.float64)
    if scaled.shape != stats.mean.shape:
        raise DimensionError(f"input {scaled.shape} vs stats {stats.mean.shape}")
    return np.maximum(np.exp(scaled * stats.std + stats.mean) - EPS_LOG, 0.0)
