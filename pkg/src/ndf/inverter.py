"""Multi-head transposed-convolution spectrogram inverter.

Each head upsamples the mel spectrogram to waveform rate through strided
1-d transposed convolutions (stride^layers == hop) and emits two channels:
a waveform estimate and a mask logit. Head waveforms are blended with
trainable gains, squashed by a trainable scaled softsign, and multiplied by
the estimated support mask - sigmoid of the summed logits while training,
binarized at generation. No layer carries a bias, so an all-zero input
yields an exactly all-zero waveform.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dsp
from .errors import ConfigError, DegenerateInputError, DimensionError


def default_channels(n_layers):
    """Output channels in application order: 1, 2, ..., 2^(L-2), then 2.

    The final layer always has 2 channels (waveform + mask logit).
    """
    return tuple(2 ** i for i in range(n_layers - 1)) + (2,)


@dataclass(frozen=True)
class InverterConfig:
    n_mels: int
    n_heads: int = 8
    n_layers: int = 8
    filter_width: int = 13
    stride: int = 2
    channels: tuple = None
    loss_weights: tuple = (3.0, 10.0, 1.0)  # spectral, log-spectral, mask

    def __post_init__(self):
        if self.channels is None:
            object.__setattr__(self, "channels", default_channels(self.n_layers))
        if len(self.channels) != self.n_layers:
            raise ConfigError("one channel count per layer required")
        if self.channels[-1] != 2:
            raise ConfigError("final layer must emit 2 channels (waveform + mask)")

    @property
    def upsampling(self):
        return self.stride ** self.n_layers

    @classmethod
    def from_profile(cls, profile, channels=None):
        return cls(n_mels=profile.n_mels, n_heads=profile.inv_heads,
                   n_layers=profile.inv_layers, filter_width=profile.inv_filter,
                   stride=profile.inv_stride,
                   channels=channels if channels is not None else profile.inv_channels,
                   loss_weights=tuple(profile.inv_loss_weights))


class MelInverter:
    """Parameter container plus the batched forward pass."""

    def __init__(self, config, rng=None):
        rng = rng or np.random.default_rng(0)
        self.config = config
        self.params = {}
        f = config.filter_width
        chans = (config.n_mels,) + tuple(config.channels)
        for h in range(config.n_heads):
            for l in range(config.n_layers):
                w = rng.uniform(-1, 1, size=(chans[l], chans[l + 1], f))
                w *= np.sqrt(6.0 / (chans[l] * f))
                self._add(f"head{h}.layer{l}.weight", w)
            self._add(f"head{h}.gain", np.asarray(1.0 / config.n_heads))
        self._add("softsign_scale", np.asarray(1.0))

    def _add(self, name, arr):
        self.params[name] = ad.param(arr, name=name)

    def parameters(self):
        return list(self.params.values())

    def forward_batch(self, mel, training):
        """mel: [N, n_mels, T] array or DiffValue -> dict with wave/mask DiffValues.

        wave has length upsampling * T. In training mode the wave is scaled by
        the soft mask; pick `wave_soft` vs binarized masking downstream.
        """
        c = self.config
        x = ad.as_diff(mel)
        if x.value.ndim != 3 or x.shape[1] != c.n_mels:
            raise DimensionError(f"inverter input {x.shape} != (N, {c.n_mels}, T)")
        t_in = x.shape[2]
        wave_sum = None
        logit_sum = None
        for h in range(c.n_heads):
            hidden = x
            t = t_in
            for l in range(c.n_layers):
                t *= c.stride
                hidden = ad.conv_transpose1d(hidden, self.params[f"head{h}.layer{l}.weight"],
                                             c.stride, t)
                if l < c.n_layers - 1:
                    hidden = ad.elu(hidden)
            wave_h = ad.scale(ad.channel(hidden, 0), self.params[f"head{h}.gain"])
            logit_h = ad.channel(hidden, 1)
            wave_sum = wave_h if wave_sum is None else wave_sum + wave_h
            logit_sum = logit_h if logit_sum is None else logit_sum + logit_h
        wave_pre = ad.scaled_softsign(wave_sum, self.params["softsign_scale"])
        mask_prob = ad.sigmoid(logit_sum)
        return {"wave_pre": wave_pre, "mask_prob": mask_prob,
                "wave_soft": ad.mul(wave_pre, mask_prob)}


def binarize_mask(mask_prob, threshold=0.5):
    """Threshold the soft mask; ties at the threshold map to 1."""
    arr = mask_prob.data if isinstance(mask_prob, ad.DiffValue) else np.asarray(mask_prob)
    return (arr >= threshold).astype(np.uint8)


def invert(model, mel):
    """Generation-time path: spectrogram [n_mels, T] -> masked waveform array."""
    out = model.forward_batch(np.asarray(mel, dtype=np.float64)[None], training=False)
    wave = out["wave_pre"].data[0]
    mask = binarize_mask(out["mask_prob"].data[0])
    return wave * mask, mask


# -- losses -------------------------------------------------------------------


def _ref_mel(pipeline, ref_wave):
    mel = pipeline.mel(np.asarray(ref_wave, dtype=np.float64))
    norm = np.linalg.norm(mel)
    if norm == 0.0:
        raise DegenerateInputError("reference waveform is silent")
    return mel, norm


def sc_loss(pipeline, ref_wave, est_wave):
    """Spectral convergence: relative Frobenius gap between mel magnitudes.

    Differentiable when est_wave is a DiffValue. 0 iff magnitudes match;
    exactly 1 for an all-zero estimate.
    """
    ref_mel, ref_norm = _ref_mel(pipeline, ref_wave)
    est = ad.as_diff(est_wave)
    if est.shape != np.asarray(ref_wave).shape:
        raise DimensionError(f"waveform lengths differ: {est.shape} vs {np.shape(ref_wave)}")
    diff = dsp.stft_to_mel(dsp.stft_magnitude(est, pipeline.window, pipeline.hop,
                                              pipeline.n_fft), pipeline.filterbank)
    num = ad.sqrt(ad.sum_all(ad.square(diff - ad.const(ref_mel))))
    return ad.mul_scalar(num, 1.0 / ref_norm)


def sc_log_loss(pipeline, ref_wave, est_wave, eps=dsp.EPS_LOG):
    """L1 gap between log mel magnitudes, normalized by the reference's L1 mass."""
    ref_mel, _ = _ref_mel(pipeline, ref_wave)
    log_ref = np.log(ref_mel + eps)
    denom = np.abs(log_ref).sum()
    if denom == 0.0:
        raise DegenerateInputError("log-mel reference has zero L1 norm")
    est = ad.as_diff(est_wave)
    mel_est = dsp.stft_to_mel(dsp.stft_magnitude(est, pipeline.window, pipeline.hop,
                                                 pipeline.n_fft), pipeline.filterbank)
    gap = ad.sum_all(ad.absolute(ad.log(ad.add_scalar(mel_est, eps)) - ad.const(log_ref)))
    return ad.mul_scalar(gap, 1.0 / denom)


def mask_loss(mask_ref, mask_prob):
    """Mean binary cross-entropy; probabilities are clamped to (1e-7, 1-1e-7)."""
    ref = np.asarray(mask_ref, dtype=np.float64)
    est = ad.as_diff(mask_prob)
    if est.shape != ref.shape:
        raise DimensionError(f"mask shapes differ: {est.shape} vs {ref.shape}")
    p = ad.clamp(est, 1e-7, 1.0 - 1e-7)
    pos = ad.mul_const(ad.log(p), ref)
    neg = ad.mul_const(ad.log(ad.add_scalar(ad.neg(p), 1.0)), 1.0 - ref)
    return ad.mul_scalar(ad.mean_all(pos + neg), -1.0)


def total_loss(pipeline, ref_wave, est_wave, mask_ref, mask_prob, weights=(3.0, 10.0, 1.0)):
    """Weighted sum of the three terms; returns (loss, parts dict of floats)."""
    alpha, beta, gamma = weights
    sc = sc_loss(pipeline, ref_wave, est_wave)
    sl = sc_log_loss(pipeline, ref_wave, est_wave)
    bce = mask_loss(mask_ref, mask_prob)
    loss = ad.mul_scalar(sc, alpha) + ad.mul_scalar(sl, beta) + ad.mul_scalar(bce, gamma)
    return loss, {"sc": sc.item(), "sc_log": sl.item(), "mask_bce": bce.item()}
