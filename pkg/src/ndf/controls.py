"""PCA control surface over the latent space and end-to-end sound generation."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dsp
from .autoenc import decode
from .errors import ConfigError, DimensionError, StateError
from .inverter import binarize_mask

CONTROL_LIMIT = 8.0  # |p_i| beyond this is clamped; ~8 sigma of the prior


@dataclass
class PcaBasis:
    """Mean plus top-k orthonormal directions ordered by explained variance."""

    mean: np.ndarray
    components: np.ndarray          # [k, d] rows
    explained_variance: np.ndarray  # [k] non-increasing
    effective_rank: int = -1

    def __post_init__(self):
        if self.components.shape[1] != self.mean.shape[0]:
            raise DimensionError("component width must match the mean dimension")
        if np.any(np.diff(self.explained_variance) > 1e-12):
            raise ValueError("explained variance must be non-increasing")
        if self.effective_rank < 0:
            self.effective_rank = self.components.shape[0]


def fit_pca(latents, k=3):
    """Covariance-eigendecomposition PCA of row vectors; top-k components.

    Rank-deficient inputs are flagged through effective_rank (number of
    kept components whose eigenvalue is numerically meaningful).
    """
    x = np.asarray(latents, dtype=np.float64)
    n, d = x.shape
    if n <= k:
        raise DimensionError(f"need more than {k} rows to fit {k} components, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigval, eigvec = np.linalg.eigh(cov)
    order = np.argsort(eigval)[::-1][:k]
    comps = eigvec[:, order].T
    var = np.maximum(eigval[order], 0.0)
    # deterministic sign: largest-magnitude coordinate of each component positive
    for i in range(comps.shape[0]):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    tol = max(var[0], 1e-30) * 1e-9
    return PcaBasis(mean=mean, components=comps, explained_variance=var,
                    effective_rank=int((var > tol).sum()))


@dataclass(frozen=True)
class ControlPoint:
    """Knob state (p1, p2, p3) plus the target category."""

    p1: float
    p2: float
    p3: float
    category: int
    limit: float = CONTROL_LIMIT

    def __post_init__(self):
        vals = (self.p1, self.p2, self.p3)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("control values must be finite")
        clamped = tuple(float(np.clip(v, -self.limit, self.limit)) for v in vals)
        object.__setattr__(self, "p1", clamped[0])
        object.__setattr__(self, "p2", clamped[1])
        object.__setattr__(self, "p3", clamped[2])


def control_to_latent(basis, point):
    """z = mean + p1*c1 + p2*c2 + p3*c3; discarded directions stay at the mean."""
    if basis is None:
        raise StateError("no PCA basis fitted/loaded")
    k = basis.components.shape[0]
    if k < 3:
        raise StateError(f"basis holds {k} components; the control surface needs 3")
    p = np.array([point.p1, point.p2, point.p3])
    return basis.mean + p @ basis.components[:3]


def sample_prior(latent_dim, seed=None, rng=None):
    """One z ~ N(0, I); pair it with a class id when decoding."""
    rng = rng or np.random.default_rng(seed)
    return rng.standard_normal(latent_dim)


def generate(bundle, latent, class_id):
    """Latent + class -> AudioClip through decode, de-standardize, invert, mask.

    Pure function of (weights, latent, class): byte-identical outputs for
    identical inputs. Output samples are clamped to [-1, 1].
    """
    cfg = bundle.autoencoder.config
    if bundle.scaling_stats.mean.shape != (cfg.n_mels, cfg.n_frames):
        raise ConfigError("scaling stats shape does not match the autoencoder profile")
    if bundle.inverter.config.n_mels != cfg.n_mels:
        raise ConfigError("inverter mel bins do not match the autoencoder profile")
    scaled = decode(bundle.autoencoder, latent, class_id)
    mel = dsp.destandardize_exp(scaled, bundle.scaling_stats)
    out = bundle.inverter.forward_batch(mel[None], training=False)
    mask = binarize_mask(out["mask_prob"].data[0])
    wave = np.clip(out["wave_pre"].data[0] * mask, -1.0, 1.0)
    ones = np.flatnonzero(mask)
    original_len = int(ones[-1]) + 1 if len(ones) else len(wave)
    return dsp.AudioClip(samples=wave, rate=bundle.sample_rate, original_len=original_len)
