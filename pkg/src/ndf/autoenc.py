"""Conditional spectrogram autoencoder with an MMD prior-matching penalty.

The encoder is a deterministic point map: three strided conv layers with
class-conditional batch norm, then fully-connected layers down to the
latent dimension. The decoder mirrors it (FC first, transposed convs after,
one-hot class appended to the latent). The training loss adds, per class,
the squared maximum mean discrepancy between encoded codes and fresh draws
from a standard normal prior, estimated by the unbiased U-statistic.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState
from .errors import ArityError, DimensionError, LabelError
from .tensor import Tensor

KERNEL_HW = (11, 5)
STRIDE_HW = (3, 2)
PAD_HW = (5, 2)


@dataclass(frozen=True)
class AutoencoderConfig:
    n_mels: int
    n_frames: int
    n_classes: int
    latent_dim: int
    conv_channels: tuple = (16, 32, 64)
    fc_sizes: tuple = (1024, 512)
    mmd_weight: float = 10.0

    @property
    def kernel_scale(self):
        # inverse-multiquadratics constant: 2 * d_z * sigma^2 with sigma^2 = 1
        return 2.0 * self.latent_dim

    def conv_shapes(self):
        """Spatial shape after each encoder conv layer, starting at the input."""
        shapes = [(self.n_mels, self.n_frames)]
        for _ in self.conv_channels:
            shapes.append(ad.conv2d_output_shape(shapes[-1], KERNEL_HW, STRIDE_HW, PAD_HW))
        return shapes

    @property
    def flat_dim(self):
        h, w = self.conv_shapes()[-1]
        return self.conv_channels[-1] * h * w

    @classmethod
    def from_profile(cls, profile, n_classes=None):
        return cls(n_mels=profile.n_mels, n_frames=profile.n_frames,
                   n_classes=n_classes or profile.n_classes,
                   latent_dim=profile.latent_dim,
                   conv_channels=tuple(profile.enc_channels),
                   fc_sizes=tuple(profile.fc_sizes),
                   mmd_weight=profile.mmd_weight)


def _he_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ConditionalAutoencoder:
    """Parameter container plus forward passes; training=True uses batch stats."""

    def __init__(self, config, rng=None):
        rng = rng or np.random.default_rng(0)
        self.config = config
        self.params = {}
        self.bn_states = {}
        kh, kw = KERNEL_HW
        c = config

        chans = (1,) + tuple(c.conv_channels)
        for i in range(len(c.conv_channels)):
            self._add(f"enc.conv{i}.weight",
                      _he_uniform(rng, (chans[i + 1], chans[i], kh, kw), chans[i] * kh * kw))
            self._add(f"enc.bn{i}.gamma", np.ones((c.n_classes, chans[i + 1])))
            self._add(f"enc.bn{i}.beta", np.zeros((c.n_classes, chans[i + 1])))
            self.bn_states[f"enc.bn{i}"] = BatchNormState(chans[i + 1])

        fc_dims = (c.flat_dim,) + tuple(c.fc_sizes) + (c.latent_dim,)
        for i in range(len(fc_dims) - 1):
            self._add(f"enc.fc{i}.weight", _he_uniform(rng, (fc_dims[i], fc_dims[i + 1]), fc_dims[i]))
            self._add(f"enc.fc{i}.bias", np.zeros(fc_dims[i + 1]))

        dec_dims = (c.latent_dim + c.n_classes,) + tuple(reversed(c.fc_sizes)) + (c.flat_dim,)
        for i in range(len(dec_dims) - 1):
            self._add(f"dec.fc{i}.weight", _he_uniform(rng, (dec_dims[i], dec_dims[i + 1]), dec_dims[i]))
            self._add(f"dec.fc{i}.bias", np.zeros(dec_dims[i + 1]))

        rev = tuple(reversed(chans))  # e.g. (64, 32, 16, 1)
        for i in range(len(c.conv_channels)):
            self._add(f"dec.conv{i}.weight",
                      _he_uniform(rng, (rev[i], rev[i + 1], kh, kw), rev[i] * kh * kw))
            if i < len(c.conv_channels) - 1:
                self._add(f"dec.bn{i}.gamma", np.ones((c.n_classes, rev[i + 1])))
                self._add(f"dec.bn{i}.beta", np.zeros((c.n_classes, rev[i + 1])))
                self.bn_states[f"dec.bn{i}"] = BatchNormState(rev[i + 1])

    def _add(self, name, arr):
        self.params[name] = ad.param(arr, name=name)

    def parameters(self):
        return list(self.params.values())

    def _check_labels(self, class_ids):
        ids = np.atleast_1d(np.asarray(class_ids, dtype=np.intp))
        if ids.min() < 0 or ids.max() >= self.config.n_classes:
            raise LabelError(f"class id outside [0, {self.config.n_classes})")
        return ids

    # -- forward ----------------------------------------------------------

    def encode_batch(self, x, class_ids, training):
        """x: DiffValue [N, 1, n_mels, n_frames] -> codes DiffValue [N, latent_dim]."""
        c = self.config
        ids = self._check_labels(class_ids)
        if x.shape[1:] != (1, c.n_mels, c.n_frames):
            raise DimensionError(f"encoder input {x.shape} != (N, 1, {c.n_mels}, {c.n_frames})")
        h = x
        for i in range(len(c.conv_channels)):
            h = ad.conv2d(h, self.params[f"enc.conv{i}.weight"], STRIDE_HW, PAD_HW)
            h = ad.cond_batch_norm(h, self.params[f"enc.bn{i}.gamma"],
                                   self.params[f"enc.bn{i}.beta"], ids,
                                   self.bn_states[f"enc.bn{i}"], training)
            h = ad.relu(h)
        h = ad.reshape(h, (x.shape[0], c.flat_dim))
        n_fc = len(c.fc_sizes) + 1
        for i in range(n_fc):
            h = ad.linear(h, self.params[f"enc.fc{i}.weight"], self.params[f"enc.fc{i}.bias"])
            if i < n_fc - 1:
                h = ad.relu(h)
        return h

    def decode_batch(self, codes, class_ids, training):
        """codes: DiffValue [N, latent_dim] -> DiffValue [N, 1, n_mels, n_frames]."""
        c = self.config
        ids = self._check_labels(class_ids)
        if codes.shape[1] != c.latent_dim:
            raise DimensionError(f"latent dim {codes.shape[1]} != {c.latent_dim}")
        onehot = np.zeros((codes.shape[0], c.n_classes))
        onehot[np.arange(codes.shape[0]), ids] = 1.0
        h = ad.concat([codes, ad.const(onehot)], axis=1)
        for i in range(len(c.fc_sizes) + 1):
            h = ad.linear(h, self.params[f"dec.fc{i}.weight"], self.params[f"dec.fc{i}.bias"])
            h = ad.relu(h)
        shapes = self.config.conv_shapes()
        h = ad.reshape(h, (codes.shape[0], c.conv_channels[-1]) + shapes[-1])
        n_conv = len(c.conv_channels)
        for i in range(n_conv):
            target = shapes[n_conv - 1 - i]
            h = ad.conv_transpose2d(h, self.params[f"dec.conv{i}.weight"], STRIDE_HW, target)
            if i < n_conv - 1:
                h = ad.cond_batch_norm(h, self.params[f"dec.bn{i}.gamma"],
                                       self.params[f"dec.bn{i}.beta"], ids,
                                       self.bn_states[f"dec.bn{i}"], training)
                h = ad.relu(h)
        return h


def encode(model, x, class_id):
    """Single standardized log-mel [n_mels, n_frames] -> latent vector [latent_dim]."""
    arr = x.data if isinstance(x, ad.DiffValue) else np.asarray(x, dtype=np.float64)
    batch = ad.const(arr[None, None])
    return model.encode_batch(batch, [int(class_id)], training=False).data[0].copy()


def decode(model, latent, class_id):
    """Latent vector -> standardized log-mel [n_mels, n_frames]."""
    arr = np.asarray(latent, dtype=np.float64)
    if arr.shape != (model.config.latent_dim,):
        raise DimensionError(f"latent shape {arr.shape} != ({model.config.latent_dim},)")
    out = model.decode_batch(ad.const(arr[None]), [int(class_id)], training=False)
    return out.data[0, 0].copy()


# -- MMD ---------------------------------------------------------------------


def imq_kernel(a, b, scale):
    """Inverse multiquadratics on a single pair: scale / (scale + ||a-b||^2)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"kernel arguments {a.shape} vs {b.shape}")
    return scale / (scale + float(((a - b) ** 2).sum()))


@dataclass(frozen=True)
class ImqKernel:
    """Matrix form of imq_kernel for batched MMD terms."""

    scale: float

    def matrix(self, rows_a, rows_b):
        d = ad.pairwise_sqdist(rows_a, rows_b)
        return ad.mul_scalar(ad.reciprocal(ad.add_scalar(d, self.scale)), self.scale)


def mmd_u_statistic(codes, prior_samples, kernel):
    """Unbiased squared-MMD estimate between encoded codes and prior draws.

    Both inputs are [n, d] with equal n >= 2. Diagonals are excluded from the
    two within-set terms; the cross term keeps all pairs. Differentiable in
    `codes`; the prior draws are constants.
    """
    codes = ad.as_diff(codes)
    prior = ad.as_diff(prior_samples)
    n = codes.shape[0]
    if prior.shape[0] != n:
        raise DimensionError(f"need equal sample counts, got {n} vs {prior.shape[0]}")
    if n < 2:
        raise ArityError("the U-statistic needs n >= 2")
    off_diag = 1.0 - np.eye(n)
    k_cc = ad.sum_all(ad.mul_const(kernel.matrix(codes, codes), off_diag))
    k_pp = ad.sum_all(ad.mul_const(kernel.matrix(prior, prior), off_diag))
    k_cp = ad.sum_all(kernel.matrix(codes, prior))
    w = 1.0 / (n * (n - 1))
    return ad.mul_scalar(k_cc, w) + ad.mul_scalar(k_pp, w) + ad.mul_scalar(k_cp, -2.0 / (n * n))


def per_class_regularizer(codes, labels, prior_by_class, kernel):
    """Mean over classes of per-class MMD^2 against class-wise N(0, I) draws.

    `prior_by_class` maps class id -> array with as many draws as that class
    has codes in the batch. Every class in `labels` must appear with >= 2 codes.
    """
    labels = np.asarray(labels)
    classes = sorted(set(int(v) for v in labels))
    terms = []
    for cls in classes:
        idx = np.flatnonzero(labels == cls)
        if len(idx) < 2:
            raise ArityError(f"class {cls} has {len(idx)} codes; need >= 2")
        if cls not in prior_by_class:
            raise LabelError(f"prior sampler provided no draws for class {cls}")
        draws = np.asarray(prior_by_class[cls])
        if draws.shape[0] != len(idx):
            raise DimensionError(f"class {cls}: {draws.shape[0]} prior draws for {len(idx)} codes")
        terms.append(mmd_u_statistic(ad.take_rows(codes, idx), ad.const(draws), kernel))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return ad.mul_scalar(total, 1.0 / len(classes))


def sample_priors_for_batch(labels, latent_dim, rng):
    labels = np.asarray(labels)
    return {int(cls): rng.standard_normal((int((labels == cls).sum()), latent_dim))
            for cls in sorted(set(int(v) for v in labels))}


def autoencoder_loss(model, batch, labels, prior_by_class, training=True):
    """Summed per-sample reconstruction MSE plus the weighted MMD regularizer.

    batch: [N, 1, n_mels, n_frames] standardized log-mels (array or DiffValue).
    Returns (loss DiffValue, parts dict with float mse_sum/regularizer).
    """
    x = ad.as_diff(batch)
    n = x.shape[0]
    per_sample = x.value.size // n
    codes = model.encode_batch(x, labels, training)
    recon = model.decode_batch(codes, labels, training)
    mse_sum = ad.mul_scalar(ad.sum_all(ad.square(recon - x)), 1.0 / per_sample)
    kernel = ImqKernel(model.config.kernel_scale)
    reg = per_class_regularizer(codes, labels, prior_by_class, kernel)
    loss = mse_sum + ad.mul_scalar(reg, model.config.mmd_weight)
    return loss, {"mse_sum": mse_sum.item(), "regularizer": reg.item()}


def snapshot_params(model):
    """Copy all trainable parameters plus batch-norm running statistics.

    Running stats belong to the snapshot: a best-validation checkpoint must
    reproduce that epoch's eval-mode behavior exactly.
    """
    snap = {"params": {k: v.value.data.copy() for k, v in model.params.items()}}
    if hasattr(model, "bn_states"):
        snap["bn"] = {k: (st.running_mean.copy(), st.running_var.copy())
                      for k, st in model.bn_states.items()}
    return snap


def restore_params(model, snap):
    for k, v in model.params.items():
        v.value = Tensor(snap["params"][k].copy())
    for k, (rm, rv) in snap.get("bn", {}).items():
        model.bn_states[k].running_mean = rm.copy()
        model.bn_states[k].running_var = rv.copy()
