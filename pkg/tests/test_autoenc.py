"""Conditional autoencoder: shape laws, MMD estimator, loss gradient."""

import numpy as np
import pytest

from ndf import autodiff as ad
from ndf.autoenc import (AutoencoderConfig, ConditionalAutoencoder, ImqKernel,
                         autoencoder_loss, decode, encode, imq_kernel,
                         mmd_u_statistic, per_class_regularizer,
                         sample_priors_for_batch)
from ndf.errors import ArityError, DimensionError, LabelError
from ndf.optim import grad_check
from ndf.profiles import DESK, FULL


def mmd_oracle(codes, prior, scale):
    """Brute-force double-loop U-statistic; the reference for the fast path."""
    n = len(codes)
    t1 = sum(imq_kernel(codes[l], codes[j], scale)
             for l in range(n) for j in range(n) if l != j)
    t2 = sum(imq_kernel(prior[l], prior[j], scale)
             for l in range(n) for j in range(n) if l != j)
    t3 = sum(imq_kernel(codes[l], prior[j], scale) for l in range(n) for j in range(n))
    return t1 / (n * (n - 1)) + t2 / (n * (n - 1)) - 2.0 * t3 / (n * n)


# -- kernel -------------------------------------------------------------------


def test_imq_kernel_identities():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=5), rng.normal(size=5)
    assert imq_kernel(a, a, 10.0) == 1.0
    assert imq_kernel(a, b, 10.0) == pytest.approx(imq_kernel(b, a, 10.0))


def test_imq_kernel_full_scale_constant():
    cfg = AutoencoderConfig.from_profile(FULL)
    assert cfg.latent_dim == 64
    assert cfg.kernel_scale == pytest.approx(128.0)
    a, b = np.zeros(64), np.ones(64)
    assert imq_kernel(a, b, cfg.kernel_scale) == pytest.approx(128.0 / (128.0 + 64.0))


def test_imq_kernel_dim_mismatch():
    with pytest.raises(DimensionError):
        imq_kernel(np.zeros(3), np.zeros(4), 1.0)


# -- MMD ------------------------------------------------------------------------


def test_mmd_matches_oracle_over_sizes_and_dims():
    rng = np.random.default_rng(1)
    for n in range(2, 17):
        for d in (1, 4, 16):
            codes = rng.normal(size=(n, d))
            prior = rng.normal(size=(n, d))
            fast = mmd_u_statistic(ad.const(codes), ad.const(prior),
                                   ImqKernel(2.0 * d)).item()
            assert abs(fast - mmd_oracle(codes, prior, 2.0 * d)) < 1e-10


def test_mmd_hand_case_two_points_1d():
    codes = np.array([[0.0], [1.0]])
    prior = np.array([[0.0], [1.0]])
    got = mmd_u_statistic(ad.const(codes), ad.const(prior), ImqKernel(1.0)).item()
    assert got == pytest.approx(mmd_oracle(codes, prior, 1.0))
    assert got == pytest.approx(-0.5)  # 2*(1/2)/2 twice, minus 2*(1+1/2+1/2+1)/4


def test_mmd_identical_sets_nonpositive():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(3, 4))
    assert mmd_u_statistic(ad.const(z), ad.const(z.copy()), ImqKernel(8.0)).item() <= 0.0


def test_mmd_permutation_invariant():
    rng = np.random.default_rng(3)
    codes, prior = rng.normal(size=(9, 5)), rng.normal(size=(9, 5))
    base = mmd_u_statistic(ad.const(codes), ad.const(prior), ImqKernel(10.0)).item()
    for _ in range(5):
        pc, pp = rng.permutation(9), rng.permutation(9)
        got = mmd_u_statistic(ad.const(codes[pc]), ad.const(prior[pp]),
                              ImqKernel(10.0)).item()
        assert got == pytest.approx(base, abs=1e-12)


def test_mmd_zero_mean_for_matching_distributions():
    rng = np.random.default_rng(4)
    vals = [mmd_u_statistic(ad.const(rng.normal(size=(24, 8))),
                            ad.const(rng.normal(size=(24, 8))),
                            ImqKernel(16.0)).item()
            for _ in range(100)]
    vals = np.array(vals)
    assert abs(vals.mean()) < 3.0 * vals.std(ddof=1) / np.sqrt(len(vals))


def test_mmd_arity_and_count_errors():
    with pytest.raises(ArityError):
        mmd_u_statistic(ad.const(np.zeros((1, 3))), ad.const(np.zeros((1, 3))),
                        ImqKernel(6.0))
    with pytest.raises(DimensionError):
        mmd_u_statistic(ad.const(np.zeros((3, 3))), ad.const(np.zeros((4, 3))),
                        ImqKernel(6.0))


# -- per-class regularizer ----------------------------------------------------------


def test_regularizer_single_class_reduces_to_mmd():
    rng = np.random.default_rng(5)
    codes = rng.normal(size=(6, 4))
    prior = rng.normal(size=(6, 4))
    labels = np.zeros(6, dtype=int)
    reg = per_class_regularizer(ad.const(codes), labels, {0: prior}, ImqKernel(8.0)).item()
    assert reg == pytest.approx(mmd_u_statistic(ad.const(codes), ad.const(prior),
                                                ImqKernel(8.0)).item())


def test_regularizer_symmetric_classes_agree_within_noise():
    rng = np.random.default_rng(6)
    per_class_terms = {0: [], 1: []}
    for _ in range(60):
        for cls in (0, 1):
            codes = rng.normal(size=(16, 4))
            prior = rng.normal(size=(16, 4))
            per_class_terms[cls].append(
                mmd_u_statistic(ad.const(codes), ad.const(prior), ImqKernel(8.0)).item())
    m0, m1 = np.mean(per_class_terms[0]), np.mean(per_class_terms[1])
    pooled = np.sqrt(np.var(per_class_terms[0]) / 60 + np.var(per_class_terms[1]) / 60)
    assert abs(m0 - m1) < 4.0 * pooled


def test_regularizer_eleven_classes():
    rng = np.random.default_rng(7)
    n_per = 4
    labels = np.repeat(np.arange(11), n_per)
    codes = rng.normal(size=(11 * n_per, 64))
    priors = {c: rng.normal(size=(n_per, 64)) for c in range(11)}
    reg = per_class_regularizer(ad.const(codes), labels, priors, ImqKernel(128.0))
    assert np.isfinite(reg.item())


def test_regularizer_missing_class_draws():
    labels = np.array([0, 0, 1, 1])
    codes = ad.const(np.zeros((4, 3)))
    with pytest.raises(LabelError):
        per_class_regularizer(codes, labels, {0: np.zeros((2, 3))}, ImqKernel(6.0))


def test_regularizer_nonnegative_in_expectation():
    rng = np.random.default_rng(8)
    codes = rng.normal(size=(12, 6))  # a fixed "posterior" that matches the prior
    vals = [mmd_u_statistic(ad.const(rng.normal(size=(12, 6))),
                            ad.const(rng.normal(size=(12, 6))), ImqKernel(12.0)).item()
            for _ in range(120)]
    stderr = np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert np.mean(vals) >= -3.0 * stderr


# -- encoder/decoder shapes -------------------------------------------------------------


def test_full_profile_shape_chain():
    cfg = AutoencoderConfig.from_profile(FULL)
    assert cfg.conv_shapes() == [(512, 86), (171, 43), (57, 22), (19, 11)]
    assert cfg.fc_sizes == (1024, 512)
    assert cfg.mmd_weight == 10.0


def test_desk_round_trip_shapes():
    cfg = AutoencoderConfig.from_profile(DESK)
    model = ConditionalAutoencoder(cfg, rng=np.random.default_rng(0))
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 1, DESK.n_mels, DESK.n_frames))
    labels = np.array([0, 1, 2, 0])
    codes = model.encode_batch(ad.const(x), labels, training=True)
    assert codes.shape == (4, DESK.latent_dim)
    recon = model.decode_batch(codes, labels, training=True)
    assert recon.shape == x.shape


def test_full_profile_round_trip_shapes():
    cfg = AutoencoderConfig.from_profile(FULL, n_classes=3)
    model = ConditionalAutoencoder(cfg, rng=np.random.default_rng(0))
    latent = encode(model, np.zeros((512, 86)), 0)
    assert latent.shape == (64,)
    spec = decode(model, latent, 0)
    assert spec.shape == (512, 86)


def test_decode_zero_latent_finite():
    cfg = AutoencoderConfig.from_profile(DESK)
    model = ConditionalAutoencoder(cfg, rng=np.random.default_rng(2))
    spec = decode(model, np.zeros(DESK.latent_dim), 1)
    assert np.all(np.isfinite(spec))


def test_class_conditioning_changes_codes():
    cfg = AutoencoderConfig.from_profile(DESK)
    model = ConditionalAutoencoder(cfg, rng=np.random.default_rng(3))
    # class affines start identical; perturb them so the condition can bite
    rng = np.random.default_rng(4)
    for name, p in model.params.items():
        if ".bn" in name:
            from ndf.tensor import Tensor
            p.value = Tensor(p.value.data + 0.2 * rng.normal(size=p.value.shape))
    x = rng.normal(size=(DESK.n_mels, DESK.n_frames))
    z0 = encode(model, x, 0)
    z1 = encode(model, x, 1)
    assert not np.allclose(z0, z1)


def test_encode_label_and_shape_errors():
    cfg = AutoencoderConfig.from_profile(DESK)
    model = ConditionalAutoencoder(cfg, rng=np.random.default_rng(5))
    with pytest.raises(LabelError):
        encode(model, np.zeros((DESK.n_mels, DESK.n_frames)), 99)
    with pytest.raises(DimensionError):
        encode(model, np.zeros((8, 8)), 0)
    with pytest.raises(DimensionError):
        decode(model, np.zeros(DESK.latent_dim + 1), 0)


# -- loss -----------------------------------------------------------------------


TOY = AutoencoderConfig(n_mels=8, n_frames=6, n_classes=2, latent_dim=3,
                        conv_channels=(2, 3, 4), fc_sizes=(6, 5))


def test_loss_parts_and_weight():
    model = ConditionalAutoencoder(TOY, rng=np.random.default_rng(6))
    assert model.config.mmd_weight == 10.0  # desk and full share the weighting
    rng = np.random.default_rng(7)
    x = rng.normal(size=(4, 1, 8, 6))
    labels = np.array([0, 0, 1, 1])
    priors = sample_priors_for_batch(labels, 3, np.random.default_rng(8))
    loss, parts = autoencoder_loss(model, x, labels, priors, training=True)
    assert loss.item() == pytest.approx(parts["mse_sum"] + 10.0 * parts["regularizer"])


def test_full_loss_gradient_toy():
    model = ConditionalAutoencoder(TOY, rng=np.random.default_rng(9))
    rng = np.random.default_rng(10)
    x = rng.normal(size=(4, 1, 8, 6))
    labels = np.array([0, 0, 1, 1])
    priors = sample_priors_for_batch(labels, 3, np.random.default_rng(11))

    def f():
        loss, _ = autoencoder_loss(model, x, labels, priors, training=True)
        return loss

    err = grad_check(f, model.parameters(), max_coords_per_param=5,
                     rng=np.random.default_rng(12))
    assert err < 1e-4


def test_overfit_eight_samples():
    # training oracle: 8 fixed samples, reconstruction collapses well below
    # the 0.05 per-element MSE bar, and the smoothed loss trends down
    from ndf import dsp
    from ndf.corpus import gen_synthetic_corpus
    from ndf.optim import Adam
    from ndf.profiles import DESK

    corpus = gen_synthetic_corpus(8, ("kick", "snare"), seed=11, clip_len=DESK.clip_len)
    pipe = dsp.MelPipeline.from_profile(DESK)
    items = corpus.train_items()[:8]
    mels = [pipe.mel(it.clip.samples) for it in items]
    stats = dsp.fit_scaling_stats(mels)
    xs = np.stack([dsp.log_standardize(m, stats) for m in mels])[:, None]
    ys = np.array([it.label for it in items])

    cfg = AutoencoderConfig(n_mels=DESK.n_mels, n_frames=DESK.n_frames, n_classes=2,
                            latent_dim=8, conv_channels=(8, 16, 32), fc_sizes=(256, 64))
    model = ConditionalAutoencoder(cfg, rng=np.random.default_rng(1))
    opt = Adam(model.parameters(), lr=2e-3)
    rng = np.random.default_rng(2)
    losses, recon_curve = [], []
    for _ in range(500):
        priors = sample_priors_for_batch(ys, cfg.latent_dim, rng)
        loss, parts = autoencoder_loss(model, xs, ys, priors, training=True)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
        recon_curve.append(parts["mse_sum"])

    codes = model.encode_batch(ad.const(xs), ys, training=True)
    recon = model.decode_batch(codes, ys, training=True)
    mse = float(((recon.data - xs) ** 2).mean())
    assert mse < 0.05

    # the total ends far below where it started; once reconstruction has
    # converged the fresh per-step prior draws leave only estimator noise, so
    # the monotone-trend check runs on the smoothed reconstruction term
    smooth_total = np.convolve(losses, np.ones(10) / 10, mode="valid")
    assert smooth_total[-1] < 0.1 * smooth_total[0]
    smooth_mse = np.convolve(recon_curve, np.ones(10) / 10, mode="valid")
    quarter = len(smooth_mse) // 4
    assert smooth_mse[-quarter:].max() < smooth_mse[:quarter].min()
