"""Corpus generation, balanced batching, training loops, evaluation."""

import filecmp

import numpy as np
import pytest

from ndf import dsp, train
from ndf.autoenc import ConditionalAutoencoder, AutoencoderConfig
from ndf.corpus import gen_synthetic_corpus, load_corpus, save_corpus
from ndf.errors import ArityError, ConfigError, NumericError
from ndf.inverter import InverterConfig, MelInverter
from ndf.profiles import CLASS_NAMES, DESK, FULL
from ndf.train import balanced_batches, evaluate, train_autoencoder, train_inverter

SMALL = 24  # items per class: enough for one balanced batch per epoch


def small_corpus(seed=3):
    return gen_synthetic_corpus(SMALL, CLASS_NAMES, seed, DESK.clip_len)


# -- corpus ------------------------------------------------------------------


def test_corpus_deterministic_in_memory():
    a = gen_synthetic_corpus(8, CLASS_NAMES, seed=7, clip_len=DESK.clip_len)
    b = gen_synthetic_corpus(8, CLASS_NAMES, seed=7, clip_len=DESK.clip_len)
    for ia, ib in zip(a.items, b.items):
        assert np.array_equal(ia.clip.samples, ib.clip.samples)
        assert np.array_equal(ia.mask, ib.mask)
        assert (ia.label, ia.split, ia.name) == (ib.label, ib.split, ib.name)


def test_corpus_files_byte_identical(tmp_path):
    for d in ("one", "two"):
        save_corpus(gen_synthetic_corpus(6, CLASS_NAMES, seed=9, clip_len=DESK.clip_len),
                    tmp_path / d)
    cmp = filecmp.dircmp(tmp_path / "one", tmp_path / "two")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only


def test_corpus_shape_and_split():
    corpus = gen_synthetic_corpus(DESK.corpus_per_class, CLASS_NAMES, 0, DESK.clip_len)
    assert len(corpus.items) == 3 * 64
    for cls in range(3):
        items = [it for it in corpus.items if it.label == cls]
        assert len(items) == 64
        assert sum(it.split == "train" for it in items) == 51  # round(0.8 * 64)
        assert sum(it.split == "val" for it in items) == 13


def test_corpus_items_preprocessed():
    corpus = small_corpus()
    for it in corpus.items:
        n = it.clip.original_len
        assert 0 < n <= DESK.clip_len
        assert len(it.clip.samples) == DESK.clip_len
        assert np.abs(it.clip.samples).max() == pytest.approx(1.0)
        assert np.all(it.clip.samples[n:] == 0.0)
        assert it.mask.sum() == n
        assert 0.1 * DESK.clip_len * 0.9 <= n <= DESK.clip_len  # ~[0.1, 1.0] of L_c


def test_corpus_unknown_class():
    with pytest.raises(ConfigError):
        gen_synthetic_corpus(4, ("kick", "cowbell"), 0, DESK.clip_len)


def test_corpus_round_trip_via_files(tmp_path):
    corpus = small_corpus()
    save_corpus(corpus, tmp_path / "c")
    back = load_corpus(tmp_path / "c")
    assert back.class_names == corpus.class_names
    assert len(back.items) == len(corpus.items)
    for ia, ib in zip(corpus.items, back.items):
        assert ia.label == ib.label and ia.split == ib.split
        assert ia.clip.original_len == ib.clip.original_len
        assert np.abs(ia.clip.samples - ib.clip.samples).max() < 2.0 / 32768


# -- balanced batches -----------------------------------------------------------


def test_balanced_batches_counts():
    labels = np.repeat([0, 1, 2], 20)
    rng = np.random.default_rng(0)
    batches = list(balanced_batches(labels, 8, rng))
    assert len(batches) == 2  # 20 // 8 per class
    for idx in batches:
        assert len(idx) == 24
        got = np.bincount(labels[idx], minlength=3)
        assert np.all(got == 8)
    flat = np.concatenate(batches)
    assert len(set(flat.tolist())) == len(flat)  # no repeats within an epoch


def test_balanced_batches_profile_sizes():
    assert DESK.ae_batch_per_class * DESK.n_classes == 48
    assert FULL.ae_batch_per_class * FULL.n_classes == 704


def test_full_profile_training_constants():
    assert FULL.ae_iters == 110_000 and FULL.ae_lr == 1e-3
    assert FULL.inv_iters == 50_000 and FULL.inv_lr == 1e-4 and FULL.inv_batch == 128


def test_balanced_batches_arity():
    with pytest.raises(ArityError):
        list(balanced_batches(np.array([0, 1]), 1, np.random.default_rng(0)))


# -- training loops ---------------------------------------------------------------


def test_autoencoder_training_deterministic():
    corpus = small_corpus()
    m1, _, c1 = train_autoencoder(corpus, DESK, seed=5, iters=8)
    m2, _, c2 = train_autoencoder(corpus, DESK, seed=5, iters=8)
    for k in m1.params:
        assert np.array_equal(m1.params[k].value.data, m2.params[k].value.data), k
    assert c1 == c2


def test_inverter_training_deterministic():
    corpus = small_corpus()
    m1, c1 = train_inverter(corpus, DESK, seed=5, iters=4)
    m2, c2 = train_inverter(corpus, DESK, seed=5, iters=4)
    for k in m1.params:
        assert np.array_equal(m1.params[k].value.data, m2.params[k].value.data), k
    assert c1 == c2


def test_scaling_stats_fit_on_train_split_only():
    corpus = small_corpus()
    pipeline = dsp.MelPipeline.from_profile(DESK)
    stats_before, _ = train.prepare_autoencoder_data(corpus, pipeline)
    # corrupting every validation item must not move the statistics
    for it in corpus.val_items():
        it.clip.samples = np.roll(it.clip.samples, 13)
    stats_after, _ = train.prepare_autoencoder_data(corpus, pipeline)
    assert np.array_equal(stats_before.mean, stats_after.mean)
    assert np.array_equal(stats_before.std, stats_after.std)


def test_training_aborts_on_nan(monkeypatch):
    corpus = small_corpus()

    def poisoned(*args, **kwargs):
        raise NumericError("synthetic NaN")

    monkeypatch.setattr(train, "autoencoder_loss", poisoned)
    with pytest.raises(NumericError, match="iteration"):
        train_autoencoder(corpus, DESK, seed=0, iters=4)


def test_checkpointed_model_beats_final_val(desk_rig):
    curves = desk_rig["ae_curves"]
    best_row = min(curves, key=lambda c: c["val_loss"])
    assert best_row["val_loss"] <= curves[-1]["val_loss"] + 1e-12
    # the returned model is the checkpointed one: re-measuring it with the best
    # epoch's prior-draw seed reproduces that epoch's recorded loss exactly
    corpus = desk_rig["corpus"]
    stats, data = train.prepare_autoencoder_data(corpus, desk_rig["pipeline"])
    mse, val_loss = train._ae_val_metrics(desk_rig["bundle"].autoencoder, data,
                                          desk_rig["seed"], epoch=best_row["epoch"])
    assert val_loss == pytest.approx(best_row["val_loss"], abs=1e-9)
    assert mse == pytest.approx(best_row["val_mse"], abs=1e-9)


# -- evaluation -------------------------------------------------------------------


def test_evaluate_metrics_finite_and_improve(desk_rig):
    corpus = desk_rig["corpus"]
    bundle = desk_rig["bundle"]
    trained = evaluate(bundle.autoencoder, bundle.inverter, bundle.scaling_stats,
                       corpus, DESK, seed=1)
    fresh_ae = ConditionalAutoencoder(AutoencoderConfig.from_profile(DESK),
                                      rng=np.random.default_rng(99))
    fresh_inv = MelInverter(InverterConfig.from_profile(DESK),
                            rng=np.random.default_rng(99))
    untrained = evaluate(fresh_ae, fresh_inv, bundle.scaling_stats, corpus, DESK, seed=1)

    for metrics in (trained, untrained):
        for key, v in metrics.items():
            if key == "per_class_mmd":
                assert all(np.isfinite(x) for x in v.values())
            else:
                assert np.isfinite(v)

    assert trained["ae_val_mse"] < untrained["ae_val_mse"]
    assert trained["inv_sc"] < untrained["inv_sc"]
    assert trained["inv_sc_log"] < untrained["inv_sc_log"]
    assert trained["inv_mask_bce"] < untrained["inv_mask_bce"]
    assert trained["inv_mask_acc"] > untrained["inv_mask_acc"]
    assert trained["e2e_sc"] < untrained["e2e_sc"]
    assert (np.mean(list(trained["per_class_mmd"].values()))
            < np.mean(list(untrained["per_class_mmd"].values())))
    # sanity ordering, logged not asserted
    print(f"\n[evaluate] e2e SC {trained['e2e_sc']:.3f} vs inverter-only "
          f"{trained['inv_sc']:.3f} (+ae recon penalty)")
    print(train.format_report(trained))


def test_binarized_mask_zeroes_learned_tails(desk_rig):
    # on items whose tail region the mask head classifies perfectly, the
    # binarized-mask product is exactly zero beyond the original support
    from ndf.inverter import binarize_mask
    pipeline = desk_rig["pipeline"]
    inv = desk_rig["bundle"].inverter
    checked = 0
    for it in desk_rig["corpus"].train_items()[:40]:
        out = inv.forward_batch(pipeline.mel(it.clip.samples)[None], training=False)
        bm = binarize_mask(out["mask_prob"].data[0])
        n = it.clip.original_len
        if n < len(bm) and np.all(bm[n:] == 0):
            wave = out["wave_pre"].data[0] * bm
            assert np.all(wave[n:] == 0.0)
            checked += 1
    assert checked > 0  # the trained mask nails at least some tails exactly
