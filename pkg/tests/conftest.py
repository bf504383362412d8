"""Shared fixtures.

`desk_rig` runs the whole desk-profile pipeline once per session (corpus,
both trainings at the full 2000-iteration budget, PCA, checkpoint) and is
reused by the acceptance suite and the evaluation tests.
"""

import time

import numpy as np
import pytest

from ndf import autodiff as ad
from ndf import dsp, train
from ndf.checkpoint import Bundle, load_bundle, save_bundle
from ndf.controls import fit_pca
from ndf.corpus import gen_synthetic_corpus
from ndf.profiles import CLASS_NAMES, DESK

RIG_SEED = 7


@pytest.fixture(scope="session")
def desk_rig(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_rig")
    timings = {}

    t0 = time.time()
    corpus = gen_synthetic_corpus(DESK.corpus_per_class, CLASS_NAMES, RIG_SEED, DESK.clip_len)
    timings["gen_data"] = time.time() - t0

    t0 = time.time()
    ae_model, stats, ae_curves = train.train_autoencoder(corpus, DESK, RIG_SEED)
    timings["train_autoencoder"] = time.time() - t0

    t0 = time.time()
    inv_model, inv_curves = train.train_inverter(corpus, DESK, RIG_SEED)
    timings["train_inverter"] = time.time() - t0

    t0 = time.time()
    pipeline = dsp.MelPipeline.from_profile(DESK)
    items = corpus.train_items()
    xs = np.stack([dsp.log_standardize(pipeline.mel(it.clip.samples), stats)
                   for it in items])[:, None]
    ys = np.array([it.label for it in items])
    codes = ae_model.encode_batch(ad.const(xs), ys, training=False).data
    pca = fit_pca(codes, k=3)
    timings["pca_fit"] = time.time() - t0

    bundle = Bundle(autoencoder=ae_model, inverter=inv_model, scaling_stats=stats,
                    profile_name=DESK.name, class_names=corpus.class_names,
                    sample_rate=DESK.sample_rate, pca=pca)
    ckpt = out / "desk.npz"
    save_bundle(ckpt, bundle)

    return {
        "corpus": corpus,
        "bundle": load_bundle(ckpt),
        "checkpoint": ckpt,
        "ae_curves": ae_curves,
        "inv_curves": inv_curves,
        "pipeline": pipeline,
        "timings": timings,
        "seed": RIG_SEED,
    }
