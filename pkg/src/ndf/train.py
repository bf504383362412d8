"""Training loops, balanced batching, and evaluation for both networks."""

import csv
import time

import numpy as np

from . import autodiff as ad
from . import dsp
from .autoenc import (AutoencoderConfig, ConditionalAutoencoder, ImqKernel,
                      autoencoder_loss, per_class_regularizer, restore_params,
                      sample_priors_for_batch, snapshot_params)
from .errors import ArityError, ConfigError, NumericError
from .inverter import (InverterConfig, MelInverter, binarize_mask, sc_loss,
                       sc_log_loss, mask_loss, total_loss)


def balanced_batches(labels, per_class_n, rng):
    """Yield index batches with exactly per_class_n items of every class.

    One generator pass is one epoch: it stops when any class is exhausted,
    so every batch it emits is perfectly balanced.
    """
    if per_class_n < 2:
        raise ArityError("per_class_n must be >= 2 (the MMD term needs pairs)")
    labels = np.asarray(labels)
    classes = sorted(set(int(v) for v in labels))
    pools = {c: rng.permutation(np.flatnonzero(labels == c)) for c in classes}
    n_batches = min(len(p) for p in pools.values()) // per_class_n
    for b in range(n_batches):
        idx = np.concatenate([pools[c][b * per_class_n:(b + 1) * per_class_n]
                              for c in classes])
        yield idx


def shuffled_batches(n_items, batch_size, rng):
    order = rng.permutation(n_items)
    for b in range(n_items // batch_size):
        yield order[b * batch_size:(b + 1) * batch_size]


def prepare_autoencoder_data(corpus, pipeline):
    """Mel + log-standardize both splits; the stats come from the train split only."""
    train, val = corpus.train_items(), corpus.val_items()
    train_mels = [pipeline.mel(it.clip.samples) for it in train]
    stats = dsp.fit_scaling_stats(train_mels)
    data = {
        "train_x": np.stack([dsp.log_standardize(m, stats) for m in train_mels])[:, None],
        "train_y": np.array([it.label for it in train]),
        "val_x": np.stack([dsp.log_standardize(pipeline.mel(it.clip.samples), stats)
                           for it in val])[:, None],
        "val_y": np.array([it.label for it in val]),
    }
    return stats, data


def _ae_val_metrics(model, data, seed, epoch):
    codes = model.encode_batch(ad.const(data["val_x"]), data["val_y"], training=False)
    recon = model.decode_batch(codes, data["val_y"], training=False)
    diff = recon.data - data["val_x"]
    n = diff.shape[0]
    mse = float((diff ** 2).sum() / (n * diff[0].size))
    rng = np.random.default_rng([seed, epoch + 1, 0xAE])  # epoch -1 is the init row
    priors = sample_priors_for_batch(data["val_y"], model.config.latent_dim, rng)
    reg = per_class_regularizer(codes, data["val_y"], priors,
                                ImqKernel(model.config.kernel_scale)).item()
    return mse, mse + model.config.mmd_weight * reg / n


def train_autoencoder(corpus, profile, seed, iters=None, model=None, progress=None):
    """Train the conditional autoencoder; returns (model, stats, curves).

    Deterministic for a given (corpus, profile, seed). The returned model
    carries the parameters of the best validation epoch.
    """
    pipeline = dsp.MelPipeline.from_profile(profile)
    stats, data = prepare_autoencoder_data(corpus, pipeline)
    cfg = AutoencoderConfig.from_profile(profile, n_classes=corpus.n_classes)
    model = model or ConditionalAutoencoder(cfg, rng=np.random.default_rng([seed, 1]))
    from .optim import Adam, PlateauScheduler
    opt = Adam(model.parameters(), lr=profile.ae_lr)
    sched = PlateauScheduler(lr=profile.ae_lr, factor=profile.ae_anneal[0],
                             patience=profile.ae_anneal[1])
    rng = np.random.default_rng([seed, 2])
    budget = iters if iters is not None else profile.ae_iters
    curves = []
    best = (np.inf, snapshot_params(model))
    it = 0
    epoch = 0
    t0 = time.time()
    min_class = np.bincount(data["train_y"]).min()
    if min_class < profile.ae_batch_per_class:
        raise ConfigError(f"smallest class has {min_class} train items; "
                          f"batches need {profile.ae_batch_per_class} per class")
    val_mse0, val_loss0 = _ae_val_metrics(model, data, seed, epoch=-1)
    curves.append({"epoch": -1, "iteration": 0, "train_loss": None,
                   "val_mse": val_mse0, "val_loss": val_loss0, "lr": opt.lr})
    best = (val_loss0, best[1])
    try:
        while it < budget:
            train_losses = []
            for idx in balanced_batches(data["train_y"], profile.ae_batch_per_class, rng):
                if it >= budget:
                    break
                x, y = data["train_x"][idx], data["train_y"][idx]
                priors = sample_priors_for_batch(y, cfg.latent_dim, rng)
                loss, _ = autoencoder_loss(model, x, y, priors, training=True)
                opt.zero_grad()
                loss.backward()
                opt.step()
                train_losses.append(loss.item() / len(idx))
                it += 1
            val_mse, val_loss = _ae_val_metrics(model, data, seed, epoch)
            opt.lr = sched.step(val_loss)
            if val_loss < best[0]:
                best = (val_loss, snapshot_params(model))
            curves.append({"epoch": epoch, "iteration": it,
                           "train_loss": float(np.mean(train_losses)),
                           "val_mse": val_mse, "val_loss": val_loss, "lr": opt.lr})
            if progress and epoch % progress == 0:
                print(f"[ae] epoch {epoch} it {it} train {curves[-1]['train_loss']:.4f} "
                      f"val_mse {val_mse:.4f} ({time.time() - t0:.0f}s)", flush=True)
            epoch += 1
    except NumericError as exc:
        raise NumericError(f"autoencoder training diverged at iteration {it}: {exc}") from exc
    restore_params(model, best[1])
    return model, stats, curves


def prepare_inverter_data(corpus, pipeline):
    items = {"train": corpus.train_items(), "val": corpus.val_items()}
    out = {}
    for split, its in items.items():
        out[split] = {
            "mel": [pipeline.mel(it.clip.samples) for it in its],
            "wave": [it.clip.samples for it in its],
            "mask": [it.mask.astype(np.float64) for it in its],
        }
    return out


def _inverter_batch_loss(model, pipeline, data, idx, weights):
    mel_b = np.stack([data["mel"][i] for i in idx])
    out = model.forward_batch(mel_b, training=True)
    clip_len = out["wave_soft"].shape[1]
    terms = []
    parts_acc = {"sc": 0.0, "sc_log": 0.0, "mask_bce": 0.0}
    for j, i in enumerate(idx):
        wave = ad.reshape(ad.take_rows(out["wave_soft"], [j]), (clip_len,))
        mask = ad.reshape(ad.take_rows(out["mask_prob"], [j]), (clip_len,))
        loss, parts = total_loss(pipeline, data["wave"][i], wave, data["mask"][i], mask, weights)
        terms.append(loss)
        for k in parts_acc:
            parts_acc[k] += parts[k] / len(idx)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return ad.mul_scalar(total, 1.0 / len(idx)), parts_acc


def inverter_metrics(model, pipeline, data, idx=None, weights=(3.0, 10.0, 1.0)):
    """Generation-path metrics (binarized mask): mean SC, SC_log, mask BCE/accuracy."""
    idx = range(len(data["mel"])) if idx is None else idx
    sc, scl, bce, acc = [], [], [], []
    for i in idx:
        out = model.forward_batch(data["mel"][i][None], training=False)
        bm = binarize_mask(out["mask_prob"].data[0])
        wave = out["wave_pre"].data[0] * bm
        sc.append(sc_loss(pipeline, data["wave"][i], ad.const(wave)).item())
        scl.append(sc_log_loss(pipeline, data["wave"][i], ad.const(wave)).item())
        bce.append(mask_loss(data["mask"][i], out["mask_prob"].data[0]).item())
        acc.append(float((bm == data["mask"][i]).mean()))
    return {"sc": float(np.mean(sc)), "sc_log": float(np.mean(scl)),
            "mask_bce": float(np.mean(bce)), "mask_acc": float(np.mean(acc)),
            "total": float(weights[0] * np.mean(sc) + weights[1] * np.mean(scl)
                           + weights[2] * np.mean(bce))}


def train_inverter(corpus, profile, seed, iters=None, model=None, progress=None):
    """Train the mel inverter on unscaled mel magnitudes; returns (model, curves)."""
    pipeline = dsp.MelPipeline.from_profile(profile)
    data = prepare_inverter_data(corpus, pipeline)
    cfg = InverterConfig.from_profile(profile)
    model = model or MelInverter(cfg, rng=np.random.default_rng([seed, 3]))
    from .optim import Adam, PlateauScheduler
    opt = Adam(model.parameters(), lr=profile.inv_lr)
    sched = PlateauScheduler(lr=profile.inv_lr, factor=profile.inv_anneal[0],
                             patience=profile.inv_anneal[1])
    rng = np.random.default_rng([seed, 4])
    budget = iters if iters is not None else profile.inv_iters
    n_train = len(data["train"]["mel"])
    if n_train < profile.inv_batch:
        raise ConfigError(f"{n_train} train items cannot fill batches of {profile.inv_batch}")
    curves = []
    best = (np.inf, snapshot_params(model))
    it = 0
    epoch = 0
    t0 = time.time()
    val0 = inverter_metrics(model, pipeline, data["val"], weights=cfg.loss_weights)
    curves.append({"epoch": -1, "iteration": 0, "train_loss": None,
                   "val_loss": val0["total"], "val_sc": val0["sc"],
                   "val_mask_acc": val0["mask_acc"], "lr": opt.lr})
    best = (val0["total"], best[1])
    try:
        while it < budget:
            train_losses = []
            for idx in shuffled_batches(n_train, profile.inv_batch, rng):
                if it >= budget:
                    break
                loss, _ = _inverter_batch_loss(model, pipeline, data["train"], idx,
                                               cfg.loss_weights)
                opt.zero_grad()
                loss.backward()
                opt.step()
                train_losses.append(loss.item())
                it += 1
            val = inverter_metrics(model, pipeline, data["val"], weights=cfg.loss_weights)
            opt.lr = sched.step(val["total"])
            if val["total"] < best[0]:
                best = (val["total"], snapshot_params(model))
            curves.append({"epoch": epoch, "iteration": it,
                           "train_loss": float(np.mean(train_losses)),
                           "val_loss": val["total"], "val_sc": val["sc"],
                           "val_mask_acc": val["mask_acc"], "lr": opt.lr})
            if progress and epoch % progress == 0:
                print(f"[inv] epoch {epoch} it {it} train {curves[-1]['train_loss']:.4f} "
                      f"val_sc {val['sc']:.4f} acc {val['mask_acc']:.4f} "
                      f"({time.time() - t0:.0f}s)", flush=True)
            epoch += 1
    except NumericError as exc:
        raise NumericError(f"inverter training diverged at iteration {it}: {exc}") from exc
    restore_params(model, best[1])
    return model, curves


def save_curves(curves, path):
    if not curves:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(curves[0].keys()))
        w.writeheader()
        w.writerows(curves)


def evaluate(ae_model, inv_model, stats, corpus, profile, seed=0):
    """Validation-split metrics report for both networks and the end-to-end chain."""
    pipeline = dsp.MelPipeline.from_profile(profile)
    val = corpus.val_items()
    ys = np.array([it.label for it in val])
    mels = [pipeline.mel(it.clip.samples) for it in val]
    xs = np.stack([dsp.log_standardize(m, stats) for m in mels])[:, None]

    codes = ae_model.encode_batch(ad.const(xs), ys, training=False)
    recon = ae_model.decode_batch(codes, ys, training=False)
    diff = recon.data - xs
    ae_mse = float((diff ** 2).sum() / (diff.shape[0] * diff[0].size))

    rng = np.random.default_rng([seed, 0xE7A1])
    priors = sample_priors_for_batch(ys, ae_model.config.latent_dim, rng)
    kernel = ImqKernel(ae_model.config.kernel_scale)
    per_class_mmd = {}
    for cls in sorted(set(int(v) for v in ys)):
        idx = np.flatnonzero(ys == cls)
        from .autoenc import mmd_u_statistic
        per_class_mmd[corpus.class_names[cls]] = mmd_u_statistic(
            ad.take_rows(codes, idx), ad.const(priors[cls]), kernel).item()

    inv_data = prepare_inverter_data(corpus, pipeline)["val"]
    inv = inverter_metrics(inv_model, pipeline, inv_data)

    # end-to-end: reconstruct the spectrogram, invert it, compare to the original
    e2e_sc = []
    for i in range(len(val)):
        mel_hat = dsp.destandardize_exp(recon.data[i, 0], stats)
        out = inv_model.forward_batch(mel_hat[None], training=False)
        wave = out["wave_pre"].data[0] * binarize_mask(out["mask_prob"].data[0])
        e2e_sc.append(sc_loss(pipeline, val[i].clip.samples, ad.const(wave)).item())

    return {
        "ae_val_mse": ae_mse,
        "inv_sc": inv["sc"],
        "inv_sc_log": inv["sc_log"],
        "inv_mask_bce": inv["mask_bce"],
        "inv_mask_acc": inv["mask_acc"],
        "e2e_sc": float(np.mean(e2e_sc)),
        "per_class_mmd": per_class_mmd,
    }


def format_report(metrics):
    lines = ["metric                 value",
             "-" * 34,
             f"ae val MSE             {metrics['ae_val_mse']:.5f}",
             f"inverter SC            {metrics['inv_sc']:.5f}",
             f"inverter SC_log        {metrics['inv_sc_log']:.5f}",
             f"inverter mask BCE      {metrics['inv_mask_bce']:.5f}",
             f"inverter mask acc      {metrics['inv_mask_acc']:.5f}",
             f"end-to-end SC          {metrics['e2e_sc']:.5f}"]
    for name, v in metrics["per_class_mmd"].items():
        lines.append(f"MMD^2 [{name:<6}]        {v:+.5f}")
    return "\n".join(lines)
