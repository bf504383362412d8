"""Procedural three-class percussion corpus.

Stands in for licensed sample packs: kicks are pitch-dropping decaying
sines, snares a mid tone plus a filtered noise burst, hats short strongly
high-passed noise. Deterministic for a given seed; item lengths vary in
[0.1, 1.0] of the canonical clip length before padding.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .errors import ConfigError, FormatError

TRAIN_FRACTION = 0.8


@dataclass
class CorpusItem:
    clip: dsp.AudioClip
    mask: np.ndarray
    label: int
    split: str           # "train" | "val"
    name: str


@dataclass
class Corpus:
    items: list
    class_names: tuple
    clip_len: int

    @property
    def n_classes(self):
        return len(self.class_names)

    def subset(self, split):
        return [it for it in self.items if it.split == split]

    def train_items(self):
        return self.subset("train")

    def val_items(self):
        return self.subset("val")


def _envelope(n, tau, floor=0.0):
    # decay onto a sustained bed that gates off hard at the cut, the way
    # truncated pack samples do; the cliff keeps the support boundary audible
    return (1.0 - floor) * np.exp(-np.arange(n) / max(tau, 1.0)) + floor


def _highpass(x, passes):
    for _ in range(passes):
        x = np.diff(x, prepend=x[:1])
    return x


def _synth_kick(rng, n, rate, bank):
    f_start = rng.uniform(500.0, 900.0)
    f_end = rng.uniform(40.0, 90.0)
    pitch_tau = n * rng.uniform(0.08, 0.18)
    freq = f_end + (f_start - f_end) * _envelope(n, pitch_tau)
    phase = 2.0 * np.pi * np.cumsum(freq) / rate
    return np.sin(phase) * _envelope(n, n * rng.uniform(0.25, 0.45), rng.uniform(0.06, 0.12))


def _synth_snare(rng, n, rate, bank):
    tone_hz = rng.uniform(950.0, 1250.0)
    tone = np.sin(2.0 * np.pi * tone_hz * np.arange(n) / rate)
    tone *= _envelope(n, n * rng.uniform(0.1, 0.2), rng.uniform(0.06, 0.12))
    noise = bank["snare"][:n] * _envelope(n, n * rng.uniform(0.2, 0.35), rng.uniform(0.06, 0.12))
    return 0.8 * tone + rng.uniform(0.5, 0.8) * noise


def _synth_hat(rng, n, rate, bank):
    return bank["hat"][:n] * _envelope(n, n * rng.uniform(0.1, 0.25), rng.uniform(0.06, 0.12))


_GENERATORS = {"kick": _synth_kick, "snare": _synth_snare, "hat": _synth_hat}


def _noise_bank(rng, clip_len):
    # One frozen noise layer per class, like a drum machine's fixed sample;
    # items vary in envelope, length, and mix rather than in the noise itself.
    snare = _highpass(rng.standard_normal(clip_len), 1)
    hat = _highpass(rng.standard_normal(clip_len), 3)
    return {"snare": snare / np.abs(snare).max(), "hat": hat / np.abs(hat).max()}


def gen_synthetic_corpus(n_per_class, classes, seed, clip_len, rate=dsp.SAMPLE_RATE):
    """Deterministic corpus of preprocessed clips with an 80/20 per-class split."""
    unknown = [c for c in classes if c not in _GENERATORS]
    if unknown:
        raise ConfigError(f"no generator for classes {unknown}; available: {sorted(_GENERATORS)}")
    rng = np.random.default_rng(seed)
    bank = _noise_bank(rng, clip_len)
    items = []
    n_train = int(round(TRAIN_FRACTION * n_per_class))
    for label, cname in enumerate(classes):
        for i in range(n_per_class):
            n = int(round(rng.uniform(0.1, 1.0) * clip_len))
            n = min(max(n, 8), clip_len)
            raw = _GENERATORS[cname](rng, n, rate, bank)
            clip, mask = dsp.preprocess(dsp.AudioClip(raw, rate=rate), clip_len)
            items.append(CorpusItem(clip=clip, mask=mask, label=label,
                                    split="train" if i < n_train else "val",
                                    name=f"{cname}_{i:04d}"))
    return Corpus(items=items, class_names=tuple(classes), clip_len=clip_len)


# -- persistence ----------------------------------------------------------------


def save_corpus(corpus, out_dir):
    """WAV per item plus manifest.csv (name, class, split, original_len) and meta."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "class", "split", "original_len"])
        for it in corpus.items:
            dsp.save_wav(out / f"{it.name}.wav", it.clip)
            w.writerow([it.name, corpus.class_names[it.label], it.split, it.clip.original_len])
    (out / "meta.json").write_text(json.dumps(
        {"class_names": list(corpus.class_names), "clip_len": corpus.clip_len}, indent=2))


def load_corpus(in_dir):
    src = Path(in_dir)
    meta_path = src / "meta.json"
    if not meta_path.exists():
        raise FormatError(f"{src}: not a corpus directory (missing meta.json)")
    meta = json.loads(meta_path.read_text())
    class_names = tuple(meta["class_names"])
    clip_len = int(meta["clip_len"])
    items = []
    with open(src / "manifest.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            clip = dsp.load_wav(src / f"{row['name']}.wav")
            clip.original_len = int(row["original_len"])
            clip, mask = dsp.preprocess(clip, clip_len)
            items.append(CorpusItem(clip=clip, mask=mask,
                                    label=class_names.index(row["class"]),
                                    split=row["split"], name=row["name"]))
    return Corpus(items=items, class_names=class_names, clip_len=clip_len)
