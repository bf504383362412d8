"""Versioned checkpoint container.

One .npz archive (zip of .npy arrays) holding:

  meta                 json string: {"version", "profile", "class_names",
                       "sample_rate", "ae_config", "inv_config"}
  ae/<param name>      autoencoder parameter arrays
  ae_rm/<layer> (+rv)  conditional batch-norm running mean/var
  inv/<param name>     inverter parameter arrays
  stats/mean, stats/std            log-mel scaling statistics
  pca/mean, pca/components, pca/explained_variance   optional control basis

Arrays round-trip bit-exactly; loading reconstructs models with the stored
configs rather than the current profile defaults.
"""

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autoenc import AutoencoderConfig, ConditionalAutoencoder
from .controls import PcaBasis
from .dsp import ScalingStats
from .errors import FormatError
from .inverter import InverterConfig, MelInverter
from .profiles import get_profile
from .tensor import Tensor

FORMAT_VERSION = 1


@dataclass
class Bundle:
    """Everything the generation path needs, as loaded from one checkpoint."""

    autoencoder: ConditionalAutoencoder
    inverter: MelInverter
    scaling_stats: ScalingStats
    profile_name: str
    class_names: tuple
    sample_rate: int
    pca: PcaBasis = None

    @property
    def profile(self):
        return get_profile(self.profile_name)


def save_bundle(path, bundle):
    arrays = {}
    for name, p in bundle.autoencoder.params.items():
        arrays[f"ae/{name}"] = p.value.data
    for lname, st in bundle.autoencoder.bn_states.items():
        arrays[f"ae_rm/{lname}"] = st.running_mean
        arrays[f"ae_rv/{lname}"] = st.running_var
    for name, p in bundle.inverter.params.items():
        arrays[f"inv/{name}"] = p.value.data
    arrays["stats/mean"] = bundle.scaling_stats.mean
    arrays["stats/std"] = bundle.scaling_stats.std
    if bundle.pca is not None:
        arrays["pca/mean"] = bundle.pca.mean
        arrays["pca/components"] = bundle.pca.components
        arrays["pca/explained_variance"] = bundle.pca.explained_variance
    meta = {
        "version": FORMAT_VERSION,
        "profile": bundle.profile_name,
        "class_names": list(bundle.class_names),
        "sample_rate": bundle.sample_rate,
        "ae_config": dataclasses.asdict(bundle.autoencoder.config),
        "inv_config": dataclasses.asdict(bundle.inverter.config),
    }
    arrays["meta"] = np.array(json.dumps(meta))
    np.savez(path, **arrays)


def load_bundle(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        try:
            meta = json.loads(str(z["meta"]))
        except KeyError:
            raise FormatError(f"{path}: not an ndf checkpoint (missing meta)") from None
        if meta.get("version") != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        meta["ae_config"]["conv_channels"] = tuple(meta["ae_config"]["conv_channels"])
        meta["ae_config"]["fc_sizes"] = tuple(meta["ae_config"]["fc_sizes"])
        meta["inv_config"]["channels"] = tuple(meta["inv_config"]["channels"])
        meta["inv_config"]["loss_weights"] = tuple(meta["inv_config"]["loss_weights"])
        ae = ConditionalAutoencoder(AutoencoderConfig(**meta["ae_config"]))
        for name, p in ae.params.items():
            p.value = Tensor(z[f"ae/{name}"])
        for lname, st in ae.bn_states.items():
            st.running_mean = z[f"ae_rm/{lname}"].copy()
            st.running_var = z[f"ae_rv/{lname}"].copy()
        inv = MelInverter(InverterConfig(**meta["inv_config"]))
        for name, p in inv.params.items():
            p.value = Tensor(z[f"inv/{name}"])
        stats = ScalingStats(mean=z["stats/mean"].copy(), std=z["stats/std"].copy())
        pca = None
        if "pca/mean" in z:
            pca = PcaBasis(mean=z["pca/mean"].copy(),
                           components=z["pca/components"].copy(),
                           explained_variance=z["pca/explained_variance"].copy())
    return Bundle(autoencoder=ae, inverter=inv, scaling_stats=stats,
                  profile_name=meta["profile"], class_names=tuple(meta["class_names"]),
                  sample_rate=int(meta["sample_rate"]), pca=pca)
