"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 missing artifact, 3 numeric failure.
All randomness flows from --seed; every run prints its resolved config.
NDF_UDP_PORT / NDF_WS_PORT / NDF_CHECKPOINT provide defaults for serving.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import dsp, train
from .checkpoint import Bundle, load_bundle, save_bundle
from .controls import ControlPoint, control_to_latent, fit_pca, generate, sample_prior
from .errors import NumericError, StateError
from .profiles import CLASS_NAMES, get_profile

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISSING = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(p):
    p.add_argument("--profile", choices=["desk", "full"], default="desk")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="ndf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic corpus + manifest")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=None)

    p = sub.add_parser("train-cwae", help="train the spectrogram autoencoder")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True, help="output checkpoint path (.npz)")
    p.add_argument("--iters", type=int, default=None, help="override the profile budget")
    p.add_argument("--curves", default=None, help="optional CSV for loss curves")

    p = sub.add_parser("train-mcnn", help="train the spectrogram inverter")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True, help="checkpoint to update (from train-cwae)")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--curves", default=None)

    p = sub.add_parser("eval", help="print the validation metrics report")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("pca-fit", help="augment a checkpoint with the control basis")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("synth", help="generate one WAV from control values")
    _add_common(p)
    p.add_argument("--checkpoint", default=os.environ.get("NDF_CHECKPOINT"))
    p.add_argument("--out", required=True)
    p.add_argument("--p1", type=float, default=0.0)
    p.add_argument("--p2", type=float, default=0.0)
    p.add_argument("--p3", type=float, default=0.0)
    p.add_argument("--cat", type=int, default=0)
    p.add_argument("--random", action="store_true", help="sample the prior instead of the knobs")

    p = sub.add_parser("serve", help="run the UDP + WebSocket generation service")
    _add_common(p)
    p.add_argument("--checkpoint", default=os.environ.get("NDF_CHECKPOINT"))
    p.add_argument("--udp-port", type=int, default=None)
    p.add_argument("--ws-port", type=int, default=None)
    return parser


def _print_config(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    print(f"[ndf {args.command}] config: {json.dumps(cfg, default=str)}")


def _require(path, what):
    if path is None:
        print(f"error: no {what} given (flag or NDF_CHECKPOINT)", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    if not Path(path).exists():
        print(f"error: {what} not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_MISSING)
    return path


def cmd_gen_data(args):
    profile = get_profile(args.profile)
    n = args.per_class or profile.corpus_per_class
    corpus = corpus_mod.gen_synthetic_corpus(n, CLASS_NAMES, args.seed, profile.clip_len)
    corpus_mod.save_corpus(corpus, args.out)
    print(f"wrote {len(corpus.items)} clips ({corpus.n_classes} classes) to {args.out}")


def cmd_train_cwae(args):
    profile = get_profile(args.profile)
    corpus = corpus_mod.load_corpus(_require(args.corpus, "corpus"))
    model, stats, curves = train.train_autoencoder(corpus, profile, args.seed,
                                                   iters=args.iters, progress=20)
    from .inverter import InverterConfig, MelInverter
    inv = MelInverter(InverterConfig.from_profile(profile),
                      rng=np.random.default_rng([args.seed, 3]))
    bundle = Bundle(autoencoder=model, inverter=inv, scaling_stats=stats,
                    profile_name=profile.name, class_names=corpus.class_names,
                    sample_rate=profile.sample_rate)
    save_bundle(args.checkpoint, bundle)
    if args.curves:
        train.save_curves(curves, args.curves)
    print(f"checkpoint written: {args.checkpoint} (val loss {curves[-1]['val_loss']:.4f})")


def cmd_train_mcnn(args):
    profile = get_profile(args.profile)
    corpus = corpus_mod.load_corpus(_require(args.corpus, "corpus"))
    bundle = load_bundle(_require(args.checkpoint, "checkpoint"))
    model, curves = train.train_inverter(corpus, profile, args.seed,
                                         iters=args.iters, progress=20)
    bundle.inverter = model
    save_bundle(args.checkpoint, bundle)
    if args.curves:
        train.save_curves(curves, args.curves)
    print(f"checkpoint updated: {args.checkpoint} (val SC {curves[-1]['val_sc']:.4f})")


def cmd_eval(args):
    profile = get_profile(args.profile)
    corpus = corpus_mod.load_corpus(_require(args.corpus, "corpus"))
    bundle = load_bundle(_require(args.checkpoint, "checkpoint"))
    metrics = train.evaluate(bundle.autoencoder, bundle.inverter, bundle.scaling_stats,
                             corpus, profile, seed=args.seed)
    print(train.format_report(metrics))


def cmd_pca_fit(args):
    profile = get_profile(args.profile)
    corpus = corpus_mod.load_corpus(_require(args.corpus, "corpus"))
    bundle = load_bundle(_require(args.checkpoint, "checkpoint"))
    pipeline = dsp.MelPipeline.from_profile(profile)
    from . import autodiff as ad
    items = corpus.train_items()
    xs = np.stack([dsp.log_standardize(pipeline.mel(it.clip.samples), bundle.scaling_stats)
                   for it in items])[:, None]
    ys = np.array([it.label for it in items])
    codes = bundle.autoencoder.encode_batch(ad.const(xs), ys, training=False).data
    bundle.pca = fit_pca(codes, k=3)
    save_bundle(args.checkpoint, bundle)
    ev = bundle.pca.explained_variance
    print(f"pca basis written (explained variance {np.round(ev, 4).tolist()})")


def cmd_synth(args):
    bundle = load_bundle(_require(args.checkpoint, "checkpoint"))
    if args.random:
        latent = sample_prior(bundle.autoencoder.config.latent_dim, seed=args.seed)
    else:
        if bundle.pca is None:
            raise StateError("checkpoint has no PCA basis; run pca-fit or use --random")
        point = ControlPoint(p1=args.p1, p2=args.p2, p3=args.p3, category=args.cat)
        latent = control_to_latent(bundle.pca, point)
    clip = generate(bundle, latent, args.cat)
    dsp.save_wav(args.out, clip)
    print(f"wrote {args.out} ({len(clip.samples)} samples @ {clip.rate} Hz)")


def cmd_serve(args):
    from .server import ServeConfig, serve
    cfg = ServeConfig(checkpoint=_require(args.checkpoint, "checkpoint"),
                      udp_port=args.udp_port, ws_port=args.ws_port)
    print(f"serving on udp={cfg.udp_port} ws={cfg.ws_port} (ctrl-c to stop)")
    serve(cfg)


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-cwae": cmd_train_cwae,
    "train-mcnn": cmd_train_mcnn,
    "eval": cmd_eval,
    "pca-fit": cmd_pca_fit,
    "synth": cmd_synth,
    "serve": cmd_serve,
}


def main(argv=None):
    logging.basicConfig(level=os.environ.get("NDF_LOG", "INFO"),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    _print_config(args)
    try:
        _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except StateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
