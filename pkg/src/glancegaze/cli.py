"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .autodiff.checkpoint import CheckpointError
from .config import ConfigError, ModelConfig
from .dsp import WaveBuffer
from .engine import NumericError, enhance, evaluate, load_model, train, write_report
from .fem import fem_shape_chain
from .model import count_macs, count_params, model_init
from .streaming import StreamError, stream_signal, stream_state_size
from .synth import Manifest, make_dataset
from .wavio import WavFormatError, read_wav, write_wav

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="glancegaze", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("mix", help="generate toy pools and train/val/test manifests")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train from the manifest in the config's data_dir")
    p.add_argument("--config", required=True)
    p.add_argument("--resume")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("enhance", help="enhance one WAV file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stream", action="store_true", help="run frame by frame through the streaming state")

    p = sub.add_parser("eval", help="score a checkpoint on a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True)

    p = sub.add_parser("inspect", help="print model size, cost and state size")
    p.add_argument("--config", required=True)
    return ap


def _cmd_mix(args) -> int:
    cfg = ModelConfig.from_file(args.config)
    paths = make_dataset(cfg, args.seed, args.out)
    for split, path in paths.items():
        print(f"{split}\t{path}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = ModelConfig.from_file(args.config)
    if not cfg.data_dir:
        raise ConfigError("data_dir: must name the directory holding train.manifest")
    base = Path(args.config).parent
    data_dir = Path(cfg.data_dir) if Path(cfg.data_dir).is_absolute() else base / cfg.data_dir
    out_dir = Path(cfg.out_dir) if Path(cfg.out_dir).is_absolute() else base / cfg.out_dir
    manifest = Manifest.load(data_dir / "train.manifest")
    res = train(cfg, manifest, out_dir, resume=args.resume, log=None if args.quiet else print)
    if res.losses:
        print(f"loss {res.first_loss:.6f} -> {res.last_loss:.6f}")
    print(f"checkpoint\t{res.checkpoints[-1]}")
    return EXIT_OK


def _cmd_enhance(args) -> int:
    params, cfg = load_model(args.ckpt)
    wav = read_wav(args.inp, cfg.sample_rate)
    if args.stream:
        out = stream_signal(params, wav, cfg)
    else:
        out = enhance(params, wav, cfg).samples
    peak = float(np.max(np.abs(out))) if len(out) else 0.0
    if peak > 1.0:
        print(f"warning: output peak {peak:.3f} exceeds full scale and will be clipped", file=sys.stderr)
    write_wav(args.out, WaveBuffer(np.clip(out, -1.0, 1.0), cfg.sample_rate))
    return EXIT_OK


def _cmd_eval(args) -> int:
    params, cfg = load_model(args.ckpt)
    rows = evaluate(params, cfg, Manifest.load(args.manifest))
    sys.stdout.write(write_report(rows, args.report))
    return EXIT_OK


def _cmd_inspect(args) -> int:
    cfg = ModelConfig.from_file(args.config)
    cfg.validate()
    n = count_params(cfg)
    macs = count_macs(cfg, 1.0)
    print(f"config\tP={cfg.P} Q={cfg.Q} recon={cfg.recon} norm={cfg.norm}")
    print(f"params\t{n}\t({n / 1e6:.3f} M)")
    print(f"macs_per_second\t{macs}\t({macs / 1e9:.3f} G/s; conv and linear multiplies only)")
    print("freq_chain\t" + " -> ".join(str(f) for f in cfg.freq_chain))
    for shape in fem_shape_chain(cfg):
        print("shape\t" + "x".join(str(d) for d in shape))
    print(f"feature_dim\t{cfg.feat_dim}\tstage_input\t{cfg.stage_in_dim}")
    if cfg.norm == "cumulative":
        print(f"stream_state_floats\t{stream_state_size(cfg)}")
    # local timing of one second of audio, analogous to a processing-time row
    params = model_init(cfg, cfg.seed)
    wav = WaveBuffer(np.random.default_rng(cfg.seed).standard_normal(cfg.sample_rate) * 0.1, cfg.sample_rate)
    t0 = time.perf_counter()
    enhance(params, wav, cfg)
    print(f"offline_seconds_per_audio_second\t{time.perf_counter() - t0:.3f}")
    return EXIT_OK


_COMMANDS = {"mix": _cmd_mix, "train": _cmd_train, "enhance": _cmd_enhance, "eval": _cmd_eval,
             "inspect": _cmd_inspect}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.cmd](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, WavFormatError, CheckpointError, StreamError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
