"""Command-line entry point: ``mtr-codec <command> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 decode/format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .container import unpack_container
from .errors import ConfigurationError, ContractError, DecodeError
from .pipeline.ablation import run_ablation
from .pipeline.codec import WeightsMismatchError, decode_gop, encode_gop
from .pipeline.frameio import read_dataset, read_frames, write_frames, write_sequence
from .pipeline.metrics import bitrate_kbps, mean_psnr
from .pipeline.model import ABLATIONS, ModelWeights
from .pipeline.synth import synth_dataset
from .pipeline.train import TrainConfig, train_toy
from .skeleton import parse_track

EXIT_USAGE = 2
EXIT_DECODE = 3


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    return h, w


def cmd_synth(args) -> None:
    h, w = args.size
    out = Path(args.out)
    for i, seq in enumerate(synth_dataset(args.seed, args.count, h, w, args.frames, args.max_step)):
        write_sequence(out / f"clip_{i:04d}", seq)
    print(f"wrote {args.count} clips to {out}")


def cmd_train(args) -> None:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.steps is not None:
        cfg = cfg.replace(steps=args.steps)
    data = read_dataset(args.data)
    result = train_toy(cfg, data, progress=lambda s, l, d: logging.info("step %d loss %.4f dis %.4f", s, l, d))
    whash = result.weights.save(args.out)
    print(f"weights {args.out} hash {whash:016x} final loss {result.trace[-1]:.4f}" if result.trace
          else f"weights {args.out} hash {whash:016x}")


def cmd_encode(args) -> None:
    w = ModelWeights.load(args.weights)
    frames = read_frames(args.frames)
    track = parse_track(Path(args.skeletons).read_text())
    stream = encode_gop(frames, track, w).pack()
    Path(args.out).write_bytes(stream)
    print(f"{args.out}: {8 * len(stream)} bits")


def cmd_decode(args) -> None:
    w = ModelWeights.load(args.weights)
    dec = decode_gop(unpack_container(Path(args.input).read_bytes()), w)
    write_frames(args.out, dec.frames)
    print(f"decoded {len(dec.frames)} frames to {args.out}")


def cmd_eval(args) -> None:
    ref, rec = read_frames(args.ref), read_frames(args.rec)
    if ref.shape != rec.shape:
        raise ConfigurationError(f"reference {ref.shape} and reconstruction {rec.shape} differ")
    c = unpack_container(Path(args.bits).read_bytes())
    print(f"PSNR {mean_psnr(ref, rec):.2f} dB")
    print(f"rate {bitrate_kbps(c.total_bits, len(ref)):.3f} Kbps @ 25 fps ({c.total_bits} bits, {len(ref)} frames)")


def cmd_ablate(args) -> None:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.steps is not None:
        cfg = cfg.replace(steps=args.steps)
    data = read_dataset(args.data)
    test = read_dataset(args.test) if args.test else None
    report = run_ablation(args.variant, cfg, data, test)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtr-codec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render synthetic clips with exact skeletons")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--size", type=_size, default=(32, 32), help="HxW, multiples of 4")
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--max-step", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="finite-difference adversarial training")
    p.add_argument("--config", help="flat key=value file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="code one GoP")
    p.add_argument("--weights", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--skeletons", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct a GoP")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="PSNR and Kbps of a reconstruction")
    p.add_argument("--ref", required=True)
    p.add_argument("--rec", required=True)
    p.add_argument("--bits", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate an architecture variant")
    p.add_argument("--variant", required=True, choices=sorted(ABLATIONS))
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--test")
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (DecodeError, WeightsMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DECODE
    except (ConfigurationError, ContractError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
