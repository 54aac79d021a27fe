"""``saecrypt`` command line: train, compress, encrypt, decrypt, reconstruct, evaluate.

Exit status: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import chaos, codec, metrics, sae
from .errors import (
    DegenerateKeystreamError,
    DimensionError,
    FormatError,
    InvalidKeyError,
    UndefinedCorrelationError,
)
from .image_io import load_image, save_image, tile

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DEFAULT_LAYERS = "64,16,4,16,64"

log = logging.getLogger("saecrypt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_layers(text: str) -> list:
    try:
        dims = [int(p) for p in text.replace(" ", "").split(",") if p]
    except ValueError:
        raise UsageError(f"--layers expects comma-separated integers, got {text!r}") from None
    try:
        sae.check_layer_dims(dims)
    except DimensionError as exc:
        raise UsageError(str(exc)) from None
    return dims


def parse_bottleneck(text, model: sae.SaeModel):
    """``h1``/``h2``/... to a code level; None selects the model's bottleneck."""
    if text is None:
        return None
    name = text.lower()
    if not (name.startswith("h") and name[1:].isdigit()):
        raise UsageError(f"--bottleneck expects h1, h2, ...; got {text!r}")
    level = int(name[1:])
    if not 1 <= level <= model.bottleneck_index:
        raise UsageError(f"model {list(model.layer_dims)} has code levels h1..h{model.bottleneck_index}")
    return level


def read_config(path) -> dict:
    """``key=value`` lines; keys are long option names with or without dashes."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_train(args) -> int:
    dims = parse_layers(args.layers)
    if dims[0] != args.tile_dim**2:
        raise UsageError(f"first layer width {dims[0]} must equal tile_dim^2 = {args.tile_dim**2}")
    try:
        cfg = sae.TrainConfig(
            learning_rate=args.lr,
            pretrain_epochs=args.pretrain_epochs,
            finetune_epochs=args.epochs,
            batch_size=args.batch,
            weight_decay=args.weight_decay,
            rng_seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ts = tile(load_image(args.image), args.tile_dim)
    log.info("training %s on %d tiles", dims, len(ts))

    def progress(stage, epoch, value):
        if epoch % 50 == 0:
            log.info("%s epoch %d cost %.6g", stage, epoch, value)

    model = sae.train(ts, dims, cfg, on_epoch=progress)
    sae.save_model(model, args.out)
    print(f"cost={sae.cost(model, ts.tiles, weight_decay=cfg.weight_decay)!r}")
    return EXIT_OK


def cmd_compress(args) -> int:
    model = sae.load_model(args.model)
    level = parse_bottleneck(args.bottleneck, model)
    ci = codec.compress(load_image(args.image), model, args.tile_dim, level)
    codec.write_compressed(ci, args.out)
    print(f"payload_bytes={len(ci.codes)}")
    print(f"compression_ratio={ci.compression_ratio:g}")
    return EXIT_OK


def cmd_encrypt(args) -> int:
    ci = codec.read_compressed(args.saec)
    key = chaos.derive_key(ci, r=args.r)
    codec.write_compressed(chaos.encrypt_image(ci, key), args.out)
    chaos.write_key(key, args.key)
    return EXIT_OK


def cmd_decrypt(args) -> int:
    ci = codec.read_compressed(args.encrypted)
    key = chaos.read_key(args.key)
    codec.write_compressed(chaos.decrypt_image(ci, key), args.out)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    ci = codec.read_compressed(args.saec)
    model = sae.load_model(args.model)
    save_image(codec.decompress(ci, model), args.out)
    return EXIT_OK


def _load_evaluable(path):
    with open(path, "rb") as fh:
        is_container = fh.read(4) == codec.CONTAINER_MAGIC
    if is_container:
        return metrics.render_codes(codec.read_compressed(path))
    return load_image(path)


def cmd_evaluate(args) -> int:
    first = _load_evaluable(args.original)
    out = []
    if args.reconstructed is not None:
        report = metrics.quality_report(first, load_image(args.reconstructed))
        out.append(report.to_records() if args.records else report.to_text())
    subject = load_image(args.reconstructed) if args.reconstructed else first
    if args.correlation or args.reconstructed is None:
        corr = metrics.adjacent_correlation(
            subject, pairs=args.pairs, trials=args.trials,
            direction=args.direction, rng_seed=args.seed,
        )
        if args.records:
            out.append(corr.to_records())
        else:
            out.append(
                f"adjacent correlation ({corr.direction}, {corr.trials} trials x "
                f"{corr.pairs_per_trial} pairs): {corr.r_xy:.4f}"
            )
    print("\n".join(out))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="saecrypt", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file of option defaults; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="pretrain and fine-tune an autoencoder on one image")
    p.add_argument("image")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--tile-dim", type=int, default=8)
    p.add_argument("--layers", default=DEFAULT_LAYERS)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=500, help="fine-tuning epochs")
    p.add_argument("--pretrain-epochs", type=int, default=200, help="epochs per pretraining stage")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compress", help="encode an image into a .saec container")
    p.add_argument("image")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tile-dim", type=int, default=8)
    p.add_argument("--bottleneck", default=None, help="code layer: h1, h2, ... (default: innermost)")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("encrypt", help="XOR the codes with a logistic-map keystream")
    p.add_argument("saec")
    p.add_argument("--out", required=True)
    p.add_argument("--key", required=True, help="key file to write")
    p.add_argument("--r", type=float, default=chaos.DEFAULT_R)
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("decrypt", help="undo encrypt with its key file")
    p.add_argument("encrypted")
    p.add_argument("--key", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("reconstruct", help="decode a .saec container into an image")
    p.add_argument("saec")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="MSE/PSNR per channel and adjacent-pixel correlation")
    p.add_argument("original", help="image, or a .saec container rendered as an image")
    p.add_argument("reconstructed", nargs="?")
    p.add_argument("--correlation", action="store_true", help="also run the correlation protocol")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--pairs", type=int, default=4096)
    p.add_argument("--direction", choices=sorted(metrics.DIRECTIONS), default="horizontal")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--records", action="store_true", help="key=value output")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _apply_config(parser, argv, path):
    values = read_config(path)
    sub = parser._subparsers._group_actions[0]
    pre = parser.parse_known_args(argv)[0]
    target = sub.choices[pre.command]
    known = {a.dest: a for a in target._actions}
    defaults = {}
    for key, value in values.items():
        action = known.get(key)
        if action is None or not action.option_strings:
            raise UsageError(f"{path}: unknown option {key!r} for {pre.command}")
        if action.type is not None:
            try:
                value = action.type(value)
            except ValueError:
                raise UsageError(f"{path}: bad value for {key}: {value!r}") from None
        defaults[key] = value
    target.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            _apply_config(parser, argv, args.config)
            args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(f"saecrypt: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateKeystreamError, UndefinedCorrelationError, FloatingPointError) as exc:
        print(f"saecrypt: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, DimensionError, InvalidKeyError, OSError, ValueError) as exc:
        print(f"saecrypt: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
