"""Batch command-line interface.

Subcommands map one-to-one onto pipeline stages so each is testable in
isolation: index, retrieve, register, train-dict, sr, eval, interp.

Exit codes: 0 success, 1 input error, 2 configuration/usage error.
Precedence for settings: built-in defaults < --config file < --set
key=value overrides < dedicated subcommand flags.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import pipeline, retrieval, sparse
from .image import (ImageDecodeError, ImageFormatError, is_grayscale, load_image,
                    load_luma, rgb_to_ycbcr, save_image, to_luma, ycbcr_to_rgb)
from .interp import bicubic_resize
from .pipeline import ConfigError, InputError, PipelineConfig
from .registration import register_to_query

_INPUT_ERRORS = (InputError, FileNotFoundError, ImageFormatError,
                 ImageDecodeError, OSError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrsr",
        description="Correlated-image super-resolution toolbox",
    )
    parser.add_argument("--config", help="configuration file (key = value lines)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration entry")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build the vocabulary and inverted-file index")
    p.add_argument("corpus_dir")
    p.add_argument("--vocab", help="vocabulary output path")
    p.add_argument("--index", help="index output path")

    p = sub.add_parser("retrieve", help="query the index with an image")
    p.add_argument("query_image")
    p.add_argument("--vocab", help="vocabulary file")
    p.add_argument("--index", help="index file")
    p.add_argument("--top-n", type=int, help="number of hits to print")

    p = sub.add_parser("register", help="register candidates onto a reference")
    p.add_argument("reference")
    p.add_argument("candidates", nargs="+")
    p.add_argument("--kappa", type=int, help="translation upsampling factor")
    p.add_argument("--no-logpolar", action="store_true",
                   help="skip rotation/scale pre-alignment")

    p = sub.add_parser("train-dict", help="train the generic dictionary from a corpus")
    p.add_argument("corpus_dir")
    p.add_argument("--out", help="dictionary output path")

    p = sub.add_parser("sr", help="super-resolve a low-resolution image")
    p.add_argument("lr_image")
    p.add_argument("output")
    p.add_argument("--vocab", help="vocabulary file")
    p.add_argument("--index", help="index file")
    p.add_argument("--dict", dest="dictionary", help="generic dictionary file")

    p = sub.add_parser("eval", help="bicubic-vs-pipeline comparison on a test set")
    p.add_argument("test_dir")
    p.add_argument("--csv", help="also write rows as CSV")
    p.add_argument("--vocab", help="vocabulary file")
    p.add_argument("--index", help="index file")
    p.add_argument("--dict", dest="dictionary", help="generic dictionary file")

    p = sub.add_parser("interp", help="bicubic resize of one image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--scale", type=float, required=True, help="zoom factor (> 0)")
    p.add_argument("--edge", choices=("zero", "clamp"), default="zero",
                   help="source border policy (default: zero)")

    return parser


def _config_from_args(args) -> PipelineConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    return pipeline.load_config(args.config, overrides)


def _resolve(flag_value, config_value, what: str) -> str:
    value = flag_value or config_value
    if not value:
        raise InputError(f"no {what} given (flag or paths.* config entry required)")
    return value


def _load_optional_assets(args, config):
    vocab = index = pair = None
    vocab_path = args.vocab or config.paths.vocab_file
    index_path = args.index or config.paths.index_file
    dict_path = getattr(args, "dictionary", None) or config.paths.dictionary_file
    if vocab_path and Path(vocab_path).is_file():
        vocab = retrieval.load_vocabulary(vocab_path)
    if index_path and Path(index_path).is_file():
        index = retrieval.load_index(index_path)
    if dict_path and Path(dict_path).is_file():
        pair = sparse.load_dictionary(dict_path)
    return vocab, index, pair


def _cmd_index(args, config) -> int:
    vocab_path = _resolve(args.vocab, config.paths.vocab_file, "vocabulary output path")
    index_path = _resolve(args.index, config.paths.index_file, "index output path")
    result = pipeline.build_index(args.corpus_dir, config)
    retrieval.save_vocabulary(vocab_path, result.vocab)
    retrieval.save_index(index_path, result.index)
    for note in result.notes:
        print(f"warning: {note}", file=sys.stderr)
    for path, reason in result.index.skipped:
        print(f"warning: skipped {path}: {reason}", file=sys.stderr)
    print(f"indexed {result.n_indexed} images ({result.n_skipped} skipped), "
          f"k={result.vocab.k}")
    print(f"vocabulary: {vocab_path}")
    print(f"index: {index_path}")
    return 0


def _cmd_retrieve(args, config) -> int:
    vocab_path = _resolve(args.vocab, config.paths.vocab_file, "vocabulary file")
    index_path = _resolve(args.index, config.paths.index_file, "index file")
    vocab = retrieval.load_vocabulary(vocab_path)
    index = retrieval.load_index(index_path)
    top_n = args.top_n or config.retrieval.top_n
    hits = retrieval.query(load_luma(args.query_image), index, vocab, top_n=top_n,
                           sift_params=pipeline.PIPELINE_SIFT_PARAMS,
                           scale_percentile=config.retrieval.scale_percentile,
                           member_radius=config.retrieval.member_radius)
    for rank, hit in enumerate(hits, start=1):
        entry = index.images[hit.image_id]
        print(f"{rank} {hit.image_id} {hit.score:.6f} {hit.matched_sets} {entry.path}")
    return 0


def _cmd_register(args, config) -> int:
    kappa = args.kappa or config.registration.kappa
    use_logpolar = config.registration.logpolar and not args.no_logpolar
    reference = load_luma(args.reference)
    for cand_path in args.candidates:
        candidate = load_luma(cand_path)
        _, result = register_to_query(reference, candidate, kappa=kappa,
                                      use_logpolar=use_logpolar)
        print(f"{cand_path} {result.dy:.6f} {result.dx:.6f} "
              f"{math.degrees(result.rotation):.6f} {result.scale:.6f} "
              f"{result.error:.6f}")
    return 0


def _cmd_train_dict(args, config) -> int:
    out_path = _resolve(args.out, config.paths.dictionary_file,
                        "dictionary output path")
    pair = pipeline.train_generic_dictionary_from_dir(args.corpus_dir, config)
    sparse.save_dictionary(out_path, pair)
    print(f"trained dictionary: k={pair.k}, patch={pair.patch_size}, "
          f"x{pair.upscale} -> {out_path}")
    return 0


def _cmd_sr(args, config) -> int:
    vocab, index, pair = _load_optional_assets(args, config)
    if vocab is None or index is None:
        print("warning: retrieval index unavailable; using generic dictionary only",
              file=sys.stderr)
    rgb = load_image(args.lr_image)
    color = not is_grayscale(rgb)
    lr_luma = to_luma(rgb)
    result = pipeline.run_sr(lr_luma, config, vocab=vocab, index=index,
                             generic_pair=pair)
    if color:
        ycc = rgb_to_ycbcr(rgb)
        cb = bicubic_resize(ycc[:, :, 1], float(config.upscale), edge="clamp")
        cr = bicubic_resize(ycc[:, :, 2], float(config.upscale), edge="clamp")
        h, w = result.output.shape
        merged = np.stack([result.output, cb[:h, :w], cr[:h, :w]], axis=2)
        out = np.clip(ycbcr_to_rgb(merged), 0.0, 255.0)
    else:
        out = result.output
    save_image(args.output, out)
    print(result.provenance_text())
    print(f"output: {args.output} ({out.shape[1]}x{out.shape[0]})")
    return 0


def _cmd_eval(args, config) -> int:
    vocab, index, pair = _load_optional_assets(args, config)
    rows = pipeline.run_eval(args.test_dir, config, vocab=vocab, index=index,
                             generic_pair=pair)
    print(pipeline.format_eval_table(rows))
    if args.csv:
        Path(args.csv).write_text(pipeline.eval_rows_to_csv(rows))
        print(f"csv: {args.csv}")
    return 0


def _cmd_interp(args, config) -> int:
    del config
    if args.scale <= 0:
        raise ConfigError(f"--scale must be positive, got {args.scale}")
    rgb = load_image(args.input)
    if is_grayscale(rgb):
        out = bicubic_resize(rgb[:, :, 0], args.scale, edge=args.edge)
    else:
        planes = [bicubic_resize(rgb[:, :, c], args.scale, edge=args.edge)
                  for c in range(3)]
        out = np.stack(planes, axis=2)
    save_image(args.output, out)
    return 0


_COMMANDS = {
    "index": _cmd_index,
    "retrieve": _cmd_retrieve,
    "register": _cmd_register,
    "train-dict": _cmd_train_dict,
    "sr": _cmd_sr,
    "eval": _cmd_eval,
    "interp": _cmd_interp,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        return _COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
