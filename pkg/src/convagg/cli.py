"""Command-line interface for the staged pipeline.

Subcommands: extract, train-agg, encode, train-svm, evaluate, report,
sweep, pipeline, make-toy. Options can come from an INI config file
(section ``[pipeline]``, keys named like the flags with dashes replaced by
underscores); explicit flags override file values. Example::

    [pipeline]
    manifest = data/manifest.tsv
    arch = data/toy.arch
    weights = data/toy_weights.hfw
    cache_dir = cache
    layers = last:2
    encoder = bow
    codebook_size = 8
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

from .errors import ManifestError, MissingArtifactError, StaleCacheError
from .pipeline import STAGES, PipelineConfig, run_pipeline, run_stage, sweep
from .toydata import generate_toy_dataset

_CONFIG_FIELDS = {
    "manifest": str,
    "arch": str,
    "weights": str,
    "mean_file": str,
    "cache_dir": str,
    "layers": str,
    "encoder": str,
    "codebook_size": int,
    "gmm_components": int,
    "append_fc": str,
    "fv_normalize": bool,
    "fv_scaling": str,
    "svm_c": str,
    "feature_normalize": bool,
    "resize_mode": str,
    "channel_order": str,
    "reservoir_capacity": int,
    "kmeans_iters": int,
    "gmm_iters": int,
    "svm_epochs": int,
    "extract_layers": str,
    "ap_interpolation": str,
    "workers": int,
    "seed": int,
    "deterministic": bool,
}


def _add_pipeline_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI file with a [pipeline] section")
    p.add_argument("--manifest", help="dataset manifest (TSV)")
    p.add_argument("--arch", help="architecture descriptor file")
    p.add_argument("--weights", help="weight container (.hfw)")
    p.add_argument("--mean-file", dest="mean_file", help="per-channel mean file")
    p.add_argument("--cache-dir", dest="cache_dir", help="artifact cache directory")
    p.add_argument("--layers", help="single:L | first:L | last:L | list:a,b,c")
    p.add_argument("--encoder", choices=("bow", "fv"))
    p.add_argument("--codebook-size", dest="codebook_size", type=int)
    p.add_argument("--gmm-components", dest="gmm_components", type=int)
    p.add_argument("--append-fc", dest="append_fc",
                   help="comma-separated dense layer indices to append raw")
    p.add_argument("--fv-normalize", dest="fv_normalize", action="store_true",
                   default=None, help="signed sqrt + L2 normalization of FV output")
    p.add_argument("--fv-scaling", dest="fv_scaling", choices=("inverse", "inv_sqrt"))
    p.add_argument("--svm-c", dest="svm_c", help="positive float, or 'grid'")
    p.add_argument("--no-feature-normalize", dest="feature_normalize",
                   action="store_false", default=None,
                   help="disable L2 normalization of hybrid features")
    p.add_argument("--resize-mode", dest="resize_mode", choices=("warp", "center_crop"))
    p.add_argument("--channel-order", dest="channel_order", choices=("rgb", "bgr"))
    p.add_argument("--reservoir-capacity", dest="reservoir_capacity", type=int)
    p.add_argument("--kmeans-iters", dest="kmeans_iters", type=int)
    p.add_argument("--gmm-iters", dest="gmm_iters", type=int)
    p.add_argument("--svm-epochs", dest="svm_epochs", type=int)
    p.add_argument("--extract-layers", dest="extract_layers",
                   help="'all' (default) or list:a,b,c")
    p.add_argument("--ap-all-points", dest="ap_interpolation", action="store_const",
                   const="all_points", default=None,
                   help="use the continuous AP variant instead of 11-point")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true", default=None)


def _read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    if not parser.has_section("pipeline"):
        raise ValueError(f"config file {path!r} has no [pipeline] section")
    out = {}
    for key, raw in parser.items("pipeline"):
        if key not in _CONFIG_FIELDS:
            raise ValueError(f"unknown config key {key!r}")
        typ = _CONFIG_FIELDS[key]
        if typ is bool:
            out[key] = parser.getboolean("pipeline", key)
        elif typ is int:
            out[key] = parser.getint("pipeline", key)
        else:
            out[key] = raw
    return out


def _parse_fc(text) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def build_config(args: argparse.Namespace) -> PipelineConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(_read_config_file(args.config))
    for key in _CONFIG_FIELDS:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            values[key] = flag_val
    values["append_fc"] = _parse_fc(values.get("append_fc"))
    for required in ("manifest", "arch", "weights", "cache_dir"):
        if not values.get(required):
            raise ValueError(f"missing required option --{required.replace('_', '-')}")
    return PipelineConfig(**values)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="convagg",
        description="Staged hybrid-feature pipeline: conv-net activations -> "
                    "BoW/FV encoding -> linear SVM -> mAP",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in STAGES + ("pipeline",):
        sp = sub.add_parser(stage, help=f"run the {stage} stage" if stage in STAGES
                            else "run all stages in order")
        _add_pipeline_flags(sp)

    sp = sub.add_parser("sweep", help="rerun downstream stages over an axis of values")
    _add_pipeline_flags(sp)
    sp.add_argument("--axis", required=True, choices=("layer_subset", "codebook_size"))
    sp.add_argument("--values", required=True,
                    help="comma-separated values (sizes or subset specs)")

    sp = sub.add_parser("make-toy", help="generate the bundled synthetic dataset")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--images", type=int, default=60)
    sp.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)

    try:
        if args.command == "make-toy":
            paths = generate_toy_dataset(args.out, n_images=args.images, seed=args.seed)
            print(f"wrote {paths['manifest']}")
            print(f"wrote {paths['arch']}")
            print(f"wrote {paths['weights']}")
            print(f"wrote {paths['mean']}")
            return 0

        config = build_config(args)
        if args.command == "pipeline":
            results = run_pipeline(config)
            for r in results.values():
                print(r.log_line())
            ev = results["evaluate"]
            print(f"mAP\t{ev.info['map']:.6f}")
            print(f"report artifacts: {results['report'].path}")
        elif args.command == "sweep":
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            rows, _ = sweep(args.axis, values, config)
            print(f"{args.axis}\tmAP")
            for value, map_value in rows:
                print(f"{value}\t{map_value:.6f}")
        else:
            result = run_stage(args.command, config)
            print(result.log_line())
            if args.command == "evaluate":
                print((result.path / "ap_table.tsv").read_text(encoding="utf-8"), end="")
        return 0
    except (ValueError, FileNotFoundError, ManifestError,
            MissingArtifactError, StaleCacheError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
