"""CLI: ``hfwconvert convert`` and ``hfwconvert verify``."""

from __future__ import annotations

import argparse
import sys

from .convert import ConversionError, convert, verify
from .container import ContainerError
from .manifest import ManifestError, load_manifest
from .wire import WireError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hfwconvert",
        description="Convert pretrained checkpoints into HFW1 tensor containers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    cp = sub.add_parser("convert", help="convert a checkpoint per a mapping manifest")
    cp.add_argument("--format", choices=("caffe-legacy", "onnx"),
                    help="override the manifest's source format tag")
    cp.add_argument("--src", nargs="+", required=True, help="source checkpoint file(s)")
    cp.add_argument("--map", required=True, help="conversion manifest (JSON)")
    cp.add_argument("--out", required=True, help="output directory")

    vp = sub.add_parser("verify", help="check a container against a manifest")
    vp.add_argument("--container", required=True)
    vp.add_argument("--map", required=True)
    vp.add_argument("--report", help="report.json from convert, for checksum checks")

    args = parser.parse_args(argv)
    try:
        manifest = load_manifest(args.map)
        if args.command == "convert":
            if args.format and args.format != manifest.format:
                raise ConversionError(
                    f"--format {args.format} contradicts manifest format {manifest.format}"
                )
            report = convert(args.src, manifest, args.out)
            for row in report["tensors"]:
                print(f"{row['target']}\t{tuple(row['shape'])}\t{row['sha256'][:16]}")
            print(f"wrote {args.out}/{report['container']}, {report['architecture']}, "
                  f"{report['mean']}, report.json")
            return 0
        result = verify(args.container, manifest, report_path=args.report)
        print(result)
        print("PASS" if result.ok else "FAIL")
        return 0 if result.ok else 1
    except (ConversionError, ManifestError, ContainerError, WireError,
            FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
