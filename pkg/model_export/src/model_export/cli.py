"""Command-line surface for the export tool.

Subcommands:
  backbones  list every supported backbone id
  export     serialize one backbone into a model directory
  probes     write reference probe inputs and embeddings for a directory
  verify     re-hash an export and replay its probes through the runtime

Exit codes: 0 success, 1 failure (including failed verification), 2 usage.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .backbones import REGISTRY
from .errors import ExportError
from .export import export_models
from .probes import emit_reference_vectors
from .verify import DEFAULT_TOLERANCE, verify_manifest_hashes, verify_roundtrip


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="model-export",
        description="Export encoder/detector backbones to serialized model directories.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("backbones", help="list supported backbone ids")

    p_export = sub.add_parser("export", help="export a backbone to a directory")
    p_export.add_argument("--backbone", required=True, help="backbone id to export")
    p_export.add_argument("--out", required=True, help="model directory to write")

    p_probes = sub.add_parser(
        "probes", help="emit reference probe inputs and embeddings"
    )
    p_probes.add_argument("--model-dir", required=True, help="exported model directory")
    p_probes.add_argument("--out", required=True, help="directory for probe files")
    p_probes.add_argument(
        "--seed", type=int, default=7, help="probe image generator seed (default 7)"
    )

    p_verify = sub.add_parser(
        "verify", help="check file hashes and replay probes through the runtime"
    )
    p_verify.add_argument("--model-dir", required=True, help="exported model directory")
    p_verify.add_argument(
        "--probes", help="probes file or directory (required unless --skip-roundtrip)"
    )
    p_verify.add_argument(
        "--tolerance", type=float, default=DEFAULT_TOLERANCE,
        help=f"max cosine distance per probe (default {DEFAULT_TOLERANCE})",
    )
    p_verify.add_argument(
        "--skip-roundtrip", action="store_true",
        help="only re-hash files; do not replay probes",
    )
    return parser


def _quiet_model_libraries() -> None:
    try:
        from transformers.utils import logging as hf_logging
    except ImportError:
        return
    hf_logging.set_verbosity_error()


def _cmd_backbones(args: argparse.Namespace) -> int:
    for backbone_id in sorted(REGISTRY):
        spec = REGISTRY[backbone_id]
        access = "offline" if spec.offline else "network"
        print(f"{backbone_id:26s} {access:8s} {spec.description}")
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    manifest = export_models(args.backbone, args.out)
    print(f"exported {manifest.backbone_id} to {args.out}")
    for component, source in sorted(manifest.sources.items()):
        print(f"  {component}: {source}")
    print(f"  embedding dim {manifest.embedding_dim}, "
          f"image side {manifest.image_side}")
    for name in sorted(manifest.file_hashes):
        print(f"  {name}  sha256 {manifest.file_hashes[name][:16]}…")
    return 0


def _cmd_probes(args: argparse.Namespace) -> int:
    path = emit_reference_vectors(args.model_dir, args.out, seed=args.seed)
    print(f"wrote {path}")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    ok = True
    checks = verify_manifest_hashes(args.model_dir)
    bad = [check for check in checks if not check.passed]
    if bad:
        ok = False
        for check in bad:
            print(f"[hashes] FAIL {check.name} expected {check.expected} "
                  f"got {check.actual}")
    print(f"[hashes] {'FAIL' if bad else 'PASS'} "
          f"{len(checks) - len(bad)}/{len(checks)} recorded files match")

    if not args.skip_roundtrip:
        if not args.probes:
            raise ExportError("verify needs --probes unless --skip-roundtrip is set")
        report = verify_roundtrip(
            args.model_dir, args.probes, tolerance=args.tolerance
        )
        for check in report.checks:
            verdict = "PASS" if check.passed else "FAIL"
            print(f"[roundtrip] {verdict} {check.kind} {check.index:02d} "
                  f"distance {check.cosine_distance:.3e} ({check.label})")
        worst = report.worst
        print(f"[roundtrip] {'PASS' if report.passed else 'FAIL'} "
              f"{len(report.checks) - len(report.failures)}/{len(report.checks)} "
              f"probes within {report.tolerance:g}; worst {worst.cosine_distance:.3e} "
              f"({worst.kind} {worst.index:02d})")
        ok = ok and report.passed

    print(f"verification {'passed' if ok else 'failed'}")
    return 0 if ok else 1


_COMMANDS = {
    "backbones": _cmd_backbones,
    "export": _cmd_export,
    "probes": _cmd_probes,
    "verify": _cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _quiet_model_libraries()
    try:
        return _COMMANDS[args.command](args)
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
