"""Command-line front end: info, clean, encapsulate, decapsulate, verify.

Exit codes: 0 success, 1 user error, 2 verification failure, 3 internal error.
Listings and reports go to stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from . import capsule
from .curator import CurationError, UnknownTarget, curate
from .minilang import MinilangError, Sandbox, execute_script, parse_script
from .prov import list_outputs

EXIT_OK, EXIT_USER, EXIT_VERIFY, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("capsula")


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        raise UserError(message)


def _load(script_path: str):
    path = Path(script_path)
    try:
        source = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UserError(f"cannot read {script_path}: {exc}") from None
    try:
        script = parse_script(source)
    except MinilangError as exc:
        raise UserError(f"{script_path}: {exc}") from None
    sandbox = Sandbox(path.resolve().parent)
    try:
        trace = execute_script(script, sandbox)
    except MinilangError as exc:
        raise UserError(f"{script_path}: {exc}") from None
    return path, script, sandbox, trace


def _curate(args):
    path, script, sandbox, trace = _load(args.script)
    targets = args.output or [o.path for o in list_outputs(trace.provenance) if o.path != "console"]
    if not targets:
        raise UserError(f"{args.script} produces no outputs")
    try:
        results = curate(script, sandbox, targets, trace=trace)
    except UnknownTarget as exc:
        raise UserError(str(exc)) from None
    except CurationError as exc:
        raise UserError(f"curation failed: {exc}") from None
    return path, trace, results


def cmd_info(args) -> int:
    path, _, _, trace = _load(args.script)
    outputs = list_outputs(trace.provenance)
    if not outputs:
        print("no outputs detected")
        return EXIT_OK
    width = max(len(o.path) for o in outputs)
    print(f"outputs of {path.name}:")
    for n, o in enumerate(outputs, 1):
        kind = "console" if o.entity.namespace == "console" else "file"
        print(f"{n:>3}  {o.path:<{width}}  line {o.line:<4}  {kind}")
    return EXIT_OK


def cmd_clean(args) -> int:
    path, _, results = _curate(args)
    if args.stdout:
        if len(results) != 1:
            raise UserError("--stdout needs exactly one --output")
        sys.stdout.write(results[0].curated_source)
        return EXIT_OK
    outdir = Path(args.outdir) if args.outdir else path.parent
    for r in results:
        dest = outdir / f"{path.stem}.{Path(r.target).stem}.curated.ms"
        try:
            dest.write_text(r.curated_source, encoding="utf-8")
        except OSError as exc:
            raise UserError(f"cannot write {dest}: {exc}") from None
        print(f"{r.target}: {dest} ({r.statement_count} statements)")
    return EXIT_OK


def _print_report(report: capsule.VerificationReport) -> None:
    width = max([len("target")] + [len(r.target) for r in report.results])
    print(f"{'target':<{width}}  status  reason           detail")
    for r in report.results:
        print(f"{r.target:<{width}}  {r.status:<6}  {r.reason or '-':<15}  {r.detail}".rstrip())
    total = len(report.results)
    verdict = "pass" if report.overall else "fail"
    print(f"overall: {verdict} ({report.passed()}/{total} passed)")


def cmd_encapsulate(args) -> int:
    created = None
    if args.epoch is not None:
        try:
            created = capsule.parse_timestamp(args.epoch)
        except ValueError:
            raise UserError(f"--epoch: not an ISO-8601 timestamp: {args.epoch!r}") from None
    dest = Path(args.dest)
    if not dest.parent.is_dir():
        raise UserError(f"cannot write {dest}: directory {dest.parent} does not exist")
    _, trace, results = _curate(args)
    try:
        built = capsule.encapsulate(results, trace, dest, created)
    except capsule.IOFailure as exc:
        raise UserError(str(exc)) from None
    if not built.report.overall:
        _print_report(built.report)
        log.error("capsule failed its own verification; nothing written to %s", dest)
        return EXIT_VERIFY
    m = built.manifest
    print(f"wrote {dest}: {len(m.scripts)} script(s), {len(m.inputs)} input(s), "
          f"{len(m.libraries)} librar{'y' if len(m.libraries) == 1 else 'ies'}")
    return EXIT_OK


def _unpack_and_verify(archive: str, dest: Path) -> int:
    if not Path(archive).is_file():
        raise UserError(f"no such capsule: {archive}")
    try:
        workspace, _ = capsule.unpack_capsule(archive, dest, verify_hashes=False)
        report = capsule.verify_capsule(workspace)
    except (capsule.CorruptArchive, capsule.DestNotEmpty) as exc:
        raise UserError(str(exc)) from None
    _print_report(report)
    return EXIT_OK if report.overall else EXIT_VERIFY


def cmd_decapsulate(args) -> int:
    code = _unpack_and_verify(args.capsule, Path(args.dest))
    print(f"workspace: {args.dest}")
    return code


def cmd_verify(args) -> int:
    tmp_root = capsule._tmp_root()
    with tempfile.TemporaryDirectory(prefix="capsula-", dir=tmp_root) as tmp:
        return _unpack_and_verify(args.capsule, Path(tmp) / "workspace")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="capsula", description="Curate scripts and build verifiable time capsules.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    info = sub.add_parser("info", help="list the outputs a script produces")
    info.add_argument("script")
    info.set_defaults(func=cmd_info)

    clean = sub.add_parser("clean", help="write a curated script per output")
    clean.add_argument("script")
    clean.add_argument("--output", action="append", metavar="PATH", help="output to curate (repeatable)")
    clean.add_argument("--stdout", action="store_true", help="print the single curated script")
    clean.add_argument("--outdir", help="directory for curated files (default: next to the script)")
    clean.set_defaults(func=cmd_clean)

    enc = sub.add_parser("encapsulate", help="build a capsule archive")
    enc.add_argument("script")
    enc.add_argument("--output", action="append", metavar="PATH", help="output to include (repeatable)")
    enc.add_argument("--dest", required=True, help="archive to write (*.capsule.tar)")
    enc.add_argument("--epoch", help="pin the manifest timestamp (ISO-8601)")
    enc.set_defaults(func=cmd_encapsulate)

    dec = sub.add_parser("decapsulate", help="unpack and verify a capsule")
    dec.add_argument("capsule")
    dec.add_argument("--dest", required=True, help="empty or new directory to unpack into")
    dec.set_defaults(func=cmd_decapsulate)

    ver = sub.add_parser("verify", help="verify a capsule in a scratch directory")
    ver.add_argument("capsule")
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UserError as exc:
        print(f"capsula: error: {exc}", file=sys.stderr)
        return EXIT_USER
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="capsula: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UserError as exc:
        print(f"capsula: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except capsule.SandboxUnavailable as exc:
        print(f"capsula: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
