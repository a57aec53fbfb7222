"""Time capsules: deterministic archives of curated scripts, inputs and expected outputs.

Archive layout (POSIX ustar, entries sorted by path, mtime/uid/gid 0)::

    data/<input path>           inputs the curated scripts read
    expected/<target>           output bytes recorded when the capsule was built
    manifest.txt                INI-style description, see docs/manifest-format.md
    prov/trace.provjson         provenance of the original run
    scripts/<target>.ms         one curated script per target
"""

from __future__ import annotations

import io
import logging
import os
import re
import shutil
import tarfile
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .curator import CurationResult
from .minilang import INTERPRETER, MinilangError, Sandbox, execute_script, parse_script, sha256_hex
from .minilang.interp import TraceResult, normalize_path
from .prov import serialize_prov_document

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_PATH = "manifest.txt"
PROV_PATH = "prov/trace.provjson"
CONSOLE_TARGET = "console"
SECTIONS = ("capsule", "environment", "libraries", "inputs", "scripts", "outputs")

_HEX64 = re.compile(r"[0-9a-f]{64}")
_TIMESTAMP = re.compile(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z")


class CapsuleError(Exception):
    pass


class EmptySelection(CapsuleError):
    pass


class DuplicateTarget(CapsuleError):
    pass


class UnknownTarget(CapsuleError):
    pass


class ManifestError(CapsuleError):
    pass


class MissingFile(CapsuleError):
    pass


class IOFailure(CapsuleError):
    pass


class CorruptArchive(CapsuleError):
    pass


class HashMismatch(CapsuleError):
    def __init__(self, path: str, message: str = "") -> None:
        super().__init__(message or f"hash mismatch for {path}")
        self.path = path


class DestNotEmpty(CapsuleError):
    pass


class SandboxUnavailable(CapsuleError, OSError):
    pass


def hash_file(data: bytes) -> str:
    return sha256_hex(data)


def format_timestamp(moment: datetime) -> str:
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; a trailing ``Z`` and naive values mean UTC."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    moment = datetime.fromisoformat(raw)
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc)


def script_path(target: str) -> str:
    return f"scripts/{target}.ms"


def expected_path(target: str) -> str:
    return f"expected/{target}"


def data_path(path: str) -> str:
    return f"data/{path}"


@dataclass(frozen=True)
class ScriptEntry:
    target: str
    script: str
    script_sha256: str
    expected_sha256: str


@dataclass(frozen=True)
class CapsuleManifest:
    interpreter: str
    scripts: tuple[ScriptEntry, ...]
    inputs: tuple[tuple[str, str], ...] = ()
    libraries: tuple[tuple[str, str], ...] = ()
    created: str = "1970-01-01T00:00:00Z"
    provenance_file: str = PROV_PATH
    format_version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        object.__setattr__(self, "scripts", tuple(sorted(self.scripts, key=lambda s: s.target)))
        object.__setattr__(self, "inputs", tuple(sorted(self.inputs)))
        object.__setattr__(self, "libraries", tuple(sorted(self.libraries)))
        self._check()

    def _check(self) -> None:
        if not _TIMESTAMP.fullmatch(self.created):
            raise ManifestError(f"created must look like 1970-01-01T00:00:00Z, got {self.created!r}")
        digests = [d for _, d in self.inputs]
        digests += [s.script_sha256 for s in self.scripts] + [s.expected_sha256 for s in self.scripts]
        for d in digests:
            if not _HEX64.fullmatch(d):
                raise ManifestError(f"not a lowercase sha256 digest: {d!r}")
        targets = [s.target for s in self.scripts]
        if len(set(targets)) != len(targets):
            raise ManifestError("duplicate script target")
        keys = targets + [p for p, _ in self.inputs] + [n for n, _ in self.libraries]
        values = [self.interpreter, self.provenance_file] + [v for _, v in self.libraries]
        for k in keys:
            if not k or k != k.strip() or "=" in k or "\n" in k or k.startswith("["):
                raise ManifestError(f"unusable manifest key {k!r}")
        for v in values:
            if not v or v != v.strip() or "\n" in v:
                raise ManifestError(f"unusable manifest value {v!r}")

    def files(self) -> list[str]:
        """Archive paths the manifest refers to, besides itself."""
        out = [self.provenance_file]
        out += [data_path(p) for p, _ in self.inputs]
        for s in self.scripts:
            out += [s.script, expected_path(s.target)]
        return sorted(out)

    def render(self) -> str:
        sections = {
            "capsule": [
                ("created", self.created),
                ("format-version", str(self.format_version)),
                ("provenance-file", self.provenance_file),
            ],
            "environment": [("interpreter", self.interpreter)],
            "libraries": list(self.libraries),
            "inputs": list(self.inputs),
            "scripts": [(s.target, f"{s.script} {s.script_sha256}") for s in self.scripts],
            "outputs": [(s.target, s.expected_sha256) for s in self.scripts],
        }
        chunks = []
        for name in SECTIONS:
            body = "".join(f"{k} = {v}\n" for k, v in sorted(sections[name]))
            chunks.append(f"[{name}]\n{body}")
        return "\n".join(chunks)

    @classmethod
    def parse(cls, text: str) -> "CapsuleManifest":
        sections: dict[str, dict[str, str]] = {}
        current = None
        for n, line in enumerate(text.split("\n"), 1):
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                if current not in SECTIONS or current in sections:
                    raise ManifestError(f"line {n}: unexpected section {line}")
                sections[current] = {}
                continue
            key, sep, value = line.partition(" = ")
            if current is None or not sep:
                raise ManifestError(f"line {n}: expected 'key = value'")
            if key in sections[current]:
                raise ManifestError(f"line {n}: duplicate key {key!r}")
            sections[current][key] = value
        missing = [s for s in SECTIONS if s not in sections]
        if missing:
            raise ManifestError(f"missing sections: {', '.join(missing)}")
        try:
            head = sections["capsule"]
            scripts = []
            for target, value in sections["scripts"].items():
                path, _, digest = value.rpartition(" ")
                scripts.append(ScriptEntry(target, path, digest, sections["outputs"][target]))
            if set(sections["outputs"]) != set(sections["scripts"]):
                raise ManifestError("[scripts] and [outputs] list different targets")
            manifest = cls(
                interpreter=sections["environment"]["interpreter"],
                scripts=tuple(scripts),
                inputs=tuple(sections["inputs"].items()),
                libraries=tuple(sections["libraries"].items()),
                created=head["created"],
                provenance_file=head["provenance-file"],
                format_version=int(head["format-version"]),
            )
        except (KeyError, ValueError) as exc:
            raise ManifestError(f"incomplete manifest: {exc}") from None
        if manifest.render() != text:
            raise ManifestError("manifest is not in canonical form")
        return manifest


def _target_bytes(trace: TraceResult, target: str) -> bytes | None:
    if target in trace.outputs:
        return trace.outputs[target]
    if target == CONSOLE_TARGET and trace.console:
        return trace.console.encode("utf-8")
    return None


def build_manifest(results: Sequence[CurationResult], trace: TraceResult,
                   created: datetime | None = None) -> CapsuleManifest:
    if not results:
        raise EmptySelection("no curated scripts to encapsulate")
    targets = [r.target for r in results]
    dupes = sorted({t for t in targets if targets.count(t) > 1})
    if dupes:
        raise DuplicateTarget(f"target(s) selected twice: {', '.join(dupes)}")
    entries = []
    inputs: dict[str, str] = {}
    libraries: set[tuple[str, str]] = set()
    for r in results:
        expected = _target_bytes(trace, r.target)
        if expected is None:
            raise UnknownTarget(f"{r.target!r} is not an output of the traced run")
        entries.append(ScriptEntry(
            r.target,
            script_path(r.target),
            hash_file(r.curated_source.encode("utf-8")),
            hash_file(expected),
        ))
        for item in r.inputs:
            inputs[item.path] = item.sha256
        libraries.update(r.libraries)
    return CapsuleManifest(
        interpreter=INTERPRETER,
        scripts=tuple(entries),
        inputs=tuple(inputs.items()),
        libraries=tuple(libraries),
        created=format_timestamp(created or datetime.now(timezone.utc)),
    )


def capsule_files(results: Sequence[CurationResult], trace: TraceResult) -> dict[str, bytes]:
    """Archive members (other than the manifest) for a set of curation results."""
    files = {PROV_PATH: serialize_prov_document(trace.provenance).encode("utf-8")}
    for r in results:
        files[script_path(r.target)] = r.curated_source.encode("utf-8")
        files[expected_path(r.target)] = _target_bytes(trace, r.target)
        for item in r.inputs:
            files[data_path(item.path)] = item.data
    return files


def _tar_entries(manifest: CapsuleManifest, files: Mapping[str, bytes]) -> list[tuple[str, bytes | None]]:
    members = dict(files)
    members[MANIFEST_PATH] = manifest.render().encode("utf-8")
    dirs = set()
    for path in members:
        parts = path.split("/")[:-1]
        for i in range(1, len(parts) + 1):
            dirs.add("/".join(parts[:i]) + "/")
    entries: list[tuple[str, bytes | None]] = [(d, None) for d in dirs]
    entries += list(members.items())
    return sorted(entries, key=lambda e: e[0])


def archive_bytes(manifest: CapsuleManifest, files: Mapping[str, bytes]) -> bytes:
    missing = [p for p in manifest.files() if p not in files]
    if missing:
        raise MissingFile(f"capsule is missing {', '.join(missing)}")
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        for name, data in _tar_entries(manifest, files):
            info = tarfile.TarInfo(name)
            info.mtime = 0
            info.uid = info.gid = 0
            info.uname = info.gname = ""
            if data is None:
                info.type = tarfile.DIRTYPE
                info.mode = 0o755
                tar.addfile(info)
            else:
                info.mode = 0o644
                info.size = len(data)
                tar.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def pack_capsule(manifest: CapsuleManifest, files: Mapping[str, bytes], dest: str | Path) -> Path:
    """Write the capsule archive to ``dest`` atomically."""
    try:
        blob = archive_bytes(manifest, files)
    except ValueError as exc:
        raise IOFailure(f"cannot encode archive: {exc}") from None
    dest = Path(dest)
    try:
        fd, tmp = tempfile.mkstemp(prefix=".capsule-", dir=dest.parent if str(dest.parent) else ".")
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, dest)
    except OSError as exc:
        raise IOFailure(f"cannot write {dest}: {exc}") from None
    return dest


def _read_members(blob: bytes) -> dict[str, bytes]:
    members: dict[str, bytes] = {}
    try:
        with tarfile.open(fileobj=io.BytesIO(blob), mode="r:") as tar:
            for info in tar:
                name = info.name.rstrip("/")
                try:
                    name = normalize_path(name)
                except MinilangError:
                    raise CorruptArchive(f"unsafe member name {info.name!r}") from None
                if info.isdir():
                    continue
                if not info.isreg():
                    raise CorruptArchive(f"member {info.name!r} is not a regular file")
                fh = tar.extractfile(info)
                data = fh.read() if fh is not None else b""
                if len(data) != info.size:
                    raise CorruptArchive(f"member {info.name!r} is truncated")
                if name in members:
                    raise CorruptArchive(f"member {name!r} appears twice")
                members[name] = data
            end = tar.offset
    except (tarfile.TarError, EOFError, OSError) as exc:
        raise CorruptArchive(f"unreadable archive: {exc}") from None
    # tarfile tolerates a missing end-of-archive marker; a capsule must have
    # one, and is always padded to a whole record
    if blob[end:end + 2 * tarfile.BLOCKSIZE] != bytes(2 * tarfile.BLOCKSIZE):
        raise CorruptArchive("archive is truncated (no end-of-archive marker)")
    if len(blob) % tarfile.RECORDSIZE or any(blob[end:]):
        raise CorruptArchive("archive is truncated or has trailing data")
    return members


def unpack_capsule(archive: str | Path, dest: str | Path,
                   verify_hashes: bool = True) -> tuple[Path, CapsuleManifest]:
    """Extract a capsule into ``dest`` (absent or empty) and parse its manifest.

    With ``verify_hashes`` every file the manifest lists must exist and match
    its digest; otherwise that check is left to :func:`verify_capsule`.
    """
    dest = Path(dest)
    if dest.exists() and (not dest.is_dir() or any(dest.iterdir())):
        raise DestNotEmpty(f"{dest} exists and is not an empty directory")
    try:
        blob = Path(archive).read_bytes()
    except OSError as exc:
        raise CorruptArchive(f"cannot read {archive}: {exc}") from None
    members = _read_members(blob)
    if MANIFEST_PATH not in members:
        raise CorruptArchive("archive has no manifest.txt")
    try:
        manifest = CapsuleManifest.parse(members[MANIFEST_PATH].decode("utf-8"))
    except (ManifestError, UnicodeDecodeError) as exc:
        raise CorruptArchive(f"bad manifest: {exc}") from None

    if verify_hashes:
        for path, digest in _manifest_digests(manifest):
            if path not in members:
                raise CorruptArchive(f"archive lacks {path}")
            if hash_file(members[path]) != digest:
                raise HashMismatch(path)
        if manifest.provenance_file not in members:
            raise CorruptArchive(f"archive lacks {manifest.provenance_file}")

    dest.mkdir(parents=True, exist_ok=True)
    for name, data in sorted(members.items()):
        target = dest / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
    return dest, manifest


def _manifest_digests(manifest: CapsuleManifest) -> list[tuple[str, str]]:
    out = [(data_path(p), d) for p, d in manifest.inputs]
    for s in manifest.scripts:
        out.append((s.script, s.script_sha256))
        out.append((expected_path(s.target), s.expected_sha256))
    return out


# -- verification ------------------------------------------------------------

PASS, FAIL = "pass", "fail"
HASH_MISMATCH, EXECUTION_ERROR, MISSING_FILE = "hash-mismatch", "execution-error", "missing-file"


@dataclass(frozen=True)
class TargetResult:
    target: str
    status: str
    reason: str | None = None
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    results: tuple[TargetResult, ...] = field(default_factory=tuple)

    @property
    def overall(self) -> bool:
        return all(r.status == PASS for r in self.results)

    def passed(self) -> int:
        return sum(r.status == PASS for r in self.results)


def diff_summary(expected: bytes, actual: bytes, context: int = 8) -> str:
    n = next((i for i, (a, b) in enumerate(zip(expected, actual)) if a != b), min(len(expected), len(actual)))
    lo = max(0, n - context)
    return (f"first difference at byte {n}: expected {expected[lo:n + context]!r}, "
            f"got {actual[lo:n + context]!r}")


class _RecordingSandbox(Sandbox):
    def __init__(self, root: Path) -> None:
        super().__init__(root)
        self.loaded: list[str] = []

    def load(self, path: str) -> bytes | None:
        self.loaded.append(normalize_path(path))
        return super().load(path)


def _read_if_present(path: Path) -> bytes | None:
    return path.read_bytes() if path.is_file() else None


def _tmp_root() -> str | None:
    return os.environ.get("CAPSULA_TMPDIR") or None


def _verify_one(root: Path, entry: ScriptEntry, data_status: dict[str, tuple[str, str]],
                inputs: dict[str, bytes]) -> TargetResult:
    t = entry.target
    script_bytes = _read_if_present(root / entry.script)
    if script_bytes is None:
        return TargetResult(t, FAIL, MISSING_FILE, f"{entry.script} not found")
    if hash_file(script_bytes) != entry.script_sha256:
        return TargetResult(t, FAIL, HASH_MISMATCH, f"{entry.script} does not match the manifest")
    exp_name = expected_path(t)
    expected = _read_if_present(root / exp_name)
    if expected is None:
        return TargetResult(t, FAIL, MISSING_FILE, f"{exp_name} not found")
    if hash_file(expected) != entry.expected_sha256:
        return TargetResult(t, FAIL, HASH_MISMATCH, f"{exp_name} does not match the manifest")

    try:
        with tempfile.TemporaryDirectory(prefix="capsula-verify-", dir=_tmp_root()) as tmp:
            box_root = Path(tmp)
            for path, data in inputs.items():
                dest = box_root / path
                dest.parent.mkdir(parents=True, exist_ok=True)
                dest.write_bytes(data)
            sandbox = _RecordingSandbox(box_root)
            error = None
            produced = None
            try:
                trace = execute_script(parse_script(script_bytes.decode("utf-8")), sandbox)
                produced = _target_bytes(trace, t)
            except (MinilangError, UnicodeDecodeError) as exc:
                error = exc
    except OSError as exc:
        raise SandboxUnavailable(f"cannot create verification sandbox: {exc}") from exc

    for path in sandbox.loaded:
        if path in data_status:
            reason, detail = data_status[path]
            return TargetResult(t, FAIL, reason, detail)
    if error is not None:
        return TargetResult(t, FAIL, EXECUTION_ERROR, str(error))
    if produced is None:
        return TargetResult(t, FAIL, MISSING_FILE, f"script did not produce {t}")
    if produced != expected:
        return TargetResult(t, FAIL, HASH_MISMATCH, diff_summary(expected, produced))
    return TargetResult(t, PASS)


def verify_capsule(workspace: str | Path) -> VerificationReport:
    """Re-run every curated script against the capsule's inputs and compare outputs."""
    root = Path(workspace)
    try:
        manifest = CapsuleManifest.parse((root / MANIFEST_PATH).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, ManifestError) as exc:
        raise CorruptArchive(f"workspace has no usable manifest: {exc}") from None
    if manifest.interpreter != INTERPRETER:
        log.warning("capsule was built with %s, verifying with %s", manifest.interpreter, INTERPRETER)

    inputs: dict[str, bytes] = {}
    # input path -> (reason, detail) for inputs that are absent or altered
    bad_inputs: dict[str, tuple[str, str]] = {}
    for path, digest in manifest.inputs:
        data = _read_if_present(root / data_path(path))
        if data is None:
            bad_inputs[path] = (MISSING_FILE, f"{data_path(path)} not found")
            continue
        if hash_file(data) != digest:
            bad_inputs[path] = (HASH_MISMATCH, f"{data_path(path)} does not match the manifest")
        inputs[path] = data
    return VerificationReport(tuple(
        _verify_one(root, entry, bad_inputs, inputs) for entry in manifest.scripts
    ))


@dataclass
class BuildResult:
    archive: Path
    manifest: CapsuleManifest
    report: VerificationReport


def encapsulate(results: Sequence[CurationResult], trace: TraceResult, dest: str | Path,
                created: datetime | None = None) -> BuildResult:
    """Build, pack and self-verify a capsule; nothing is left at ``dest`` on failure."""
    manifest = build_manifest(results, trace, created)
    files = capsule_files(results, trace)
    dest = Path(dest)
    try:
        staging = tempfile.mkdtemp(prefix="capsula-build-", dir=_tmp_root())
    except OSError as exc:
        raise SandboxUnavailable(f"cannot create build directory: {exc}") from exc
    try:
        staged = pack_capsule(manifest, files, Path(staging) / "capsule.tar")
        workspace, _ = unpack_capsule(staged, Path(staging) / "workspace")
        report = verify_capsule(workspace)
        if report.overall:
            pack_capsule(manifest, files, dest)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return BuildResult(dest, manifest, report)
