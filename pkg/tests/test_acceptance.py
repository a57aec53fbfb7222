"""End-to-end acceptance checks; each test prints one pass/fail line."""

import contextlib
import hashlib
import io
import itertools
import random
import shutil
import time

import pytest

from capsula.cli import main
from capsula.curator import curate
from capsula.minilang import MinilangError, Sandbox, execute_script, parse_script, run_source
from capsula.prov import parse_prov_document, serialize_prov_document, validate_graph

import scriptgen
from conftest import FIGURES, MESSY, MESSY_DIR, report_criterion
from tarhelp import flip_byte, member_spans

pytestmark = pytest.mark.acceptance

EPOCH = "2020-01-01T00:00:00Z"
STRAIGHT_SEEDS = range(200)
STRUCTURED_SEEDS = range(10_000, 10_500)


def _cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def _encapsulate(script, dest, targets):
    argv = ["encapsulate", str(script), "--dest", str(dest), "--epoch", EPOCH]
    for t in targets:
        argv += ["--output", t]
    return _cli(*argv)


def _replay(result):
    box = Sandbox(inputs={f.path: f.data for f in result.inputs})
    return run_source(result.curated_source, box)


def _output_or_none(source, inputs, target):
    try:
        return run_source(source, Sandbox(inputs=inputs)).outputs.get(target)
    except MinilangError:
        return None


def minimal_line_set(program):
    """Smallest order-preserving line subset reproducing the target, by exhaustive search."""
    lines = program.lines
    n = len(lines)
    want = _output_or_none(program.source, program.inputs, program.target)
    assert want is not None
    # the final write is the only producer of the target, so it is always kept
    for size in range(n):
        hits = []
        for combo in itertools.combinations(range(1, n), size):
            keep = combo + (n,)
            text = "".join(lines[i - 1] + "\n" for i in keep)
            if _output_or_none(text, program.inputs, program.target) == want:
                hits.append(keep)
        if hits:
            assert len(hits) == 1, f"ambiguous minimum for\n{program.source}"
            return set(hits[0])
    raise AssertionError("no subset reproduces the output")


def test_messy_script_compression(tmp_path):
    start = time.perf_counter()
    work = tmp_path / "messy"
    shutil.copytree(MESSY_DIR, work)
    script = parse_script(MESSY.read_text(encoding="utf-8"))
    trace = execute_script(script, Sandbox(work))
    results = curate(script, Sandbox(work), FIGURES, trace=trace)
    counts = {r.target: r.statement_count for r in results}
    identical = all(_replay(r).outputs[r.target] == trace.outputs[r.target] for r in results)
    code, _, _ = _encapsulate(work / "messy.ms", tmp_path / "m.capsule.tar", FIGURES)
    elapsed = time.perf_counter() - start
    ok = (script.statement_count() == 60 and all(c <= 15 for c in counts.values())
          and identical and code == 0 and elapsed < 5)
    report_criterion(1, ok, f"60 statements -> {counts}, byte-identical={identical}, "
                            f"encapsulate exit {code}, {elapsed:.2f}s")
    assert ok


def test_oracle_minimality():
    start = time.perf_counter()
    mismatches = []
    for seed in STRAIGHT_SEEDS:
        p = scriptgen.straight_line(random.Random(seed))
        assert len(p.lines) <= 12
        script = parse_script(p.source)
        (r,) = curate(script, Sandbox(inputs=p.inputs), [p.target])
        if set(r.source_lines) != minimal_line_set(p):
            mismatches.append(seed)
    elapsed = time.perf_counter() - start
    n = len(STRAIGHT_SEEDS)
    ok = not mismatches and elapsed < 60
    report_criterion(2, ok, f"{n - len(mismatches)}/{n} scripts match the brute-force minimum, {elapsed:.1f}s")
    assert ok, mismatches[:10]


def test_reexecution_fidelity():
    start = time.perf_counter()
    failures = []
    features = {"if": 0, "for": 0, "runif": 0}
    for seed in STRUCTURED_SEEDS:
        p = scriptgen.structured(random.Random(seed))
        for key, token in (("if", "if ("), ("for", "for ("), ("runif", "runif(")):
            features[key] += token in p.source
        script = parse_script(p.source)
        trace = execute_script(script, Sandbox(inputs=p.inputs))
        (r,) = curate(script, Sandbox(inputs=p.inputs), [p.target], trace=trace)
        try:
            replayed = _replay(r).outputs.get(r.target)
        except MinilangError as exc:
            replayed = exc
        if replayed != trace.outputs[p.target]:
            failures.append(seed)
    elapsed = time.perf_counter() - start
    n = len(STRUCTURED_SEEDS)
    ok = not failures and elapsed < 120 and all(features.values())
    report_criterion(3, ok, f"{n - len(failures)}/{n} curated scripts reproduce their target "
                            f"(with if: {features['if']}, for: {features['for']}, "
                            f"runif: {features['runif']}), {elapsed:.1f}s")
    assert ok, failures[:10]


def test_provenance_round_trip():
    traces = [execute_script(parse_script(MESSY.read_text()), Sandbox(MESSY_DIR))]
    for seed in STRAIGHT_SEEDS:
        p = scriptgen.straight_line(random.Random(seed))
        traces.append(run_source(p.source, Sandbox(inputs=p.inputs)))
    for seed in STRUCTURED_SEEDS:
        p = scriptgen.structured(random.Random(seed))
        traces.append(run_source(p.source, Sandbox(inputs=p.inputs)))
    bad = 0
    for t in traces:
        text = serialize_prov_document(t.provenance)
        parsed = parse_prov_document(text)
        if (serialize_prov_document(parsed) != text or not parsed.structurally_equal(t.provenance)
                or not validate_graph(parsed).ok or not validate_graph(t.provenance).ok):
            bad += 1
    ok = bad == 0
    report_criterion(4, ok, f"{len(traces) - bad}/{len(traces)} trace documents are fixed points and valid")
    assert ok


def test_capsule_determinism(tmp_path):
    a, b = tmp_path / "a.capsule.tar", tmp_path / "b.capsule.tar"
    codes = (_encapsulate(MESSY, a, FIGURES)[0], _encapsulate(MESSY, b, FIGURES)[0])
    da, db = (hashlib.sha256(p.read_bytes()).hexdigest() for p in (a, b))
    ok = codes == (0, 0) and da == db
    report_criterion(5, ok, f"sha256 {da[:16]}... vs {db[:16]}...")
    assert ok


def _expected_failures(readers, entry):
    """Targets that must fail, with their reason, when ``entry`` is altered."""
    if entry.startswith("data/"):
        path = entry[len("data/"):]
        return {t: "hash-mismatch" for t, paths in readers.items() if path in paths}
    target = entry.split("/", 1)[1]
    if entry.startswith("scripts/"):
        target = target[: -len(".ms")]
    return {target: "hash-mismatch"}


def _parse_table(out):
    rows = {}
    for line in out.splitlines()[1:-1]:
        target, status, reason = line.split()[:3]
        rows[target] = (status, None if reason == "-" else reason)
    return rows


def test_tamper_detection(tmp_path):
    archive = tmp_path / "m.capsule.tar"
    assert _encapsulate(MESSY, archive, FIGURES)[0] == 0
    blob = archive.read_bytes()
    script = parse_script(MESSY.read_text())
    results = curate(script, Sandbox(MESSY_DIR), FIGURES)
    readers = {r.target: {f.path for f in r.inputs} for r in results}

    spans = {name: span for name, span in member_spans(blob).items()
             if name.split("/")[0] in ("data", "expected", "scripts")}
    kinds = {name.split("/")[0] for name in spans}
    bad_case = tmp_path / "t.capsule.tar"
    trials = wrong = 0
    for name, (offset, size) in sorted(spans.items()):
        want = _expected_failures(readers, name)
        for pos in range(offset, offset + size):
            bad_case.write_bytes(flip_byte(blob, pos))
            code, out, _ = _cli("verify", str(bad_case))
            rows = _parse_table(out)
            expected_rows = {t: ("fail", want[t]) if t in want else ("pass", None) for t in readers}
            trials += 1
            if code != 2 or rows != expected_rows:
                wrong += 1
    ok = wrong == 0 and kinds == {"data", "expected", "scripts"}
    report_criterion(6, ok, f"{trials - wrong}/{trials} single-byte mutations over {len(spans)} entries "
                            f"({', '.join(sorted(kinds))}) exit 2 with the right reasons")
    assert ok


def test_seeded_randomness_replay(tmp_path):
    src = ("set.seed(2024)\nnoise <- runif(5)\nprint(noise)\nx <- read(\"obs.txt\")\n"
           "jitter <- runif(3) * 0.01\ny <- x + jitter\nwrite(y, \"jittered.txt\")\n"
           "plot(noise, \"noise.txt\")\n")
    (tmp_path / "obs.txt").write_text("1\n2\n3\n")
    script = tmp_path / "seeded.ms"
    script.write_text(src)
    archive = tmp_path / "s.capsule.tar"
    code, _, _ = _encapsulate(script, archive, ["jittered.txt", "noise.txt"])
    original = run_source(src, Sandbox(tmp_path)).outputs
    passes = 0
    for k in range(10):
        vcode, out, _ = _cli("verify", str(archive))
        ws = tmp_path / f"replay{k}"
        dcode, _, _ = _cli("decapsulate", str(archive), "--dest", str(ws))
        same = True
        for target in ("jittered.txt", "noise.txt"):
            curated = (ws / "scripts" / f"{target}.ms").read_text()
            replayed = run_source(curated, Sandbox(ws / "data")).outputs[target]
            same &= replayed == original[target] == (ws / "expected" / target).read_bytes()
        passes += vcode == 0 and dcode == 0 and same and out.endswith("overall: pass (2/2 passed)\n")
    ok = code == 0 and passes == 10
    report_criterion(7, ok, f"{passes}/10 consecutive verifications byte-identical")
    assert ok
