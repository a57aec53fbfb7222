import hashlib
import shutil

import pytest

from capsula.cli import main

from conftest import FIGURES, MESSY_DIR
from tarhelp import flip_byte, member_spans

EPOCH = "2020-01-01T00:00:00Z"


@pytest.fixture
def messy(tmp_path):
    work = tmp_path / "messy"
    shutil.copytree(MESSY_DIR, work)
    return work / "messy.ms"


@pytest.fixture
def capsule_path(messy, tmp_path, capsys):
    dest = tmp_path / "messy.capsule.tar"
    argv = ["encapsulate", str(messy), "--dest", str(dest), "--epoch", EPOCH]
    for f in FIGURES:
        argv += ["--output", f]
    assert main(argv) == 0
    capsys.readouterr()
    return dest


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- info --------------------------------------------------------------------

def test_info_lists_figures(messy, capsys):
    code, out, _ = _run(capsys, "info", str(messy))
    assert code == 0
    assert out.startswith("outputs of messy.ms:\n")
    assert "fig1_biplot_v2.png  line 41" in out
    assert "fig2_biplot.png" in out
    console_row = next(line for line in out.splitlines() if " console " in line + " ")
    assert console_row.rstrip().endswith("console")


def test_info_is_stable(messy, capsys):
    assert _run(capsys, "info", str(messy)) == _run(capsys, "info", str(messy))


def test_info_no_outputs(tmp_path, capsys):
    script = tmp_path / "quiet.ms"
    script.write_text("x <- 1\n")
    assert _run(capsys, "info", str(script))[:2] == (0, "no outputs detected\n")


def test_info_missing_argument(capsys):
    code, _, err = _run(capsys, "info")
    assert code == 1 and "usage" in err


@pytest.mark.parametrize("body", ["x <- <- 1\n", 'x <- read("missing.txt")\n'])
def test_info_bad_script(tmp_path, capsys, body):
    script = tmp_path / "bad.ms"
    script.write_text(body)
    code, out, err = _run(capsys, "info", str(script))
    assert code == 1 and out == "" and "line 1" in err


def test_unknown_flag_and_subcommand(messy, capsys):
    assert _run(capsys, "info", str(messy), "--bogus")[0] == 1
    assert _run(capsys, "frobnicate")[0] == 1
    assert _run(capsys)[0] == 1


# -- clean -------------------------------------------------------------------

def test_clean_writes_curated_file(messy, capsys, tmp_path):
    code, out, _ = _run(capsys, "clean", str(messy), "--output", "fig1_biplot_v2.png")
    assert code == 0
    curated = messy.parent / "messy.fig1_biplot_v2.curated.ms"
    text = curated.read_text()
    assert len([ln for ln in text.splitlines() if ln.strip() not in ("}", "")]) <= 15
    assert "statsx::zscore" in text and "library(plotx)" in text
    assert "(7 statements)" in out


def test_clean_defaults_to_all_files(messy, capsys, tmp_path):
    outdir = tmp_path / "out"
    outdir.mkdir()
    assert _run(capsys, "clean", str(messy), "--outdir", str(outdir))[0] == 0
    made = sorted(p.name for p in outdir.iterdir())
    assert "messy.fig2_biplot.curated.ms" in made and len(made) == 8


def test_clean_stdout_one_liner(tmp_path, capsys):
    script = tmp_path / "one.ms"
    script.write_text('write(1,"o.txt")')
    assert _run(capsys, "clean", str(script), "--output", "o.txt", "--stdout") == (0, 'write(1, "o.txt")\n', "")


def test_clean_stdout_needs_one_target(messy, capsys):
    assert _run(capsys, "clean", str(messy), "--stdout")[0] == 1


def test_clean_bogus_target(messy, capsys):
    code, _, err = _run(capsys, "clean", str(messy), "--output", "nope.png")
    assert code == 1
    assert "nope.png" in err and "fig1_biplot_v2.png" in err


# -- encapsulate ---------------------------------------------------------------

def test_encapsulate_then_verify(capsule_path, capsys):
    code, out, _ = _run(capsys, "verify", str(capsule_path))
    assert code == 0
    assert out.splitlines()[-1] == "overall: pass (2/2 passed)"


def test_encapsulate_is_reproducible(messy, capsule_path, tmp_path, capsys):
    again = tmp_path / "again.capsule.tar"
    argv = ["encapsulate", str(messy), "--dest", str(again), "--epoch", EPOCH]
    for f in FIGURES:
        argv += ["--output", f]
    assert _run(capsys, *argv)[0] == 0
    digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
    assert digest(again) == digest(capsule_path)


def test_encapsulate_unwritable_dest(messy, tmp_path, capsys):
    dest = tmp_path / "no" / "dir" / "x.capsule.tar"
    assert _run(capsys, "encapsulate", str(messy), "--dest", str(dest))[0] == 1


def test_encapsulate_bad_epoch(messy, tmp_path, capsys):
    dest = tmp_path / "x.capsule.tar"
    assert _run(capsys, "encapsulate", str(messy), "--dest", str(dest), "--epoch", "soon")[0] == 1


def test_encapsulate_requires_dest(messy, capsys):
    assert _run(capsys, "encapsulate", str(messy))[0] == 1


# -- decapsulate / verify --------------------------------------------------------

def test_decapsulate_fresh(capsule_path, tmp_path, capsys):
    ws = tmp_path / "ws"
    code, out, _ = _run(capsys, "decapsulate", str(capsule_path), "--dest", str(ws))
    assert code == 0
    assert (ws / "manifest.txt").is_file() and (ws / "scripts" / "fig2_biplot.png.ms").is_file()
    assert "overall: pass" in out


def test_decapsulate_tampered(capsule_path, tmp_path, capsys):
    blob = capsule_path.read_bytes()
    off, size = member_spans(blob)["expected/fig1_biplot_v2.png"]
    capsule_path.write_bytes(flip_byte(blob, off + size // 2))
    code, out, _ = _run(capsys, "decapsulate", str(capsule_path), "--dest", str(tmp_path / "ws"))
    assert code == 2
    row = next(line for line in out.splitlines() if line.startswith("fig1_biplot_v2.png"))
    assert "fail" in row and "hash-mismatch" in row


def test_decapsulate_missing_capsule(tmp_path, capsys):
    assert _run(capsys, "decapsulate", str(tmp_path / "nope.tar"), "--dest", str(tmp_path / "ws"))[0] == 1


def test_decapsulate_nonempty_dest(capsule_path, tmp_path, capsys):
    (tmp_path / "ws").mkdir()
    (tmp_path / "ws" / "x").write_text("x")
    assert _run(capsys, "decapsulate", str(capsule_path), "--dest", str(tmp_path / "ws"))[0] == 1


def test_verify_one_of_two_fails(capsule_path, capsys):
    blob = capsule_path.read_bytes()
    off, _ = member_spans(blob)["scripts/fig2_biplot.png.ms"]
    capsule_path.write_bytes(flip_byte(blob, off))
    code, out, _ = _run(capsys, "verify", str(capsule_path))
    assert code == 2
    assert out.splitlines()[-1] == "overall: fail (1/2 passed)"


def test_verify_corrupt_tar(capsule_path, capsys):
    capsule_path.write_bytes(capsule_path.read_bytes()[:700])
    assert _run(capsys, "verify", str(capsule_path))[0] == 1


def test_verify_cleans_up(capsule_path, tmp_path, capsys, monkeypatch):
    root = tmp_path / "scratch"
    root.mkdir()
    monkeypatch.setenv("CAPSULA_TMPDIR", str(root))
    assert _run(capsys, "verify", str(capsule_path))[0] == 0
    assert list(root.iterdir()) == []


def test_unusable_tmpdir_is_internal_error(capsule_path, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CAPSULA_TMPDIR", str(tmp_path / "absent"))
    assert _run(capsys, "verify", str(capsule_path))[0] == 3
