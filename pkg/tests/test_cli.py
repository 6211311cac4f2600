import json
import subprocess
import sys

import pytest

from isodimer import cli
from isodimer.geometry import ValidationReport


def run(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "isodimer.cli", *map(str, args)],
                          capture_output=True, text=True, cwd=cwd)


def test_probs_prints_one_third(tmp_path):
    r = run("probs", "--lattice", "honeycomb", "--extent", 3, 3, 3, "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    assert "0.333333333333" in r.stdout
    text = (tmp_path / "probs.csv").read_text()
    assert text.startswith("# isodimer")
    assert "# seed: 0" in text


@pytest.mark.parametrize("lattice,extent", [("tri", [3, 3, 3]), ("square", [4, 4])])
def test_sample_replays_byte_for_byte(tmp_path, lattice, extent):
    blobs = []
    for _ in range(2):
        r = run("sample", "--lattice", lattice, "--extent", *extent, "--samples", 300, "--seed", 9, "--out", tmp_path)
        assert r.returncode == 0, r.stderr
        blobs.append((tmp_path / "samples.jsonl").read_bytes())
    assert blobs[0] == blobs[1]
    a = tmp_path
    lines = (a / "samples.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["header"]["seed"] == 9
    assert len(lines) == 301


def test_seed_changes_output(tmp_path):
    for s in (1, 2):
        assert run("sample", "--lattice", "square", "--extent", 4, 4, "--samples", 50, "--seed", s,
                   "--out", tmp_path / str(s)).returncode == 0
    assert (tmp_path / "1" / "samples.jsonl").read_bytes() != (tmp_path / "2" / "samples.jsonl").read_bytes()


def test_moments_third_within_three_se(tmp_path):
    r = run("moments", "--k", 3, "--mesh", 0.0625, "--samples", 4000, "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    assert "within 3 SE" in (tmp_path / "moments.csv").read_text()


@pytest.mark.parametrize("cmd,files", [
    ("build", ["graph.json"]),
    ("validate", ["validation.txt"]),
    ("kernel", ["kernel.csv"]),
    ("height", ["heights.csv"]),
])
def test_outputs_have_headers(tmp_path, cmd, files):
    extra = ["--pairs", 20, "--rmax", 4] if cmd == "kernel" else []
    r = run(cmd, "--lattice", "tri", "--extent", 3, 3, 3, "--samples", 2, "--out", tmp_path, *extra)
    assert r.returncode == 0, r.stderr
    for f in files:
        text = (tmp_path / f).read_text()
        if f.endswith(".json"):
            assert json.loads(text)["header"]["version"]
        else:
            assert text.startswith("# isodimer")


def test_height_csv_columns(tmp_path):
    assert run("height", "--lattice", "square", "--extent", 2, 2, "--samples", 3, "--out", tmp_path).returncode == 0
    rows = [l for l in (tmp_path / "heights.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "sample,vertex_id,x,y,h"
    assert len(rows) == 1 + 3 * 9


def test_quadri_command(tmp_path):
    r = run("quadri", "--extent", 1, 1, 1, "--samples", 20, "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    lines = (tmp_path / "quadri.jsonl").read_text().splitlines()
    assert len(lines) == 21
    assert {t["type"] for l in lines[1:] for t in json.loads(l)["quadri_tiles"]} <= {"I", "II", "III", "IV"}


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "c.toml"
    conf.write_text('lattice = "square"\nextent = [4, 4]\nseed = 3\nsamples = 7\n')
    args = cli.make_parser().parse_args(["sample", "--config", str(conf), "--seed", "5"])
    cfg = cli.resolve_config(args)
    assert (cfg["lattice"], cfg["extent"], cfg["samples"], cfg["seed"]) == ("square", [4, 4], 7, 5)


def test_command_defaults():
    cfg = cli.resolve_config(cli.make_parser().parse_args(["moments"]))
    assert cfg["mesh"] == 1 / 32 and cfg["samples"] == 20000
    cfg = cli.resolve_config(cli.make_parser().parse_args(["sample"]))
    assert cfg["mesh"] == 1.0 and cfg["samples"] == 100


@pytest.mark.parametrize("toml", ['bogus = 1\n', 'mesh = -1.0\n', 'lattice = "hex"\n', 'extent = [2]\n',
                                  'lattice = "square"\nextent = [2, 2, 2]\n', 'seed = "x"\n', 'mesh = [\n'])
def test_bad_config_exits_2(tmp_path, toml):
    conf = tmp_path / "c.toml"
    conf.write_text(toml)
    r = run("build", "--config", conf, "--out", tmp_path / "o")
    assert r.returncode == 2
    assert not (tmp_path / "o").exists()


def test_odd_region_exits_3_without_partial_files(tmp_path):
    r = run("sample", "--lattice", "square", "--extent", 3, 3, "--samples", 2, "--out", tmp_path)
    assert r.returncode == 3
    assert list(tmp_path.iterdir()) == []


def test_validation_failure_exits_4(tmp_path, monkeypatch, capsys):
    def fail(g):
        return ValidationReport(False, 1.0, messages=["radius mismatch at face 0"])

    monkeypatch.setattr(cli, "validate_isoradial", fail)
    code = cli.main(["build", "--lattice", "tri", "--extent", "2", "2", "2", "--out", str(tmp_path)])
    assert code == 4
    assert "radius mismatch" in capsys.readouterr().err
    assert not (tmp_path / "graph.json").exists()


def test_write_atomic_leaves_nothing_on_error(tmp_path, monkeypatch):
    import os

    def boom(*a):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        cli.write_atomic(tmp_path / "x.txt", "data")
    assert list(tmp_path.iterdir()) == []
