import json
import shutil
from pathlib import Path

import pytest

from isacsim import __version__
from isacsim.cli import main
from isacsim.dataset import read_record
from isacsim.raytracer import read_path_dump

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def los_config(tmp_path):
    """Copy of the LOS example config with its scene next to it."""
    (tmp_path / "scenes").mkdir()
    shutil.copy(CONFIGS / "scenes" / "los.json", tmp_path / "scenes" / "los.json")
    shutil.copy(CONFIGS / "los.json", tmp_path / "los.json")
    return tmp_path / "los.json"


def test_help_and_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    assert "run" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        main(["--version"])
    assert __version__ in capsys.readouterr().out


def test_run_los(los_config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(los_config), "-o", str(out)]) == 0
    rec = read_record(out / "record.isr")
    assert len(rec.frames) == 1
    assert rec.frames[0].data.shape == (4, 1024, 100)
    with open(out / "paths" / "frame_0000.txt") as fp:
        paths = read_path_dump(fp)
    assert len(paths) == 1 and paths[0].total_length == pytest.approx(30.0)
    assert (out / "losses" / "frame_0000.csv").exists()


def test_run_is_byte_deterministic(los_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(los_config), "-o", str(a)]) == 0
    assert main(["run", str(los_config), "-o", str(b)]) == 0
    assert tree_bytes(a) == tree_bytes(b)


def test_trace_debug(los_config, tmp_path, capsys):
    assert main(["trace-debug", str(los_config)]) == 0
    assert capsys.readouterr().out.startswith("# isacsim path dump v1")
    dump = tmp_path / "dump.txt"
    assert main(["trace-debug", str(los_config), "-o", str(dump)]) == 0
    assert dump.read_text().count("\n") == 2


def test_convert(los_config, tmp_path):
    out = tmp_path / "out"
    main(["run", str(los_config), "-o", str(out)])
    conv = tmp_path / "conv"
    assert main(["convert", str(out / "record.isr"), "--csv", "--pgm", "-o", str(conv)]) == 0
    names = sorted(p.name for p in conv.iterdir())
    assert "frame_0000_none_periodogram.csv" in names
    assert "frame_0000_none_periodogram.pgm" in names
    with pytest.raises(SystemExit):
        main(["convert", str(out / "record.isr")])


def test_fixture_command(tmp_path):
    path = tmp_path / "f.json"
    assert main(["fixture", "los", str(path)]) == 0
    assert json.loads(path.read_text())["rx"]["array"]["num_elements"] == 4


def test_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x", "echoes": [], "bogus": 1}))
    assert main(["run", str(bad)]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["convert", str(tmp_path / "missing.isr"), "--csv"]) == 1
