import dataclasses
import json
import math

import pytest

from isacsim.errors import StageError, ValidationError
from isacsim.fixtures import two_path_echoes
from isacsim.pipeline import (WORKERS_ENV, RunConfig, aggregate, metric_sweep, simulate, stage,
                              worker_count)
from isacsim.propagation import RadioConfig
from isacsim.sensing import MusicConfig

RADIO = RadioConfig(num_subcarriers=256, num_symbols=32, cyclic_prefix=16)


def small_config(**kw):
    base = dict(name="t", echoes=tuple(two_path_echoes(bandwidth=RADIO.bandwidth)),
                target="target", radio=RADIO, clutter=("none", "reference", "dynamic"),
                music=MusicConfig(range_grid=tuple(0.5 * i for i in range(81)),
                                  azimuth_grid=tuple(math.radians(a) for a in range(-90, 91, 2)),
                                  round_trip=True),
                snr_sweep=(20.0,), seeds=(0, 1), save_images=False)
    base.update(kw)
    return RunConfig(**base)


def test_config_validation():
    with pytest.raises(ValidationError):
        RunConfig()  # neither scene nor echoes
    with pytest.raises(ValidationError):
        small_config(clutter=("median",))
    with pytest.raises(ValidationError):
        small_config(metric_image="music", music=None)
    with pytest.raises(ValidationError):
        RunConfig.from_dict({"echoes": [], "colour": "red"})


def test_config_round_trip(tmp_path):
    cfg = small_config()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(path) == cfg


def test_example_configs_load():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    for path in sorted(root.glob("*.json")):
        RunConfig.load(path)


def test_simulate_echoes():
    rec, side = simulate(small_config())
    assert len(rec.frames) == 1
    assert len(rec.metrics) == 2 * 3
    assert {r["method"] for r in rec.metrics} == {"none", "reference", "dynamic"}
    assert "metrics.csv" in side
    names = [b.name for b in rec.images]
    assert "frame_0000_reference_music" in names
    assert "frame_0000_none_periodogram" in names


def test_workers_do_not_change_output(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "1")
    a = simulate(small_config())[0].to_bytes()
    monkeypatch.setenv(WORKERS_ENV, "2")
    assert worker_count() == 2
    b = simulate(small_config())[0].to_bytes()
    assert a == b


def test_aggregate():
    rows = [{"snr_db": 0.0, "method": "none", "detected": d, "sinr_db": s,
             "normalized_prominence": 0.5, "isolation": i}
            for d, s, i in [(1, 1.0, 4.0), (0, 3.0, "nan")]]
    (out,) = aggregate(rows)
    assert out["p_d"] == 50.0 and out["sinr_db"] == 2.0 and out["isolation"] == 4.0


def test_metric_sweep_requirements(tmp_path):
    with pytest.raises(ValidationError):
        metric_sweep(small_config(snr_sweep=()), write=False)
    with pytest.raises(ValidationError):
        metric_sweep(small_config(clutter=("none",)), write=False)
    summary = metric_sweep(small_config(periodogram=True), tmp_path, write=True)
    assert [r["method"] for r in summary] == ["none", "reference", "dynamic"]
    assert (tmp_path / "sweep.csv").read_text().startswith("snr_db,method")


def test_stage_wraps_errors():
    with pytest.raises(StageError, match="trace"):
        with stage("trace"):
            raise ValueError("boom")


def test_noiseless_reference_detects():
    cfg = small_config(snr_sweep=(), seeds=(0,), clutter=("none", "reference"))
    rec, _ = simulate(cfg)
    ref = [r for r in rec.metrics if r["method"] == "reference"][0]
    assert ref["detected"] == 1


def test_scene_config_without_target_has_no_metrics(tmp_path):
    from isacsim.fixtures import empty_scene
    (tmp_path / "s.json").write_text(json.dumps(empty_scene(10.0)))
    cfg = RunConfig(scene_path=str(tmp_path / "s.json"), radio=RADIO, music=None,
                    metric_image="periodogram", round_trip=False)
    rec, side = simulate(cfg)
    assert rec.metrics == [] and "paths/frame_0000.txt" in side
    cfg2 = dataclasses.replace(cfg, seeds=(0, 1))
    assert len(simulate(cfg2)[0].frames) == 1
