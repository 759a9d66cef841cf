"""End-to-end experiment runner: trace -> propagate -> synthesize -> clutter
removal -> sensing -> metrics -> record.

A run is described by a :class:`RunConfig`, usually loaded from a JSON file
(format in ``docs/formats.md``). Everything that goes to the output
directory is a pure function of the config, so repeated runs produce
byte-identical directories; timings only go to the log.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import io
import json
import logging
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .channel import (add_noise, build_ensemble, channel_response, ensemble_from_echoes,
                      noise_for_snr)
from .clutter import METHODS, remove_dynamic, remove_reference
from .dataset import ExperimentRecord, FrameBlob, ImageBlob, metrics_to_csv, write_record
from .errors import IsacError, StageError, ValidationError
from .metrics import Gate, evaluate_image
from .propagation import RadioConfig, loss_table_rows
from .raytracer import TracerConfig, trace_paths, write_path_dump
from .scene import ground_truth, parse_scene, scene_hash
from .sensing import MusicConfig, UlaDescriptor, image_to_pgm, music_image, periodogram

log = logging.getLogger("isacsim")

WORKERS_ENV = "ISACSIM_WORKERS"
IMAGE_KINDS = ("music", "periodogram")
REFERENCE_STREAM = 1  # noise stream id for reference (empty-scene) measurements


@dataclass(frozen=True)
class RunConfig:
    """One experiment.

    Either ``scene_path`` (a scene JSON, traced per frame) or ``echoes``
    (an explicit list of monostatic echoes, one frame) defines the channel.

    Attributes:
        name: label stored in the manifest.
        scene_path: scene document; relative paths are resolved against the
            directory of the config file.
        echoes: echo dicts (``name``, ``range``, ``azimuth`` in degrees,
            ``amplitude``, ``radial_speed``) instead of a scene.
        num_elements: RX ULA size for echo lists.
        target: id of the object (or echo name) scored by the metrics;
            defaults to the scene's first target object.
        clutter: clutter removal methods to evaluate.
        epsilon: dynamic-removal threshold.
        reference_realizations: noisy empty-scene measurements averaged
            into ``H_ref``.
        music: MUSIC settings, or ``None`` to skip MUSIC.
        periodogram: also compute range-Doppler periodograms.
        metric_image: which image the metrics are computed on.
        snr_sweep: SNRs in dB (strongest-path power over noise power);
            empty means use ``radio.noise_stddev`` as is.
        seeds: noise seeds.
        round_trip: map periodogram range bins to monostatic range.
        synthesis: ``"exact"`` or ``"bandlimited"`` channel synthesis.
        save_images: write PGM heatmaps next to the record.
    """

    name: str = "run"
    scene_path: Optional[str] = None
    echoes: Optional[tuple] = None
    num_elements: int = 4
    target: Optional[str] = None
    radio: RadioConfig = field(default_factory=RadioConfig)
    tracer: TracerConfig = field(default_factory=TracerConfig)
    clutter: tuple = ("none",)
    epsilon: float = 0.01
    reference_realizations: int = 16
    music: Optional[MusicConfig] = field(default_factory=lambda: MusicConfig(round_trip=True))
    periodogram: bool = True
    metric_image: str = "music"
    snr_sweep: tuple = ()
    seeds: tuple = (0,)
    output_dir: str = "output"
    round_trip: bool = True
    synthesis: str = "exact"
    diffraction_convention: str = "printed"
    save_images: bool = True

    def __post_init__(self):
        if (self.scene_path is None) == (self.echoes is None):
            raise ValidationError("exactly one of scene_path and echoes is required")
        for m in self.clutter:
            if m not in METHODS:
                raise ValidationError(f"unknown clutter method {m!r}", field="clutter")
        if not self.clutter:
            raise ValidationError("at least one clutter method is required", field="clutter")
        if not self.seeds:
            raise ValidationError("seeds must be non-empty", field="seeds")
        if self.metric_image not in IMAGE_KINDS:
            raise ValidationError(f"metric_image must be one of {IMAGE_KINDS}",
                                  field="metric_image")
        if self.metric_image == "music" and self.music is None:
            raise ValidationError("metric_image 'music' needs a music section", field="music")
        if self.metric_image == "periodogram" and not self.periodogram:
            raise ValidationError("metric_image 'periodogram' needs periodogram enabled",
                                  field="periodogram")
        if self.reference_realizations < 1:
            raise ValidationError("reference_realizations must be >= 1",
                                  field="reference_realizations")
        if self.synthesis not in ("exact", "bandlimited"):
            raise ValidationError("synthesis must be 'exact' or 'bandlimited'", field="synthesis")
        if "dynamic" in self.clutter and not 0.0 < self.epsilon < 1.0:
            raise ValidationError("epsilon must lie in (0, 1)", field="epsilon")

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, doc, base_dir=None):
        doc = dict(doc)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "radio" in doc:
            doc["radio"] = RadioConfig.from_dict(doc["radio"])
        if "tracer" in doc:
            doc["tracer"] = TracerConfig(**doc["tracer"])
        if "music" in doc and doc["music"] is not None:
            doc["music"] = MusicConfig.from_dict(doc["music"])
        for key in ("clutter", "snr_sweep", "seeds"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if doc.get("echoes") is not None:
            doc["echoes"] = tuple(dict(e) for e in doc["echoes"])
        if doc.get("scene_path") is not None and base_dir is not None:
            p = Path(doc["scene_path"])
            if not p.is_absolute():
                doc["scene_path"] = str(Path(base_dir) / p)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ValidationError(f"bad config: {exc}") from exc

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self):
        """JSON-compatible form (everything but ``output_dir``).

        The scene path is reduced to its file name so the manifest does not
        depend on where the repo lives.
        """
        music = None
        if self.music is not None:
            music = dataclasses.asdict(self.music)
            music["range_grid"] = [float(x) for x in self.music.range_grid]
            music["azimuth_grid"] = [float(x) for x in self.music.azimuth_grid]
        return {
            "name": self.name,
            "scene_path": None if self.scene_path is None else Path(self.scene_path).name,
            "echoes": None if self.echoes is None else [dict(e) for e in self.echoes],
            "num_elements": self.num_elements, "target": self.target,
            "radio": self.radio.to_dict(), "tracer": dataclasses.asdict(self.tracer),
            "clutter": list(self.clutter), "epsilon": self.epsilon,
            "reference_realizations": self.reference_realizations, "music": music,
            "periodogram": self.periodogram, "metric_image": self.metric_image,
            "snr_sweep": list(self.snr_sweep), "seeds": list(self.seeds),
            "round_trip": self.round_trip, "synthesis": self.synthesis,
            "diffraction_convention": self.diffraction_convention,
            "save_images": self.save_images,
        }


# ----------------------------------------------------------------------
# stage helpers


@contextmanager
def stage(name, **counters):
    """Time a pipeline stage and tag any failure with the stage name."""
    t0 = time.perf_counter()
    try:
        yield counters
    except StageError:
        raise
    except (IsacError, ValueError, OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc
    extra = " ".join(f"{k}={v}" for k, v in counters.items())
    log.info("stage %-10s %.3fs %s", name, time.perf_counter() - t0, extra)


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


@dataclass
class _FrameInputs:
    """Everything a seed/SNR job needs for one frame (picklable)."""

    frame: int
    clean: np.ndarray
    reference: Optional[np.ndarray]
    truth: Optional[dict]  # scored target, None when the scene has none
    labels: list  # ground truth of every object
    reference_power_ensemble: object


def _echo_truth(config, radio):
    name = config.target
    echoes = list(config.echoes)
    if name is None:
        moving = [e for e in echoes if e.get("radial_speed", 0.0)]
        pick = moving[0] if moving else echoes[-1]
    else:
        found = [e for e in echoes if e.get("name") == name]
        if not found:
            raise ValidationError(f"target echo {name!r} not in the echo list", field="target")
        pick = found[0]
    return pick, {"object_id": pick.get("name", "target"), "range": float(pick["range"]),
                  "azimuth": math.radians(float(pick["azimuth"])),
                  "radial_speed": float(pick.get("radial_speed", 0.0))}


def _prepare_echoes(config):
    radio = config.radio
    pick, truth = _echo_truth(config, radio)
    with stage("propagate", paths=len(config.echoes)):
        ens = ensemble_from_echoes(config.echoes, radio, config.num_elements)
        rest = [e for e in config.echoes if e is not pick]
        ens_ref = ensemble_from_echoes(rest, radio, config.num_elements)
    with stage("synthesize"):
        clean = channel_response(ens, radio, config.synthesis)
        ref = channel_response(ens_ref, radio, config.synthesis) \
            if "reference" in config.clutter else None
    array = UlaDescriptor(config.num_elements, radio.wavelength / 2.0)
    return [_FrameInputs(0, clean, ref, truth, [truth], ens)], array, {"num_frames": 1,
                                                             "paths_per_frame": [len(ens.paths)]}


def _prepare_scene(config, sidecars):
    radio = config.radio
    with stage("parse"):
        scene = parse_scene(config.scene_path)
        targets = list(scene.targets)
        target = config.target or (targets[0] if targets else None)
        if target is not None:
            scene.object(target)
            targets = sorted(set(targets) | {target})
        empty = scene.without(*targets)
    inputs, counts, ref_counts = [], [], []
    for frame in range(scene.num_frames):
        with stage("trace", frame=frame) as c:
            paths = trace_paths(scene, config.tracer, frame)
            c["paths"] = len(paths)
            ref_paths = trace_paths(empty, config.tracer, frame) \
                if "reference" in config.clutter else []
            c["reference_paths"] = len(ref_paths)
        with stage("propagate", frame=frame):
            ens = build_ensemble(paths, scene, radio, config.diffraction_convention)
            ens_ref = build_ensemble(ref_paths, empty, radio, config.diffraction_convention)
        with stage("synthesize", frame=frame):
            clean = channel_response(ens, radio, config.synthesis)
            ref = channel_response(ens_ref, radio, config.synthesis) \
                if "reference" in config.clutter else None
        labels = [{"object_id": g.object_id, "range": g.range, "azimuth": g.azimuth,
                   "radial_speed": g.radial_speed} for g in ground_truth(scene, frame)]
        truth = next((g for g in labels if g["object_id"] == target), None)
        inputs.append(_FrameInputs(frame, clean, ref, truth, labels, ens))
        counts.append(len(paths))
        ref_counts.append(len(ref_paths))
        buf = io.StringIO()
        write_path_dump(paths, buf)
        sidecars[f"paths/frame_{frame:04d}.txt"] = buf.getvalue()
        buf = io.StringIO()
        for row in loss_table_rows(ens.paths):
            buf.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")
        sidecars[f"losses/frame_{frame:04d}.csv"] = buf.getvalue()
    array = UlaDescriptor.from_endpoint(scene.rx, radio.wavelength)
    info = {"num_frames": scene.num_frames, "scene_hash": scene_hash(scene),
            "target": target, "paths_per_frame": counts,
            "reference_paths_per_frame": ref_counts}
    return inputs, array, info


def _doppler_of(truth, radio):
    """Truth Doppler (Hz) folded onto the unshifted periodogram axis."""
    fd = 2.0 * radio.carrier_freq * truth["radial_speed"] / 2.99792458e8
    span = 1.0 / radio.symbol_duration
    cell = span / radio.num_symbols
    return (fd + 0.5 * cell) % span - 0.5 * cell


def _images(config, array, H):
    out = {}
    if config.music is not None:
        out["music"] = music_image(H, config.music, config.radio, array)
    if config.periodogram:
        out["periodogram"] = periodogram(H, config.radio, round_trip=config.round_trip)
    return out


def _job(config, array, inp, snr_db, seed):
    """All clutter methods and metrics for one (frame, SNR, seed)."""
    radio = config.radio
    sigma = radio.noise_stddev if snr_db is None else noise_for_snr(
        inp.reference_power_ensemble, snr_db)
    H = add_noise(inp.clean, sigma, seed, inp.frame)
    rows, images = [], {}
    for method in config.clutter:
        if method == "none":
            Hc = H
        elif method == "reference":
            acc = np.zeros_like(inp.reference)
            for r in range(config.reference_realizations):
                acc += add_noise(inp.reference, sigma, seed, inp.frame, REFERENCE_STREAM, r)
            Hc = remove_reference(H, acc / config.reference_realizations)
        else:
            Hc = remove_dynamic(H, config.epsilon)
        imgs = _images(config, array, Hc)
        images[method] = imgs
        if inp.truth is None:
            continue
        im = imgs[config.metric_image]
        if im.second_kind == "azimuth":
            truth = (inp.truth["range"], inp.truth["azimuth"])
        else:
            truth = (inp.truth["range"], _doppler_of(inp.truth, radio))
        rep = evaluate_image(im, truth, Gate.for_image(im, radio.wavelength))
        row = {"frame": inp.frame, "snr_db": snr_db, "seed": int(seed), "method": method,
               "image": config.metric_image}
        row.update(rep.as_row())
        tp = rep.target_peak
        row["peak_range"] = None if tp is None else tp.range
        row["peak_second"] = None if tp is None else tp.second
        rows.append(row)
    return H, rows, images


def _run_jobs(config, array, inputs):
    snrs = list(config.snr_sweep) or [None]
    tasks = [(inp, snr, seed) for inp in inputs for snr in snrs for seed in config.seeds]
    workers = min(worker_count(), len(tasks))
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_job, config, array, *t) for t in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_job(config, array, *t) for t in tasks]
    return tasks, results


def _clean_float(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def simulate(config):
    """Run the pipeline in memory.

    Returns:
        ``(record, sidecars)`` where sidecars maps relative output paths
        to text content (path dumps, loss tables, CSV, PGM heatmaps).
    """
    sidecars = {}
    if config.echoes is not None:
        inputs, array, info = _prepare_echoes(config)
    else:
        inputs, array, info = _prepare_scene(config, sidecars)
    with stage("sense", jobs=len(inputs) * max(1, len(config.snr_sweep)) * len(config.seeds)):
        tasks, results = _run_jobs(config, array, inputs)
    frames, images, metrics = [], [], []
    stored = set()
    for (inp, snr, seed), (H, rows, imgs) in zip(tasks, results):
        metrics.extend({k: _clean_float(v) for k, v in row.items()} for row in rows)
        if inp.frame in stored:
            continue
        stored.add(inp.frame)
        frames.append(FrameBlob(f"frame_{inp.frame:04d}", inp.frame, H, inp.labels))
        for method, by_kind in imgs.items():
            for kind, im in by_kind.items():
                name = f"frame_{inp.frame:04d}_{method}_{kind}"
                images.append(ImageBlob(name, im))
                if config.save_images:
                    buf = io.StringIO()
                    image_to_pgm(im, buf)
                    sidecars[f"images/{name}.pgm"] = buf.getvalue()
    manifest = {"software": "isacsim", "version": __version__, "config": config.to_dict()}
    manifest.update(info)
    record = ExperimentRecord(manifest, frames, images, metrics)
    buf = io.StringIO()
    metrics_to_csv(metrics, buf)
    sidecars["metrics.csv"] = buf.getvalue()
    return record, sidecars


def _write_text(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_outputs(record, sidecars, output_dir):
    out = Path(output_dir)
    with stage("write", files=len(sidecars) + 1):
        out.mkdir(parents=True, exist_ok=True)
        for rel, text in sorted(sidecars.items()):
            _write_text(out / rel, text)
        write_record(record, out / "record.isr")


def run(config, output_dir=None):
    """Full pipeline; writes the record and sidecars, returns the record."""
    record, sidecars = simulate(config)
    write_outputs(record, sidecars, output_dir or config.output_dir)
    return record


# ----------------------------------------------------------------------
# metric sweeps

SWEEP_COLUMNS = ("snr_db", "method", "iterations", "p_d", "sinr_db", "normalized_prominence",
                 "isolation")


def aggregate(rows):
    """Per-(SNR, method) summary of metric rows.

    P_D is in percent over all frames and seeds; SINR (dB) and normalized
    prominence are means over all iterations; isolation is the mean over
    iterations where the target was detected and not alone (NaN if none).
    """
    groups = {}
    for row in rows:
        groups.setdefault((row["snr_db"], row["method"]), []).append(row)
    order = {m: i for i, m in enumerate(METHODS)}
    out = []
    for (snr, method), grp in sorted(groups.items(),
                                     key=lambda kv: (-math.inf if kv[0][0] is None else kv[0][0],
                                                     order[kv[0][1]])):
        det = [bool(r["detected"]) for r in grp]
        sinr = [_as_float(r["sinr_db"]) for r in grp]
        prom = [_as_float(r["normalized_prominence"]) for r in grp]
        iso = [_as_float(r["isolation"]) for r in grp]
        iso = [x for x in iso if math.isfinite(x)]
        out.append({"snr_db": snr, "method": method, "iterations": len(grp),
                    "p_d": 100.0 * sum(det) / len(det),
                    "sinr_db": float(np.mean(sinr)),
                    "normalized_prominence": float(np.mean(prom)),
                    "isolation": float(np.mean(iso)) if iso else math.nan})
    return out


def _as_float(x):
    return float(x)  # also parses the "inf"/"nan" strings used in rows


def metric_sweep(config, output_dir=None, write=True):
    """Run the pipeline over the SNR sweep and summarise per method.

    Returns the summary rows (see :func:`aggregate`); with ``write`` the
    full run outputs plus ``sweep.csv`` land in the output directory.
    """
    if not config.snr_sweep:
        raise ValidationError("metric sweeps need a non-empty snr_sweep", field="snr_sweep")
    if len(config.clutter) < 2:
        raise ValidationError("metric sweeps need at least two clutter methods",
                              field="clutter")
    record, sidecars = simulate(config)
    summary = aggregate(record.metrics)
    buf = io.StringIO()
    metrics_to_csv([{k: _clean_float(v) for k, v in r.items()} for r in summary], buf)
    sidecars["sweep.csv"] = buf.getvalue()
    if write:
        write_outputs(record, sidecars, output_dir or config.output_dir)
    return summary
