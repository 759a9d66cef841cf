"""Recursive ray casting from the transmitter to a receiver cube.

The recursion of the classic ray-casting loop runs depth first over
batches: a batch of rays with ``j`` interactions is traced together, its
hits spawn child rays that are processed in bounded chunks, and rays of
the final generation are only checked against the receiver cube. A ray
that enters the receiver cube before any geometry is stored and not traced
further.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import InvalidResolution
from .scene import SELF_INTERSECTION_EPS, segment_blocked, velocities_at


class InteractionKind(enum.IntEnum):
    Emit = _kernels.EMIT
    Reflect = _kernels.REFLECT
    Scatter = _kernels.SCATTER
    Penetrate = _kernels.PENETRATE
    Diffract = _kernels.DIFFRACT
    Backscatter = _kernels.BACKSCATTER
    Receive = _kernels.RECEIVE


@dataclass(frozen=True)
class InteractionEvent:
    kind: InteractionKind
    point: tuple
    object_id: Optional[str] = None
    incident_angle: float = 0.0
    outgoing_angle: float = 0.0
    scatter_offset: float = 0.0
    surface_speed: float = 0.0
    velocity: tuple = (0.0, 0.0, 0.0)
    material: object = None


@dataclass(frozen=True)
class PropPath:
    events: tuple
    segment_lengths: tuple

    @property
    def total_length(self):
        return math.fsum(self.segment_lengths)

    @property
    def interactions(self):
        return self.events[1:-1]

    @property
    def signature(self):
        return tuple((int(e.kind), e.object_id) for e in self.interactions)

    def points(self):
        return np.array([e.point for e in self.events], dtype=float)


@dataclass(frozen=True)
class TracerConfig:
    probe_resolution: float = 1.0  # degrees
    max_interactions: int = 2
    scatter_spread: float = 10.0  # degrees
    scatter_resolution: float = 1.0  # degrees
    rx_cube_halfwidth: Optional[float] = None  # meters; None -> 2 wavelengths
    wavelength: Optional[float] = None  # None -> scene reference wavelength
    edge_margin: Optional[float] = None  # meters; None -> 4 wavelengths
    diffraction_step: float = 1.0  # degrees
    diffraction_extent: float = 90.0  # degrees either side of the shadow boundary
    reflect: bool = True
    scatter: bool = True
    penetrate: bool = True
    diffract: bool = True
    backscatter: bool = True
    refine_specular: bool = True  # snap reflect-only paths to the exact geometry

    def __post_init__(self):
        if not self.probe_resolution > 0:
            raise InvalidResolution("probe_resolution must be > 0")
        if self.max_interactions < 0:
            raise ValueError("max_interactions must be >= 0")
        if not self.scatter_resolution > 0 or not self.diffraction_step > 0:
            raise InvalidResolution("angular steps must be > 0")

    def resolved_wavelength(self, scene):
        return self.wavelength if self.wavelength is not None else scene.wavelength

    def cube_halfwidth(self, wavelength):
        return 2.0 * wavelength if self.rx_cube_halfwidth is None else self.rx_cube_halfwidth

    def margin(self, wavelength):
        return 4.0 * wavelength if self.edge_margin is None else self.edge_margin

    def flags(self):
        return np.array([self.backscatter, self.reflect, self.scatter,
                         self.penetrate, self.diffract])


def initial_probes(resolution):
    """Azimuth x elevation grid over the sphere with the poles deduplicated."""
    if not 0 < resolution <= 90:
        raise InvalidResolution(f"probe resolution {resolution} outside (0, 90]")
    n_az = int(round(360.0 / resolution))
    n_el = int(round(180.0 / resolution))
    az = np.deg2rad(np.arange(n_az) * resolution)
    el = np.deg2rad(-90.0 + np.arange(1, n_el) * resolution)
    el = el[np.abs(el) < np.pi / 2 - 1e-12]
    A, E = np.meshgrid(az, el, indexing="ij")
    dirs = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1)
    dirs = dirs.reshape(-1, 3)
    poles = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]])
    return np.ascontiguousarray(np.concatenate([dirs, poles]))


def scatter_cone(spread, resolution):
    """(offset, azimuth) pairs of the scatter cone around the specular ray.

    Rings sit at offsets ``resolution, 2*resolution, ...`` up to ``spread``;
    each ring carries ``round(360 * sin(offset) / resolution)`` equally spaced
    vectors so neighbours are roughly ``resolution`` apart.
    """
    thetas, psis = [], []
    n_rings = int(math.floor(spread / resolution + 1e-9))
    for i in range(1, n_rings + 1):
        th = math.radians(i * resolution)
        n = max(1, int(round(360.0 * math.sin(th) / resolution)))
        for j in range(n):
            thetas.append(th)
            psis.append(2.0 * math.pi * j / n)
    return np.array(thetas, dtype=float), np.array(psis, dtype=float)


def diffraction_fan(step, extent):
    n = int(math.floor(extent / step + 1e-9))
    return np.deg2rad(np.arange(-n, n + 1) * step)


def _config_arrays(config):
    if config.scatter:
        ct, cp = scatter_cone(config.scatter_spread, config.scatter_resolution)
    else:
        ct, cp = np.zeros(0), np.zeros(0)
    fan = diffraction_fan(config.diffraction_step, config.diffraction_extent) \
        if config.diffract else np.zeros(0)
    return ct, cp, fan


def new_probes(incident, hit, material, config):
    """Child directions spawned by one hit: ``[(direction, kind, offset)]``."""
    ct, cp, fan = _config_arrays(config)
    d = np.asarray(incident, float).reshape(1, 3)
    n = np.asarray(hit.normal, float).reshape(1, 3)
    edge = np.zeros((1, 3)) if hit.edge_direction is None else np.asarray(hit.edge_direction, float).reshape(1, 3)
    parent, kind, offset, out = _kernels.generate_children(
        np.ascontiguousarray(d), np.ascontiguousarray(n), edge,
        np.array([bool(hit.near_edge)]), np.array([bool(material.penetrable)]),
        np.array([float(material.refractive_index)]), ct, cp, fan, config.flags())
    return [(out[i].copy(), InteractionKind(int(kind[i])), float(offset[i]))
            for i in range(len(parent))]


def _angle(a, b):
    """Angle between rows of a and b, stable near 0 and pi."""
    cr = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(cr, np.sum(a * b, axis=-1))


_CHILD_BATCH = 1 << 20  # child rays generated per batch


class _Ctx:
    """Per-call constants shared by the batch recursion."""

    def __init__(self, scene, config, frame):
        self.scene = scene
        self.frame = frame
        self.lam = config.resolved_wavelength(scene)
        self.half = config.cube_halfwidth(self.lam)
        self.geo = scene.geometry(frame)
        self.tx = scene.tx.position_array
        self.rx = np.ascontiguousarray(scene.rx.position_array)
        self.ell = config.max_interactions
        self.cone_theta, self.cone_psi, self.fan = _config_arrays(config)
        self.flags = config.flags()
        self.diffract = config.diffract
        self.margin = config.margin(self.lam)
        mats = [scene.material(o.material) for o in scene.objects]
        self.obj_pen = np.array([m.penetrable for m in mats], dtype=bool)
        self.obj_index = np.array([m.refractive_index for m in mats], dtype=float)
        self.slots = 3 + len(self.cone_theta) + len(self.fan)
        self.records = []  # one list of step dicts per reaching batch


def _take(steps, idx):
    return [{k: v[idx] for k, v in s.items()} for s in steps]


def _descend(ctx, depth, origins, dirs, steps):
    """Trace rays that have had ``depth - 1`` interactions.

    ``steps`` holds, per earlier interaction, arrays aligned with the rays:
    hit point, object index, arriving direction, geometric normal, and the
    kind/offset/direction of the ray leaving it (which is the current ray).
    """
    geo = ctx.geo
    t_geo, tri = _kernels.nearest_hits(origins, dirs, geo.v0, geo.e1, geo.e2,
                                       SELF_INTERSECTION_EPS)
    if depth == 1 and bool(np.all(np.abs(ctx.tx - ctx.rx) <= ctx.half)):
        reached = np.zeros(len(tri), dtype=bool)
    else:
        reached = _kernels.cube_entries(origins, dirs, ctx.rx, ctx.half) < t_geo
        # probes entering the cube directly are the LOS, built analytically
        if depth > 1 and reached.any():
            ctx.records.append(_take(steps, np.flatnonzero(reached)))
    sel = np.flatnonzero(~reached & (tri >= 0))
    if not len(sel):
        return
    pts = np.ascontiguousarray(origins[sel] + t_geo[sel, None] * dirs[sel])
    tri_h = tri[sel]
    obj = geo.tri_obj[tri_h]
    d_in = np.ascontiguousarray(dirs[sel])
    normal = np.ascontiguousarray(geo.normals[tri_h])
    if ctx.diffract:
        dist, edir = _kernels.edge_proximity(pts, obj, geo.edge_a, geo.edge_b,
                                             geo.edge_start)
        near = dist <= ctx.margin
    else:
        near = np.zeros(len(sel), dtype=bool)
        edir = np.zeros((len(sel), 3))
    pen = ctx.obj_pen[obj]
    idx = ctx.obj_index[obj]
    prev = _take(steps, sel)
    batch = max(1, _CHILD_BATCH // ctx.slots)
    for lo in range(0, len(sel), batch):
        hi = min(len(sel), lo + batch)
        args = (d_in[lo:hi], normal[lo:hi], edir[lo:hi], near[lo:hi], pen[lo:hi],
                idx[lo:hi], ctx.cone_theta, ctx.cone_psi, ctx.fan, ctx.flags)
        if depth < ctx.ell:
            parent, kind, offset, out = _kernels.generate_children(*args)
        else:
            capacity = 4 * (hi - lo) + 1024
            while True:
                count, parent, kind, offset, out = _kernels.terminal_children(
                    pts[lo:hi], *args, ctx.rx, ctx.half, geo.v0, geo.e1, geo.e2,
                    SELF_INTERSECTION_EPS, capacity)
                if count <= capacity:
                    break
                capacity = count
            parent, kind, offset, out = (parent[:count], kind[:count],
                                         offset[:count], out[:count])
        if not len(parent):
            continue
        g = parent + lo
        child_steps = _take(prev, g) + [dict(
            point=pts[g], obj=obj[g], d_in=d_in[g], normal=normal[g],
            kind=kind, offset=offset, d_out=out)]
        if depth < ctx.ell:
            _descend(ctx, depth + 1, np.ascontiguousarray(pts[g]), out, child_steps)
        else:
            ctx.records.append(child_steps)


def trace_paths(scene, config, frame):
    """All propagation paths from TX to RX with at most ``max_interactions``.

    Deterministic for a given (scene, config, frame): the result is sorted
    by event signature, then length, then vertex coordinates.
    """
    ctx = _Ctx(scene, config, frame)
    tx, rx = ctx.tx, ctx.rx
    candidates = []
    if np.linalg.norm(rx - tx) > 0 and not segment_blocked(scene, tx, rx, frame):
        candidates.append(_PathRecord.los(tx, rx))
    if ctx.ell >= 1 and ctx.geo.num_triangles:
        probes = initial_probes(config.probe_resolution)
        origins = np.ascontiguousarray(np.broadcast_to(tx, probes.shape))
        _descend(ctx, 1, origins, probes, [])
    ids = [o.id for o in scene.objects]
    by_order = {}
    for steps in ctx.records:
        by_order.setdefault(len(steps), []).append(steps)
    for order in sorted(by_order):
        batches = by_order[order]
        merged = [{k: np.concatenate([b[i][k] for b in batches]) for k in batches[0][i]}
                  for i in range(order)]
        candidates.extend(_PathRecord.from_steps(merged, tx, rx, ids, ctx.lam / 8.0))
    kept = _dedup_records(candidates, ctx.lam / 8.0)
    if config.refine_specular:
        refined = []
        for r in kept:
            if r.steps and all(int(st["kind"]) == _kernels.REFLECT for st in r.steps):
                r = _refine_specular(ctx, r)
            if r is not None:
                refined.append(r)
        kept = _dedup_records(refined, ctx.lam / 8.0)
    return [_build_path(scene, frame, r) for r in kept]


def _refine_specular(ctx, rec):
    """Exact image-method solution for a reflect-only candidate.

    The reception cube admits rays that only pass near RX, so a candidate
    may sit off the true specular geometry by up to the cube size -- or
    have no specular counterpart at all (e.g. a ray grazing past the edge
    of a plate). The planes of the hit triangles are mirrored to solve for
    the exact reflection points; the candidate is dropped when a point
    misses its object or a leg is blocked.
    """
    geo = ctx.geo
    planes = []
    for st in rec.steps:
        n = np.asarray(st["normal"], float)
        planes.append((np.asarray(st["point"], float), n / np.linalg.norm(n), int(st["obj"])))
    images = [ctx.tx]
    for c, n, _ in planes:
        images.append(images[-1] - 2.0 * np.dot(images[-1] - c, n) * n)
    order = len(planes)
    pts = [None] * (order + 2)
    pts[0], pts[-1] = ctx.tx, ctx.rx
    target = ctx.rx
    for k in range(order, 0, -1):
        c, n, _ = planes[k - 1]
        da = np.dot(images[k] - c, n)
        db = np.dot(target - c, n)
        if da * db >= 0:
            return None
        t = da / (da - db)
        pts[k] = images[k] + t * (target - images[k])
        target = pts[k]
    pts = np.array(pts)
    seg = np.diff(pts, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    if np.any(lengths <= 0):
        return None
    dirs = seg / lengths[:, None]
    t_hit, tri = _kernels.nearest_hits(np.ascontiguousarray(pts[:-2]),
                                       np.ascontiguousarray(dirs[:-1]),
                                       geo.v0, geo.e1, geo.e2, SELF_INTERSECTION_EPS)
    tol = 1e-7 * (1.0 + lengths[:-1])
    for k in range(order):
        if tri[k] < 0 or geo.tri_obj[tri[k]] != planes[k][2] \
                or abs(t_hit[k] - lengths[k]) > tol[k]:
            return None
    if segment_blocked(ctx.scene, pts[-2], pts[-1], ctx.frame):
        return None
    steps = []
    for k, st in enumerate(rec.steps):
        st = dict(st)
        st["point"] = pts[k + 1]
        st["d_in"] = dirs[k]
        st["d_out"] = dirs[k + 1]
        steps.append(st)
    return _PathRecord(rec.signature, float(lengths.sum()), pts, steps)


@dataclass
class _PathRecord:
    """Light-weight path candidate used for sorting and deduplication."""
    signature: tuple
    length: float
    points: np.ndarray  # (n_events, 3), TX and RX included
    steps: list  # per interaction: obj, d_in, normal, kind, offset, d_out

    @classmethod
    def los(cls, tx, rx):
        pts = np.stack([tx, rx])
        return cls((), float(np.linalg.norm(rx - tx)), pts, [])

    @classmethod
    def from_steps(cls, steps, tx, rx, ids, tolerance=0.0):
        """Records for the candidate rays in ``steps`` (arrays per interaction).

        With ``tolerance > 0`` the candidates are deduplicated first, with
        the same rule as :func:`_dedup_records` but vectorized, so only the
        survivors become Python objects.
        """
        n = len(steps[0]["kind"])
        pts = np.empty((n, len(steps) + 2, 3))
        pts[:, 0] = tx
        for i, s in enumerate(steps):
            pts[:, i + 1] = s["point"]
        pts[:, -1] = rx
        seg = np.linalg.norm(np.diff(pts, axis=1), axis=2)
        lengths = seg.sum(axis=1)
        rows = np.flatnonzero(np.all(seg > 0, axis=1))
        if tolerance > 0 and len(rows):
            rows = _dedup_rows(rows, steps, lengths, pts, tolerance)
        out = []
        for r in rows:
            sig = tuple((int(s["kind"][r]), ids[int(s["obj"][r])]) for s in steps)
            rec_steps = [{k: v[r] for k, v in s.items()} for s in steps]
            out.append(cls(sig, float(lengths[r]), pts[r], rec_steps))
        return out

    def key(self):
        return (self.signature, self.length, tuple(self.points.ravel().tolist()))


def _dedup_rows(rows, steps, lengths, pts, tolerance):
    """Row indices surviving deduplication, for candidates of one order."""
    codes = np.stack([s[k][rows] for s in steps for k in ("kind", "obj")], axis=1)
    flat = pts[rows].reshape(len(rows), -1)
    keys = tuple(flat.T[::-1]) + (lengths[rows],) + tuple(codes.T[::-1])
    order = np.lexsort(keys)
    codes, lens, rows = codes[order], lengths[rows][order], rows[order]
    change = np.flatnonzero(np.any(codes[1:] != codes[:-1], axis=1)) + 1
    bounds = np.concatenate([[0], change, [len(rows)]])
    keep = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        i = lo
        while i < hi:
            keep.append(i)
            i = lo + int(np.searchsorted(lens[lo:hi], lens[i] + tolerance, side="left"))
    return rows[np.array(keep, dtype=int)]


def _dedup_records(records, tolerance):
    ordered = sorted(records, key=_PathRecord.key)
    out = []
    for r in ordered:
        if out and out[-1].signature == r.signature and r.length - anchor < tolerance:
            continue
        out.append(r)
        anchor = r.length
    return out


def _build_path(scene, frame, rec):
    pts = rec.points
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    events = [InteractionEvent(kind=InteractionKind.Emit, point=tuple(pts[0].tolist()))]
    steps = rec.steps
    if steps:
        obj_index = np.array([int(s["obj"]) for s in steps])
        vel = velocities_at(scene, obj_index, pts[1:-1], frame)
        d_in = np.array([s["d_in"] for s in steps])
        d_out = np.array([s["d_out"] for s in steps])
        nrm = np.array([s["normal"] for s in steps])
        facing = np.where((np.sum(d_in * nrm, axis=1) < 0)[:, None], nrm, -nrm)
        inc = _angle(-d_in, facing)
        penetrating = np.array([int(s["kind"]) == _kernels.PENETRATE for s in steps])
        out_ang = np.where(penetrating, _angle(d_out, -facing), _angle(d_out, facing))
        # Contribution of each moving point to -1/2 d(path length)/dt, taken
        # from the actual segment directions after snapping the end to RX.
        # Positive when the interaction shortens the path (approaching).
        seg_dirs = np.diff(pts, axis=0) / seg[:, None]
        speed = -0.5 * np.sum(vel * (seg_dirs[:-1] - seg_dirs[1:]), axis=1)
        for i, s in enumerate(steps):
            obj = scene.objects[int(s["obj"])]
            events.append(InteractionEvent(
                kind=InteractionKind(int(s["kind"])), point=tuple(pts[i + 1].tolist()),
                object_id=obj.id, incident_angle=float(inc[i]),
                outgoing_angle=float(out_ang[i]), scatter_offset=float(s["offset"]),
                surface_speed=float(speed[i]), velocity=tuple(vel[i].tolist()),
                material=scene.material(obj.material)))
    events.append(InteractionEvent(kind=InteractionKind.Receive,
                                   point=tuple(pts[-1].tolist())))
    return PropPath(events=tuple(events), segment_lengths=tuple(float(x) for x in seg))


def _path_key(p):
    return (p.signature, p.total_length, tuple(c for e in p.events for c in e.point))


def deduplicate(paths, tolerance):
    """Merge paths with equal event signatures whose lengths differ by < tol.

    Paths are sorted by (signature, length, points) first, so the shortest
    member of each cluster survives and the order is independent of how
    the paths were produced.
    """
    ordered = sorted(paths, key=_path_key)
    out = []
    for p in ordered:
        if out and out[-1].signature == p.signature and p.total_length - anchor < tolerance:
            continue
        out.append(p)
        anchor = p.total_length
    return out


# --------------------------------------------------------------------------
# path dump


DUMP_HEADER = "# isacsim path dump v1"


def _fmt(x):
    return repr(float(x))


def write_path_dump(paths, fp):
    """One tab-separated record per path; see ``docs/formats.md``."""
    fp.write(DUMP_HEADER + "\n")
    for i, p in enumerate(paths):
        evs = []
        for e in p.events:
            evs.append("|".join([
                e.kind.name, e.object_id or "-",
                ",".join(_fmt(c) for c in e.point),
                _fmt(e.incident_angle), _fmt(e.outgoing_angle),
                _fmt(e.scatter_offset), _fmt(e.surface_speed),
                ",".join(_fmt(c) for c in e.velocity),
                e.material.name if e.material is not None else "-",
            ]))
        fp.write("\t".join([str(i), _fmt(p.total_length),
                            ",".join(_fmt(s) for s in p.segment_lengths),
                            ";".join(evs)]) + "\n")


def read_path_dump(fp, scene=None):
    """Inverse of :func:`write_path_dump`; materials resolved via ``scene``."""
    from .errors import ParseError

    lines = fp.read().splitlines()
    if not lines or lines[0].strip() != DUMP_HEADER:
        raise ParseError("not a path dump")
    paths = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        try:
            _, _total, segs, evs = ln.split("\t")
            events = []
            for ev in evs.split(";"):
                kind, oid, pt, inc, out, off, spd, vel, mat = ev.split("|")
                material = None
                if mat != "-" and scene is not None:
                    material = scene.material(mat)
                events.append(InteractionEvent(
                    kind=InteractionKind[kind], point=tuple(float(c) for c in pt.split(",")),
                    object_id=None if oid == "-" else oid, incident_angle=float(inc),
                    outgoing_angle=float(out), scatter_offset=float(off),
                    surface_speed=float(spd), velocity=tuple(float(c) for c in vel.split(",")),
                    material=material))
            paths.append(PropPath(events=tuple(events),
                                  segment_lengths=tuple(float(s) for s in segs.split(","))))
        except (ValueError, KeyError) as exc:
            raise ParseError(f"bad path record: {ln[:80]}") from exc
    return paths
