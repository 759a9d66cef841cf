"""Scene model: triangle-mesh objects with materials, radio endpoints and
keyframed rigid motion.

Scenes are loaded from a JSON document (see ``docs/formats.md``). A parsed
:class:`Scene` is immutable; per-frame world geometry is derived lazily
and cached on the instance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from . import _kernels
from .errors import (FrameOutOfRange, ParseError, UnknownObject,
                     ValidationError)

C0 = 299_792_458.0
SELF_INTERSECTION_EPS = 1e-6
DEFAULT_REFERENCE_FREQUENCY = 3.75e9
PATTERNS = ("isotropic", "dipole", "patch")

_MIN_TRIANGLE_AREA = 1e-12
_CREASE_COS = math.cos(math.radians(1.0))


@dataclass(frozen=True)
class Material:
    name: str
    permittivity: float = 1.0
    permeability: float = 1.0
    roughness: float = 0.0
    scatter_exponent: float = 4.0
    backscatter_coeff: float = 0.0
    penetrable: bool = False
    refractive_index: float = 1.0
    frequency: Optional[float] = None

    def validate(self):
        def bad(fld, msg):
            raise ValidationError(msg, object_id=self.name, field=fld)

        if not self.permittivity >= 1.0:
            bad("permittivity", "relative permittivity must be >= 1")
        if not self.permeability > 0.0:
            bad("permeability", "relative permeability must be > 0")
        if not self.roughness >= 0.0:
            bad("roughness", "roughness stddev must be >= 0")
        if not self.scatter_exponent > 0.0:
            bad("scatter_exponent", "scatter exponent must be > 0")
        if not 0.0 <= self.backscatter_coeff <= 1.0:
            bad("backscatter", "backscatter coefficient must lie in [0, 1]")
        if not self.refractive_index > 0.0:
            bad("refractive_index", "refractive index ratio must be > 0")


@dataclass(frozen=True)
class Keyframe:
    frame: int
    translation: tuple = (0.0, 0.0, 0.0)
    quaternion: tuple = (1.0, 0.0, 0.0, 0.0)  # (w, x, y, z), local -> world


@dataclass(frozen=True)
class SceneObject:
    id: str
    vertices: tuple  # ((x, y, z), ...) in the object's local frame
    faces: tuple  # ((i, j, k), ...)
    material: str
    keyframes: tuple = ()
    target: bool = False

    @cached_property
    def vertex_array(self):
        return np.asarray(self.vertices, dtype=float).reshape(-1, 3)

    @cached_property
    def face_array(self):
        return np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

    @cached_property
    def local_triangles(self):
        return self.vertex_array[self.face_array]

    @cached_property
    def feature_edges(self):
        """Local-frame boundary and crease edges as an ``(E, 2, 3)`` array."""
        tris = self.local_triangles
        normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        owners = {}
        for f, face in enumerate(self.faces):
            for a, b in ((face[0], face[1]), (face[1], face[2]),
                         (face[2], face[0])):
                owners.setdefault((min(a, b), max(a, b)), []).append(f)
        edges = []
        for (a, b), fs in sorted(owners.items()):
            if len(fs) == 2 and normals[fs[0]] @ normals[fs[1]] >= _CREASE_COS:
                continue
            edges.append((self.vertex_array[a], self.vertex_array[b]))
        if not edges:
            return np.zeros((0, 2, 3))
        return np.asarray(edges, dtype=float)

    @cached_property
    def is_closed(self):
        count = {}
        for face in self.faces:
            for a, b in ((face[0], face[1]), (face[1], face[2]),
                         (face[2], face[0])):
                key = (min(a, b), max(a, b))
                count[key] = count.get(key, 0) + 1
        return all(c == 2 for c in count.values())

    def pose(self, frame):
        """Rotation matrix and translation mapping local to world at ``frame``."""
        if not self.keyframes:
            return np.eye(3), np.zeros(3)
        kf = self.keyframes
        if frame <= kf[0].frame:
            return _quat_matrix(kf[0].quaternion), np.asarray(kf[0].translation, float)
        if frame >= kf[-1].frame:
            return _quat_matrix(kf[-1].quaternion), np.asarray(kf[-1].translation, float)
        for a, b in zip(kf[:-1], kf[1:]):
            if a.frame <= frame <= b.frame:
                break
        if frame == a.frame:
            return _quat_matrix(a.quaternion), np.asarray(a.translation, float)
        if frame == b.frame:
            return _quat_matrix(b.quaternion), np.asarray(b.translation, float)
        s = (frame - a.frame) / (b.frame - a.frame)
        t = (1 - s) * np.asarray(a.translation, float) + s * np.asarray(b.translation, float)
        slerp = Slerp([0.0, 1.0], Rotation.from_quat([_xyzw(a.quaternion), _xyzw(b.quaternion)]))
        return slerp([s]).as_matrix()[0], t


@dataclass(frozen=True)
class RadioEndpoint:
    position: tuple
    orientation: tuple = (1.0, 0.0, 0.0, 0.0)  # (w, x, y, z), local -> world
    elements: tuple = ((0.0, 0.0, 0.0),)
    spacing: float = 0.0
    pattern: str = "isotropic"

    @cached_property
    def rotation(self):
        return _quat_matrix(self.orientation)

    @cached_property
    def position_array(self):
        return np.asarray(self.position, dtype=float)

    @property
    def num_elements(self):
        return len(self.elements)

    def element_offsets_world(self):
        return np.asarray(self.elements, dtype=float) @ self.rotation.T

    def to_local(self, direction):
        """Express world direction(s) in the endpoint's local frame."""
        return np.asarray(direction, dtype=float) @ self.rotation

    def azimuth_of(self, point):
        """Azimuth (rad) of a world point in the local x-y plane, from +x."""
        loc = self.to_local(np.asarray(point, float) - self.position_array)
        return math.atan2(loc[1], loc[0])


@dataclass(frozen=True)
class Hit:
    point: np.ndarray
    normal: np.ndarray
    object_id: str
    distance: float
    near_edge: bool
    triangle: int = -1
    edge_direction: Optional[np.ndarray] = None


@dataclass(frozen=True)
class GroundTruth:
    object_id: str
    range: float  # half of the TX -> object -> RX path length
    path_length: float
    azimuth: float  # at the RX, local frame
    radial_speed: float  # -d(range)/dt, positive approaching


@dataclass(frozen=True)
class Scene:
    objects: tuple
    materials: tuple
    tx: RadioEndpoint
    rx: RadioEndpoint
    frame_rate: float = 30.0
    num_frames: int = 1
    reference_frequency: float = DEFAULT_REFERENCE_FREQUENCY
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    @property
    def wavelength(self):
        return C0 / self.reference_frequency

    def material(self, name):
        for m in self.materials:
            if m.name == name:
                return m
        raise UnknownObject(name)

    def object(self, object_id):
        for o in self.objects:
            if o.id == object_id:
                return o
        raise UnknownObject(object_id)

    def object_index(self, object_id):
        for i, o in enumerate(self.objects):
            if o.id == object_id:
                return i
        raise UnknownObject(object_id)

    def without(self, *object_ids):
        """Copy of the scene with the given objects removed."""
        for oid in object_ids:
            self.object(oid)
        keep = tuple(o for o in self.objects if o.id not in object_ids)
        return Scene(keep, self.materials, self.tx, self.rx, self.frame_rate,
                     self.num_frames, self.reference_frequency)

    @property
    def targets(self):
        return tuple(o.id for o in self.objects if o.target)

    def geometry(self, frame):
        """World-space triangle soup at ``frame`` (cached)."""
        key = ("geometry", int(frame))
        if key not in self._cache:
            self._cache[key] = WorldGeometry.build(self, int(frame))
        return self._cache[key]


class WorldGeometry:
    """Flattened world-space triangles and feature edges for one frame."""

    def __init__(self, v0, e1, e2, normals, tri_obj, edge_a, edge_b,
                 edge_start, object_ids):
        self.v0 = v0
        self.e1 = e1
        self.e2 = e2
        self.normals = normals
        self.tri_obj = tri_obj
        self.edge_a = edge_a
        self.edge_b = edge_b
        self.edge_start = edge_start
        self.object_ids = object_ids

    @classmethod
    def build(cls, scene, frame):
        tris, owner, ea, eb, starts = [], [], [], [], [0]
        for k, obj in enumerate(scene.objects):
            rot, trans = obj.pose(frame)
            tris.append(obj.local_triangles @ rot.T + trans)
            owner.append(np.full(len(obj.faces), k, dtype=np.int64))
            fe = obj.feature_edges
            if len(fe):
                ea.append(fe[:, 0] @ rot.T + trans)
                eb.append(fe[:, 1] @ rot.T + trans)
            starts.append(starts[-1] + len(fe))
        if tris:
            tri = np.concatenate(tris)
            tri_obj = np.concatenate(owner)
        else:
            tri = np.zeros((0, 3, 3))
            tri_obj = np.zeros(0, dtype=np.int64)
        e1 = tri[:, 1] - tri[:, 0]
        e2 = tri[:, 2] - tri[:, 0]
        normals = np.cross(e1, e2)
        if len(normals):
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        edge_a = np.concatenate(ea) if ea else np.zeros((0, 3))
        edge_b = np.concatenate(eb) if eb else np.zeros((0, 3))
        return cls(np.ascontiguousarray(tri[:, 0]), np.ascontiguousarray(e1),
                   np.ascontiguousarray(e2), normals, tri_obj,
                   np.ascontiguousarray(edge_a), np.ascontiguousarray(edge_b),
                   np.asarray(starts, dtype=np.int64),
                   tuple(o.id for o in scene.objects))

    @property
    def num_triangles(self):
        return self.v0.shape[0]


# --------------------------------------------------------------------------
# queries


def _check_frame_for_velocity(scene, frame):
    if not 0 <= frame <= scene.num_frames - 2:
        raise FrameOutOfRange(
            f"frame {frame} outside [0, {scene.num_frames - 2}] for velocity")


def surface_velocity(scene, object_id, point, frame):
    """Velocity (m/s) of a surface point by forward difference to ``frame + 1``."""
    obj = scene.object(object_id)
    _check_frame_for_velocity(scene, frame)
    return _point_velocity(obj, np.asarray(point, float), frame, scene.frame_rate)


def _point_velocity(obj, points, frame, frame_rate):
    if not obj.keyframes:
        return np.zeros_like(points)
    r0, t0 = obj.pose(frame)
    r1, t1 = obj.pose(frame + 1)
    local = (points - t0) @ r0
    return (local @ r1.T + t1 - (local @ r0.T + t0)) * frame_rate


def velocities_at(scene, obj_index, points, frame):
    """Vectorized surface velocity for points on objects given by index.

    Frames past ``num_frames - 2`` use the last available difference; a
    single-frame scene is static.
    """
    out = np.zeros_like(points)
    if scene.num_frames < 2:
        return out
    f = min(frame, scene.num_frames - 2)
    for k in np.unique(obj_index):
        sel = obj_index == k
        out[sel] = _point_velocity(scene.objects[k], points[sel], f, scene.frame_rate)
    return out


def edge_margin_default(scene):
    return 4.0 * scene.wavelength


def intersect_ray(scene, origin, direction, frame, edge_margin=None):
    """Nearest surface hit along a ray, or ``None``."""
    geo = scene.geometry(frame)
    if geo.num_triangles == 0:
        return None
    o = np.ascontiguousarray(np.asarray(origin, float).reshape(1, 3))
    d = np.ascontiguousarray(np.asarray(direction, float).reshape(1, 3))
    t, tri = _kernels.nearest_hits(o, d, geo.v0, geo.e1, geo.e2, SELF_INTERSECTION_EPS)
    if tri[0] < 0:
        return None
    point = o[0] + t[0] * d[0]
    k = int(geo.tri_obj[tri[0]])
    margin = edge_margin_default(scene) if edge_margin is None else edge_margin
    dist, edir = _kernels.edge_proximity(point.reshape(1, 3), np.array([k]),
                                         geo.edge_a, geo.edge_b, geo.edge_start)
    near = bool(dist[0] <= margin)
    return Hit(point=point, normal=geo.normals[tri[0]].copy(),
               object_id=geo.object_ids[k], distance=float(t[0]),
               near_edge=near, triangle=int(tri[0]),
               edge_direction=edir[0] if near else None)


def segment_blocked(scene, a, b, frame):
    """True if any triangle cuts the open segment a-b."""
    geo = scene.geometry(frame)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    v = b - a
    length = float(np.linalg.norm(v))
    if geo.num_triangles == 0 or length == 0.0:
        return False
    t, _ = _kernels.nearest_hits(a.reshape(1, 3), (v / length).reshape(1, 3),
                                 geo.v0, geo.e1, geo.e2, SELF_INTERSECTION_EPS)
    return bool(t[0] < length - SELF_INTERSECTION_EPS)


_PARITY_DIRS = np.array([[0.2672612419124244, 0.5345224838248488, 0.8017837257372732],
                         [-0.6963106238227914, 0.1392621247645583, 0.7041478249627063],
                         [0.4236592728681617, -0.8473185457363233, 0.3202975394493542]])


def point_inside(scene, obj, point, frame=0):
    """Parity test for closed meshes; open meshes never contain a point.

    Majority vote over three generic ray directions, so a ray grazing a
    shared edge or vertex cannot flip the answer.
    """
    if not obj.is_closed:
        return False
    rot, trans = obj.pose(frame)
    tri = obj.local_triangles @ rot.T + trans
    e1 = np.ascontiguousarray(tri[:, 1] - tri[:, 0])
    e2 = np.ascontiguousarray(tri[:, 2] - tri[:, 0])
    v0 = np.ascontiguousarray(tri[:, 0])
    p = np.asarray(point, float)
    votes = 0
    for d in _PARITY_DIRS:
        d = d / np.linalg.norm(d)
        crossings = 0
        for i in range(len(tri)):
            t = _kernels._ray_triangle(p[0], p[1], p[2], d[0], d[1], d[2], v0, e1, e2, i)
            if 0 < t < math.inf:
                crossings += 1
        votes += crossings % 2
    return votes >= 2


def closest_point_on_triangles(p, tri):
    """Closest point to ``p`` on each triangle of an ``(N, 3, 3)`` array."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    proj = p - np.sum((p - a) * n, axis=1, keepdims=True) * n
    # barycentric inside test for the projection
    v0, v1, v2 = b - a, c - a, proj - a
    d00 = np.sum(v0 * v0, 1)
    d01 = np.sum(v0 * v1, 1)
    d11 = np.sum(v1 * v1, 1)
    d20 = np.sum(v2 * v0, 1)
    d21 = np.sum(v2 * v1, 1)
    den = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    inside = (v >= 0) & (w >= 0) & (v + w <= 1)
    best = proj.copy()
    best_d = np.full(len(tri), np.inf)
    best_d[inside] = np.linalg.norm(proj[inside] - p, axis=1)
    for s, e in ((a, b), (b, c), (c, a)):
        seg = e - s
        u = np.clip(np.sum((p - s) * seg, 1) / np.sum(seg * seg, 1), 0.0, 1.0)
        q = s + u[:, None] * seg
        dq = np.linalg.norm(q - p, axis=1)
        upd = ~inside & (dq < best_d)
        best[upd] = q[upd]
        best_d[upd] = dq[upd]
    return best, best_d


def ground_truth(scene, frame):
    """Range/azimuth/radial speed of every object, seen from TX and RX.

    Radial speed is positive for an approaching object.

    The reference point is the surface point closest to the RX; range is
    half the TX -> point -> RX length so that a co-located pair gives the
    monostatic range.
    """
    out = []
    tx = scene.tx.position_array
    rx = scene.rx.position_array
    for k, obj in enumerate(scene.objects):
        rot, trans = obj.pose(frame)
        tri = obj.local_triangles @ rot.T + trans
        pts, dist = closest_point_on_triangles(rx, tri)
        p = pts[int(np.argmin(dist))]
        d_tx = float(np.linalg.norm(p - tx))
        d_rx = float(np.linalg.norm(p - rx))
        vel = velocities_at(scene, np.array([k]), p.reshape(1, 3), frame)[0]
        # positive when approaching (the path shortens), as for path Doppler
        speed = -0.5 * (vel @ (p - tx) / d_tx + vel @ (p - rx) / d_rx)
        out.append(GroundTruth(object_id=obj.id, range=0.5 * (d_tx + d_rx),
                               path_length=d_tx + d_rx,
                               azimuth=scene.rx.azimuth_of(p),
                               radial_speed=float(speed)))
    return out


# --------------------------------------------------------------------------
# document I/O


def _quat_matrix(q):
    return Rotation.from_quat(_xyzw(q)).as_matrix()


def _xyzw(q):
    w, x, y, z = q
    return [x, y, z, w]


def _quat_from_doc(doc, where):
    """Quaternion (w, x, y, z) from either ``quaternion`` or ``rotation_deg``."""
    if "quaternion" in doc:
        q = np.asarray(doc["quaternion"], dtype=float)
        if q.shape != (4,):
            raise ParseError(f"{where}: quaternion needs 4 numbers")
        n = float(np.linalg.norm(q))
        if n == 0.0:
            raise ValidationError("zero quaternion", object_id=where, field="quaternion")
        if abs(n - 1.0) > 1e-12:
            q = q / n
        return tuple(float(v) for v in q)
    if "rotation_deg" in doc:
        ypr = np.asarray(doc["rotation_deg"], dtype=float)
        if ypr.shape != (3,):
            raise ParseError(f"{where}: rotation_deg needs [yaw, pitch, roll]")
        x, y, z, w = Rotation.from_euler("ZYX", ypr, degrees=True).as_quat()
        if w < 0:
            x, y, z, w = -x, -y, -z, -w
        return (float(w), float(x), float(y), float(z))
    return (1.0, 0.0, 0.0, 0.0)


def _vec3(value, where):
    try:
        v = tuple(float(x) for x in value)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: expected 3 numbers") from exc
    if len(v) != 3:
        raise ParseError(f"{where}: expected 3 numbers")
    return v


def _endpoint_from_doc(doc, name, wavelength):
    if not isinstance(doc, dict):
        raise ParseError(f"{name}: expected an object")
    if "position" not in doc:
        raise ParseError(f"{name}: missing position")
    pattern = doc.get("pattern", "isotropic")
    if pattern not in PATTERNS:
        raise ValidationError(f"unknown pattern {pattern!r}", object_id=name, field="pattern")
    q = _quat_from_doc(doc, name)
    if "elements" in doc:
        elems = tuple(_vec3(e, f"{name}.elements") for e in doc["elements"])
        spacing = float(doc.get("spacing", 0.0))
    else:
        arr = doc.get("array", {})
        n = int(arr.get("num_elements", 1))
        spacing = float(arr.get("spacing", wavelength / 2.0))
        axis = np.asarray(arr.get("axis", [0.0, 1.0, 0.0]), dtype=float)
        axis = axis / np.linalg.norm(axis)
        elems = tuple(tuple(float(c) for c in m * spacing * axis) for m in range(n))
        if n == 1:
            spacing = 0.0
    if not elems:
        raise ValidationError("array needs at least one element", object_id=name, field="elements")
    ep = RadioEndpoint(position=_vec3(doc["position"], f"{name}.position"),
                       orientation=q, elements=elems, spacing=spacing, pattern=pattern)
    _validate_array(ep, name)
    return ep


def _validate_array(ep, name):
    q = np.asarray(ep.orientation)
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise ValidationError("orientation not normalized", object_id=name, field="orientation")
    el = np.asarray(ep.elements, dtype=float)
    if len(el) < 2:
        return
    steps = np.diff(el, axis=0)
    lengths = np.linalg.norm(steps, axis=1)
    if not np.allclose(lengths, ep.spacing, rtol=0, atol=1e-9) or ep.spacing <= 0:
        raise ValidationError("element offsets inconsistent with spacing",
                              object_id=name, field="spacing")
    unit = steps / lengths[:, None]
    if not np.allclose(unit, unit[0], rtol=0, atol=1e-9):
        raise ValidationError("elements are not a uniform linear array",
                              object_id=name, field="elements")


def _material_from_doc(name, doc):
    if not isinstance(doc, dict):
        raise ParseError(f"material {name}: expected an object")
    try:
        m = Material(
            name=name,
            permittivity=float(doc.get("permittivity", 1.0)),
            permeability=float(doc.get("permeability", 1.0)),
            roughness=float(doc.get("roughness", 0.0)),
            scatter_exponent=float(doc.get("scatter_exponent", 4.0)),
            backscatter_coeff=float(doc.get("backscatter", 0.0)),
            penetrable=bool(doc.get("penetrable", False)),
            refractive_index=float(doc.get("refractive_index", 1.0)),
            frequency=None if doc.get("frequency") is None else float(doc["frequency"]),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"material {name}: {exc}") from exc
    m.validate()
    return m


def _object_from_doc(doc, materials):
    if not isinstance(doc, dict) or "id" not in doc:
        raise ParseError("object entries need an 'id'")
    oid = str(doc["id"])
    try:
        verts = tuple(_vec3(v, f"{oid}.vertices") for v in doc["vertices"])
        faces = tuple(tuple(int(i) for i in f) for f in doc["faces"])
    except KeyError as exc:
        raise ParseError(f"{oid}: missing {exc.args[0]}") from exc
    mat = doc.get("material")
    if mat not in materials:
        raise ValidationError(f"unknown material {mat!r}", object_id=oid, field="material")
    if not faces:
        raise ValidationError("mesh is empty", object_id=oid, field="faces")
    for f in faces:
        if len(f) != 3 or min(f) < 0 or max(f) >= len(verts):
            raise ValidationError(f"bad face {f}", object_id=oid, field="faces")
    kfs = []
    for kd in doc.get("keyframes", []):
        kfs.append(Keyframe(frame=int(kd["frame"]),
                            translation=_vec3(kd.get("translation", (0, 0, 0)), f"{oid}.keyframes"),
                            quaternion=_quat_from_doc(kd, f"{oid}.keyframes")))
    for a, b in zip(kfs[:-1], kfs[1:]):
        if b.frame <= a.frame:
            raise ValidationError("keyframe indices must be strictly increasing",
                                  object_id=oid, field="keyframes")
    obj = SceneObject(id=oid, vertices=verts, faces=faces, material=mat,
                      keyframes=tuple(kfs), target=bool(doc.get("target", False)))
    tri = obj.local_triangles
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    if np.any(area <= _MIN_TRIANGLE_AREA):
        raise ValidationError(f"degenerate triangle {int(np.argmin(area))}",
                              object_id=oid, field="faces")
    return obj


def scene_from_dict(doc):
    """Build and validate a :class:`Scene` from a decoded document."""
    if not isinstance(doc, dict):
        raise ParseError("scene document must be a JSON object")
    for key in ("objects", "materials", "tx", "rx", "frame_rate", "num_frames"):
        if key not in doc:
            raise ParseError(f"missing top-level key {key!r}")
    f_ref = float(doc.get("reference_frequency", DEFAULT_REFERENCE_FREQUENCY))
    if not f_ref > 0:
        raise ValidationError("reference_frequency must be > 0", field="reference_frequency")
    wavelength = C0 / f_ref
    if not isinstance(doc["materials"], dict):
        raise ParseError("materials must map names to properties")
    materials = tuple(_material_from_doc(n, m) for n, m in sorted(doc["materials"].items()))
    names = {m.name for m in materials}
    objects = tuple(_object_from_doc(o, names) for o in doc["objects"])
    ids = [o.id for o in objects]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate object ids", field="objects")
    frame_rate = float(doc["frame_rate"])
    num_frames = int(doc["num_frames"])
    if not frame_rate > 0:
        raise ValidationError("frame_rate must be > 0", field="frame_rate")
    if num_frames < 1:
        raise ValidationError("num_frames must be >= 1", field="num_frames")
    scene = Scene(objects=objects, materials=materials,
                  tx=_endpoint_from_doc(doc["tx"], "tx", wavelength),
                  rx=_endpoint_from_doc(doc["rx"], "rx", wavelength),
                  frame_rate=frame_rate, num_frames=num_frames,
                  reference_frequency=f_ref)
    for obj in objects:
        for name, ep in (("tx", scene.tx), ("rx", scene.rx)):
            if point_inside(scene, obj, ep.position, 0):
                raise ValidationError(f"{name} lies inside the mesh",
                                      object_id=obj.id, field="vertices")
    return scene


def parse_scene(path):
    """Read and validate a scene document from ``path``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read scene {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return scene_from_dict(doc)


def scene_to_dict(scene):
    """Canonical document form; ``scene_from_dict`` inverts it exactly."""

    def ep(e):
        return {"position": list(e.position), "quaternion": list(e.orientation),
                "elements": [list(x) for x in e.elements], "spacing": e.spacing,
                "pattern": e.pattern}

    materials = {}
    for m in scene.materials:
        materials[m.name] = {
            "permittivity": m.permittivity, "permeability": m.permeability,
            "roughness": m.roughness, "scatter_exponent": m.scatter_exponent,
            "backscatter": m.backscatter_coeff, "penetrable": m.penetrable,
            "refractive_index": m.refractive_index, "frequency": m.frequency,
        }
    objects = []
    for o in scene.objects:
        objects.append({
            "id": o.id, "material": o.material, "target": o.target,
            "vertices": [list(v) for v in o.vertices],
            "faces": [list(f) for f in o.faces],
            "keyframes": [{"frame": k.frame, "translation": list(k.translation),
                           "quaternion": list(k.quaternion)} for k in o.keyframes],
        })
    return {"reference_frequency": scene.reference_frequency,
            "frame_rate": scene.frame_rate, "num_frames": scene.num_frames,
            "materials": materials, "objects": objects,
            "tx": ep(scene.tx), "rx": ep(scene.rx)}


def dump_scene(scene, path):
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=1, sort_keys=True) + "\n",
                          encoding="utf-8")


def scene_hash(scene):
    import hashlib
    blob = json.dumps(scene_to_dict(scene), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# mesh helpers for fixtures and tests


def box_mesh(size, center=(0.0, 0.0, 0.0)):
    """Closed axis-aligned box with outward-facing triangles."""
    sx, sy, sz = (0.5 * s for s in size)
    cx, cy, cz = center
    v = [(cx + x * sx, cy + y * sy, cz + z * sz)
         for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)]
    f = [(0, 1, 3), (0, 3, 2),  # -x
         (4, 6, 7), (4, 7, 5),  # +x
         (0, 4, 5), (0, 5, 1),  # -y
         (2, 3, 7), (2, 7, 6),  # +y
         (0, 2, 6), (0, 6, 4),  # -z
         (1, 5, 7), (1, 7, 3)]  # +z
    return v, f


def plate_mesh(center, u, v):
    """Rectangle ``center +- u +- v`` as two triangles (normal along u x v)."""
    c = np.asarray(center, float)
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    verts = [tuple(c - u - v), tuple(c + u - v), tuple(c + u + v), tuple(c - u + v)]
    return [tuple(float(x) for x in p) for p in verts], [(0, 1, 2), (0, 2, 3)]
