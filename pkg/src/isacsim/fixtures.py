"""Hand-built scene documents used by tests, example configs and scripts.

The factory cell is a desk-scale stand-in for an indoor factory floor:
four walls, four robot cells (metal boxes) and an AGV whose front face
sits 28 m from the radio at 50 degrees azimuth, driving along +x.
"""

from __future__ import annotations

import math

import numpy as np

from .scene import C0, DEFAULT_REFERENCE_FREQUENCY, box_mesh, plate_mesh

METAL = {"permittivity": 1e6, "roughness": 0.0005, "scatter_exponent": 8.0,
         "backscatter": 0.5}
CONCRETE = {"permittivity": 5.3, "roughness": 0.002, "scatter_exponent": 4.0,
            "backscatter": 0.2, "penetrable": False}

AGV_RANGE = 28.0
AGV_AZIMUTH_DEG = 50.0
AGV_SPEED = 2.0  # m/s along +x
RADIO_HEIGHT = 1.0


def _object(oid, mesh, material, keyframes=None, target=False):
    v, f = mesh
    doc = {"id": oid, "vertices": [list(map(float, p)) for p in v],
           "faces": [list(t) for t in f], "material": material}
    if keyframes:
        doc["keyframes"] = keyframes
    if target:
        doc["target"] = True
    return doc


def monostatic_endpoints(num_elements=4, pattern="patch", separation=0.1):
    """Single-element TX and a ULA RX along y, both looking along +x."""
    tx = {"position": [0.0, 0.0, RADIO_HEIGHT], "pattern": pattern,
          "rotation_deg": [0.0, 0.0, 0.0]}
    rx = {"position": [0.0, 0.0, RADIO_HEIGHT + separation], "pattern": pattern,
          "rotation_deg": [0.0, 0.0, 0.0],
          "array": {"num_elements": num_elements, "axis": [0.0, 1.0, 0.0]}}
    return tx, rx


def agv_pose(range_m=AGV_RANGE, azimuth_deg=AGV_AZIMUTH_DEG, depth=1.0):
    """Centre of the AGV box whose front face is at the given range/azimuth.

    The ground-truth reference point is measured from the RX, which sits
    slightly above the TX; the box is centred at the radio height.
    """
    az = math.radians(azimuth_deg)
    r = range_m + 0.5 * depth
    return [r * math.cos(az), r * math.sin(az), RADIO_HEIGHT]


def factory_scene(num_frames=2, frame_rate=30.0, agv_speed=AGV_SPEED):
    """Factory cell document (walls, four robot cells, moving AGV target)."""
    walls = []
    x0, x1, y0, y1, h = -4.0, 36.0, -16.0, 34.0, 4.0
    zc = 0.5 * h
    walls.append(_object("wall_north", plate_mesh(((x0 + x1) / 2, y1, zc), ((x1 - x0) / 2, 0, 0),
                                                  (0, 0, h / 2)), "concrete"))
    walls.append(_object("wall_south", plate_mesh(((x0 + x1) / 2, y0, zc), ((x1 - x0) / 2, 0, 0),
                                                  (0, 0, h / 2)), "concrete"))
    walls.append(_object("wall_east", plate_mesh((x1, (y0 + y1) / 2, zc), (0, (y1 - y0) / 2, 0),
                                                 (0, 0, h / 2)), "concrete"))
    walls.append(_object("wall_west", plate_mesh((x0, (y0 + y1) / 2, zc), (0, (y1 - y0) / 2, 0),
                                                 (0, 0, h / 2)), "concrete"))
    robots = [("robot_1", (12.0, -7.0)), ("robot_2", (20.0, 4.0)),
              ("robot_3", (5.0, 13.0)), ("robot_4", (27.0, -10.0))]
    objs = walls + [_object(n, box_mesh((1.5, 1.5, 2.0), (x, y, 1.0)), "metal")
                    for n, (x, y) in robots]
    depth, width, height = 1.0, 1.6, 1.0
    centre = agv_pose(depth=depth)
    yaw = AGV_AZIMUTH_DEG
    step = agv_speed / frame_rate
    keyframes = [{"frame": k, "translation": [centre[0] + k * step, centre[1], centre[2]],
                  "rotation_deg": [yaw, 0.0, 0.0]} for k in (0, max(1, num_frames - 1))]
    if num_frames == 1:
        keyframes = keyframes[:1]
    else:
        keyframes[1]["translation"][0] = centre[0] + (num_frames - 1) * step
    objs.append(_object("agv", box_mesh((depth, width, height)), "metal",
                        keyframes=keyframes, target=True))
    tx, rx = monostatic_endpoints()
    return {"reference_frequency": DEFAULT_REFERENCE_FREQUENCY, "frame_rate": frame_rate,
            "num_frames": num_frames, "materials": {"metal": METAL, "concrete": CONCRETE},
            "objects": objs, "tx": tx, "rx": rx}


def empty_scene(distance=10.0):
    """TX and a single-element RX in free space, ``distance`` apart along x."""
    return {"frame_rate": 30.0, "num_frames": 1, "materials": {}, "objects": [],
            "tx": {"position": [0.0, 0.0, 1.0]},
            "rx": {"position": [distance, 0.0, 1.0],
                   "array": {"num_elements": 4, "axis": [0.0, 1.0, 0.0]}}}


def plate_scene(plates, tx=(0.0, 0.0, 1.5), rx=(6.0, 1.0, 2.0), material=None):
    """Scene of flat plates given as ``(center, u, v)`` half-extent tuples."""
    mat = material or {"permittivity": 1e6}
    objs = [_object(f"plate_{i}", plate_mesh(c, u, v), "plate")
            for i, (c, u, v) in enumerate(plates)]
    return {"frame_rate": 30.0, "num_frames": 1, "materials": {"plate": mat},
            "objects": objs, "tx": {"position": list(tx)}, "rx": {"position": list(rx)}}


def ground_plate(size=50.0):
    return ((0.0, 0.0, 0.0), (size, 0.0, 0.0), (0.0, size, 0.0))


def target_range_on_grid(bin_index=19, bandwidth=100e6):
    """Monostatic range that falls exactly on a periodogram range bin."""
    return bin_index * C0 / (2.0 * bandwidth)


def two_path_echoes(target_amplitude=0.1, target_speed=0.5, bandwidth=100e6):
    """Static wall echo plus a weak, slow moving target echo.

    The target sits on range bin 19 (about 28.5 m) at 50 degrees; the wall
    is 20 dB stronger, off the range grid (so its delay sidelobes reach the
    target tap) and 15 degrees away. The slow target stays nearly coherent
    with the wall over a frame.
    """
    return [
        {"name": "wall", "range": 22.3, "azimuth": 35.0, "amplitude": 1.0,
         "radial_speed": 0.0},
        {"name": "target", "range": target_range_on_grid(19, bandwidth), "azimuth": 50.0,
         "amplitude": target_amplitude, "radial_speed": target_speed},
    ]


def weak_target_echoes(bandwidth=100e6):
    """The two-path layout with the target 60 dB below the wall."""
    return two_path_echoes(target_amplitude=1e-3, bandwidth=bandwidth)


def image_source_reflections(plates, tx, rx, max_order=2):
    """Reflect-only paths of infinite/finite plates by the image method.

    Returns a list of ``(plate index sequence, length)`` for every valid
    specular path of order 1..max_order (each reflection point must lie on
    its plate). Used as an independent oracle for the tracer.
    """
    planes = []
    for c, u, v in plates:
        c, u, v = (np.asarray(x, float) for x in (c, u, v))
        n = np.cross(u, v)
        n /= np.linalg.norm(n)
        planes.append((c, u, v, n))
    tx = np.asarray(tx, float)
    rx = np.asarray(rx, float)

    def mirror(p, plane):
        c, _, _, n = plane
        return p - 2.0 * np.dot(p - c, n) * n

    def on_plate(p, plane):
        c, u, v, n = plane
        w = p - c
        return (abs(np.dot(w, u)) <= np.dot(u, u) + 1e-9
                and abs(np.dot(w, v)) <= np.dot(v, v) + 1e-9)

    def seg_plane(a, b, plane):
        c, _, _, n = plane
        da = np.dot(a - c, n)
        db = np.dot(b - c, n)
        if da * db >= 0:
            return None
        t = da / (da - db)
        return a + t * (b - a)

    def blocked(a, b, skip):
        for k, pl in enumerate(planes):
            if k in skip:
                continue
            p = seg_plane(a, b, pl)
            if p is not None and on_plate(p, pl):
                d1 = np.linalg.norm(p - a)
                d2 = np.linalg.norm(p - b)
                if d1 > 1e-6 and d2 > 1e-6:
                    return True
        return False

    out = []
    import itertools
    for order in range(1, max_order + 1):
        for seq in itertools.product(range(len(planes)), repeat=order):
            if any(a == b for a, b in zip(seq[:-1], seq[1:])):
                continue
            images = [tx]
            for k in seq:
                images.append(mirror(images[-1], planes[k]))
            # back-trace from RX through the image chain
            pts = []
            target = rx
            ok = True
            for idx in range(order, 0, -1):
                plane = planes[seq[idx - 1]]
                p = seg_plane(images[idx], target, plane)
                if p is None or not on_plate(p, plane):
                    ok = False
                    break
                pts.append(p)
                target = p
            if not ok:
                continue
            pts = [tx] + pts[::-1] + [rx]
            segs_ok = True
            for i in range(len(pts) - 1):
                skip = set()
                if i > 0:
                    skip.add(seq[i - 1])
                if i < order:
                    skip.add(seq[i])
                if blocked(pts[i], pts[i + 1], skip):
                    segs_ok = False
                    break
            if not segs_ok:
                continue
            length = float(sum(np.linalg.norm(b - a) for a, b in zip(pts[:-1], pts[1:])))
            out.append((tuple(seq), length))
    return sorted(out, key=lambda x: (x[0], x[1]))
