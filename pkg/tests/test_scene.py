import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isacsim.errors import FrameOutOfRange, ParseError, UnknownObject, ValidationError
from isacsim.fixtures import factory_scene, plate_scene
from isacsim.scene import (box_mesh, dump_scene, ground_truth, intersect_ray, parse_scene,
                           scene_from_dict, scene_hash, scene_to_dict, segment_blocked,
                           surface_velocity)


def _box_doc(**extra):
    v, f = box_mesh((1.0, 1.0, 1.0), (5.0, 0.0, 0.0))
    obj = {"id": "box", "vertices": v, "faces": f, "material": "m"}
    obj.update(extra)
    return {"frame_rate": 10.0, "num_frames": 3, "materials": {"m": {"permittivity": 4.0}},
            "objects": [obj], "tx": {"position": [0, 0, 0]}, "rx": {"position": [0, 0.2, 0]}}


def test_round_trip_document(tmp_path):
    scene = scene_from_dict(factory_scene())
    path = tmp_path / "s.json"
    dump_scene(scene, path)
    again = parse_scene(path)
    assert scene_to_dict(again) == scene_to_dict(scene)
    assert scene_hash(again) == scene_hash(scene)


def test_missing_key_is_parse_error():
    doc = _box_doc()
    del doc["tx"]
    with pytest.raises(ParseError):
        scene_from_dict(doc)


def test_bad_json_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        parse_scene(p)


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["materials"]["m"].update(permittivity=0.5), "permittivity"),
    (lambda d: d["materials"]["m"].update(backscatter=1.5), "backscatter"),
    (lambda d: d["objects"][0].update(material="nope"), "material"),
    (lambda d: d["objects"][0]["faces"].append([0, 1, 99]), "faces"),
    (lambda d: d["objects"][0]["faces"].append([0, 0, 1]), "faces"),
])
def test_validation_errors_name_the_field(mutate, field):
    doc = _box_doc()
    mutate(doc)
    with pytest.raises(ValidationError) as ei:
        scene_from_dict(doc)
    assert ei.value.field == field


def test_endpoint_inside_closed_mesh_rejected():
    doc = _box_doc()
    doc["tx"]["position"] = [5.0, 0.0, 0.0]
    with pytest.raises(ValidationError):
        scene_from_dict(doc)


def test_unknown_object():
    scene = scene_from_dict(_box_doc())
    with pytest.raises(UnknownObject):
        scene.object("ghost")
    with pytest.raises(UnknownObject):
        scene.without("ghost")


def test_intersect_box_face():
    scene = scene_from_dict(_box_doc())
    hit = intersect_ray(scene, [0, 0, 0], [1, 0, 0], 0)
    assert hit is not None and hit.object_id == "box"
    assert hit.distance == pytest.approx(4.5, abs=1e-12)
    np.testing.assert_allclose(hit.normal @ np.array([1.0, 0, 0]), -1.0, atol=1e-12)
    assert intersect_ray(scene, [0, 0, 0], [-1, 0, 0], 0) is None


def test_segment_blocked():
    scene = scene_from_dict(_box_doc())
    assert segment_blocked(scene, [0, 0, 0], [10, 0, 0], 0)
    assert not segment_blocked(scene, [0, 0, 0], [0, 10, 0], 0)


def test_keyframe_velocity_and_range():
    doc = _box_doc(keyframes=[{"frame": 0, "translation": [0, 0, 0]},
                              {"frame": 2, "translation": [2, 0, 0]}])
    scene = scene_from_dict(doc)
    v = surface_velocity(scene, "box", [4.5, 0, 0], 0)
    np.testing.assert_allclose(v, [10.0, 0, 0], atol=1e-12)  # 1 m/frame at 10 fps
    with pytest.raises(FrameOutOfRange):
        surface_velocity(scene, "box", [4.5, 0, 0], 2)


def test_ground_truth_monostatic():
    doc = _box_doc(keyframes=[{"frame": 0, "translation": [0, 0, 0]},
                              {"frame": 2, "translation": [2, 0, 0]}])
    doc["rx"]["position"] = [0, 0, 0]
    gt = ground_truth(scene_from_dict(doc), 0)[0]
    assert gt.range == pytest.approx(4.5)
    assert gt.azimuth == pytest.approx(0.0)
    assert gt.radial_speed == pytest.approx(-10.0)  # receding


def test_factory_truth_geometry():
    scene = scene_from_dict(factory_scene())
    gt = {g.object_id: g for g in ground_truth(scene, 0)}["agv"]
    assert gt.range == pytest.approx(28.0, abs=0.01)
    assert math.degrees(gt.azimuth) == pytest.approx(50.0, abs=0.01)


@settings(max_examples=25, deadline=None)
@given(yaw=st.floats(-180, 180), dx=st.floats(-3, 3))
def test_rigid_motion_preserves_hit_distance(yaw, dx):
    """Moving TX, RX and plate together leaves the reflection geometry intact."""
    doc = plate_scene([((0, 0, 0), (5, 0, 0), (0, 5, 0))])
    base = scene_from_dict(doc)
    h0 = intersect_ray(base, [0, 0, 1.5], [0, 0, -1], 0)
    doc2 = json.loads(json.dumps(doc))
    doc2["objects"][0]["keyframes"] = [{"frame": 0, "translation": [dx, 0, 0],
                                        "rotation_deg": [yaw, 0, 0]}]
    moved = scene_from_dict(doc2)
    h1 = intersect_ray(moved, [dx, 0, 1.5], [0, 0, -1], 0)
    assert h1.distance == pytest.approx(h0.distance, abs=1e-9)
