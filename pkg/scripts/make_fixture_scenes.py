#!/usr/bin/env python3
"""Regenerate the scene documents under configs/scenes/ from isacsim.fixtures."""

import argparse
import json
from pathlib import Path

from isacsim.fixtures import empty_scene, factory_scene

SCENES = {
    "factory.json": lambda: factory_scene(num_frames=2),
    # 1 s AGV drive for the (ungated) dynamic experiment
    "factory_track.json": lambda: factory_scene(num_frames=30),
    "los.json": lambda: empty_scene(distance=30.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "configs" / "scenes"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, build in SCENES.items():
        (out / name).write_text(json.dumps(build(), indent=1, sort_keys=True) + "\n")
        print(out / name)


if __name__ == "__main__":
    main()
