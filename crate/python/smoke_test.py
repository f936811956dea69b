"""Smoke test for the ortrack Python extension.

Build and run from the repository root:

    cargo build --release -p ortrack-py
    python3 python/smoke_test.py

The script copies the built library next to itself as ``ortrack.so`` unless an
``ortrack`` module is already importable.
"""

import json
import math
import pathlib
import shutil
import sys

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parent


def load():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libortrack_py.so"
        if lib.exists():
            shutil.copy(lib, HERE / "ortrack.so")
            break
    sys.path.insert(0, str(HERE))
    import ortrack

    return ortrack


def main():
    ot = load()

    b = ot.BoundingBox(3740.0, 0.0, 3760.0, 10.0)
    pieces = ot.expand_box(b, 2.0)
    # the expanded box crosses the right edge and wraps to x = 0
    assert [p.to_list() for p in pieces] == [[0.0, 0.0, 10.0, 15.0], [3730.0, 0.0, 3760.0, 15.0]], pieces

    left = ot.BoundingBox(-10.0, 0.0, 30.0, 10.0)
    right = ot.BoundingBox(3750.0, 0.0, 3790.0, 10.0)
    assert ot.iou(left, right) == 0.0
    assert math.isclose(ot.wrap_iou(left, right), 1.0)

    assert math.isclose(ot.cosine([1.0, 0.0], [2.0, 0.0]), 1.0)
    assert ot.fuse([1.0, 0.0], [0.0, 1.0], 0.5) == [1.0, 0.5]
    assert sorted(ot.hungarian([[4.0, 1.0], [2.0, 8.0]])) == [(0, 1), (1, 0)]

    assert ot.build_prompt("red cars") == (
        "Please detect all red cars in the image and output their "
        "coordinates in the [x1, y1, x2, y2] format."
    )

    scene = ot.parse_orset(json.dumps({
        "scene_id": "s",
        "frame_range": [[0, 1]],
        "annotations": {"0": [{"id": 1, "bbox": [0, 0, 10, 10]}]},
        "description": "a box",
    }))
    assert scene["scene_id"] == "s"

    results = '{"frame": 0, "id": 7, "bbox": [0, 0, 10, 10]}\n'
    report = ot.evaluate(json.dumps(scene), results)
    assert report["HOTA"] == 100.0, report

    assert ot.select_keyframes([1.0] * 30) == []

    run = ot.synthetic_run(objects=5, frames=60)
    assert all(math.isclose(run[c], 100.0) for c in ot.COLUMNS), run
    assert run["trajectories"] == 5

    try:
        ot.BoundingBox(5.0, 0.0, 1.0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("inverted box accepted")

    print("ortrack python smoke test: ok")


if __name__ == "__main__":
    main()
