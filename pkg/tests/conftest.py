import sys
import textwrap

import numpy as np
import pytest

from pitl.scene import DepthMap, RegionMask, SceneModel
from pitl.scenegen import generate_scene


@pytest.fixture(scope="session")
def locker_scene() -> SceneModel:
    """The 32x32 locker preset used by the end-to-end checks."""
    return generate_scene("locker", 32, seed=5).to_scene_model()


def make_tiny_scene(
    size: int = 8,
    obj_depth: float = 2.0,
    back_depth: float = 4.0,
    reflectance: float = 0.8,
    ambient: float = 0.4,
    noise: float = 0.0,
    cell_grid=(2, 2),
) -> SceneModel:
    """Minimal valid scene: uniform background plane with a centered object."""
    refl = np.full((size, size, 3), reflectance)
    back = np.full((size, size), back_depth)
    orig = back.copy()
    lo, hi = size // 4, size - size // 4
    orig[lo:hi, lo:hi] = obj_depth
    member = np.zeros((size, size), dtype=bool)
    member[lo:hi, lo:hi] = True
    scene = SceneModel(
        reflectance=refl,
        ambient=ambient,
        depth_orig=DepthMap(orig),
        depth_back=DepthMap(back),
        region=RegionMask(member, *cell_grid),
        noise_stddev=noise,
    )
    scene.validate()
    return scene


@pytest.fixture
def tiny_scene() -> SceneModel:
    return make_tiny_scene()


# --------------------------------------------------------------------------
# external-victim adapter scripts (self-contained, spawned via sys.executable)

GOOD_ADAPTER = textwrap.dedent(
    """
    import json, sys
    import numpy as np
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except Exception:
            print(json.dumps({"ok": False, "error": "bad json"})); sys.stdout.flush(); continue
        if msg.get("cmd") == "hello":
            print(json.dumps({"ok": True, "version": 1, "model": "test-echo",
                              "max_width": 128, "max_height": 128}))
        elif msg.get("cmd") == "estimate":
            w, h = msg["width"], msg["height"]
            px = np.asarray(msg["pixels"], dtype=np.float32).reshape(h, w, 3)
            lum = px @ np.array([0.2126, 0.7152, 0.0722], dtype=np.float32)
            depth = 2.0 + 2.0 * np.clip(lum, 0.0, 1.0)
            print(json.dumps({"ok": True, "width": w, "height": h,
                              "depth": depth.reshape(-1).astype(float).tolist()}))
        else:
            print(json.dumps({"ok": False, "error": "unknown cmd"}))
        sys.stdout.flush()
    """
)

# echoes the red channel (cast to float32) back as the depth map
ECHO_R_ADAPTER = textwrap.dedent(
    """
    import json, sys
    import numpy as np
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except Exception:
            print(json.dumps({"ok": False, "error": "bad json"})); sys.stdout.flush(); continue
        if msg.get("cmd") == "hello":
            print(json.dumps({"ok": True, "version": 1, "model": "echo-r",
                              "max_width": 256, "max_height": 256}))
        elif msg.get("cmd") == "estimate":
            w, h = msg["width"], msg["height"]
            r = np.asarray(msg["pixels"][0::3], dtype=np.float32)
            print(json.dumps({"ok": True, "width": w, "height": h,
                              "depth": [float(v) for v in np.abs(r)]}))
        sys.stdout.flush()
    """
)

VERSION2_ADAPTER = textwrap.dedent(
    """
    import json, sys
    for line in sys.stdin:
        print(json.dumps({"ok": True, "version": 2, "model": "future",
                          "max_width": 8, "max_height": 8}))
        sys.stdout.flush()
    """
)

SLOW_ADAPTER = "import time\ntime.sleep(600)\n"

DEAD_ADAPTER = "import sys\nsys.exit(3)\n"

GARBAGE_REPLY_ADAPTER = textwrap.dedent(
    """
    import sys
    for line in sys.stdin:
        print("this is not json")
        sys.stdout.flush()
    """
)

ERROR_REPLY_ADAPTER = textwrap.dedent(
    """
    import json, sys
    for line in sys.stdin:
        msg = json.loads(line)
        if msg.get("cmd") == "hello":
            print(json.dumps({"ok": True, "version": 1, "model": "grumpy",
                              "max_width": 64, "max_height": 64}))
        else:
            print(json.dumps({"ok": False, "error": "model exploded"}))
        sys.stdout.flush()
    """
)

# dies after a fixed number of estimate calls, but only while the sentinel
# file (argv[1]) exists; allows resuming with the exact same command line
SENTINEL_ADAPTER = textwrap.dedent(
    """
    import json, os, sys
    count = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except Exception:
            print(json.dumps({"ok": False, "error": "bad json"})); sys.stdout.flush(); continue
        if msg.get("cmd") == "hello":
            print(json.dumps({"ok": True, "version": 1, "model": "sentinel",
                              "max_width": 64, "max_height": 64}))
        elif msg.get("cmd") == "estimate":
            count += 1
            if count > int(sys.argv[2]) and os.path.exists(sys.argv[1]):
                sys.exit(9)
            w, h = msg["width"], msg["height"]
            lum = sum(msg["pixels"]) / len(msg["pixels"])
            print(json.dumps({"ok": True, "width": w, "height": h,
                              "depth": [2.0 + 2.0 * lum] * (w * h)}))
        sys.stdout.flush()
    """
)


@pytest.fixture
def adapter_command(tmp_path):
    """Factory: write an adapter script and return its command line."""

    def factory(source: str, *extra_args: str) -> list:
        path = tmp_path / f"adapter_{abs(hash(source)) % 10**8}.py"
        path.write_text(source)
        return [sys.executable, str(path), *extra_args]

    return factory
