"""Round-trip checks with a real neural backend.

The random-cnn backend needs torch only; the published-checkpoint test
additionally needs transformers plus downloadable weights and skips
itself when either is unavailable. Adversarial effect sizes are reported,
never asserted: they depend on the model.
"""

import json

import numpy as np
import pytest

torch = pytest.importorskip("torch", reason="torch not installed")

from pyvictim.backends import HfDepthBackend, MockBrightnessBackend, RandomCnnBackend
from pyvictim.protocol import handle_request


def estimate(backend, pixels):
    h, w = pixels.shape[:2]
    reply = handle_request(
        backend,
        json.dumps({"cmd": "estimate", "width": w, "height": h,
                    "pixels": pixels.reshape(-1).tolist()}),
    )
    assert reply["ok"], reply
    return np.asarray(reply["depth"]).reshape(h, w)


def test_random_cnn_round_trip_is_well_formed():
    backend = RandomCnnBackend(seed=1, depth_scale=10.0)
    rng = np.random.default_rng(0)
    pixels = rng.uniform(0, 1, (24, 20, 3))
    depth = estimate(backend, pixels)
    assert depth.shape == (24, 20)
    assert np.all(np.isfinite(depth))
    assert np.all(depth >= 0)
    assert depth.max() <= 10.0 + 1e-9


def test_random_cnn_is_deterministic():
    a = RandomCnnBackend(seed=5)
    b = RandomCnnBackend(seed=5)
    rng = np.random.default_rng(1)
    pixels = rng.uniform(0, 1, (16, 16, 3))
    assert np.allclose(estimate(a, pixels), estimate(b, pixels), atol=1e-6)


def test_random_cnn_reports_adversarial_effect_sizes():
    # benign versus bright projection; the direction is model-dependent and
    # deliberately not asserted
    backend = RandomCnnBackend(seed=2)
    rng = np.random.default_rng(4)
    benign = rng.uniform(0.2, 0.5, (32, 32, 3))
    bright = np.clip(benign + 0.5, 0, 1)
    d_benign = estimate(backend, benign)
    d_bright = estimate(backend, bright)
    delta = float(np.abs(d_bright - d_benign).mean())
    print(f"random-cnn mean |depth shift| under bright projection: {delta:.4f} "
          f"(scale {backend.depth_scale})")
    assert np.all(np.isfinite(d_bright))


def test_published_checkpoint_round_trip_if_available():
    try:
        backend = HfDepthBackend("depth-anything/Depth-Anything-V2-Small-hf", depth_scale=10.0)
    except Exception as exc:
        pytest.skip(f"checkpoint unavailable in this environment: {exc}")
    rng = np.random.default_rng(0)
    pixels = rng.uniform(0, 1, (48, 64, 3))
    depth = estimate(backend, pixels)
    assert depth.shape == (48, 64)
    assert np.all(np.isfinite(depth)) and np.all(depth >= 0)

    mock = MockBrightnessBackend()
    bright = np.clip(pixels + 0.4, 0, 1)
    shift = float(np.abs(estimate(backend, bright) - depth).mean())
    print(f"{backend.name}: mean |depth shift| under bright projection: {shift:.4f}")
    assert mock is not None  # effect size reported above, not asserted
