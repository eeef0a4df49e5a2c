"""Protocol-level tests against small throwaway adapter processes."""

import numpy as np
import pytest

from pitl.scene import CapturedImage
from pitl.victim import (
    ExternalVictim,
    ProtocolError,
    VictimError,
    check_protocol_conformance,
    external_handshake,
)

import conftest as adapters


def test_handshake_returns_capabilities(adapter_command):
    caps = external_handshake(adapter_command(adapters.GOOD_ADAPTER))
    assert caps["version"] == 1
    assert caps["model"] == "test-echo"
    assert caps["max_width"] == 128 and caps["max_height"] == 128


def test_handshake_rejects_future_protocol(adapter_command):
    with pytest.raises(ProtocolError):
        external_handshake(adapter_command(adapters.VERSION2_ADAPTER))


def test_handshake_detects_dead_process(adapter_command):
    with pytest.raises(VictimError):
        external_handshake(adapter_command(adapters.DEAD_ADAPTER))


def test_handshake_times_out(adapter_command):
    with pytest.raises(VictimError, match="no reply"):
        external_handshake(adapter_command(adapters.SLOW_ADAPTER), timeout=0.5)


def test_estimate_round_trip_within_float32(adapter_command):
    rng = np.random.default_rng(0)
    image = CapturedImage(rng.uniform(0, 1, (11, 7, 3)))
    with ExternalVictim(adapter_command(adapters.ECHO_R_ADAPTER)) as victim:
        depth = victim.estimate(image)
    expected = np.abs(image.pixels[:, :, 0].astype(np.float32)).astype(np.float64)
    rel = np.abs(depth.values - expected) / np.maximum(np.abs(expected), 1e-12)
    assert depth.values.shape == (11, 7)
    assert float(rel.max()) < 1e-6


def test_estimate_identical_requests_identical_replies(adapter_command):
    rng = np.random.default_rng(1)
    image = CapturedImage(rng.uniform(0, 1, (6, 6, 3)))
    with ExternalVictim(adapter_command(adapters.GOOD_ADAPTER)) as victim:
        a = victim.estimate(image)
        b = victim.estimate(image)
    assert np.array_equal(a.values, b.values)


def test_adapter_error_reply_raises(adapter_command):
    with ExternalVictim(adapter_command(adapters.ERROR_REPLY_ADAPTER)) as victim:
        with pytest.raises(VictimError, match="model exploded"):
            victim.estimate(CapturedImage(np.zeros((4, 4, 3))))


def test_garbage_reply_raises(adapter_command):
    with pytest.raises(VictimError, match="unparseable"):
        external_handshake(adapter_command(adapters.GARBAGE_REPLY_ADAPTER))


def test_image_exceeding_declared_limits_rejected_client_side(adapter_command):
    with ExternalVictim(adapter_command(adapters.GOOD_ADAPTER)) as victim:
        victim.start()
        with pytest.raises(VictimError, match="exceeds"):
            victim.estimate(CapturedImage(np.zeros((200, 200, 3))))


def test_conformance_check_passes_for_good_adapter(adapter_command):
    caps = check_protocol_conformance(adapter_command(adapters.GOOD_ADAPTER))
    assert caps["model"] == "test-echo"


def test_conformance_check_fails_for_version2(adapter_command):
    with pytest.raises(VictimError):
        check_protocol_conformance(adapter_command(adapters.VERSION2_ADAPTER))


def test_conformance_check_requires_recovery_after_malformed(adapter_command):
    # an adapter that dies on garbage input must fail conformance
    import textwrap

    fragile = textwrap.dedent(
        """
        import json, sys
        for line in sys.stdin:
            msg = json.loads(line)   # crashes on the malformed line
            if msg.get("cmd") == "hello":
                print(json.dumps({"ok": True, "version": 1, "model": "fragile",
                                  "max_width": 32, "max_height": 32}))
            else:
                w, h = msg["width"], msg["height"]
                print(json.dumps({"ok": True, "width": w, "height": h,
                                  "depth": [1.0] * (w * h)}))
            sys.stdout.flush()
        """
    )
    with pytest.raises(VictimError):
        check_protocol_conformance(adapter_command(fragile))
