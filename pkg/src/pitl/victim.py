"""Victim depth estimators: the black box h the attack queries.

Built-in victims are analytic stand-ins that make desk-scale verification
possible: `constant` (objective floor tests), `brightness_biased` (an
estimator whose globally optimal attack is known in closed form) and
`patch_linear` (a harder non-monotone box). Real networks attach as
separate processes through a newline-delimited JSON protocol over
stdin/stdout (version 1):

    -> {"cmd": "hello", "version": 1}
    <- {"ok": true, "version": 1, "model": "<name>", "max_width": W, "max_height": H}
    -> {"cmd": "estimate", "width": W, "height": H, "pixels": [r, g, b, ...]}
    <- {"ok": true, "width": W, "height": H, "depth": [d, ...]}
    <- {"ok": false, "error": "<message>"} on failure

Pixel and depth arrays are row-major, top row first. One JSON document per
line, no binary framing.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .scene import CapturedImage, DepthMap, SceneModel

__all__ = [
    "VictimError",
    "ProtocolError",
    "VictimDescriptor",
    "ConstantVictim",
    "BrightnessBiasedVictim",
    "PatchLinearVictim",
    "ExternalVictim",
    "estimate_depth",
    "external_handshake",
    "build_victim",
    "check_protocol_conformance",
    "LUMA_COEFFS",
]

PROTOCOL_VERSION = 1

# Rec. 709 luma weights
LUMA_COEFFS = np.array([0.2126, 0.7152, 0.0722])


class VictimError(RuntimeError):
    """External victim crashed, timed out, or violated the protocol."""


class ProtocolError(VictimError):
    """The adapter speaks an unsupported protocol version."""


@dataclass
class VictimDescriptor:
    """Declarative victim selection, as it appears in run configs.

    kind: constant | brightness_biased | patch_linear | external.
    `params` holds kind-specific settings; external victims carry the
    adapter command line and request timeout instead.
    """

    kind: str
    params: dict = field(default_factory=dict)
    command: Optional[Sequence[str]] = None
    timeout: float = 60.0

    KINDS = ("constant", "brightness_biased", "patch_linear", "external")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown victim kind {self.kind!r}, expected one of {self.KINDS}")
        if self.kind == "external" and not self.command:
            raise ValueError("external victim requires a command line")

    def to_dict(self) -> dict:
        """JSON-safe form (array parameters are replaced by content hashes)."""
        import hashlib

        def safe(value):
            if isinstance(value, np.ndarray):
                return {
                    "sha256": hashlib.sha256(np.ascontiguousarray(value).tobytes()).hexdigest(),
                    "shape": list(value.shape),
                }
            return value

        return {
            "kind": self.kind,
            "params": {k: safe(self.params[k]) for k in sorted(self.params)},
            "command": list(self.command) if self.command else None,
            "timeout": self.timeout,
        }


def estimate_depth(victim, image: CapturedImage) -> DepthMap:
    """Apply a victim to a captured image; output shape equals input shape."""
    depth = victim.estimate(image)
    if depth.values.shape != image.pixels.shape[:2]:
        raise VictimError(
            f"victim returned shape {depth.values.shape}, expected {image.pixels.shape[:2]}"
        )
    return depth


class ConstantVictim:
    """Ignores the image entirely; every pixel reads `value`."""

    concurrent_safe = True

    def __init__(self, value: float):
        if not (value >= 0):
            raise ValueError("depth value must be >= 0")
        self.value = float(value)

    def estimate(self, image: CapturedImage) -> DepthMap:
        h, w = image.pixels.shape[:2]
        return DepthMap(np.full((h, w), self.value))


class BrightnessBiasedVictim:
    """Analytic victim that drifts toward background as pixels brighten.

    Inside the object mask:
        depth(p) = d_obj(p) + gain * (d_back(p) - d_obj(p)) * clamp(L(p), 0, 1)
    outside: depth(p) = d_back(p), where L is Rec. 709 luminance. With
    gain = 1 the optimal attack is maximal brightness everywhere, which
    gives end-to-end tests a closed-form optimum.
    """

    concurrent_safe = True

    def __init__(self, depth_obj: np.ndarray, depth_back: np.ndarray, mask: np.ndarray, gain: float = 1.0):
        self.depth_obj = np.asarray(depth_obj, dtype=np.float64)
        self.depth_back = np.asarray(depth_back, dtype=np.float64)
        self.mask = np.asarray(mask, dtype=bool)
        if not (self.depth_obj.shape == self.depth_back.shape == self.mask.shape):
            raise ValueError("depth maps and mask must share one shape")
        self.gain = float(gain)

    def estimate(self, image: CapturedImage) -> DepthMap:
        if image.pixels.shape[:2] != self.mask.shape:
            raise ValueError(f"image shape {image.pixels.shape[:2]} != victim maps {self.mask.shape}")
        lum = np.clip(image.pixels @ LUMA_COEFFS, 0.0, 1.0)
        biased = self.depth_obj + self.gain * (self.depth_back - self.depth_obj) * lum
        depth = np.where(self.mask, biased, self.depth_back)
        return DepthMap(np.maximum(depth, 0.0))


class PatchLinearVictim:
    """Non-monotone black box: depth = d_back + mask * relu(w . patch + b).

    `weights` is a (5, 5, 3) stencil applied to the edge-padded image around
    each pixel. Weights are part of the scene bundle so runs reproduce.
    """

    concurrent_safe = True
    PATCH = 5

    def __init__(self, depth_back: np.ndarray, mask: np.ndarray, weights: np.ndarray, bias: float):
        self.depth_back = np.asarray(depth_back, dtype=np.float64)
        self.mask = np.asarray(mask, dtype=bool)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (self.PATCH, self.PATCH, 3):
            raise ValueError(f"weights must be (5, 5, 3), got {self.weights.shape}")
        if self.depth_back.shape != self.mask.shape:
            raise ValueError("depth_back and mask must share one shape")
        self.bias = float(bias)

    @classmethod
    def from_seed(cls, depth_back, mask, seed: int, scale: float = 1.0) -> "PatchLinearVictim":
        rng = np.random.Generator(np.random.PCG64(seed))
        weights = rng.normal(0.0, scale / cls.PATCH, (cls.PATCH, cls.PATCH, 3))
        bias = float(rng.normal(0.0, scale / 4.0))
        return cls(depth_back, mask, weights, bias)

    def estimate(self, image: CapturedImage) -> DepthMap:
        if image.pixels.shape[:2] != self.mask.shape:
            raise ValueError(f"image shape {image.pixels.shape[:2]} != victim maps {self.mask.shape}")
        pad = self.PATCH // 2
        padded = np.pad(image.pixels, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
        windows = np.lib.stride_tricks.sliding_window_view(padded, (self.PATCH, self.PATCH), axis=(0, 1))
        # windows: (H, W, 3, 5, 5); weights: (5, 5, 3)
        response = np.einsum("hwcij,ijc->hw", windows, self.weights) + self.bias
        bump = np.where(self.mask, np.maximum(response, 0.0), 0.0)
        return DepthMap(np.maximum(self.depth_back + bump, 0.0))


class _LineReader:
    """Background reader turning a pipe into a timeout-capable line queue."""

    _EOF = object()

    def __init__(self, stream):
        self._queue: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream):
        try:
            for line in stream:
                self._queue.put(line)
        except ValueError:  # stream closed underneath us
            pass
        self._queue.put(self._EOF)

    def readline(self, timeout: float):
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError from None
        if item is self._EOF:
            raise EOFError
        return item


class _StderrTail:
    """Keeps the last few stderr lines of the child for diagnostics."""

    def __init__(self, stream, keep: int = 40):
        self._lines: deque = deque(maxlen=keep)
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream):
        try:
            for line in stream:
                self._lines.append(line.rstrip("\n"))
        except ValueError:
            pass

    def tail(self) -> str:
        return "\n".join(self._lines)


class ExternalVictim:
    """Client for an adapter process speaking the version-1 JSON-lines protocol.

    One request in flight per connection; concurrent use needs one
    ExternalVictim per worker. The child is spawned lazily on first use.
    """

    concurrent_safe = False

    def __init__(self, command: Union[str, Sequence[str]], timeout: float = 60.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = float(timeout)
        self.capabilities: Optional[dict] = None
        self._proc: Optional[subprocess.Popen] = None
        self._reader: Optional[_LineReader] = None
        self._stderr: Optional[_StderrTail] = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> dict:
        """Spawn the adapter and perform the hello handshake."""
        if self._proc is not None:
            return self.capabilities
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise VictimError(f"cannot spawn victim adapter {self.command!r}: {exc}") from exc
        self._reader = _LineReader(self._proc.stdout)
        self._stderr = _StderrTail(self._proc.stderr)
        reply = self._request({"cmd": "hello", "version": PROTOCOL_VERSION})
        version = reply.get("version")
        if version != PROTOCOL_VERSION:
            self.close()
            raise ProtocolError(f"adapter speaks protocol version {version!r}, need {PROTOCOL_VERSION}")
        for key in ("model", "max_width", "max_height"):
            if key not in reply:
                self.close()
                raise VictimError(f"hello reply missing {key!r}: {reply}")
        self.capabilities = {k: v for k, v in reply.items() if k != "ok"}
        return self.capabilities

    def close(self) -> None:
        proc, self._proc = self._proc, None
        self._reader = None
        self._stderr = None
        self.capabilities = None
        if proc is None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self) -> "ExternalVictim":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- protocol ----------------------------------------------------------

    def _fail(self, message: str) -> VictimError:
        tail = self._stderr.tail() if self._stderr else ""
        detail = f"{message} (command: {self.command!r})"
        if tail:
            detail += f"\n--- adapter stderr ---\n{tail}"
        self.close()
        return VictimError(detail)

    def _request(self, payload: dict) -> dict:
        if self._proc is None:
            raise VictimError("adapter not started")
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise self._fail(f"adapter pipe closed while sending: {exc}")
        try:
            line = self._reader.readline(self.timeout)
        except TimeoutError:
            raise self._fail(f"no reply within {self.timeout:.1f}s")
        except EOFError:
            raise self._fail("adapter exited before replying")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise self._fail(f"unparseable reply {line!r}: {exc}")
        if not isinstance(reply, dict):
            raise self._fail(f"reply is not an object: {reply!r}")
        if not reply.get("ok", False):
            raise self._fail(f"adapter error: {reply.get('error', 'unspecified')}")
        return reply

    def estimate(self, image: CapturedImage) -> DepthMap:
        if self._proc is None:
            self.start()
        h, w = image.pixels.shape[:2]
        caps = self.capabilities
        if caps and (w > caps["max_width"] or h > caps["max_height"]):
            raise VictimError(
                f"image {w}x{h} exceeds adapter limits "
                f"{caps['max_width']}x{caps['max_height']}"
            )
        reply = self._request(
            {
                "cmd": "estimate",
                "width": w,
                "height": h,
                "pixels": image.pixels.reshape(-1).tolist(),
            }
        )
        if reply.get("width") != w or reply.get("height") != h:
            raise self._fail(f"reply dimensions {reply.get('width')}x{reply.get('height')} != {w}x{h}")
        depth = np.asarray(reply.get("depth", ()), dtype=np.float64)
        if depth.size != w * h:
            raise self._fail(f"reply has {depth.size} depth values, expected {w * h}")
        if not np.all(np.isfinite(depth)) or np.any(depth < 0):
            raise self._fail("reply contains non-finite or negative depth values")
        return DepthMap(depth.reshape(h, w))


def external_handshake(command: Union[str, Sequence[str]], timeout: float = 60.0) -> dict:
    """Spawn an adapter, perform the hello exchange, and return its capabilities."""
    victim = ExternalVictim(command, timeout=timeout)
    try:
        return victim.start()
    finally:
        victim.close()


def build_victim(descriptor: VictimDescriptor, scene: Optional[SceneModel] = None):
    """Instantiate a victim from its descriptor.

    The analytic victims take their maps from the scene bundle: the
    brightness-biased victim sees the object exactly where the scene does,
    and the patch victim perturbs the background depth.
    """
    kind, params = descriptor.kind, descriptor.params
    if kind == "constant":
        return ConstantVictim(params.get("value", 1.0))
    if kind == "external":
        return ExternalVictim(descriptor.command, timeout=descriptor.timeout)
    if scene is None:
        raise ValueError(f"{kind} victim needs a scene")
    mask = params.get("mask")
    if mask is None:
        # default object mask: wherever the object changes the depth field
        mask = scene.depth_orig.values != scene.depth_back.values
    else:
        mask = np.asarray(mask, dtype=bool)
    if kind == "brightness_biased":
        return BrightnessBiasedVictim(
            depth_obj=scene.depth_orig.values,
            depth_back=scene.depth_back.values,
            mask=mask,
            gain=params.get("gain", 1.0),
        )
    if kind == "patch_linear":
        if "weights" in params:
            return PatchLinearVictim(
                depth_back=scene.depth_back.values,
                mask=mask,
                weights=np.asarray(params["weights"], dtype=np.float64).reshape(5, 5, 3),
                bias=params["bias"],
            )
        return PatchLinearVictim.from_seed(
            scene.depth_back.values, mask, seed=params.get("seed", 0)
        )
    raise ValueError(f"unknown victim kind {kind!r}")


def check_protocol_conformance(
    command: Union[str, Sequence[str]],
    timeout: float = 60.0,
    rng_seed: int = 0,
) -> dict:
    """Drive an adapter through the conformance sequence; raise on any violation.

    Sequence: hello handshake, three estimates on random images, one
    malformed request line (must answer ok=false and keep serving), then a
    final estimate proving recovery. Returns the adapter capabilities.
    """
    command = shlex.split(command) if isinstance(command, str) else list(command)
    proc = subprocess.Popen(
        command,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        bufsize=1,
    )
    reader = _LineReader(proc.stdout)
    _StderrTail(proc.stderr)

    def ask_raw(line: str) -> dict:
        proc.stdin.write(line + "\n")
        proc.stdin.flush()
        try:
            return json.loads(reader.readline(timeout))
        except TimeoutError:
            raise VictimError(f"conformance: no reply within {timeout:.1f}s") from None
        except EOFError:
            raise VictimError("conformance: adapter exited mid-sequence") from None

    try:
        hello = ask_raw(json.dumps({"cmd": "hello", "version": PROTOCOL_VERSION}))
        if not hello.get("ok") or hello.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"conformance: bad hello reply {hello}")
        w = int(min(hello["max_width"], 48))
        h = int(min(hello["max_height"], 48))
        rng = np.random.Generator(np.random.PCG64(rng_seed))

        def one_estimate() -> None:
            pixels = rng.uniform(0.0, 1.0, (h, w, 3))
            reply = ask_raw(
                json.dumps(
                    {"cmd": "estimate", "width": w, "height": h, "pixels": pixels.reshape(-1).tolist()}
                )
            )
            if not reply.get("ok"):
                raise VictimError(f"conformance: estimate failed: {reply}")
            depth = np.asarray(reply["depth"], dtype=np.float64)
            if reply.get("width") != w or reply.get("height") != h or depth.size != w * h:
                raise VictimError("conformance: estimate reply has wrong shape")
            if not np.all(np.isfinite(depth)) or np.any(depth < 0):
                raise VictimError("conformance: depth values must be finite and >= 0")

        for _ in range(3):
            one_estimate()

        bad = ask_raw('{"cmd": "estimate", truncated garbage')
        if bad.get("ok", True) is not False:
            raise VictimError(f"conformance: malformed request must yield ok=false, got {bad}")

        one_estimate()  # adapter must keep serving after the bad line
        return {k: v for k, v in hello.items() if k != "ok"}
    finally:
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
