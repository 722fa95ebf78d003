"""Black-box classifier backends: a built-in feed-forward engine and a bridge
to external processes speaking newline-delimited JSON.

The built-in engine keeps activations in 32-bit floats and accumulates dot
products in 64 bits, so predictions reproduce across platforms within the
tolerances the rest of the pipeline assumes.  Weights live in the CCW1
single-file format: magic bytes, a length-prefixed JSON header describing
the layer stack and tensor shapes, then raw little-endian float32 blobs.
"""
from __future__ import annotations

import base64
import json
import struct
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .errors import BridgeError, FormatError

CCW1_MAGIC = b"CCW1"


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax (max-subtracted), computed in float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# layer descriptions


@dataclass(frozen=True)
class Conv2d:
    out_channels: int
    kernel: tuple[int, int]
    stride: int = 1
    padding: int = 0
    type = "conv2d"


@dataclass(frozen=True)
class ReLU:
    type = "relu"


@dataclass(frozen=True)
class MaxPool2d:
    kernel: int
    stride: int
    type = "maxpool2d"


@dataclass(frozen=True)
class Flatten:
    type = "flatten"


@dataclass(frozen=True)
class Dense:
    out_features: int
    type = "dense"


@dataclass(frozen=True)
class Softmax:
    type = "softmax"


Layer = Conv2d | ReLU | MaxPool2d | Flatten | Dense | Softmax


def _layer_to_dict(layer: Layer) -> dict:
    if isinstance(layer, Conv2d):
        return {"type": "conv2d", "out_channels": layer.out_channels,
                "kernel": list(layer.kernel), "stride": layer.stride,
                "padding": layer.padding}
    if isinstance(layer, MaxPool2d):
        return {"type": "maxpool2d", "kernel": layer.kernel, "stride": layer.stride}
    if isinstance(layer, Dense):
        return {"type": "dense", "out_features": layer.out_features}
    return {"type": layer.type}


def _layer_from_dict(d: dict, index: int) -> Layer:
    t = d.get("type")
    try:
        if t == "conv2d":
            return Conv2d(d["out_channels"], tuple(d["kernel"]), d["stride"], d["padding"])
        if t == "relu":
            return ReLU()
        if t == "maxpool2d":
            return MaxPool2d(d["kernel"], d["stride"])
        if t == "flatten":
            return Flatten()
        if t == "dense":
            return Dense(d["out_features"])
        if t == "softmax":
            return Softmax()
    except KeyError as e:
        raise FormatError(f"layer {index}: missing field {e}") from None
    raise FormatError(f"layer {index}: unknown type {t!r}")


@dataclass(frozen=True)
class NetworkDescription:
    """Ordered layer stack; shapes must chain from input_shape to (num_classes,)."""

    input_shape: tuple[int, int, int]
    num_classes: int
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        self.validate()

    def validate(self) -> None:
        if not self.layers:
            raise FormatError("network needs at least one layer")
        shape = self.shape_chain()[-1]
        if not isinstance(self.layers[-1], Softmax):
            raise FormatError(f"layer {len(self.layers) - 1}: final layer must be softmax")
        if shape != (self.num_classes,):
            raise FormatError(
                f"layer {len(self.layers) - 1}: network outputs shape {shape}, "
                f"declared num_classes is {self.num_classes}")

    def shape_chain(self) -> list[tuple]:
        """Shapes after each layer, starting from input_shape; raises FormatError
        naming the first inconsistent layer."""
        chain = [self.input_shape]
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv2d):
                if len(shape) != 3:
                    raise FormatError(f"layer {i}: conv2d needs a (C,H,W) input, got {shape}")
                c, h, w = shape
                kh, kw = layer.kernel
                oh = (h + 2 * layer.padding - kh) // layer.stride + 1
                ow = (w + 2 * layer.padding - kw) // layer.stride + 1
                if oh < 1 or ow < 1:
                    raise FormatError(f"layer {i}: conv2d kernel {layer.kernel} too large for {shape}")
                shape = (layer.out_channels, oh, ow)
            elif isinstance(layer, MaxPool2d):
                if len(shape) != 3:
                    raise FormatError(f"layer {i}: maxpool2d needs a (C,H,W) input, got {shape}")
                c, h, w = shape
                oh = (h - layer.kernel) // layer.stride + 1
                ow = (w - layer.kernel) // layer.stride + 1
                if oh < 1 or ow < 1:
                    raise FormatError(f"layer {i}: maxpool2d kernel {layer.kernel} too large for {shape}")
                shape = (c, oh, ow)
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Dense):
                if len(shape) != 1:
                    raise FormatError(f"layer {i}: dense needs a flat input, got {shape}")
                shape = (layer.out_features,)
            chain.append(shape)
        return chain

    def tensor_specs(self) -> list[tuple[str, tuple]]:
        """(name, shape) of every parameter tensor, in blob order."""
        specs = []
        chain = self.shape_chain()
        for i, layer in enumerate(self.layers):
            shape = chain[i]
            if isinstance(layer, Conv2d):
                specs.append((f"layer{i}.weight", (layer.out_channels, shape[0]) + layer.kernel))
                specs.append((f"layer{i}.bias", (layer.out_channels,)))
            elif isinstance(layer, Dense):
                specs.append((f"layer{i}.weight", (layer.out_features, shape[0])))
                specs.append((f"layer{i}.bias", (layer.out_features,)))
        return specs


class BuiltinClassifier:
    """Feed-forward inference over a NetworkDescription with loaded weights.

    Read-only after construction; predict_batch may be called concurrently.
    """

    def __init__(self, network: NetworkDescription, weights: dict[str, np.ndarray]):
        self.network = network
        expected = dict(network.tensor_specs())
        if set(weights) != set(expected):
            missing = sorted(set(expected) - set(weights))
            extra = sorted(set(weights) - set(expected))
            raise FormatError(f"weight tensors mismatch: missing {missing}, unexpected {extra}")
        self.weights = {}
        for name, shape in expected.items():
            w = np.asarray(weights[name], dtype=np.float32)
            if w.shape != shape:
                raise FormatError(f"tensor {name}: shape {w.shape} != declared {shape}")
            self.weights[name] = w

    @property
    def num_classes(self) -> int:
        return self.network.num_classes

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return self.network.input_shape

    def predict_batch(self, images) -> np.ndarray:
        """(B, C, H, W) images in [0,1] -> (B, K) probability rows.

        Output probabilities are quantized to float32 so that builtin and
        bridge backends agree bit-for-bit on the wire representation.
        """
        x = np.asarray(images, dtype=np.float32)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != declared {self.input_shape}")
        for i, layer in enumerate(self.network.layers):
            if isinstance(layer, Conv2d):
                x = self._conv2d(x, i, layer)
            elif isinstance(layer, ReLU):
                x = np.maximum(x, np.float32(0.0))
            elif isinstance(layer, MaxPool2d):
                x = self._maxpool(x, layer)
            elif isinstance(layer, Flatten):
                x = x.reshape(x.shape[0], -1)
            elif isinstance(layer, Dense):
                w = self.weights[f"layer{i}.weight"].astype(np.float64)
                b = self.weights[f"layer{i}.bias"].astype(np.float64)
                x = (x.astype(np.float64) @ w.T + b).astype(np.float32)
            elif isinstance(layer, Softmax):
                x = softmax(x.astype(np.float64)).astype(np.float32)
        return x.astype(np.float64)

    def _conv2d(self, x: np.ndarray, index: int, layer: Conv2d) -> np.ndarray:
        w = self.weights[f"layer{index}.weight"].astype(np.float64)
        b = self.weights[f"layer{index}.bias"].astype(np.float64)
        B, C, H, W = x.shape
        kh, kw = layer.kernel
        s, p = layer.stride, layer.padding
        oh = (H + 2 * p - kh) // s + 1
        ow = (W + 2 * p - kw) // s + 1
        padded = np.zeros((B, C, H + 2 * p, W + 2 * p), dtype=np.float64)
        padded[:, :, p:p + H, p:p + W] = x
        acc = np.zeros((B, layer.out_channels, oh, ow), dtype=np.float64)
        for dh in range(kh):
            for dw in range(kw):
                window = padded[:, :, dh:dh + s * oh:s, dw:dw + s * ow:s]
                acc += np.einsum("oc,bchw->bohw", w[:, :, dh, dw], window)
        return (acc + b[None, :, None, None]).astype(np.float32)

    @staticmethod
    def _maxpool(x: np.ndarray, layer: MaxPool2d) -> np.ndarray:
        B, C, H, W = x.shape
        k, s = layer.kernel, layer.stride
        oh = (H - k) // s + 1
        ow = (W - k) // s + 1
        out = np.full((B, C, oh, ow), -np.inf, dtype=x.dtype)
        for dh in range(k):
            for dw in range(k):
                np.maximum(out, x[:, :, dh:dh + s * oh:s, dw:dw + s * ow:s], out=out)
        return out


# ---------------------------------------------------------------------------
# CCW1 weight files


def save_weights(classifier: BuiltinClassifier, path) -> None:
    net = classifier.network
    header = {
        "version": 1,
        "input_shape": list(net.input_shape),
        "num_classes": net.num_classes,
        "layers": [_layer_to_dict(l) for l in net.layers],
        "tensors": [{"name": n, "shape": list(s)} for n, s in net.tensor_specs()],
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CCW1_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, _ in net.tensor_specs():
            f.write(classifier.weights[name].astype("<f4").tobytes())


def load_weights(path) -> BuiltinClassifier:
    """Read a CCW1 file; raises FormatError naming the offending layer/tensor."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CCW1_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {CCW1_MAGIC!r}")
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise FormatError(f"{path}: truncated header (declared {hlen} bytes)")
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: unreadable header: {e}") from None

    layers = tuple(_layer_from_dict(d, i) for i, d in enumerate(header.get("layers", [])))
    net = NetworkDescription(tuple(header["input_shape"]), header["num_classes"], layers)

    declared = [(t["name"], tuple(t["shape"])) for t in header.get("tensors", [])]
    expected = net.tensor_specs()
    if declared != expected:
        raise FormatError(f"{path}: header tensor list {declared} does not match layers {expected}")

    weights = {}
    offset = 8 + hlen
    for name, shape in expected:
        count = int(np.prod(shape))
        nbytes = 4 * count
        if offset + nbytes > len(raw):
            layer = name.split(".")[0]
            raise FormatError(
                f"{path}: blob length mismatch at {layer} ({name}): "
                f"need {nbytes} bytes, {len(raw) - offset} remain")
        weights[name] = np.frombuffer(raw[offset:offset + nbytes], dtype="<f4").reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after last tensor")
    return BuiltinClassifier(net, weights)


# ---------------------------------------------------------------------------
# bridge protocol (engine side)

PROTOCOL_VERSION = 1


def encode_f32(array: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(array, dtype="<f4").tobytes()).decode("ascii")


def decode_f32(data: str, shape) -> np.ndarray:
    buf = base64.b64decode(data.encode("ascii"))
    expected = 4 * int(np.prod(shape))
    if len(buf) != expected:
        raise BridgeError(f"payload is {len(buf)} bytes, shape {list(shape)} needs {expected}")
    return np.frombuffer(buf, dtype="<f4").reshape(shape)


class BridgeClassifier:
    """Engine side of the wire protocol: spawns an adapter subprocess and
    exchanges newline-delimited JSON over its standard streams.

    Requests are serialized over the single connection; a lock makes the
    handle safe to share, though calls never run concurrently.
    """

    def __init__(self, command: list[str]):
        self.command = list(command)
        try:
            self.proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as e:
            raise BridgeError(f"cannot launch adapter {self.command}: {e}") from None
        self._lock = threading.Lock()
        self._next_id = 0
        ready = self._roundtrip({"type": "hello", "version": PROTOCOL_VERSION})
        if ready.get("type") != "ready":
            raise BridgeError(f"expected ready message, got {ready!r}")
        try:
            self.num_classes = int(ready["num_classes"])
            self.input_shape = tuple(int(v) for v in ready["input_shape"])
        except (KeyError, TypeError, ValueError) as e:
            raise BridgeError(f"malformed ready message {ready!r}: {e}") from None

    def _roundtrip(self, message: dict) -> dict:
        try:
            self.proc.stdin.write(json.dumps(message, separators=(",", ":")) + "\n")
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as e:
            raise BridgeError(f"adapter i/o failed: {e}") from None
        if not line:
            raise BridgeError("adapter closed its output stream")
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            raise BridgeError(f"adapter sent non-JSON line: {line!r}") from None

    def predict_batch(self, images) -> np.ndarray:
        x = np.asarray(images, dtype=np.float32)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != declared {self.input_shape}")
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            reply = self._roundtrip({
                "type": "predict", "id": req_id,
                "shape": list(x.shape), "dtype": "f32le",
                "data": encode_f32(x),
            })
        if reply.get("type") == "error":
            raise BridgeError(f"adapter error for request {req_id}: {reply.get('message')}")
        if reply.get("type") != "probs":
            raise BridgeError(f"unexpected reply {reply!r}")
        if reply.get("id") != req_id:
            raise BridgeError(f"reply id {reply.get('id')} != request id {req_id}")
        shape = reply.get("shape")
        if shape != [x.shape[0], self.num_classes]:
            raise BridgeError(f"reply shape {shape}, expected {[x.shape[0], self.num_classes]}")
        return decode_f32(reply["data"], shape).astype(np.float64)

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


ClassifierHandle = BuiltinClassifier | BridgeClassifier


def predict(handle: ClassifierHandle, image) -> np.ndarray:
    """Single-image convenience wrapper around predict_batch."""
    return handle.predict_batch(np.asarray(image)[None])[0]


def demo_linear_weights(num_classes: int, input_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed formula-defined linear-softmax weights.

    w[k, j] = f32(0.5 sin(1 + k*input_dim + j)), b[k] = f32(0.1 cos(1 + k)).
    Any runtime with IEEE sin/cos and round-to-float32 reproduces these
    bit-for-bit, which is what the bridge equivalence check relies on.
    """
    k = np.arange(num_classes, dtype=np.float64)[:, None]
    j = np.arange(input_dim, dtype=np.float64)[None, :]
    w = (0.5 * np.sin(1.0 + k * input_dim + j)).astype(np.float32)
    b = (0.1 * np.cos(1.0 + np.arange(num_classes, dtype=np.float64))).astype(np.float32)
    return w, b


def demo_linear_classifier(num_classes: int, input_shape: tuple[int, int, int]) -> BuiltinClassifier:
    """Builtin twin of the bridge adapter's demo model."""
    c, h, w_ = input_shape
    w, b = demo_linear_weights(num_classes, c * h * w_)
    net = NetworkDescription(input_shape=tuple(input_shape), num_classes=num_classes,
                             layers=(Flatten(), Dense(num_classes), Softmax()))
    return BuiltinClassifier(net, {"layer1.weight": w, "layer1.bias": b})
