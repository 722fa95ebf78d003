"""Shared test fixtures: independent oracle implementations and a minimal
fake bridge adapter."""
from __future__ import annotations

import numpy as np

from cccert.classifier import Conv2d, Dense, Flatten, MaxPool2d, ReLU, Softmax


def naive_forward(classifier, image) -> np.ndarray:
    """Loop-based reference for the builtin forward pass.

    Mirrors the quantization contract (float32 after every layer, float64
    accumulation) but implements all the arithmetic with explicit loops.
    """
    x = np.asarray(image, dtype=np.float32).astype(np.float64)
    for li, layer in enumerate(classifier.network.layers):
        if isinstance(layer, Conv2d):
            w = classifier.weights[f"layer{li}.weight"].astype(np.float64)
            b = classifier.weights[f"layer{li}.bias"].astype(np.float64)
            C, H, W = x.shape
            kh, kw = layer.kernel
            s, p = layer.stride, layer.padding
            oh = (H + 2 * p - kh) // s + 1
            ow = (W + 2 * p - kw) // s + 1
            out = np.zeros((layer.out_channels, oh, ow))
            for o in range(layer.out_channels):
                for r in range(oh):
                    for c in range(ow):
                        acc = 0.0
                        for ci in range(C):
                            for dh in range(kh):
                                for dw in range(kw):
                                    rr, cc = r * s + dh - p, c * s + dw - p
                                    if 0 <= rr < H and 0 <= cc < W:
                                        acc += w[o, ci, dh, dw] * x[ci, rr, cc]
                        out[o, r, c] = np.float32(acc + b[o])
            x = out
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
        elif isinstance(layer, MaxPool2d):
            C, H, W = x.shape
            k, s = layer.kernel, layer.stride
            oh, ow = (H - k) // s + 1, (W - k) // s + 1
            out = np.zeros((C, oh, ow))
            for c in range(C):
                for r in range(oh):
                    for cc in range(ow):
                        out[c, r, cc] = np.max(x[c, r * s:r * s + k, cc * s:cc * s + k])
            x = out
        elif isinstance(layer, Flatten):
            x = x.reshape(-1)
        elif isinstance(layer, Dense):
            w = classifier.weights[f"layer{li}.weight"].astype(np.float64)
            b = classifier.weights[f"layer{li}.bias"].astype(np.float64)
            out = np.zeros(layer.out_features)
            for o in range(layer.out_features):
                acc = 0.0
                for j in range(x.size):
                    acc += w[o, j] * x[j]
                out[o] = np.float32(acc + b[o])
            x = out
        elif isinstance(layer, Softmax):
            z = x - np.max(x)
            e = np.exp(z)
            x = (e / e.sum()).astype(np.float32).astype(np.float64)
    return x


def random_prob_vectors(rng: np.random.Generator, count: int, k: int) -> np.ndarray:
    """Dirichlet(1) rows: valid probability vectors of length k."""
    g = rng.gamma(1.0, 1.0, size=(count, k))
    return g / g.sum(axis=1, keepdims=True)


def lemma1_violations(num_pairs: int, seed: int) -> int:
    """Constructive fuzz of the gap criterion.

    Builds q = p + s*u with sum(u) = 0 and s chosen so that q stays a
    valid probability vector while ||p - q||_inf < top2_gap(p) strictly;
    counts argmax disagreements.
    """
    rng = np.random.default_rng(seed)
    sizes = [2, 3, 5, 10, 100]
    per = num_pairs // len(sizes)
    violations = 0
    for k in sizes:
        remaining = per
        while remaining > 0:
            batch = min(remaining, 200_000)
            p = random_prob_vectors(rng, batch, k)
            part = np.partition(p, k - 2, axis=1)
            d = (part[:, -1] - part[:, -2]) / 2.0
            u = rng.normal(size=(batch, k))
            u -= u.mean(axis=1, keepdims=True)
            umax = np.max(np.abs(u), axis=1)
            # stay inside [0,1] componentwise: s <= min over i of the box limit
            with np.errstate(divide="ignore"):
                box_hi = np.where(u > 0, (1.0 - p) / u, np.inf).min(axis=1)
                box_lo = np.where(u < 0, p / (-u), np.inf).min(axis=1)
            s_gap = 0.999 * d / umax
            s = rng.random(batch) * np.minimum(s_gap, 0.999 * np.minimum(box_hi, box_lo))
            q = p + s[:, None] * u
            ok = (np.max(np.abs(p - q), axis=1) < d) & (q.min(axis=1) >= 0) & (q.max(axis=1) <= 1)
            violations += int(np.sum(np.argmax(p[ok], axis=1) != np.argmax(q[ok], axis=1)))
            remaining -= int(ok.sum())
    return violations


FAKE_ADAPTER = r"""
import base64, json, struct, sys

K, SHAPE = 3, [1, 2, 2]

def probs_for(vals):
    # deterministic toy rule: mass proportional to (1, 1+mean, 1+2*mean)
    mean = sum(vals) / len(vals)
    raw = [1.0, 1.0 + mean, 1.0 + 2.0 * mean]
    s = sum(raw)
    return [v / s for v in raw]

for line in sys.stdin:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError:
        sys.stdout.write(json.dumps({"type": "error", "id": 0, "message": "bad json"}) + "\n")
        sys.stdout.flush()
        continue
    if msg.get("type") == "hello":
        reply = {"type": "ready", "num_classes": K, "input_shape": SHAPE}
    elif msg.get("type") == "predict":
        b, c, h, w = msg["shape"]
        if [c, h, w] != SHAPE:
            reply = {"type": "error", "id": msg["id"], "message": "bad shape"}
        else:
            data = base64.b64decode(msg["data"])
            vals = struct.unpack("<%df" % (len(data) // 4), data)
            rows = []
            per = c * h * w
            for i in range(b):
                rows.extend(probs_for(vals[i * per:(i + 1) * per]))
            payload = base64.b64encode(struct.pack("<%df" % len(rows), *rows)).decode()
            reply = {"type": "probs", "id": msg["id"], "shape": [b, K],
                     "dtype": "f32le", "data": payload}
    else:
        reply = {"type": "error", "id": msg.get("id", 0), "message": "unknown type"}
    sys.stdout.write(json.dumps(reply) + "\n")
    sys.stdout.flush()
"""
