import sys

import numpy as np
import pytest

from cccert.classifier import (BridgeClassifier, BuiltinClassifier, Conv2d, Dense,
                               Flatten, MaxPool2d, NetworkDescription, ReLU, Softmax,
                               decode_f32, demo_linear_classifier, encode_f32,
                               load_weights, predict, save_weights, softmax)
from cccert.errors import BridgeError, FormatError
from helpers import FAKE_ADAPTER, naive_forward


def dense_net(k=3, shape=(1, 2, 2)):
    return NetworkDescription(shape, k, (Flatten(), Dense(k), Softmax()))


def zero_dense(k=3, shape=(1, 2, 2)):
    d = int(np.prod(shape))
    return BuiltinClassifier(dense_net(k, shape), {
        "layer1.weight": np.zeros((k, d)), "layer1.bias": np.zeros(k)})


def test_softmax_examples():
    assert softmax([0.0, 0.0, 0.0]) == pytest.approx([1 / 3] * 3)
    out = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(out)) and out[0] == pytest.approx(1.0)
    z = np.array([0.3, -1.2, 4.0])
    assert softmax(z + 17.5) == pytest.approx(softmax(z))
    assert abs(softmax(np.random.default_rng(0).normal(size=9)).sum() - 1) < 1e-7


def test_zero_weights_give_uniform():
    model = zero_dense()
    x = np.random.default_rng(0).random((1, 2, 2))
    assert predict(model, x) == pytest.approx([1 / 3] * 3)


def test_hand_computed_dense_forward():
    w = np.array([[2.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]], dtype=np.float32)
    b = np.array([0.0, 0.5], dtype=np.float32)
    model = BuiltinClassifier(dense_net(2), {"layer1.weight": w, "layer1.bias": b})
    x = np.array([[[1.0, 0.0], [0.0, 0.0]]])
    logits = np.array([2.0, 0.5])
    e = np.exp(logits - logits.max())
    expected = (e / e.sum()).astype(np.float32)
    assert predict(model, x) == pytest.approx(expected, abs=1e-7)
    assert np.argmax(predict(model, x)) == 0  # pixel 0 drives class 0


def test_batch_of_copies_identical():
    model = demo_linear_classifier(4, (1, 3, 3))
    x = np.random.default_rng(1).random((1, 3, 3))
    batch = np.repeat(x[None], 16, axis=0)
    probs = model.predict_batch(batch)
    assert np.all(probs == probs[0])


def test_batch_matches_single_calls():
    rng = np.random.default_rng(2)
    model = _random_network(rng)
    batch = rng.random((8,) + model.input_shape)
    together = model.predict_batch(batch)
    for i in range(len(batch)):
        alone = predict(model, batch[i])
        assert np.allclose(together[i], alone, atol=1e-7)


def test_shape_mismatch_rejected():
    model = zero_dense()
    with pytest.raises(ValueError):
        model.predict_batch(np.zeros((1, 1, 3, 3)))


def _random_network(rng) -> BuiltinClassifier:
    """Random small network with up to 2 conv blocks and a dense head."""
    c_in, h = int(rng.integers(1, 3)), int(rng.integers(5, 8))
    shape = (c_in, h, h)
    layers, weights = [], {}
    cur = shape
    for _ in range(int(rng.integers(0, 3))):
        k = int(rng.choice([2, 3]))
        pad = int(rng.integers(0, 2))
        stride = int(rng.choice([1, 2]))
        if (cur[1] + 2 * pad - k) // stride + 1 < 2:
            break
        out_c = int(rng.integers(1, 4))
        i = len(layers)
        layers.append(Conv2d(out_c, (k, k), stride, pad))
        weights[f"layer{i}.weight"] = rng.normal(size=(out_c, cur[0], k, k))
        weights[f"layer{i}.bias"] = rng.normal(size=out_c) * 0.1
        oh = (cur[1] + 2 * pad - k) // stride + 1
        cur = (out_c, oh, oh)
        layers.append(ReLU())
        if cur[1] >= 3 and rng.random() < 0.5:
            layers.append(MaxPool2d(2, 2))
            cur = (cur[0], (cur[1] - 2) // 2 + 1, (cur[2] - 2) // 2 + 1)
    layers.append(Flatten())
    flat = int(np.prod(cur))
    k_cls = int(rng.integers(2, 5))
    i = len(layers)
    layers.append(Dense(k_cls))
    weights[f"layer{i}.weight"] = rng.normal(size=(k_cls, flat)) * 0.3
    weights[f"layer{i}.bias"] = rng.normal(size=k_cls) * 0.1
    layers.append(Softmax())
    net = NetworkDescription(shape, k_cls, tuple(layers))
    return BuiltinClassifier(net, weights)


def test_builtin_matches_naive_loop_forward():
    rng = np.random.default_rng(11)
    for _ in range(100):
        model = _random_network(rng)
        x = rng.random(model.input_shape)
        fast = predict(model, x)
        slow = naive_forward(model, x)
        assert np.allclose(fast, slow, atol=1e-6)


# --- CCW1 -------------------------------------------------------------------

def test_ccw1_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    model = _random_network(rng)
    path = tmp_path / "model.ccw1"
    save_weights(model, path)
    loaded = load_weights(path)
    xs = rng.random((100,) + model.input_shape)
    assert np.array_equal(model.predict_batch(xs), loaded.predict_batch(xs))


def test_ccw1_bad_magic(tmp_path):
    path = tmp_path / "bad.ccw1"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError, match="magic"):
        load_weights(path)


def test_ccw1_truncated_blob(tmp_path):
    model = zero_dense()
    path = tmp_path / "model.ccw1"
    save_weights(model, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])  # drop one float
    with pytest.raises(FormatError, match="blob length mismatch at layer"):
        load_weights(path)


def test_ccw1_shape_chain_error(tmp_path):
    # header claims 10 classes but the dense layer outputs 8
    with pytest.raises(FormatError, match="layer"):
        NetworkDescription((1, 2, 2), 10, (Flatten(), Dense(8), Softmax()))
    # and a non-softmax tail is rejected
    with pytest.raises(FormatError, match="softmax"):
        NetworkDescription((1, 2, 2), 4, (Flatten(), Dense(4)))


def test_ccw1_header_tensor_mismatch(tmp_path):
    model = zero_dense()
    path = tmp_path / "model.ccw1"
    save_weights(model, path)
    raw = bytearray(path.read_bytes())
    # corrupt the declared dense width inside the JSON header
    idx = raw.find(b'"shape":[3,4]')
    assert idx > 0
    raw[idx:idx + len(b'"shape":[3,4]')] = b'"shape":[3,5]'
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_weights(path)


# --- bridge -----------------------------------------------------------------

@pytest.fixture
def adapter_cmd(tmp_path):
    script = tmp_path / "adapter.py"
    script.write_text(FAKE_ADAPTER)
    return [sys.executable, str(script)]


def test_bridge_handshake_and_predict(adapter_cmd):
    with BridgeClassifier(adapter_cmd) as bridge:
        assert bridge.num_classes == 3
        assert bridge.input_shape == (1, 2, 2)
        x = np.full((2, 1, 2, 2), 0.5, dtype=np.float64)
        probs = bridge.predict_batch(x)
        assert probs.shape == (2, 3)
        raw = np.array([1.0, 1.5, 2.0]) / 4.5
        expected = raw.astype(np.float32)
        assert np.allclose(probs, expected[None, :], atol=1e-7)
        assert np.array_equal(probs[0], probs[1])


def test_bridge_serves_many_requests(adapter_cmd):
    with BridgeClassifier(adapter_cmd) as bridge:
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.random((3, 1, 2, 2))
            probs = bridge.predict_batch(x)
            assert probs.shape == (3, 3)
            assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-5)


def test_bridge_shape_error_propagates(adapter_cmd):
    with BridgeClassifier(adapter_cmd) as bridge:
        with pytest.raises(ValueError):
            bridge.predict_batch(np.zeros((1, 1, 3, 3)))  # engine-side check


def test_bridge_process_failure():
    with pytest.raises(BridgeError):
        BridgeClassifier([sys.executable, "-c", "pass"])  # exits before ready


def test_f32_base64_roundtrip():
    rng = np.random.default_rng(9)
    arr = rng.normal(size=(4, 7)).astype(np.float32)
    back = decode_f32(encode_f32(arr), arr.shape)
    assert np.array_equal(arr, back)
    with pytest.raises(BridgeError):
        decode_f32(encode_f32(arr), (4, 8))
