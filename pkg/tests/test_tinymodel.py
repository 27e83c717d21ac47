import json
import zlib

import numpy as np
import pytest

from approxai.errors import (NonFiniteWeightsError, ParseError, SchemaVersionError,
                             ShapeMismatchError)
from approxai.tinymodel import (TinyModel, dense, flatten, forward, forward_batch, input_gradient,
                                load_model, model_digest, model_from_dict, model_to_dict,
                                pre_activations, random_mlp, save_model)
from oracles import central_difference


def test_forward_small_examples():
    m = TinyModel((dense([[1.0, 2.0], [-1.0, 0.5]], [0.0, 1.0], "relu"),), (2,))
    assert forward(m, [1.0, 1.0]).tolist() == [3.0, 0.5]
    assert forward(m, [-1.0, -1.0]).tolist() == [0.0, 1.5]
    t = TinyModel((dense([[1.0]], [0.0], "tanh"),), (1,))
    assert forward(t, [0.5])[0] == pytest.approx(np.tanh(0.5))


def test_softmax_output_sums_to_one():
    m = random_mlp([3, 5, 4], np.random.default_rng(0), final="softmax")
    p = forward(m, [0.2, -0.4, 1.0])
    assert p.sum() == pytest.approx(1.0) and np.all(p > 0)
    g = input_gradient(m, [0.2, -0.4, 1.0], 2)
    fd = central_difference(lambda z: forward(m, z)[2], np.array([0.2, -0.4, 1.0]))
    assert np.allclose(g, fd, atol=1e-7)


def test_fixture_goldens(case, golden):
    name, m, x = case
    assert model_digest(m) == golden[name]["digest"]
    assert np.allclose(forward(m, x), golden[name]["forward"], rtol=0, atol=1e-12)


def _away_from_kinks(m, x, margin=1e-3):
    zs = pre_activations(m, x)
    return all(np.min(np.abs(z)) > margin for z, layer in zip(zs, m.layers)
               if layer.activation == "relu")


def test_gradients_match_finite_differences(case):
    name, m, x = case
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    checked = 0
    while checked < 20:
        p = rng.uniform(-1.0, 1.0, x.shape)
        if not _away_from_kinks(m, p):
            continue  # resample: central differences straddle a relu kink
        for c in range(m.output_dim):
            fd = central_difference(lambda z: forward(m, z)[c], p)
            assert np.allclose(input_gradient(m, p, c), fd.reshape(-1), rtol=1e-5, atol=1e-8)
        checked += 1


def test_forward_batch_matches_rows(case):
    _, m, x = case
    xs = np.stack([x, 0.5 * x, -x])
    out = forward_batch(m, xs)
    assert np.array_equal(out, np.stack([forward(m, r) for r in xs]))


def test_roundtrip(case, tmp_path):
    _, m, x = case
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back == m and model_digest(back) == model_digest(m)
    assert np.array_equal(forward(back, x), forward(m, x))


def test_digest_changes_with_weights(case):
    _, m, _ = case
    d = model_to_dict(m)
    layer = next(lay for lay in d["layers"] if "bias" in lay)
    layer["bias"][0] += 1e-9
    assert model_digest(model_from_dict(d)) != model_digest(m)


def _mlp_dict():
    return model_to_dict(random_mlp([2, 3, 1], np.random.default_rng(0)))


def test_rejects_stride_and_padding():
    d = {"schema_version": 1, "input_shape": [1, 4, 4],
         "layers": [{"kind": "conv2d", "weights": np.zeros((1, 1, 3, 3)).tolist(), "bias": [0.0],
                     "stride": 2}]}
    with pytest.raises(ParseError, match="stride"):
        model_from_dict(d)
    d["layers"][0]["stride"] = 1
    d["layers"][0]["padding"] = "valid"
    with pytest.raises(ParseError, match="padding"):
        model_from_dict(d)


@pytest.mark.parametrize("mutate, err", [
    (lambda d: d.pop("schema_version"), SchemaVersionError),
    (lambda d: d.update(schema_version=2), SchemaVersionError),
    (lambda d: d.update(input_shape=[0]), ParseError),
    (lambda d: d["layers"][0].update(kind="lstm"), ParseError),
    (lambda d: d["layers"][0].update(activation="gelu"), ParseError),
    (lambda d: d["layers"][0].pop("bias"), ParseError),
    (lambda d: d["layers"][0].update(weights=[[1.0, 2.0]]), ParseError),
    (lambda d: d["layers"][0].update(weights="abc"), ParseError),
])
def test_bad_model_dicts(mutate, err):
    d = _mlp_dict()
    mutate(d)
    with pytest.raises(err):
        model_from_dict(d)


def test_non_finite_weights():
    d = _mlp_dict()
    d["layers"][0]["bias"][0] = float("nan")
    with pytest.raises(NonFiniteWeightsError):
        model_from_dict(d)


def test_parse_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "schema_version": 1,\n  "layers": [,]\n}\n')
    with pytest.raises(ParseError, match=r"bad\.json:3:"):
        load_model(p)
    with pytest.raises(ParseError):
        load_model(tmp_path / "missing.json")


def test_input_checks():
    m = random_mlp([2, 3, 1], np.random.default_rng(0))
    with pytest.raises(ShapeMismatchError):
        forward(m, [1.0, 2.0, 3.0])
    with pytest.raises(ShapeMismatchError):
        forward(m, [1.0, np.inf])
    with pytest.raises(ShapeMismatchError):
        input_gradient(m, [1.0, 2.0], 1)


def test_flatten_only_model_is_identity():
    m = TinyModel((flatten(),), (2, 2))
    x = np.arange(4.0).reshape(2, 2)
    assert forward(m, x).tolist() == [0.0, 1.0, 2.0, 3.0]
    assert json.loads(json.dumps(model_to_dict(m)))["layers"][0]["kind"] == "flatten"
