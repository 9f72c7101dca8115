import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from idmne import autodiff as ad
from idmne.autodiff import Tensor
from idmne.errors import CheckpointError, ConfigError, DegenerateInputError, DimensionError
from idmne.model import (
    ModelParams,
    ModelSpec,
    classify,
    config_hash,
    extract,
    init_params,
    load_checkpoint,
    predict,
    predict_proba,
    save_checkpoint,
)


def identity_params(protos, temperature=1.0):
    return ModelParams([], Tensor(np.asarray(protos, dtype=float), True), temperature)


def test_predict_matches_hand_computation():
    # identity extractor, prototypes e1, e2; f = (3, 4) -> cosines (0.6, 0.8)
    params = identity_params(np.eye(2), temperature=0.5)
    pred = predict([3.0, 4.0], params)
    z = np.array([0.6, 0.8]) / 0.5
    expect = np.exp(z) / np.exp(z).sum()
    np.testing.assert_allclose(pred.probs, expect, rtol=1e-14)
    assert pred.argmax_class == 1 and pred.confidence == pytest.approx(expect[1])


def test_prediction_is_scale_invariant_in_features():
    params = identity_params(np.array([[1.0, 0.0, -1.0], [0.0, 1.0, 1.0]]))
    a = predict_proba([[1.0, 2.0]], params).data
    b = predict_proba([[10.0, 20.0]], params).data
    np.testing.assert_allclose(a, b, rtol=1e-14)


def test_tie_resolves_to_lowest_index():
    params = identity_params(np.array([[1.0, 1.0], [0.0, 0.0]]))
    assert predict([2.0, 1.0], params).argmax_class == 0


def test_zero_feature_is_degenerate():
    params = identity_params(np.eye(2))
    with pytest.raises(DegenerateInputError):
        predict([0.0, 0.0], params)


def test_width_mismatch(small_params):
    with pytest.raises(DimensionError):
        predict_proba(np.zeros((2, 5)), small_params)


def test_predict_rejects_batch(small_params):
    with pytest.raises(DimensionError):
        predict(np.zeros((2, 2)) + 1.0, small_params)


def test_init_shapes_and_unit_prototypes():
    spec = ModelSpec(d_in=3, n_classes=4, hidden=(5, 6), d_feat=7)
    params = init_params(spec, seed=0)
    assert [w.shape for w, _ in params.layers] == [(3, 5), (5, 6), (6, 7)]
    assert all(np.all(b.data == 0) for _, b in params.layers)
    np.testing.assert_allclose(np.linalg.norm(params.prototypes.data, axis=0), 1.0, rtol=1e-14)
    bound = np.sqrt(6.0 / 3)
    assert np.all(np.abs(params.layers[0][0].data) <= bound)


def test_init_is_seeded():
    spec = ModelSpec(2, 3, (4,), 4)
    a, b = init_params(spec, 11), init_params(spec, 11)
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a.tensors(), b.tensors()))
    c = init_params(spec, 12)
    assert not np.array_equal(a.prototypes.data, c.prototypes.data)


@pytest.mark.parametrize(
    "kw", [dict(n_classes=1), dict(temperature=0.0), dict(activation="tanh"), dict(hidden=(0,))]
)
def test_spec_validation(kw):
    base = dict(d_in=2, n_classes=3)
    base.update(kw)
    with pytest.raises(ConfigError):
        ModelSpec(**base)


def test_linear_activation_makes_extractor_affine():
    params = init_params(ModelSpec(2, 3, (6,), 4, activation="linear"), seed=2)
    x, y = np.array([[1.0, -2.0]]), np.array([[0.5, 3.0]])
    f = lambda v: extract(v, params).data
    np.testing.assert_allclose(f(x + y) - f(y), f(x) - f(np.zeros((1, 2))), atol=1e-12)


def test_checkpoint_round_trip(tmp_path, small_params):
    path = tmp_path / "m.idmne"
    save_checkpoint(path, small_params, seed=9, cfg_hash=config_hash("x"), extra={"t": 3})
    loaded, meta = load_checkpoint(path)
    assert meta["seed"] == 9 and meta["config_hash"] == config_hash("x") and meta["extra"] == {"t": 3}
    for a, b in zip(small_params.tensors(), loaded.tensors()):
        assert a.data.tobytes() == b.data.tobytes()
    x = np.random.default_rng(0).standard_normal((5, 2))
    assert predict_proba(x, small_params).data.tobytes() == predict_proba(x, loaded).data.tobytes()


def test_checkpoint_header_is_checked(tmp_path):
    path = tmp_path / "bad.idmne"
    path.write_text("NOTIT\n{}\n")
    with pytest.raises(CheckpointError, match="header"):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path, small_params):
    path = tmp_path / "m.idmne"
    save_checkpoint(path, small_params, seed=0)
    path.write_text(path.read_text()[:200])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_probabilities_form_a_distribution(seed, n):
    params = init_params(ModelSpec(3, 4, (5,), 6), seed)
    x = np.random.default_rng(seed).standard_normal((n, 3))
    # a fully dead ReLU layer gives a zero feature, which is rejected by design
    assume(np.all(np.linalg.norm(extract(x, params).data, axis=1) > 1e-12))
    with ad.no_grad():
        p = predict_proba(x, params).data
    assert p.shape == (n, 4)
    assert np.all(p >= 0) and np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_classify_bounded_logits(small_params):
    # |cos| <= 1 so probabilities are bounded away from 0 by exp(-2/T) / K
    f = Tensor(np.random.default_rng(3).standard_normal((10, 8)))
    p = classify(f, small_params).data
    assert p.min() >= np.exp(-2 / small_params.temperature) / 3 * 0.99
