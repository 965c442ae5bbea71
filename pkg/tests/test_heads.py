import numpy as np
import pytest

from cosood.errors import BatchTooSmall, ShapeMismatch
from cosood.heads import FixedScale, HeadKind, HeadParams, PredictedScale, create_head, head_forward
from cosood.ndcore import EVAL, Tensor, softmax


def _random_pred_head(kind, rng, D=6, C=4, hidden=5):
    p = create_head(kind, D, C, scale="pred", rng=rng, hidden=hidden)
    p.scale.w_s.data[:] = rng.standard_normal(p.scale.w_s.shape)
    p.scale.bn.running_mean[:] = 0.2
    p.scale.bn.running_var[:] = 2.0
    p.set_mode(EVAL)
    return p


def test_cosine_head_matches_formula(rng):
    p = create_head("cosine", 5, 3, scale=10.0, rng=rng)
    f = rng.standard_normal((4, 5))
    out = head_forward(f, p)
    fn = f / np.linalg.norm(f, axis=1, keepdims=True)
    Wn = p.W.data / np.linalg.norm(p.W.data, axis=1, keepdims=True)
    np.testing.assert_allclose(out.class_scores.data, fn @ Wn.T, rtol=1e-12)
    np.testing.assert_allclose(out.probabilities, softmax(10.0 * fn @ Wn.T), rtol=1e-12)
    np.testing.assert_allclose(out.detection_score, (fn @ Wn.T).max(axis=1))
    np.testing.assert_array_equal(out.scale, 10.0)


def test_predicted_scale_uses_unnormalized_features(rng):
    p = _random_pred_head("cosine", rng)
    f = np.abs(rng.standard_normal((3, 6)))
    st = p.scale
    z = f @ st.w_s.data.T + st.b_s.data
    expected = np.exp((z[:, 0] - 0.2) / np.sqrt(2.0 + 1e-5))
    np.testing.assert_allclose(head_forward(f, p).scale, expected, rtol=1e-12)
    assert not np.allclose(head_forward(2 * f, p).scale, expected)


def test_two_fc_has_no_activation_between_layers(rng):
    p = create_head("two_fc_cosine", 4, 3, scale=5.0, rng=rng, hidden=6)
    f = rng.standard_normal((2, 4))
    g = f @ p.W1.data.T + p.b1.data  # negative entries must survive
    gn = g / np.linalg.norm(g, axis=1, keepdims=True)
    Wn = p.W.data / np.linalg.norm(p.W.data, axis=1, keepdims=True)
    np.testing.assert_allclose(head_forward(f, p).class_scores.data, gn @ Wn.T, rtol=1e-12)


def test_standard_and_scaled_logit_detect_by_max_softmax(rng):
    for kind in ("standard", "scaled_logit"):
        p = create_head(kind, 5, 3, rng=rng)
        if p.scale is not None:
            p.set_mode(EVAL)
        out = head_forward(rng.standard_normal((4, 5)), p)
        np.testing.assert_allclose(out.detection_score, out.probabilities.max(axis=1))


@pytest.mark.parametrize("kind", ["cosine", "two_fc_cosine"])
def test_head_invariants_on_random_features(rng, kind):
    p = _random_pred_head(kind, rng)
    f = rng.standard_normal((10_000, 6))
    out = head_forward(f, p)
    cos = out.class_scores.data
    assert np.all(cos >= -1.0) and np.all(cos <= 1.0)
    assert np.all(out.scale > 0)
    np.testing.assert_array_equal(np.argmax(cos, axis=1), np.argmax(out.probabilities, axis=1))


@pytest.mark.parametrize("scale,lams", [(16.0, (1e-3, 0.5, 7.0, 1e4)), ("pred", (0.1, 0.5, 3.0))])
def test_detection_score_scale_invariant(rng, scale, lams):
    # large lambda would overflow exp() in the scale branch, which sees the raw f
    p = _random_pred_head("cosine", rng) if scale == "pred" else create_head("cosine", 6, 4, scale=scale, rng=rng)
    f = rng.standard_normal((50, 6))
    base = head_forward(f, p).detection_score
    for lam in lams:
        np.testing.assert_allclose(head_forward(lam * f, p).detection_score, base, rtol=0, atol=1e-9)


def test_parameter_names_and_last_layer(rng):
    p = create_head("cosine", 3, 2, rng=rng)
    assert sorted(p.parameters()) == ["head.W", "head.b_s", "head.bn.beta", "head.bn.gamma", "head.w_s"]
    assert p.last_layer_names() == ["head.W", "head.w_s", "head.b_s", "head.bn.gamma", "head.bn.beta"]
    assert "head.b" in create_head("standard", 3, 2, rng=rng).parameters()
    assert create_head("cosine", 3, 2, scale=8, rng=rng).scale_spec() == 8.0


def test_head_params_validation(rng):
    W = Tensor(np.ones((2, 3)))
    b = Tensor(np.zeros(2))
    with pytest.raises(ValueError):
        HeadParams(HeadKind.COSINE, W, b=b, scale=FixedScale(2.0))
    with pytest.raises(ValueError):
        HeadParams(HeadKind.STANDARD, W)
    with pytest.raises(ValueError):
        HeadParams(HeadKind.SCALED_LOGIT, W, b=b, scale=FixedScale(2.0))
    with pytest.raises(ValueError):
        HeadParams(HeadKind.COSINE, W, scale=FixedScale(2.0), W1=W, b1=b)
    with pytest.raises(ValueError):
        FixedScale(0.0)
    HeadParams(HeadKind.COSINE, W, scale=PredictedScale.create(3))


def test_feature_shape_checked(rng):
    p = create_head("cosine", 3, 2, scale=4.0, rng=rng)
    with pytest.raises(ShapeMismatch):
        head_forward(np.ones((2, 4)), p)


def test_predicted_scale_needs_batch_in_train_mode(rng):
    p = create_head("cosine", 3, 2, rng=rng)
    with pytest.raises(BatchTooSmall):
        head_forward(np.ones((1, 3)), p)
