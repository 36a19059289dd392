import numpy as np
import pytest

from upliftrl.errors import FormatError, IOFailure, NumericalError, ValidationError
from upliftrl.policy import (
    Gradient,
    PolicyNet,
    apply_update,
    forward,
    greedy_actions,
    init_policy,
    load_policy,
    log_prob_grad,
    sample_action,
    sample_actions,
    save_policy,
    weighted_grad_sum,
    with_normalization,
)
from upliftrl.rng import substream


def small_net(d=4, k=2, h=8, seed=0):
    return init_policy(d, k, h=h, seed=seed)


def param_vector(net):
    return np.concatenate(
        [net.w1.ravel(), net.b1.ravel(), net.w2.ravel(), net.b2.ravel()]
    )


def net_from_vector(net, v):
    shapes = [net.w1.shape, net.b1.shape, net.w2.shape, net.b2.shape]
    parts, off = [], 0
    for s in shapes:
        size = int(np.prod(s))
        parts.append(v[off : off + size].reshape(s))
        off += size
    return PolicyNet(
        w1=parts[0],
        b1=parts[1],
        w2=parts[2],
        b2=parts[3],
        norm_mean=net.norm_mean,
        norm_std=net.norm_std,
    )


def test_forward_probabilities_valid():
    net = small_net()
    x = np.random.default_rng(0).normal(size=(20, 4))
    probs = forward(net, x)
    assert probs.shape == (20, 3)
    assert (probs > 0).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_forward_single_vector():
    net = small_net()
    x = np.ones(4)
    single = forward(net, x)
    batch = forward(net, x[None, :])
    np.testing.assert_allclose(single, batch[0])


def test_forward_dimension_check():
    with pytest.raises(ValidationError):
        forward(small_net(), np.zeros(7))


def test_zero_weights_give_uniform_policy():
    net = small_net()
    zero = PolicyNet(
        w1=np.zeros_like(net.w1),
        b1=np.zeros_like(net.b1),
        w2=np.zeros_like(net.w2),
        b2=np.zeros_like(net.b2),
        norm_mean=net.norm_mean,
        norm_std=net.norm_std,
    )
    probs = forward(zero, np.random.default_rng(1).normal(size=(5, 4)))
    np.testing.assert_allclose(probs, 1.0 / 3.0)


def test_logit_shift_invariance():
    # Adding a constant to every output bias leaves the softmax unchanged.
    net = small_net(seed=2)
    shifted = PolicyNet(
        w1=net.w1,
        b1=net.b1,
        w2=net.w2,
        b2=net.b2 + 37.5,
        norm_mean=net.norm_mean,
        norm_std=net.norm_std,
    )
    x = np.random.default_rng(2).normal(size=(10, 4))
    np.testing.assert_allclose(forward(net, x), forward(shifted, x), rtol=1e-12)


def test_softmax_stable_at_large_logits():
    net = small_net()
    big = PolicyNet(
        w1=net.w1,
        b1=net.b1,
        w2=net.w2 * 1e4,
        b2=net.b2,
        norm_mean=net.norm_mean,
        norm_std=net.norm_std,
    )
    probs = forward(big, np.ones(4))
    assert np.isfinite(probs).all()


def test_param_count_at_reference_sizes():
    net = init_policy(50, 4, h=512)
    count = param_vector(net).size
    assert count == 50 * 512 + 512 + 512 * 5 + 5 == 28677


def test_init_deterministic():
    a, b = small_net(seed=9), small_net(seed=9)
    np.testing.assert_array_equal(a.w1, b.w1)
    np.testing.assert_array_equal(a.w2, b.w2)


def test_normalization_standardizes_training_features():
    rng = np.random.default_rng(3)
    X = rng.normal(5.0, 3.0, size=(500, 4))
    net = with_normalization(small_net(), X)
    xn = (X - net.norm_mean) / net.norm_std
    np.testing.assert_allclose(xn.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(xn.std(axis=0), 1.0, atol=1e-10)


def test_normalization_constant_feature():
    X = np.column_stack([np.full(10, 2.0), np.arange(10.0), np.ones(10), np.ones(10)])
    net = with_normalization(small_net(), X)
    assert (net.norm_std > 0).all()


def test_gradient_matches_finite_differences():
    # Central differences on 120 randomly chosen (parameter, input, action)
    # triples across several networks.
    eps = 1e-6
    rng = np.random.default_rng(4)
    checked = 0
    for seed in range(4):
        net = small_net(seed=seed)
        theta = param_vector(net)
        for _ in range(6):
            x = rng.normal(size=4)
            a = int(rng.integers(0, 3))
            grad = log_prob_grad(net, x, a).flat()
            for idx in rng.choice(theta.size, 5, replace=False):
                up, dn = theta.copy(), theta.copy()
                up[idx] += eps
                dn[idx] -= eps
                lp_up = np.log(forward(net_from_vector(net, up), x)[a])
                lp_dn = np.log(forward(net_from_vector(net, dn), x)[a])
                fd = (lp_up - lp_dn) / (2 * eps)
                assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7)
                checked += 1
    assert checked == 120


def test_score_function_identity():
    # E_a[grad log pi(a|x)] = 0 exactly when summed over all actions with
    # probability weights.
    net = small_net(seed=5)
    x = np.random.default_rng(5).normal(size=4)
    probs = forward(net, x)
    total = sum(probs[a] * log_prob_grad(net, x, a).flat() for a in range(3))
    assert np.abs(total).max() < 1e-8


def test_weighted_grad_sum_matches_loop():
    net = small_net(seed=6)
    rng = np.random.default_rng(6)
    X = rng.normal(size=(12, 4))
    actions = rng.integers(0, 3, 12)
    coeffs = rng.normal(size=12)
    batched = weighted_grad_sum(net, X, actions, coeffs).flat()
    looped = sum(
        coeffs[i] * log_prob_grad(net, X[i], int(actions[i])).flat() for i in range(12)
    )
    np.testing.assert_allclose(batched, looped, rtol=1e-10, atol=1e-12)


def test_sample_action_returns_consistent_probability():
    net = small_net(seed=7)
    x = np.zeros(4)
    probs = forward(net, x)
    rng = substream(1, "sample")
    for _ in range(20):
        a, p = sample_action(net, x, rng)
        assert p == pytest.approx(probs[a])


def test_sample_actions_match_distribution():
    net = small_net(seed=8)
    x = np.tile(np.array([0.3, -1.0, 0.5, 2.0]), (50_000, 1))
    probs = forward(net, x[0])
    actions, _ = sample_actions(net, x, substream(2, "sample"))
    freq = np.bincount(actions, minlength=3) / actions.size
    bounds = 4 * np.sqrt(probs * (1 - probs) / actions.size)
    assert (np.abs(freq - probs) < bounds).all()


def test_greedy_actions_argmax():
    net = small_net(seed=10)
    X = np.random.default_rng(10).normal(size=(30, 4))
    expected = forward(net, X).argmax(axis=1)
    np.testing.assert_array_equal(greedy_actions(net, X), expected)


def test_apply_update_ascends():
    net = small_net()
    grad = Gradient(
        w1=np.ones_like(net.w1),
        b1=np.ones_like(net.b1),
        w2=np.ones_like(net.w2),
        b2=np.ones_like(net.b2),
    )
    out = apply_update(net, grad, 0.5)
    np.testing.assert_allclose(out.w1, net.w1 + 0.5)
    np.testing.assert_allclose(out.b2, net.b2 + 0.5)


def test_apply_update_rejects_nonfinite():
    net = small_net()
    grad = Gradient(
        w1=np.full_like(net.w1, np.inf),
        b1=np.zeros_like(net.b1),
        w2=np.zeros_like(net.w2),
        b2=np.zeros_like(net.b2),
    )
    with pytest.raises(NumericalError):
        apply_update(net, grad, 1.0)


def test_save_load_round_trip(tmp_path):
    net = with_normalization(
        small_net(seed=11), np.random.default_rng(11).normal(2.0, 1.5, (50, 4))
    )
    path = tmp_path / "model.json"
    save_policy(net, path)
    back = load_policy(path)
    np.testing.assert_array_equal(back.w1, net.w1)
    np.testing.assert_array_equal(back.b2, net.b2)
    np.testing.assert_array_equal(back.norm_mean, net.norm_mean)
    x = np.random.default_rng(12).normal(size=(5, 4))
    np.testing.assert_array_equal(forward(back, x), forward(net, x))


def test_load_policy_missing_file(tmp_path):
    with pytest.raises(IOFailure):
        load_policy(tmp_path / "absent.json")


def test_load_policy_truncated(tmp_path):
    path = tmp_path / "model.json"
    save_policy(small_net(), path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(FormatError):
        load_policy(path)


def test_load_policy_version_mismatch(tmp_path):
    import json

    path = tmp_path / "model.json"
    save_policy(small_net(), path)
    doc = json.loads(path.read_text())
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(FormatError, match="version"):
        load_policy(path)


def test_load_policy_bad_std(tmp_path):
    import json

    path = tmp_path / "model.json"
    save_policy(small_net(), path)
    doc = json.loads(path.read_text())
    doc["normalization"]["std"][0] = 0.0
    path.write_text(json.dumps(doc))
    with pytest.raises(FormatError, match="std"):
        load_policy(path)
