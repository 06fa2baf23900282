import math

import numpy as np
import pytest

from trainor import intention
from trainor import numkit as nk
from trainor.errors import ContractError
from trainor.intention import (PosteriorParams, encode_posterior, intention_poi_distribution, kl_standard_normal,
                               ntm_loss, sample_theta, user_intention)


def _kl_loop(mu, log_var):
    total = 0.0
    for m, lv in zip(np.ravel(mu), np.ravel(log_var)):
        total += 0.5 * (math.exp(lv) + m * m - 1.0 - lv)
    return total


def _post(mu, lv):
    return PosteriorParams(nk.as_tensor(np.asarray(mu, float)), nk.as_tensor(np.asarray(lv, float)))


def _weights(n_out=5, d=3, K=4, hidden=6, seed=0):
    p = nk.ParamStore(seed)
    intention.init_params(p, n_out, d, K, hidden)
    return p, intention.NtmWeights.from_store(p)


def test_phi_examples(rng):
    T = rng.normal(size=(3, 4))
    np.testing.assert_allclose(intention_poi_distribution(np.zeros((5, 4)), T).value, 0.2, atol=1e-15)
    E = np.array([[math.log(2)], [0.0]])
    np.testing.assert_allclose(intention_poi_distribution(E, np.array([[1.0]])).value, [[2 / 3, 1 / 3]], atol=1e-12)
    phi = intention_poi_distribution(rng.normal(size=(7, 4)) * 3, T).value
    np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-12)


def test_posterior_examples(rng):
    p, w = _weights()
    for name in ("enc_b", "mu_b", "sigma_b"):
        assert np.all(p[intention.PREFIX + name].value == 0)
    post = encode_posterior(np.zeros(5), w)
    assert np.all(post.mu.value == 0) and np.all(post.log_var.value == 0)

    bow = np.array([2.0, 0, 1, 0, 3])
    a, b = encode_posterior(bow, w), encode_posterior(3 * bow, w)
    np.testing.assert_array_equal(a.mu.value, b.mu.value)
    np.testing.assert_array_equal(a.log_var.value, b.log_var.value)

    for _ in range(20):
        post = encode_posterior(rng.integers(0, 5, 5), w)
        assert np.all(np.isfinite(post.mu.value)) and np.all(post.var > 0)


def test_log_var_is_clamped():
    p, w = _weights()
    p[intention.PREFIX + "sigma_b"].value[...] = 100.0
    post = encode_posterior(np.ones(5), w)
    assert np.all(post.log_var.value == 8.0)


def test_theta_examples(rng):
    K = 4
    W = rng.normal(size=(K, K))
    b = rng.normal(size=K)
    mu = rng.normal(size=K)
    # clamped log-variance at its floor: noise is scaled by exp(-4)
    post = _post(mu, np.full(K, -1e6))
    quiet = sample_theta(post, W, b, np.zeros(K)).value
    expected = np.exp(W @ mu + b - np.max(W @ mu + b))
    np.testing.assert_allclose(quiet, expected / expected.sum(), atol=1e-15)
    post = _post(mu, np.zeros(K))
    np.testing.assert_allclose(sample_theta(post, np.zeros((K, K)), np.zeros(K), rng.normal(size=K)).value,
                               1 / K, atol=1e-15)
    for _ in range(100):
        th = sample_theta(_post(rng.normal(size=(3, K)), rng.normal(size=(3, K))), W, b,
                          rng.normal(size=(3, K))).value
        assert np.all(th >= 0)
        np.testing.assert_allclose(th.sum(axis=1), 1.0, atol=1e-12)


def test_kl_examples_and_oracle(rng):
    assert kl_standard_normal(_post(np.zeros(4), np.zeros(4))).item() == 0.0
    assert kl_standard_normal(_post([1.0, 0.0], [0.0, 0.0])).item() == pytest.approx(0.5, abs=1e-15)
    for _ in range(1000):
        mu, lv = rng.normal(0, 2, 5), rng.uniform(-8, 8, 5)
        kl = kl_standard_normal(_post(mu, lv)).item()
        assert kl >= 0
        assert abs(kl - _kl_loop(mu, lv)) < 1e-12 * max(1.0, abs(kl))


def test_ntm_loss_reconstruction_example():
    # Theta @ Phi = [0.8, 0.2] with a one-intention mixture, KL zero
    loss = ntm_loss(np.array([[2.0, 0.0]]), np.array([[0.8, 0.2]]), np.array([[1.0]]),
                    _post(np.zeros((1, 1)), np.zeros((1, 1)))).item()
    assert loss == pytest.approx(-2 * math.log(0.8 + 1e-10), abs=1e-12)
    assert loss == pytest.approx(0.4463, abs=1e-4)


def test_ntm_loss_floor_keeps_zero_probability_finite():
    loss = ntm_loss(np.array([[0.0, 3.0]]), np.array([[1.0, 0.0]]), np.array([[1.0]]),
                    _post(np.zeros((1, 1)), np.zeros((1, 1)))).item()
    assert np.isfinite(loss) and loss == pytest.approx(-3 * math.log(1e-10))


def test_ntm_loss_rejects_negative_inputs():
    post = _post(np.zeros((1, 1)), np.zeros((1, 1)))
    with pytest.raises(ContractError):
        ntm_loss(np.ones((1, 2)), np.array([[1.2, -0.2]]), np.array([[1.0]]), post)
    with pytest.raises(ContractError):
        ntm_loss(np.ones((1, 2)), np.array([[0.5, 0.5]]), np.array([[-1.0]]), post)


def test_ntm_loss_gradient_on_toy_corpus():
    p, _ = _weights(n_out=4, d=3, K=3, hidden=5, seed=4)
    rng = np.random.default_rng(8)
    for _, t in p.items():
        t.value[...] = rng.uniform(-1, 1, t.shape)
    bows = np.array([[2.0, 0, 1, 0], [0, 1, 1, 3], [1, 1, 0, 0]])
    eps = np.random.default_rng(1).standard_normal((3, 3))

    def loss(ps):
        w = intention.NtmWeights.from_store(ps)
        post = encode_posterior(bows, w)
        theta = sample_theta(post, w.theta_W, w.theta_b, eps)
        return ntm_loss(bows, intention_poi_distribution(w.E, w.T), theta, post)

    with nk.relu_margin() as probe:
        loss(p)
    assert probe.margin > 1e-3
    assert nk.grad_check(loss, p, names=[n for n in p.names() if n != intention.PREFIX + "W_t"]) < 1e-4


def test_user_intention_examples(rng):
    T = rng.normal(size=(4, 3))
    u_int, beta = user_intention(T, rng.normal(size=(1, 3)), np.zeros((3, 3)))
    np.testing.assert_allclose(beta.value, 0.25, atol=1e-15)
    np.testing.assert_allclose(u_int.value[0], T.mean(axis=0), atol=1e-12)

    t1 = rng.normal(size=(1, 3))
    for _ in range(5):
        u_int, _ = user_intention(t1, rng.normal(size=(1, 3)), rng.normal(size=(3, 3)))
        np.testing.assert_allclose(u_int.value[0], t1[0], atol=1e-15)


def test_user_intention_convex_and_permutation_invariant(rng):
    for _ in range(200):
        K, d = rng.integers(2, 8), rng.integers(1, 6)
        T, u, W = rng.normal(size=(K, d)), rng.normal(size=(2, d)), rng.normal(size=(d, d))
        u_int, beta = user_intention(T, u, W)
        assert np.all(beta.value >= 0)
        np.testing.assert_allclose(beta.value.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(u_int.value, beta.value @ T, atol=1e-12)
        perm = rng.permutation(K)
        np.testing.assert_allclose(user_intention(T[perm], u, W)[0].value, u_int.value, atol=1e-12)
