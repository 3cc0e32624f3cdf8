import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.preprocessing import SplineTransformer

from robust_policy.nets import MLPShape
from robust_policy.policy import (ConstantPolicy, MixturePolicy, SoftmaxPolicy, SplineBasis, UniformPolicy,
                                  load_policy, policy_grad, policy_probs, save_policy)

GRID = np.linspace(-3, 3, 41).reshape(-1, 1)


def fd_jacobian(policy, x, h):
    th = policy.theta
    cols = []
    for k in range(len(th)):
        step = np.zeros_like(th)
        step[k] = h
        cols.append((policy_probs(policy.with_theta(th + step), x)
                     - policy_probs(policy.with_theta(th - step), x)) / (2 * h))
    return np.stack(cols, axis=1)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def test_zero_linear_policy_is_uniform():
    p = SoftmaxPolicy.linear(2, 3)
    assert np.allclose(policy_probs(p, [0.3, -1.0]), 1 / 3, atol=1e-15)


def test_softmax_of_log2_scores():
    # bias-only scores (ln 2, 0): the weight block is zero
    p = SoftmaxPolicy.linear(1, 2, theta=[0.0, 0.0, np.log(2), 0.0])
    assert np.allclose(policy_probs(p, [5.0]), [2 / 3, 1 / 3], atol=1e-12, rtol=0)


@pytest.mark.parametrize("family", ["linear", "mlp"])
def test_probabilities_on_grid(family):
    p = SoftmaxPolicy.initial(1, 3, seed=4, family=family, hidden=(8, 8), scale=2.0)
    P = p.probs(GRID)
    assert np.all(np.abs(P.sum(axis=1) - 1) <= 1e-12)
    assert np.all((P > 0) & (P < 1))


def test_dimension_mismatch():
    p = SoftmaxPolicy.linear(2, 2)
    with pytest.raises(ValueError, match="dimension"):
        policy_probs(p, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError, match="dimension"):
        policy_grad(p, [1.0])


def test_zero_theta_jacobian_matches_fd():
    p = SoftmaxPolicy.linear(1, 2)
    x = [0.7]
    assert rel_err(policy_grad(p, x), fd_jacobian(p, x, 1e-5)) <= 1e-6


def test_jacobian_columns_sum_to_zero():
    p = SoftmaxPolicy.initial(2, 3, 1, "mlp", (5,), scale=0.5)
    J = policy_grad(p, [0.2, -0.4])
    assert np.allclose(J.sum(axis=0), 0, atol=1e-14)


def test_random_jacobians_match_fd():
    rng = np.random.default_rng(11)
    worst = 0.0
    for k in range(100):
        fam = "linear" if k % 2 else "mlp"
        d_x, d_a = int(rng.integers(1, 4)), int(rng.integers(2, 4))
        p = SoftmaxPolicy.initial(d_x, d_a, int(rng.integers(1 << 30)), fam, (6, 4))
        p = p.with_theta(rng.normal(scale=0.7, size=p.theta.shape))
        x = rng.normal(size=d_x)
        worst = max(worst, rel_err(policy_grad(p, x), fd_jacobian(p, x, 1e-6)))
    assert worst <= 1e-4


def test_objective_grad_matches_jacobian_chain():
    rng = np.random.default_rng(2)
    p = SoftmaxPolicy.initial(1, 2, 0, "mlp", (7, 5))
    X = rng.normal(size=(9, 1))
    W = rng.normal(size=(9, 2))
    val, g = p.objective_grad(X, W)
    assert np.isclose(val, (p.probs(X) * W).sum(axis=1).mean())
    chain = sum(W[i] @ policy_grad(p, X[i]) for i in range(9)) / 9
    assert np.allclose(g, chain, atol=1e-12)


def test_initialisation_is_seeded():
    a = SoftmaxPolicy.initial(1, 2, 5, "mlp", (4, 4))
    b = SoftmaxPolicy.initial(1, 2, 5, "mlp", (4, 4))
    c = SoftmaxPolicy.initial(1, 2, 6, "mlp", (4, 4))
    assert a.theta.tobytes() == b.theta.tobytes()
    assert not np.array_equal(a.theta, c.theta)
    lin = SoftmaxPolicy.initial(3, 2, 5)
    assert np.all(np.abs(lin.theta) <= 0.01)


def test_policy_file_round_trip(tmp_path):
    p = SoftmaxPolicy.initial(2, 3, 9, "mlp", (4,))
    save_policy(p, tmp_path / "p.txt")
    q = load_policy(tmp_path / "p.txt")
    assert q.shape == p.shape and q.theta.tobytes() == p.theta.tobytes()
    assert (tmp_path / "p.txt").read_text().splitlines()[0] == "2 4 3"


@given(lam=st.floats(0, 1), v=st.lists(st.floats(0.01, 1), min_size=2, max_size=4))
def test_mixture_policy_is_convex_combination(lam, v):
    v = np.array(v) / np.sum(v)
    mix = MixturePolicy(ConstantPolicy(v), UniformPolicy(len(v)), lam)
    assert np.allclose(mix.probs(GRID), lam * v + (1 - lam) / len(v))


def test_mlp_shape_counts():
    s = MLPShape((3, 4, 2))
    assert s.n_params == 3 * 4 + 4 + 4 * 2 + 2
    assert [w.shape for w, _ in s.unpack(np.zeros(s.n_params))] == [(3, 4), (4, 2)]


# ---------------------------------------------------------------------------
# spline-basis policies

def spline_policy(d_x=1, d_a=2, seed=0, n_knots=6, spread=0.7):
    rng = np.random.default_rng(seed)
    basis = SplineBasis.fit(rng.uniform(-2, 2, size=(200, d_x)), n_knots)
    p = SoftmaxPolicy.initial(d_x, d_a, seed, "spline", basis=basis)
    return p.with_theta(rng.normal(scale=spread, size=p.theta.shape))


def test_spline_basis_matches_sklearn():
    X = np.random.default_rng(3).normal(size=(300, 2))
    ours = SplineBasis.fit(X, 7).transform(X)
    ref = SplineTransformer(n_knots=7, degree=3).fit(X).transform(X)
    assert np.max(np.abs(ours - ref)) <= 1e-12


def test_spline_basis_is_partition_of_unity_and_flat_outside():
    b = SplineBasis((-1.0,), (1.0,), 5)
    F = b.transform(np.linspace(-3, 3, 61).reshape(-1, 1))
    assert np.allclose(F.sum(axis=1), 1, atol=1e-14)
    assert np.array_equal(b.transform(np.array([[-3.0]])), b.transform(np.array([[-1.0]])))
    assert np.array_equal(b.transform(np.array([[7.0]])), b.transform(np.array([[1.0]])))


def test_spline_policy_needs_matching_basis():
    with pytest.raises(ValueError, match="basis"):
        SoftmaxPolicy.initial(1, 2, 0, "spline")
    with pytest.raises(ValueError, match="basis"):
        SoftmaxPolicy.initial(2, 2, 0, "spline", basis=SplineBasis((0.0,), (1.0,)))
    with pytest.raises(ValueError, match="hi > lo"):
        SplineBasis((1.0,), (1.0,))


@given(seed=st.integers(0, 10_000), d_x=st.integers(1, 3), d_a=st.integers(2, 4))
def test_spline_jacobian_matches_fd(seed, d_x, d_a):
    p = spline_policy(d_x, d_a, seed)
    x = np.random.default_rng(seed + 1).uniform(-2.5, 2.5, size=d_x)
    assert rel_err(policy_grad(p, x), fd_jacobian(p, x, 1e-6)) <= 1e-6


def test_spline_objective_grad_matches_fd():
    p = spline_policy(seed=4)
    rng = np.random.default_rng(4)
    X, W = rng.uniform(-2, 2, size=(50, 1)), rng.normal(size=(50, 2))
    _, g = p.objective_grad(X, W)
    fd = np.array([(p.with_theta(p.theta + e).objective_grad(X, W)[0]
                    - p.with_theta(p.theta - e).objective_grad(X, W)[0]) / 2e-5
                   for e in 1e-5 * np.eye(len(p.theta))])
    assert rel_err(g, fd) <= 1e-8


def test_spline_policy_file_round_trip(tmp_path):
    p = spline_policy(d_x=2, d_a=3, seed=8)
    save_policy(p, tmp_path / "p.txt")
    q = load_policy(tmp_path / "p.txt")
    assert q.basis == p.basis and q.theta.tobytes() == p.theta.tobytes()
    X = np.random.default_rng(0).normal(size=(20, 2))
    assert np.array_equal(q.probs(X), p.probs(X))
    assert (tmp_path / "p.txt").read_text().splitlines()[0].startswith("spline 6 3 ")
