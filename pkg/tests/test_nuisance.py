import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from robust_policy import dgp
from robust_policy.core import Dataset, LearnerConfig
from robust_policy.learners import fit_quantile_regression, fit_regression, pinball_loss
from robust_policy.nuisance import (FitError, SensitivitySpec, assemble, c_coefficients, clip_probs,
                                    fit_propensity, fit_quantile, fit_trimmed_means, oracle_nuisances)
from robust_policy.oracle import DiscreteInstance, OutcomeLaw

LINEAR = LearnerConfig(family="linear")
SPLINE = LearnerConfig(family="spline")
SMALL_MLP = LearnerConfig(family="mlp", hidden=(16,), lr=1e-2, epochs=60)
GRID = np.linspace(-2, 2, 21).reshape(-1, 1)

gammas = st.floats(1.0, 50.0)
props = st.floats(1e-6, 1 - 1e-6)


@given(g=gammas)
def test_sensitivity_constants(g):
    s = SensitivitySpec(g)
    assert abs(s.alpha_plus + s.alpha_minus - 1) <= 1e-15
    assert s.b_plus <= 0 <= s.b_minus
    assert s.level("upper") == s.alpha_plus and s.level("lower") == s.alpha_minus


def test_gamma_one_collapses():
    s = SensitivitySpec(1.0)
    assert (s.b_plus, s.b_minus, s.alpha_plus, s.alpha_minus) == (0.0, 0.0, 0.5, 0.5)
    c = s.c(np.array([0.1, 0.9]))
    assert np.all(c.c_plus == 1) and np.all(c.c_minus == 1)


@pytest.mark.parametrize("g", [0.99, np.inf, np.nan])
def test_gamma_validation(g):
    with pytest.raises(ValueError):
        SensitivitySpec(g)


@given(g=gammas, e=st.floats(0.01, 0.99))
def test_c_coefficient_identities(g, e):
    # e stays inside the clipping range; near e = 1 or gamma = 1 the ratio
    # below divides two cancelling differences and loses digits
    c = c_coefficients(SensitivitySpec(g), e)
    cp, cm = float(c.c_plus), float(c.c_minus)
    assert abs(g * cm + cp - (1 + g)) <= 1e-12 * (1 + g)
    assert cm <= 1 <= cp
    if g > 1.001:
        assert abs((cp - 1) / (cp - cm) - g / (1 + g)) <= 1e-12


@given(p=st.lists(st.floats(0, 1), min_size=2, max_size=5).filter(lambda v: sum(v) > 0.1),
       eps=st.floats(1e-4, 0.2))
def test_clip_probs_contract(p, eps):
    p = np.array(p)[None, :] / np.sum(p)
    eps = min(eps, 0.99 / p.shape[1])
    out = clip_probs(p, eps)
    assert np.all(out >= eps - 1e-12)
    assert abs(out.sum() - 1) <= 1e-12
    if p.min() >= eps:
        assert np.allclose(out, p)


def test_clip_binary_is_interval_clip():
    p = np.array([[0.001, 0.999], [0.3, 0.7], [1.0, 0.0]])
    assert np.allclose(clip_probs(p, 0.01), np.clip(p, 0.01, 0.99))


def test_propensity_matches_arm_frequencies():
    # a flexible learner needs enough rows near the ends of [-2, 2]
    rng = np.random.default_rng(0)
    n = 20_000
    x = rng.uniform(-2, 2, (n, 1))
    a = (rng.uniform(size=n) < 0.75).astype(int)
    data = Dataset(np.zeros(n), a, x, 2)
    for cfg in (LINEAR, SPLINE):
        e, _ = fit_propensity(data, cfg, seed=1)
        assert np.all(np.abs(e(GRID)[:, 1] - a.mean()) <= 0.03)
        assert abs(a.mean() - 0.75) < 0.03


def test_propensity_clipped_on_separated_data():
    x = np.linspace(-2, 2, 200).reshape(-1, 1)
    a = (x[:, 0] > 0).astype(int)
    e, _ = fit_propensity(Dataset(np.zeros(200), a, x, 2), LINEAR, eps_clip=0.01)
    P = e(GRID)
    assert np.isclose(P.max(), 0.99) and np.isclose(P.min(), 0.01)
    assert np.allclose(P.sum(axis=1), 1, atol=1e-12)


def test_mlp_propensity_is_a_distribution(synth_small):
    data, _ = synth_small
    e, info = fit_propensity(data, SMALL_MLP, seed=0)
    P = e(GRID)
    assert np.all(P >= 0.01 - 1e-12) and np.all(P <= 0.99 + 1e-12)
    assert np.allclose(P.sum(axis=1), 1, atol=1e-9)
    assert 1 <= info.epochs <= 60


def test_missing_arm_is_a_fit_error():
    data = Dataset(np.zeros(5), np.zeros(5, int), np.zeros((5, 1)), 2)
    with pytest.raises(FitError, match="arm 1"):
        fit_propensity(data, LINEAR)


@pytest.mark.parametrize("level", [0.1, 0.5, 0.875])
def test_constant_outcome_quantile(level):
    x = np.linspace(-1, 1, 30).reshape(-1, 1)
    data = Dataset(np.full(30, 3.0), np.arange(30) % 2, x, 2)
    q = fit_quantile(data, level, SPLINE)
    assert np.allclose(q(GRID), 3.0)
    lo, hi = fit_trimmed_means(data, q, LINEAR)
    # the atom at the quantile counts in both tails
    assert np.allclose(lo(GRID) + hi(GRID), 6.0)


def test_uniform_quantile_is_analytic():
    rng = np.random.default_rng(1)
    n = 4000
    x = rng.uniform(-2, 2, (n, 1))
    q, _ = fit_quantile_regression(x, rng.uniform(size=n), 0.75, SPLINE, 0)
    assert np.all(np.abs(q(GRID[2:-2]) - 0.75) <= 0.05)


def test_median_matches_lad_oracle():
    rng = np.random.default_rng(2)
    n = 1000
    x = rng.uniform(-2, 2, (n, 1))
    y = 1 + 2 * x[:, 0] + rng.laplace(size=n)
    q, info = fit_quantile_regression(x, y, 0.5, LINEAR, 0)
    lad = minimize(lambda b: np.abs(y - b[0] - b[1] * x[:, 0]).mean(), [0.0, 0.0], method="Nelder-Mead",
                   options=dict(xatol=1e-9, fatol=1e-12, maxiter=20000)).x
    assert np.all(np.abs(q(GRID) - (lad[0] + lad[1] * GRID[:, 0])) <= 0.05)
    assert info.loss == pytest.approx(pinball_loss(y, q(x), 0.5))


def test_mlp_quantile_tracks_level():
    rng = np.random.default_rng(3)
    n = 3000
    x = rng.uniform(-2, 2, (n, 1))
    y = rng.uniform(size=n)
    q, _ = fit_quantile_regression(x, y, 0.75, SMALL_MLP, 0)
    assert abs(np.mean(y <= q(x)) - 0.75) < 0.05


def test_trimmed_means_on_uniform_outcomes():
    rng = np.random.default_rng(4)
    n = 6000
    x = rng.uniform(-2, 2, (n, 1))
    data = Dataset(rng.uniform(size=n), rng.integers(0, 2, n), x, 2)
    q = fit_quantile(data, 2 / 3, SPLINE)
    lo, hi = fit_trimmed_means(data, q, SPLINE)
    mid = GRID[5:-5]
    assert np.all(np.abs(lo(mid) - 2 / 9) <= 0.05)
    assert np.all(np.abs(hi(mid) - 5 / 18) <= 0.05)


def test_trimmed_means_add_to_conditional_mean():
    # the pinball fit interpolates a few rows, which then count in both tails;
    # their weight in the sum fades like (basis size) / n
    data, _ = dgp.generate(dgp.SyntheticSpec(2.0, 20_000, 3))
    q = fit_quantile(data, 0.8, SPLINE)
    lo, hi = fit_trimmed_means(data, q, SPLINE)
    for a in (0, 1):
        sub = data.arm(a)
        mean, _ = fit_regression(sub.x, sub.y, SPLINE, 0)
        assert np.all(np.abs(lo(GRID)[:, a] + hi(GRID)[:, a] - mean(GRID)) <= 0.05)


def test_assemble_levels_and_report(synth_small):
    data, _ = synth_small
    one = assemble(data, SensitivitySpec(1.0), SPLINE)
    assert one.quantile["upper"] is one.quantile["lower"]
    assert sum(k.startswith("quantile[") for k in one.report.entries) == 2  # one level, two arms
    two = assemble(data, SensitivitySpec(2.0), SPLINE)
    keys = [k for k in two.report.entries if k.startswith("quantile[")]
    assert {k.split("]")[0] for k in keys} == {"quantile[0.6666666666666666", "quantile[0.3333333333333333"}
    assert "quantile_crossings" in two.report.entries
    text = two.report.to_text()
    assert "gamma=2.0" in text and all("=" in line for line in text.splitlines())


def test_assemble_is_deterministic(synth_small):
    data, _ = synth_small
    a = assemble(data, SensitivitySpec(3.0), SMALL_MLP, seed=7).evaluate(GRID)
    b = assemble(data, SensitivitySpec(3.0), SMALL_MLP, seed=7).evaluate(GRID)
    for s in ("upper", "lower"):
        assert a.quantile[s].tobytes() == b.quantile[s].tobytes()
        assert a.lower_trim[s].tobytes() == b.lower_trim[s].tobytes()
    assert a.e.tobytes() == b.e.tobytes()


def test_small_arm_warns():
    rng = np.random.default_rng(5)
    x = rng.uniform(size=(40, 1))
    a = np.r_[np.zeros(35, int), np.ones(5, int)]
    nuis = assemble(Dataset(rng.normal(size=40), a, x, 2), SensitivitySpec(2.0), LINEAR)
    assert any("arm 1: only 5 samples" in w for w in nuis.report.warnings)


def binary_instance():
    law = OutcomeLaw([0.0, 1.0], [2 / 3, 1 / 3])
    return DiscreteInstance([0.0], [1.0], [[0.5, 0.5]], ((law, law),))


def test_binary_oracle_enumeration():
    nv = oracle_nuisances(binary_instance(), SensitivitySpec(2.0)).evaluate(np.zeros((1, 1)))
    assert nv.quantile["upper"][0, 0] == 0.0
    assert nv.lower_trim["upper"][0, 0] == 0.0
    assert nv.upper_trim["upper"][0, 0] == pytest.approx(1 / 3, abs=1e-15)


def test_constant_instance_quantiles():
    law = OutcomeLaw([2.5], [1.0])
    inst = DiscreteInstance([0.0, 1.0], [0.5, 0.5], [[0.3, 0.7], [0.6, 0.4]], ((law, law), (law, law)))
    nv = oracle_nuisances(inst, SensitivitySpec(4.0)).evaluate(np.array([[0.0], [1.0]]))
    for s in ("upper", "lower"):
        assert np.all(nv.quantile[s] == 2.5)


@pytest.mark.parametrize("g", [1.0, 3.0, 7.0])
def test_synthetic_oracle_trims_partition_mean(g):
    nv = oracle_nuisances(dgp.SyntheticSpec(g), SensitivitySpec(g)).evaluate(GRID)
    for s in ("upper", "lower"):
        assert np.max(np.abs(nv.lower_trim[s] + nv.upper_trim[s] - nv.capo)) <= 1e-9


def test_synthetic_oracle_propensity_matches_frequency():
    g = 5.0
    data, _ = dgp.generate(dgp.SyntheticSpec(g, 100_000, 0))
    e = oracle_nuisances(dgp.SyntheticSpec(g), SensitivitySpec(g)).propensity
    edges = np.linspace(-2, 2, 9)
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (data.x[:, 0] >= lo) & (data.x[:, 0] < hi)
        p_hat = data.a[m].mean()
        p_true = e(data.x[m])[:, 1].mean()
        assert abs(p_hat - p_true) <= 3 * np.sqrt(p_true * (1 - p_true) / m.sum())


def test_oracle_rejects_unknown_instance():
    with pytest.raises(TypeError):
        oracle_nuisances(object(), SensitivitySpec(1.0))
