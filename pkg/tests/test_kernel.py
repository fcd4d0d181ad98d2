import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from holdersgd.core import Dataset, DimensionMismatchError, Sample, index_stream
from holdersgd.engine import RunConfig, run
from holdersgd.experiments import kernel_equivalence
from holdersgd.kernel import (
    Kernel,
    RepresenterState,
    kernel_sgd_step,
    kernel_smoothness,
    median_heuristic,
    predict,
    rkhs_grad_norm_sq,
    rkhs_norm_sq,
    run_kernel,
)
from holdersgd.objectives import LossFamilyParams, make_least_squares, make_welsch, synthetic_dataset
from holdersgd.schedules import Schedule, poly_schedule

LS = LossFamilyParams("least_squares")
vec3 = arrays(np.float64, 3, elements=st.floats(-5, 5))


def test_kernel_construction():
    with pytest.raises(ValueError):
        Kernel("gaussian")
    with pytest.raises(ValueError):
        Kernel("poly")
    X = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 8.0]])
    assert median_heuristic(X) == 5.0
    assert Kernel.for_data("gaussian", X).sigma == 5.0
    assert Kernel.for_data("gaussian", X, 2.0).sigma == 2.0


@given(vec3, vec3)
def test_kernel_symmetry(x, x2):
    for k in (Kernel("linear"), Kernel("gaussian", 1.3)):
        assert k(x, x2) == k(x2, x)
    assert Kernel("gaussian", 1.3)(x, x) == 1.0


def test_gram_symmetric_and_psd():
    rng = np.random.default_rng(0)
    k = Kernel("gaussian", 0.8)
    for _ in range(20):
        C = rng.standard_normal((30, 3))
        G = k.gram(C)
        assert np.array_equal(G, G.T)
        A = rng.standard_normal((50, 30))
        assert np.all(np.einsum("ij,jk,ik->i", A, G, A) >= -1e-10)
    assert np.array_equal(k.gram(C, C[:5]), k.gram(C[:5], C).T)


def test_predict_examples():
    x1 = np.array([1.0, 2.0])
    k = Kernel("gaussian", 1.0)
    assert predict(RepresenterState.empty(k, 2), x1) == 0.0
    assert predict(RepresenterState(x1[None, :], np.array([1.0]), k), x1) == 1.0
    C = np.array([[1.0, 0.0], [2.0, -1.0]])
    a = np.array([0.5, -2.0])
    x = np.array([0.3, 0.7])
    assert predict(RepresenterState(C, a, Kernel("linear")), x) == pytest.approx((a @ C) @ x, rel=1e-14)
    with pytest.raises(DimensionMismatchError):
        predict(RepresenterState(C, a, Kernel("linear")), np.ones(3))


def test_state_length_mismatch():
    with pytest.raises(ValueError):
        RepresenterState(np.ones((2, 2)), np.ones(3), Kernel("linear"))


def test_kernel_step_least_squares_coefficient():
    s = RepresenterState.empty(Kernel("linear"), 2)
    s = kernel_sgd_step(s, Sample(np.array([1.0, 2.0]), 3.0), 0.1, LS)
    assert len(s) == 1 and s.coeffs[0] == pytest.approx(0.3)
    # zero loss derivative leaves the function unchanged
    z = Sample(np.array([1.0, 2.0]), predict(s, np.array([1.0, 2.0])))
    s2 = kernel_sgd_step(s, z, 0.1, LS)
    assert s2.coeffs[-1] == 0.0
    assert predict(s2, np.array([0.4, -1.0])) == predict(s, np.array([0.4, -1.0]))
    with pytest.raises(ValueError):
        kernel_sgd_step(s, z, 0.0, LS)


def test_rkhs_norms():
    k = Kernel("gaussian", 1.0)
    assert rkhs_norm_sq(RepresenterState.empty(k, 2)) == 0.0
    assert rkhs_norm_sq(RepresenterState(np.ones((1, 2)), np.array([3.0]), k)) == pytest.approx(9.0)
    C = np.array([[1.0, 0.0], [2.0, -1.0], [0.5, 0.5]])
    a = np.array([0.5, -2.0, 1.0])
    assert rkhs_norm_sq(RepresenterState(C, a, Kernel("linear"))) == pytest.approx(np.sum((a @ C) ** 2), rel=1e-12)


def test_rkhs_grad_norm_examples():
    k = Kernel("gaussian", 1.0)
    data = Dataset(np.array([[0.5, 1.0]]), np.array([2.0]))
    s = RepresenterState.empty(k, 2)
    # n = 1: g^2 K(x, x) with g = 0 - 2
    assert rkhs_grad_norm_sq(s, data, LS) == pytest.approx(4.0)
    data0 = Dataset(np.array([[0.5, 1.0], [1.0, 0.0]]), np.zeros(2))
    assert rkhs_grad_norm_sq(s, data0, LS) == 0.0


def test_rkhs_grad_norm_linear_matches_parametric():
    data = synthetic_dataset(20, 3, 0)
    obj = make_least_squares(data)
    rng = np.random.default_rng(1)
    C, a = rng.standard_normal((7, 3)), rng.standard_normal(7)
    s = RepresenterState(C, a, Kernel("linear"))
    g = obj.grad(a @ C)
    assert rkhs_grad_norm_sq(s, data, LS) == pytest.approx(g @ g, rel=1e-10)


def test_run_kernel_matches_step_by_step():
    data = synthetic_dataset(15, 2, 3)
    k = Kernel.for_data("gaussian", data.X)
    loss = LossFamilyParams("welsch", c=1.0)
    sched = poly_schedule(0.5, 0.75, 1.0)
    res = run_kernel(data, k, loss, sched, RunConfig(64, seed=2))
    s = RepresenterState.empty(k, 2)
    for t, i in enumerate(index_stream(2, data.n, 64), start=1):
        if t == 64:
            # the last checkpoint is taken at w_T, before step T
            assert res.trace.grad_norm_sq[-1] == pytest.approx(rkhs_grad_norm_sq(s, data, loss), rel=1e-10)
        s = kernel_sgd_step(s, data.samples[int(i)], sched(t), loss)
    assert np.allclose(res.state.coeffs, s.coeffs, rtol=1e-12, atol=1e-15)
    assert np.array_equal(res.state.centers, s.centers)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.integers(2, 30), st.integers(1, 6))
def test_linear_kernel_equivalence_property(seed, n, d):
    data = synthetic_dataset(n, d, seed)
    obj = make_least_squares(data)
    sched = poly_schedule(1.0 / obj.smoothness.L, 0.75, 1.0)
    pred_gap, grad_gap, _ = kernel_equivalence(obj, sched, T=200, seed=seed)
    assert pred_gap <= 1e-10 and grad_gap <= 1e-10


def test_kernel_equivalence_every_step():
    obj = make_least_squares(synthetic_dataset(30, 4, 0))
    sched = Schedule("constant", {"eta": 0.5 / obj.smoothness.L}, 1.0)
    cfg = RunConfig(300, 1, checkpoint_policy="all", record_iterates=True)
    par = run(obj, sched, cfg)
    ker = run_kernel(obj.dataset, Kernel("linear"), obj.loss, sched, cfg, record_predictions=True)
    for t in range(1, 301):
        assert np.max(np.abs(obj.dataset.X @ par.iterates[t] - ker.predictions[t])) <= 1e-10


def test_kernel_smoothness():
    data = synthetic_dataset(20, 3, 0, design="sphere")
    assert kernel_smoothness(LossFamilyParams("welsch", c=1.0), Kernel("gaussian", 1.0), data).L == pytest.approx(1.0)
    obj = make_welsch(data)
    assert kernel_smoothness(obj.loss, Kernel("linear"), data).L == pytest.approx(obj.smoothness.L)
