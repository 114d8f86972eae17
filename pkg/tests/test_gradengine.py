"""Autodiff tape and gradient-engine tests.

Every primitive's analytic gradient is checked against central finite
differences; the relative-error measure everywhere is
|a - n| / max(1e-8, |a| + |n|).
"""

import numpy as np
import pytest

from hypertopic import geometry as geo
from hypertopic.autodiff import Tensor, concatenate, constant, gather_cols, gather_rows
from hypertopic.errors import ContractViolationError, TrainingStepError
from hypertopic.gradengine import (
    AdamState,
    ParamStore,
    adam_step,
    clip_by_global_norm,
    evaluate_and_backward,
    finite_diff_check,
    global_norm,
)

REL_TOL = 1e-4
FD_STEP = 1e-5


def rel_err(a, n):
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def numeric_grad(fn, x, step=FD_STEP):
    """Central differences of a scalar-valued fn over all entries of x."""
    g = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = g.reshape(-1)
    for i in range(flat_x.size):
        saved = flat_x[i]
        flat_x[i] = saved + step
        plus = fn(x)
        flat_x[i] = saved - step
        minus = fn(x)
        flat_x[i] = saved
        flat_g[i] = (plus - minus) / (2.0 * step)
    return g


def check_primitive(build, x, weight_shape=None, seed=0):
    """Compare tape gradients of sum(w * build(X)) against finite differences."""
    rng = np.random.default_rng(seed)
    probe = build(Tensor(x)).data
    w = rng.normal(size=probe.shape if weight_shape is None else weight_shape)

    t = Tensor(x.copy(), requires_grad=True)
    (build(t) * w).sum().backward()
    analytic = t.grad

    numeric = numeric_grad(lambda a: float((build(Tensor(a)).data * w).sum()), x.copy())
    worst = rel_err(analytic, numeric).max()
    assert worst <= REL_TOL, f"worst rel err {worst}"


class TestPrimitiveGradients:
    """Analytic Jacobian-vector products vs central differences, 100 random inputs each."""

    def test_elementwise_unary(self):
        rng = np.random.default_rng(11)
        cases = {
            "exp": (lambda t: t.exp(), rng.normal(0, 1, 100)),
            "log": (lambda t: t.log(), rng.uniform(0.1, 3.0, 100)),
            "sqrt": (lambda t: t.sqrt(), rng.uniform(0.1, 3.0, 100)),
            "tanh": (lambda t: t.tanh(), rng.normal(0, 1, 100)),
            "sinh": (lambda t: t.sinh(), rng.normal(0, 1, 100)),
            "cosh": (lambda t: t.cosh(), rng.normal(0, 1, 100)),
            "relu": (lambda t: t.relu(), rng.normal(0, 1, 100) + np.sign(rng.normal(size=100)) * 0.05),
            "softplus": (lambda t: t.softplus(), rng.normal(0, 2, 100)),
            "lgamma": (lambda t: t.lgamma(), rng.uniform(0.2, 5.0, 100)),
            "arcosh": (lambda t: t.arcosh(), rng.uniform(1.05, 4.0, 100)),
            "artanh": (lambda t: t.artanh(), rng.uniform(-0.9, 0.9, 100)),
            "neg": (lambda t: -t, rng.normal(0, 1, 100)),
            "square": (lambda t: t**2.0, rng.normal(0, 1, 100)),
            "rsqrt": (lambda t: t**-0.5, rng.uniform(0.2, 3.0, 100)),
            "pow17": (lambda t: t**1.7, rng.uniform(0.2, 3.0, 100)),
            "clamp_min": (lambda t: t.clamp_min(0.0), rng.normal(0, 1, 100) + np.sign(rng.normal(size=100)) * 0.05),
            "clamp_max": (lambda t: t.clamp_max(0.5), rng.normal(0, 1, 100) + 0.05),
        }
        for name, (build, x) in cases.items():
            check_primitive(build, x.reshape(10, 10))

    def test_binary_with_broadcasting(self):
        rng = np.random.default_rng(12)
        b = rng.normal(0, 1, (1, 10))
        cases = {
            "add": lambda t: t + b,
            "sub": lambda t: t - b,
            "rsub": lambda t: b - t,
            "mul": lambda t: t * b,
            "div": lambda t: t / (np.abs(b) + 0.5),
            "rdiv": lambda t: 2.0 / (t * t + 1.0),
        }
        x = rng.normal(0, 1, (10, 10))
        for name, build in cases.items():
            check_primitive(build, x)

    def test_both_sides_require_grad(self):
        rng = np.random.default_rng(13)
        ps = ParamStore()
        ps.add("a", rng.normal(0, 1, (4, 1)))
        ps.add("b", rng.normal(0, 1, (1, 5)))

        def prog(t, batch, r):
            return ((t["a"] * t["b"] + t["a"] / (t["b"] * t["b"] + 1.0)) ** 2.0).sum()

        report = finite_diff_check(prog, ps, tolerance=REL_TOL, step=FD_STEP)
        assert report.passed, report.per_param

    def test_matmul(self):
        rng = np.random.default_rng(14)
        b = rng.normal(0, 1, (7, 5))
        check_primitive(lambda t: t @ b, rng.normal(0, 1, (6, 7)))
        a = rng.normal(0, 1, (6, 7))
        check_primitive(lambda t: Tensor(a) @ t if isinstance(t, Tensor) else a @ t, rng.normal(0, 1, (7, 5)))

    def test_softmax(self):
        rng = np.random.default_rng(15)
        check_primitive(lambda t: t.softmax(axis=1), rng.normal(0, 2, (10, 10)))
        check_primitive(lambda t: t.softmax(axis=0), rng.normal(0, 2, (10, 10)))

    def test_reductions_and_shaping(self):
        rng = np.random.default_rng(16)
        x = rng.normal(0, 1, (10, 10))
        check_primitive(lambda t: t.sum(axis=0), x)
        check_primitive(lambda t: t.sum(axis=1, keepdims=True), x)
        check_primitive(lambda t: t.mean(axis=1), x)
        check_primitive(lambda t: t.mean(), x)
        check_primitive(lambda t: t.reshape(4, 25), x)
        check_primitive(lambda t: t.T, x)
        check_primitive(lambda t: t[2:7, 1:9], x)

    def test_concat_and_gathers(self):
        rng = np.random.default_rng(17)
        x = rng.normal(0, 1, (10, 10))
        other = rng.normal(0, 1, (10, 3))
        check_primitive(lambda t: concatenate([t, Tensor(other)], axis=1), x)
        rows = rng.integers(0, 10, size=25)
        check_primitive(lambda t: gather_rows(t, rows), x)
        cols = rng.integers(0, 10, size=(10, 4))
        check_primitive(lambda t: gather_cols(t, cols), x)

    def test_gather_repeated_indices_accumulate(self):
        t = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
        out = gather_rows(t, np.array([0, 0, 1]))
        out.sum().backward()
        assert np.array_equal(t.grad, np.array([[2.0, 2.0], [1.0, 1.0]]))

    def test_diamond_reuse_accumulates(self):
        t = Tensor(np.array([3.0]), requires_grad=True)
        y = t * t + t * t
        y.sum().backward()
        assert np.allclose(t.grad, [12.0])

    def test_contract_violations(self):
        t = Tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(ContractViolationError):
            t.backward()
        with pytest.raises(ContractViolationError):
            _ = Tensor(np.zeros(3)) @ Tensor(np.zeros(3))
        with pytest.raises(ContractViolationError):
            _ = t ** Tensor(np.ones((2, 2)))

    def test_constant_and_detach_block_gradients(self):
        t = Tensor(np.array([2.0]), requires_grad=True)
        y = (t.detach() * t + constant(np.array([5.0]))).sum()
        y.backward()
        assert np.allclose(t.grad, [2.0])


class TestEvaluateAndBackward:
    def test_square_at_three(self):
        ps = ParamStore()
        ps.add("x", np.array([3.0]))
        loss, grads = evaluate_and_backward(lambda t, b, r: (t["x"] ** 2.0).sum(), ps)
        assert loss == 9.0
        assert np.allclose(grads["x"], [6.0])

    def test_untouched_parameter_gets_zero_gradient(self):
        ps = ParamStore()
        ps.add("x", np.array([3.0]))
        ps.add("unused", np.ones((2, 2)))
        _, grads = evaluate_and_backward(lambda t, b, r: (t["x"] ** 2.0).sum(), ps)
        assert np.array_equal(grads["unused"], np.zeros((2, 2)))

    def test_nonfinite_loss_raises(self):
        ps = ParamStore()
        ps.add("x", np.array([-1.0]))
        with np.errstate(invalid="ignore"):
            with pytest.raises(TrainingStepError):
                evaluate_and_backward(lambda t, b, r: t["x"].log().sum(), ps)

    def test_determinism_bitwise(self):
        rng = np.random.default_rng(21)
        ps = ParamStore()
        ps.add("w", rng.normal(0, 1, (5, 4)))
        ps.add("b", rng.normal(0, 1, (1, 4)))
        batch = rng.normal(0, 1, (8, 5))

        def prog(t, x, r):
            return ((Tensor(x) @ t["w"] + t["b"]).softplus()).sum()

        loss1, g1 = evaluate_and_backward(prog, ps, batch=batch)
        loss2, g2 = evaluate_and_backward(prog, ps, batch=batch)
        assert loss1 == loss2
        for name in g1:
            assert np.array_equal(g1[name], g2[name])

    def test_distance_through_exp_map_matches_finite_differences(self):
        rng = np.random.default_rng(22)
        for geometry, c in [
            (geo.Geometry.POINCARE, -1.0),
            (geo.Geometry.POINCARE, -0.6),
            (geo.Geometry.LORENTZ, -1.0),
            (geo.Geometry.LORENTZ, -1.7),
            (geo.Geometry.EUCLIDEAN, None),
        ]:
            ps = ParamStore()
            ps.add("u", rng.normal(0, 0.5, (2, 3)))
            ps.add("v", rng.normal(0, 0.5, (3, 3)))

            def prog(t, b, r, geometry=geometry, c=c):
                x = geo.tensor_exp_map_origin(t["u"], geometry, c)
                y = geo.tensor_exp_map_origin(t["v"], geometry, c)
                return geo.tensor_pairwise_distances(x, y, geometry, c).sum()

            report = finite_diff_check(prog, ps, tolerance=REL_TOL, step=FD_STEP)
            assert report.passed, (geometry, report.max_rel_err, report.worst_param)

    def test_scores_match_array_kernels(self):
        rng = np.random.default_rng(23)
        u = rng.normal(0, 0.5, (4, 3))
        v = rng.normal(0, 0.5, (6, 3))
        for geometry, c in [
            (geo.Geometry.POINCARE, -1.3),
            (geo.Geometry.LORENTZ, -1.3),
            (geo.Geometry.EUCLIDEAN, None),
        ]:
            x = geo.exp_map_origin_arrays(u, geometry, c)
            y = geo.exp_map_origin_arrays(v, geometry, c)
            want = geo.pairwise_scores(x, y, geometry, c)
            got = geo.tensor_pairwise_scores(
                geo.tensor_exp_map_origin(Tensor(u), geometry, c),
                geo.tensor_exp_map_origin(Tensor(v), geometry, c),
                geometry,
                c,
            ).data
            assert np.allclose(got, want, atol=1e-12)


class TestDistanceGradientSymmetry:
    """The distance gradient has unit Riemannian norm at both endpoints."""

    def test_euclidean_antisymmetry(self):
        rng = np.random.default_rng(31)
        ps = ParamStore()
        ps.add("x", rng.normal(0, 1, (1, 4)))
        ps.add("y", rng.normal(0, 1, (1, 4)))

        def prog(t, b, r):
            return geo.tensor_pairwise_distances(t["x"], t["y"], geo.Geometry.EUCLIDEAN, None).sum()

        _, grads = evaluate_and_backward(prog, ps)
        assert np.allclose(grads["x"], -grads["y"], atol=1e-12)

    def test_poincare_riemannian_norms_match(self):
        rng = np.random.default_rng(32)
        c = -1.4
        k = -c
        x = geo.exp_map_origin_arrays(rng.normal(0, 0.6, (1, 4)), geo.Geometry.POINCARE, c)
        y = geo.exp_map_origin_arrays(rng.normal(0, 0.6, (1, 4)), geo.Geometry.POINCARE, c)
        tx = Tensor(x, requires_grad=True)
        ty = Tensor(y, requires_grad=True)
        geo.tensor_pairwise_distances(tx, ty, geo.Geometry.POINCARE, c).sum().backward()
        lam_x = 2.0 / (1.0 - k * float(np.sum(x * x)))
        lam_y = 2.0 / (1.0 - k * float(np.sum(y * y)))
        nx = np.linalg.norm(tx.grad) / lam_x
        ny = np.linalg.norm(ty.grad) / lam_y
        assert abs(nx - ny) < 1e-6
        assert abs(nx - 1.0) < 1e-6

    def test_lorentz_riemannian_norms_match(self):
        rng = np.random.default_rng(33)
        c = -0.8
        x = geo.exp_map_origin_arrays(rng.normal(0, 0.6, (1, 4)), geo.Geometry.LORENTZ, c)
        y = geo.exp_map_origin_arrays(rng.normal(0, 0.6, (1, 4)), geo.Geometry.LORENTZ, c)
        tx = Tensor(x, requires_grad=True)
        ty = Tensor(y, requires_grad=True)
        geo.tensor_pairwise_distances(tx, ty, geo.Geometry.LORENTZ, c).sum().backward()

        signs = np.ones(5)
        signs[0] = -1.0

        def riem_norm(point, grad):
            raised = signs * grad
            tangent = raised - c * float(geo.lorentz_inner(point, raised)) * point
            assert abs(geo.lorentz_inner(point, tangent)) < 1e-9
            return float(np.sqrt(geo.lorentz_inner(tangent, tangent)))

        nx = riem_norm(x[0], tx.grad[0])
        ny = riem_norm(y[0], ty.grad[0])
        assert abs(nx - ny) < 1e-6
        assert abs(nx - 1.0) < 1e-6


class TestFiniteDiffCheck:
    def test_softplus_chain_passes_at_two_step_sizes(self):
        rng = np.random.default_rng(41)
        ps = ParamStore()
        ps.add("w1", rng.normal(0, 0.5, (4, 6)))
        ps.add("w2", rng.normal(0, 0.5, (6, 1)))
        x = rng.normal(0, 1, (3, 4))

        def prog(t, b, r):
            return ((Tensor(x) @ t["w1"]).softplus() @ t["w2"]).sum()

        for step in (1e-4, 1e-6):
            report = finite_diff_check(prog, ps, tolerance=REL_TOL, step=step)
            assert report.passed, (step, report.max_rel_err)

    def test_corrupted_gradient_fails(self):
        rng = np.random.default_rng(42)
        ps = ParamStore()
        ps.add("w", rng.normal(0, 1, (3, 3)))

        def prog(t, b, r):
            return ((t["w"] ** 2.0).softplus()).sum()

        _, grads = evaluate_and_backward(prog, ps)
        corrupted = grads["w"] * 1.1
        numeric = numeric_grad(lambda a: float(np.sum(np.logaddexp(0.0, a * a))), ps["w"].copy())
        assert rel_err(grads["w"], numeric).max() <= REL_TOL
        assert rel_err(corrupted, numeric).max() > REL_TOL

    def test_report_fields(self):
        ps = ParamStore()
        ps.add("x", np.array([2.0]))
        report = finite_diff_check(lambda t, b, r: (t["x"] ** 2.0).sum(), ps)
        assert report.passed
        assert report.worst_param == "x"
        assert set(report.per_param) == {"x"}
        assert report.tolerance == REL_TOL


class TestParamStore:
    def test_duplicate_name_rejected(self):
        ps = ParamStore()
        ps.add("a", np.zeros(2))
        with pytest.raises(ContractViolationError):
            ps.add("a", np.zeros(2))

    def test_nonfinite_rejected(self):
        ps = ParamStore()
        with pytest.raises(ContractViolationError):
            ps.add("a", np.array([np.nan]))
        ps.add("b", np.zeros(2))
        with pytest.raises(ContractViolationError):
            ps["b"] = np.array([1.0, np.inf])

    def test_shape_frozen(self):
        ps = ParamStore()
        ps.add("a", np.zeros((2, 3)))
        with pytest.raises(ContractViolationError):
            ps["a"] = np.zeros((3, 2))
        with pytest.raises(ContractViolationError):
            ps["missing"] = np.zeros(1)

    def test_copy_is_deep(self):
        ps = ParamStore()
        ps.add("a", np.ones(3))
        clone = ps.copy()
        clone["a"] = np.zeros(3)
        assert np.array_equal(ps["a"], np.ones(3))


class TestAdam:
    def test_zero_gradient_leaves_params_unchanged(self):
        ps = ParamStore()
        ps.add("w", np.array([1.0, -2.0]))
        state = AdamState.for_params(ps)
        adam_step(ps, {"w": np.zeros(2)}, state)
        assert np.array_equal(ps["w"], np.array([1.0, -2.0]))

    def test_first_step_is_signed_lr(self):
        ps = ParamStore()
        ps.add("w", np.array([1.0, 1.0, 1.0]))
        state = AdamState.for_params(ps)
        g = np.array([0.5, -3.0, 1e-6])
        adam_step(ps, {"w": g}, state, lr=0.01)
        step = ps["w"] - np.array([1.0, 1.0, 1.0])
        # bias-corrected first step is -lr * g / (|g| + eps') ~= -lr * sign(g)
        assert np.all(np.sign(step) == -np.sign(g))
        assert np.allclose(np.abs(step[:2]), 0.01, rtol=1e-3)

    def test_quadratic_converges(self):
        ps = ParamStore()
        ps.add("x", np.array([2.0]))
        state = AdamState.for_params(ps)
        for _ in range(1000):
            _, grads = evaluate_and_backward(lambda t, b, r: (t["x"] ** 2.0).sum(), ps)
            adam_step(ps, grads, state, lr=0.01)
        assert abs(float(ps["x"][0])) < 1e-3

    def test_shape_mismatch_rejected(self):
        ps = ParamStore()
        ps.add("w", np.zeros((2, 2)))
        state = AdamState.for_params(ps)
        with pytest.raises(ContractViolationError):
            adam_step(ps, {"w": np.zeros((4,))}, state)
        with pytest.raises(ContractViolationError):
            adam_step(ps, {"other": np.zeros((2, 2))}, state)


class TestClipping:
    def test_global_norm_value(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        assert global_norm(grads) == 5.0

    def test_clip_rescales_above_threshold(self):
        grads = {"a": np.array([30.0]), "b": np.array([40.0])}
        clipped = clip_by_global_norm(grads, max_norm=10.0)
        assert np.isclose(global_norm(clipped), 10.0)
        # direction preserved
        assert np.isclose(clipped["a"][0] / clipped["b"][0], 0.75)

    def test_noop_below_threshold(self):
        grads = {"a": np.array([0.3]), "b": np.array([0.4])}
        clipped = clip_by_global_norm(grads, max_norm=10.0)
        assert clipped["a"] is grads["a"]
