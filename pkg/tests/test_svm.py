import numpy as np
import pytest

from rankqp import kernel
from rankqp.exceptions import ValidationError
from rankqp.svm import SvmSpec, predict, recover_primal, reduce_to_qp, train

TWO_POINT_X = np.array([[1.0, 0.0], [-1.0, 0.0]])
TWO_POINT_Y = np.array([1.0, -1.0])


# -- spec validation ----------------------------------------------------------

def test_variant_validation():
    with pytest.raises(ValidationError):
        SvmSpec(X=TWO_POINT_X, y=TWO_POINT_Y, variant="soft")
    with pytest.raises(ValidationError):
        SvmSpec(X=TWO_POINT_X, y=None, variant="c-svc")
    with pytest.raises(ValidationError):
        SvmSpec(X=TWO_POINT_X, y=np.array([1.0, 0.0]), variant="c-svc")
    with pytest.raises(ValidationError):
        SvmSpec(X=TWO_POINT_X, y=TWO_POINT_Y, variant="c-svc", C=-1.0)


def test_nu_svc_feasibility_bound():
    X = np.vstack([TWO_POINT_X, [[0.5, 1.0], [0.2, -1.0]]])
    y = np.array([1.0, -1.0, 1.0, 1.0])  # k- = 1, bound = 2/4
    SvmSpec(X=X, y=y, variant="nu-svc", nu=0.5)
    with pytest.raises(ValidationError):
        SvmSpec(X=X, y=y, variant="nu-svc", nu=0.6)


# -- reductions ---------------------------------------------------------------

def test_reduce_hard_margin_structure():
    spec = SvmSpec(X=TWO_POINT_X, y=TWO_POINT_Y, variant="hard")
    red = reduce_to_qp(spec)
    inst = red.instance
    assert inst.n == 2 and inst.m == 1
    assert np.array_equal(inst.A, TWO_POINT_Y[None, :])
    assert np.array_equal(inst.b, [0.0])
    assert all(d.lo == 0.0 and d.hi == 20.0 for d in inst.blocks)  # cap 10 n
    assert red.maximization
    assert np.allclose(inst.q_dense(), [[1.0, 1.0], [1.0, 1.0]])


def test_reduce_c_svc_structure():
    spec = SvmSpec(X=TWO_POINT_X, y=TWO_POINT_Y, variant="c-svc", C=0.7)
    inst = reduce_to_qp(spec).instance
    assert all(d.hi == 0.7 for d in inst.blocks)
    assert np.allclose(inst.c, -1.0)


def test_reduce_nu_svc_structure():
    X = np.vstack([TWO_POINT_X, -TWO_POINT_X])
    y = np.array([1.0, -1.0, -1.0, 1.0])
    spec = SvmSpec(X=X, y=y, variant="nu-svc", nu=0.5)
    inst = reduce_to_qp(spec).instance
    assert inst.m == 2
    assert np.array_equal(inst.A[0], y)
    assert np.array_equal(inst.A[1], np.ones(4))
    assert np.array_equal(inst.b, [0.0, 0.5])
    assert all(d.hi == pytest.approx(0.25) for d in inst.blocks)  # 1/n
    assert np.all(inst.c == 0.0)


def test_reduce_one_class_structure():
    spec = SvmSpec(X=TWO_POINT_X, variant="one-class", nu=0.4)
    inst = reduce_to_qp(spec).instance
    assert inst.m == 1
    assert np.array_equal(inst.A[0], np.ones(2))
    assert np.array_equal(inst.b, [0.4])
    assert all(d.hi == 0.5 for d in inst.blocks)


def test_reduce_eps_svr_structure():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0.1, 0.9, 2.2])
    spec = SvmSpec(X=X, y=y, variant="eps-svr", C=2.0, eps_tube=0.05)
    inst = reduce_to_qp(spec).instance
    assert inst.n == 6
    assert np.array_equal(inst.A[0], [1, 1, 1, -1, -1, -1])
    assert np.allclose(inst.c, np.concatenate([0.05 + y, 0.05 - y]))
    assert all(d.hi == 2.0 for d in inst.blocks)
    K = X @ X.T
    want = np.block([[K, -K], [-K, K]])
    assert np.allclose(inst.q_dense(), want)


def test_reduce_nu_svr_structure():
    X = np.array([[0.0], [1.0]])
    y = np.array([0.3, 0.8])
    spec = SvmSpec(X=X, y=y, variant="nu-svr", C=1.5, nu=0.4)
    inst = reduce_to_qp(spec).instance
    assert inst.n == 4 and inst.m == 2
    assert np.array_equal(inst.A[0], [1, 1, -1, -1])
    assert np.array_equal(inst.A[1], [1, 1, 1, 1])
    assert np.allclose(inst.b, [0.0, 0.6])
    assert all(d.hi == 0.75 for d in inst.blocks)  # C/n


# -- training -----------------------------------------------------------------

def test_two_point_hard_margin_analytic():
    spec = SvmSpec(X=TWO_POINT_X, y=TWO_POINT_Y, variant="hard")
    mdl = train(spec, eps_solve=1e-3)
    assert np.abs(mdl.alpha - 0.5).max() <= 1e-4
    assert np.abs(mdl.w - [1.0, 0.0]).max() <= 2e-4
    assert abs(mdl.bias) <= 1e-6
    assert mdl.dual_objective == pytest.approx(0.5, abs=1e-4)


def test_two_point_brute_force_grid():
    # brute-force oracle for the same dual program
    spec = SvmSpec(X=TWO_POINT_X, y=TWO_POINT_Y, variant="hard")
    grid = np.linspace(0.0, 2.0, 4001)
    vals = 2 * grid - 2 * grid**2  # alpha1 = alpha2 = a on the feasible line
    best = grid[np.argmax(vals)]
    assert best == pytest.approx(0.5, abs=1e-3)
    mdl = train(spec, eps_solve=1e-3)
    assert mdl.dual_objective >= vals.max() - 1e-4


def test_svm_equality_residual_bound():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(size=(10, 3)) + 2.0, rng.normal(size=(10, 3)) - 2.0])
    y = np.concatenate([np.ones(10), -np.ones(10)])
    spec = SvmSpec(X=X, y=y, variant="c-svc", C=1.0)
    eps_solve = 1e-3
    mdl = train(spec, eps_solve=eps_solve)
    assert abs(float(mdl.alpha @ y)) <= 3 * eps_solve


def test_gaussian_two_point_accuracy():
    spec = SvmSpec(X=TWO_POINT_X, y=TWO_POINT_Y, variant="c-svc", C=5.0,
                   kernel="gaussian")
    mdl = train(spec, eps_solve=1e-4)
    _, labels = predict(mdl, TWO_POINT_X)
    assert np.array_equal(labels, TWO_POINT_Y)


def test_two_point_margin_and_antisymmetry():
    spec = SvmSpec(X=TWO_POINT_X, y=TWO_POINT_Y, variant="hard")
    mdl = train(spec, eps_solve=1e-3)
    dec, _ = predict(mdl, TWO_POINT_X)
    assert np.all(np.abs(dec) >= 1.0 - 1e-3)
    flipped = SvmSpec(X=TWO_POINT_X, y=-TWO_POINT_Y, variant="hard")
    mdl_f = train(flipped, eps_solve=1e-3)
    dec_f, _ = predict(mdl_f, TWO_POINT_X)
    assert np.abs(dec + dec_f).max() <= 1e-6


def test_nu_svc_trains_offset_clusters(rng):
    Xp = rng.normal(size=(10, 2)) * 0.2 + [3.0, 0.0]
    Xm = rng.normal(size=(10, 2)) * 0.2 + [1.0, 0.0]
    X = np.vstack([Xp, Xm])
    y = np.concatenate([np.ones(10), -np.ones(10)])
    mdl = train(SvmSpec(X=X, y=y, variant="nu-svc", nu=0.3), eps_solve=1e-5)
    _, labels = predict(mdl, X)
    assert np.array_equal(labels, y)
    assert abs(float(mdl.alpha @ y)) <= 3e-5
    assert abs(float(mdl.alpha.sum()) - 0.3) <= 1e-3


def test_symmetric_dataset_zero_bias(rng):
    pts = rng.normal(size=(12, 2)) + np.array([2.5, 0.0])
    X = np.vstack([pts, -pts])
    y = np.concatenate([np.ones(12), -np.ones(12)])
    mdl = train(SvmSpec(X=X, y=y, variant="c-svc", C=1.0), eps_solve=1e-4)
    assert abs(mdl.bias) <= 1e-6


def test_recover_primal_degenerate():
    spec = SvmSpec(X=TWO_POINT_X, y=TWO_POINT_Y, variant="hard")
    with pytest.raises(ValidationError):
        recover_primal(np.zeros(2), spec)


def test_predict_dimension_mismatch():
    spec = SvmSpec(X=TWO_POINT_X, y=TWO_POINT_Y, variant="hard")
    mdl = train(spec, eps_solve=1e-2)
    with pytest.raises(ValidationError):
        predict(mdl, np.zeros((1, 3)))


def test_factored_vs_exact_decision(rng):
    n = 40
    X = rng.normal(size=(n, 3)) * 0.5
    y = np.sign(X[:, 0] + 0.1)
    y[y == 0] = 1.0
    spec = SvmSpec(X=X, y=y, variant="c-svc", C=1.0, kernel="gaussian")
    mdl = train(spec, eps_solve=1e-3)
    dec_f, _ = predict(mdl, X)
    dec_e, _ = predict(mdl, X, exact_kernel=True)
    eps1 = mdl.solve_report["kernel_eps"]
    bound = n * eps1 * np.abs(mdl.alpha).sum() + 1e-12
    assert np.abs(dec_f - dec_e).max() <= bound


def test_complementary_slackness_separable(rng):
    pts = rng.normal(size=(8, 2)) * 0.3
    X = np.vstack([pts + [3.0, 0.0], pts - [3.0, 0.0]])
    y = np.concatenate([np.ones(8), -np.ones(8)])
    spec = SvmSpec(X=X, y=y, variant="hard")
    mdl = train(spec, eps_solve=1e-5)
    dec, _ = predict(mdl, X)
    margins = y * dec
    slack = mdl.alpha * (margins - 1.0)
    assert np.abs(slack).max() <= 1e-2 * max(1.0, np.abs(mdl.alpha).max())


def test_eps_svr_fits_linear_data(rng):
    X = np.linspace(-1, 1, 12)[:, None]
    y_true = 0.8 * X[:, 0] + 0.2
    spec = SvmSpec(X=X, y=y_true, variant="eps-svr", C=20.0, eps_tube=0.05)
    mdl = train(spec, eps_solve=1e-4)
    fit, _ = predict(mdl, X)
    assert np.abs(fit - y_true).max() <= 0.05 + 2e-2


def test_nu_svr_runs(rng):
    X = np.linspace(-1, 1, 10)[:, None]
    y_true = -0.5 * X[:, 0] + 0.1
    spec = SvmSpec(X=X, y=y_true, variant="nu-svr", C=50.0, nu=0.6)
    mdl = train(spec, eps_solve=1e-4)
    fit, _ = predict(mdl, X)
    assert np.abs(fit - y_true).max() <= 0.2


def test_gaussian_error_chain(rng):
    # |objective(alpha; Q) - objective(alpha; Qtilde)| <= eps1 n ||alpha||_2^2
    n = 60
    X = rng.normal(size=(n, 3)) * 0.4
    y = np.sign(rng.normal(size=n))
    y[y == 0] = 1.0
    spec = SvmSpec(X=X, y=y, variant="c-svc", C=1.0, kernel="gaussian")
    mdl = train(spec, eps_solve=1e-3)
    eps1 = mdl.solve_report["kernel_eps"]
    K = kernel.exact_gaussian_kernel(X)
    Q = K * np.outer(y, y)
    Qt = mdl.factorization.U @ mdl.factorization.V.T * np.outer(y, y)
    a = mdl.alpha
    diff = abs(0.5 * a @ (Q @ a) - 0.5 * a @ (Qt @ a))
    assert diff <= 0.5 * eps1 * n * float(a @ a) + 1e-14


def test_one_class_covers_inliers(rng):
    X = rng.normal(size=(30, 2)) * 0.3
    spec = SvmSpec(X=X, variant="one-class", nu=0.2, kernel="gaussian")
    mdl = train(spec, eps_solve=1e-5)
    dec, _ = predict(mdl, X)
    # at most a nu fraction of training points fall outside (plus slack for
    # the strictly interior iterate)
    outliers = float(np.mean(dec < -1e-4))
    assert outliers <= 0.2 + 1.0 / 30.0
