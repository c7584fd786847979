import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psidim import margin, msvm
from psidim.data import fixture_blobs
from psidim.errors import ValidationError
from psidim.msvm import (BiasMode, KernelSpec, MSVMModel, TrainConfig, evaluate,
                         gram, lambda_phi, lambda_w, objective, project_bias,
                         train, zero_model)

KERNELS = [KernelSpec(), KernelSpec("polynomial", degree=2, offset=1.0),
           KernelSpec("polynomial", degree=3), KernelSpec("gaussian", bandwidth=0.7)]


@pytest.fixture(scope="module")
def blobs():
    return fixture_blobs()


@pytest.fixture(scope="module")
def fitted(blobs):
    return train(blobs.features, blobs.labels, KernelSpec(), TrainConfig(lam=0.01), q=3)


# -- kernels ------------------------------------------------------------------

def test_gram_examples():
    np.testing.assert_array_equal(gram(KernelSpec(), [[1, 0], [0, 1]]), np.eye(2))
    rng = np.random.default_rng(0)
    g = gram(KernelSpec("gaussian", bandwidth=0.5), rng.normal(size=(6, 3)))
    np.testing.assert_array_equal(np.diag(g), np.ones(6))
    assert gram(KernelSpec("polynomial", degree=2, offset=1.0), [[1, 0]])[0, 0] == 4.0


@pytest.mark.parametrize("kernel", KERNELS, ids=str)
def test_gram_symmetric_psd(kernel):
    rng = np.random.default_rng(1)
    for _ in range(10):
        k = gram(kernel, rng.normal(size=(int(rng.integers(1, 25)), 3)))
        np.testing.assert_array_equal(k, k.T)
        assert np.linalg.eigvalsh(k).min() >= -1e-8 * max(1.0, np.abs(k).max())


def test_kernel_parse():
    assert KernelSpec.parse("linear") == KernelSpec()
    assert KernelSpec.parse("poly:3:1.5") == KernelSpec("polynomial", degree=3, offset=1.5)
    assert KernelSpec.parse("gaussian:2") == KernelSpec("gaussian", bandwidth=2.0)
    for spec in KERNELS:
        assert KernelSpec.parse(str(spec)) == spec
    for bad in ("cubic", "poly", "gaussian:-1", "poly:0"):
        with pytest.raises(ValidationError):
            KernelSpec.parse(bad)


def test_gram_rejects_bad_points():
    with pytest.raises(ValidationError):
        gram(KernelSpec(), [[np.inf, 0]])
    with pytest.raises(ValidationError):
        gram(KernelSpec(), np.zeros((0, 2)))


def test_lambda_phi_examples():
    pts = [[1.0, 0.0], [0.0, 2.0]]
    assert lambda_phi(pts, KernelSpec("gaussian", bandwidth=0.3)) == 1.0
    assert lambda_phi(pts, KernelSpec()) == 2.0
    assert lambda_phi(pts, KernelSpec("polynomial", degree=2)) == 4.0


# -- scores and objective -------------------------------------------------------

def test_evaluate_examples():
    x = np.array([[0.6, 0.8]])
    assert np.all(evaluate(zero_model(x, 3, KernelSpec()), [1.0, 2.0]) == 0)
    model = MSVMModel(x, np.array([[1.0, -1.0, 0.0]]), np.zeros(3), KernelSpec())
    np.testing.assert_allclose(evaluate(model, x[0]), [1, -1, 0], atol=1e-15)


def test_evaluate_dimension_mismatch():
    model = zero_model([[0.0, 1.0]], 3, KernelSpec())
    with pytest.raises(ValidationError):
        evaluate(model, [1.0, 2.0, 3.0])


@pytest.mark.parametrize("kernel", KERNELS, ids=str)
def test_scores_match_gram_rows_and_sum_to_zero(kernel):
    rng = np.random.default_rng(2)
    x = rng.normal(size=(7, 2))
    beta = msvm._center_rows(rng.normal(size=(7, 4)))
    bias = project_bias(rng.normal(size=4), np.inf)
    model = MSVMModel(x, beta, bias, kernel)
    np.testing.assert_allclose(model.scores(x), gram(kernel, x) @ beta + bias, atol=1e-10)
    assert np.abs(model.scores(rng.normal(size=(20, 2))).sum(axis=1)).max() < 1e-9


def test_objective_examples(blobs):
    m = len(blobs)
    model = zero_model(blobs.features, 3, KernelSpec())
    assert objective(model, blobs.features, blobs.labels, 0.5) == m * 2
    # two separated points with score gaps >= 1: only the penalty is left
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    beta = np.array([[1.0, -0.5, -0.5], [-0.5, 1.0, -0.5]])
    sep = MSVMModel(x, beta, np.zeros(3), KernelSpec())
    pen = float(np.einsum("ik,ij,jk->", beta, gram(KernelSpec(), x), beta))
    assert objective(sep, x, [1, 2], 0.1) == pytest.approx(0.1 * pen, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_objective_convex(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, 2))
    y = rng.integers(1, 4, size=8)
    kernel = KERNELS[seed % len(KERNELS)]

    def model(b, c):
        return MSVMModel(x, msvm._center_rows(b), c - c.mean(), kernel)

    b1, b2 = rng.normal(size=(2, 8, 3))
    c1, c2 = rng.normal(size=(2, 3))
    mid = objective(model((b1 + b2) / 2, (c1 + c2) / 2), x, y, 0.3)
    ends = 0.5 * (objective(model(b1, c1), x, y, 0.3) + objective(model(b2, c2), x, y, 0.3))
    assert mid <= ends + 1e-9 * max(1.0, ends)


def test_project_bias():
    v = np.array([3.0, -1.0, 0.5])
    b = project_bias(v, 1.0)
    assert abs(b.sum()) < 1e-12 and np.abs(b).max() <= 1.0 + 1e-12
    np.testing.assert_allclose(project_bias(v, np.inf), v - v.mean())
    # projection is the nearest feasible point: compare with a grid
    grid = np.linspace(-1, 1, 201)
    best = min((np.sum((np.array([a, c, -a - c]) - v) ** 2), a, c)
               for a in grid for c in grid if abs(a + c) <= 1)
    assert np.sum((b - v) ** 2) <= best[0] + 1e-9


# -- training -------------------------------------------------------------------

def test_train_fixture(blobs, fitted):
    assert margin.empirical_zero_one_risk(fitted.scores(blobs.features), blobs.labels) == 0.0
    assert fitted.sum_to_zero_residual() < 1e-9
    h = np.array(fitted.history)
    assert np.all(np.diff(h) <= 0)
    assert h[-1] == objective(fitted, blobs.features, blobs.labels, 0.01)
    assert h[-1] <= objective(zero_model(blobs.features, 3, KernelSpec()),
                              blobs.features, blobs.labels, 0.01)
    # near the optimum of this convex problem (about 0.0045, from an external QP solver)
    assert h[-1] < 0.0046
    gammas = [g for g in np.linspace(0.05, 1.0, 20)
              if margin.empirical_margin_risk(fitted.scores(blobs.features), blobs.labels,
                                              margin.MarginConfig(g)) == 0]
    assert gammas


def test_train_is_deterministic(blobs, fitted):
    again = train(blobs.features, blobs.labels, KernelSpec(), TrainConfig(lam=0.01), q=3)
    np.testing.assert_array_equal(again.beta, fitted.beta)
    np.testing.assert_array_equal(again.bias, fitted.bias)


def test_train_time(blobs):
    start = time.perf_counter()
    train(blobs.features, blobs.labels, KernelSpec(), TrainConfig(lam=0.01), q=3)
    assert time.perf_counter() - start < 10.0


@pytest.mark.parametrize("kernel", KERNELS[1:], ids=str)
def test_train_other_kernels(blobs, kernel):
    model = train(blobs.features, blobs.labels, kernel, TrainConfig(lam=0.01, max_iters=800), q=3)
    assert model.sum_to_zero_residual() < 1e-9
    assert np.all(np.diff(model.history) <= 0)
    assert margin.empirical_zero_one_risk(model.scores(blobs.features), blobs.labels) == 0.0


def test_one_point_large_lambda():
    for kernel in KERNELS:
        model = train([[1.0, 2.0]], [2], kernel, TrainConfig(lam=1e4), q=3)
        assert np.abs(model.beta).max() < 1e-3


def test_zero_bias_mode_and_box(blobs):
    zero = train(blobs.features, blobs.labels, KernelSpec(),
                 TrainConfig(lam=0.01, bias_mode=BiasMode.ZERO, max_iters=300), q=3)
    assert np.all(zero.bias == 0)
    boxed = train(blobs.features, blobs.labels, KernelSpec(),
                  TrainConfig(lam=0.01, bias_bound=0.2, max_iters=300), q=3)
    assert np.abs(boxed.bias).max() <= 0.2 + 1e-12
    assert abs(boxed.bias.sum()) < 1e-9


def test_max_iters_flags_unconverged(blobs):
    model = train(blobs.features, blobs.labels, KernelSpec(), TrainConfig(max_iters=3), q=3)
    assert not model.converged
    assert model.history[-1] <= model.history[0]


def test_train_validation(blobs):
    with pytest.raises(ValidationError):
        TrainConfig(lam=0)
    with pytest.raises(ValidationError):
        TrainConfig(max_iters=0)
    with pytest.raises(ValidationError):
        train(blobs.features, blobs.labels, KernelSpec(), q=2)
    with pytest.raises(ValidationError):
        train(blobs.features, blobs.labels[:-1], KernelSpec())
    with pytest.raises(ValidationError):
        train([[np.nan, 0.0]], [1], KernelSpec(), q=3)


# -- norms and serialisation -----------------------------------------------------

def test_lambda_w_examples():
    x = np.array([[1.0, 0.0]])
    assert lambda_w(zero_model(x, 3, KernelSpec())) == 0.0
    model = MSVMModel(x, np.array([[1.0, -1.0, 0.0]]), np.zeros(3), KernelSpec())
    assert lambda_w(model) == 1.0


def test_lambda_w_recentering_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 2))
    beta = msvm._center_rows(rng.normal(size=(5, 3)))
    shifted = msvm._center_rows(beta + rng.normal(size=(5, 1)))
    a = lambda_w(MSVMModel(x, beta, np.zeros(3), KernelSpec()))
    b = lambda_w(MSVMModel(x, shifted, np.zeros(3), KernelSpec()))
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("kernel", KERNELS, ids=str)
def test_save_load_bit_identical(tmp_path, blobs, kernel):
    model = train(blobs.features, blobs.labels, kernel, TrainConfig(max_iters=50), q=3)
    path = tmp_path / "m.json"
    model.save(path)
    back = MSVMModel.load(path)
    queries = np.random.default_rng(4).normal(size=(25, 2)) * 3
    assert np.array_equal(back.scores(queries), model.scores(queries))
    assert back.kernel == model.kernel


def test_load_rejects_wrong_format(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValidationError):
        MSVMModel.load(p)
    p.write_text('{"format": "psidim-msvm", "version": 99}')
    with pytest.raises(ValidationError):
        MSVMModel.load(p)
