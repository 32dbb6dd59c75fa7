import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexmg import GridSpec, StencilOperator, SmootherConfig, WorkCounter, smooth, smoother_iteration_matrix
from flexmg.analysis import symmetry_defect
from flexmg.smoothing import SMOOTHER_KINDS, Smoother

KINDS = list(SMOOTHER_KINDS)


@pytest.fixture(scope="module")
def A4():
    return StencilOperator(GridSpec.cube(4))


@pytest.mark.parametrize("kind", KINDS)
def test_zero_steps_is_identity(kind, A4, rng):
    x = rng.standard_normal(A4.size)
    assert np.array_equal(smooth(A4, np.ones(A4.size), x, SmootherConfig(kind), steps=0), x)


@pytest.mark.parametrize("kind", KINDS)
def test_exact_solution_is_fixed_point(kind, A4, rng):
    x = rng.standard_normal(A4.size)
    b = A4.apply(x)
    y = smooth(A4, b, x, SmootherConfig(kind), steps=3)
    assert np.max(np.abs(y - x)) <= 1e-14 * np.max(np.abs(x)) * 10


def test_jacobi_on_eigenvector(A4):
    lam, V = np.linalg.eigh(A4.to_dense())
    E = smoother_iteration_matrix(A4, SmootherConfig("weighted-jacobi", 0.8))
    for j in (0, 17, 63):
        v = V[:, j]
        out = smooth(A4, np.zeros(A4.size), v, SmootherConfig("weighted-jacobi", 0.8))
        np.testing.assert_allclose(out, (1 - 0.8 * lam[j] / 6) * v, atol=1e-12)
        np.testing.assert_allclose(E @ v, out, atol=1e-12)


def test_jacobi_iteration_matrix_symmetric(A4):
    E = smoother_iteration_matrix(A4)
    assert np.max(np.abs(E - E.T)) <= 1e-13
    np.testing.assert_allclose(E, np.eye(A4.size) - 0.8 / 6 * A4.to_dense(), atol=1e-15)


@pytest.mark.parametrize("kind", ["red-black-gauss-seidel", "xy-plane-zebra"])
def test_ordered_smoothers_are_nonsymmetric(kind, A4):
    assert symmetry_defect(smoother_iteration_matrix(A4, SmootherConfig(kind))) > 1e-3


@pytest.mark.parametrize("kind", ["red-black-gauss-seidel", "xy-plane-zebra"])
def test_reverse_sweep_is_adjoint_in_energy(kind, A4):
    # forward then reverse colours gives an A-symmetric smoother: A E_rev = (A E_fwd)'
    Ad = A4.to_dense()
    Ef = smoother_iteration_matrix(A4, SmootherConfig(kind))
    Er = smoother_iteration_matrix(A4, SmootherConfig(kind), reverse=True)
    np.testing.assert_allclose(Ad @ Er, (Ad @ Ef).T, atol=1e-13)


@pytest.mark.parametrize("kind", KINDS)
def test_two_steps_compose(kind, A4):
    E = smoother_iteration_matrix(A4, SmootherConfig(kind))
    E2 = smoother_iteration_matrix(A4, SmootherConfig(kind), steps=2)
    np.testing.assert_allclose(E2, E @ E, atol=1e-13)


@pytest.mark.parametrize("kind", KINDS)
def test_error_propagation_is_linear(kind, A4, rng):
    E = smoother_iteration_matrix(A4, SmootherConfig(kind))
    xs = rng.standard_normal(A4.size)
    b = A4.apply(xs)
    x0 = rng.standard_normal(A4.size)
    x1 = smooth(A4, b, x0, SmootherConfig(kind))
    np.testing.assert_allclose(x1 - xs, E @ (x0 - xs), atol=1e-12)


def test_jacobi_energy_monotone(rng):
    A = StencilOperator(GridSpec.cube(6))
    Ad = A.to_dense()
    for _ in range(100):
        xs = rng.standard_normal(A.size)
        b = Ad @ xs
        x = rng.standard_normal(A.size)
        y = smooth(A, b, x, SmootherConfig("weighted-jacobi", rng.uniform(0.1, 1.0)))
        e0, e1 = x - xs, y - xs
        assert e1 @ Ad @ e1 <= e0 @ Ad @ e0 * (1 + 1e-14)


def test_plane_jacobi_solves_planes_exactly(rng):
    # omega = 1: each plane satisfies its 2D system with neighbour planes on the right-hand side
    A = StencilOperator(GridSpec(5, 4, 3))
    nz, ny, nx = A.shape
    b = rng.standard_normal(A.size)
    x = rng.standard_normal(A.size)
    y = smooth(A, b, x, SmootherConfig("xy-plane-jacobi", 1.0))
    X, Y, B = x.reshape(A.shape), y.reshape(A.shape), b.reshape(A.shape)
    # a one-plane grid keeps the full diagonal 6 with -1 in-plane couplings
    D = StencilOperator(GridSpec(nx, ny, 1)).to_dense()
    for k in range(nz):
        rhs = B[k].ravel().copy()
        if k > 0:
            rhs += X[k - 1].ravel()
        if k < nz - 1:
            rhs += X[k + 1].ravel()
        np.testing.assert_allclose(D @ Y[k].ravel(), rhs, atol=1e-12)


def test_work_counter_counts_unknowns(A4):
    w = WorkCounter()
    smooth(A4, np.zeros(A4.size), np.ones(A4.size), steps=3, work=w)
    assert w.units == 3 * A4.size


def test_config_validation():
    with pytest.raises(ValueError):
        SmootherConfig("sor")
    with pytest.raises(ValueError):
        SmootherConfig(omega=0.0)


def test_plane_cg_option_close_to_direct(A4, rng):
    b = rng.standard_normal(A4.size)
    x = rng.standard_normal(A4.size)
    direct = Smoother(A4, SmootherConfig("xy-plane-jacobi")).sweep(b, x)
    iterative = Smoother(A4, SmootherConfig("xy-plane-jacobi", plane_tol=1e-12)).sweep(b, x)
    np.testing.assert_allclose(iterative, direct, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(KINDS), n=st.integers(2, 5), seed=st.integers(0, 10_000))
def test_sweep_does_not_mutate_inputs(kind, n, seed):
    A = StencilOperator(GridSpec.cube(n))
    r = np.random.default_rng(seed)
    b, x = r.standard_normal((2, A.size))
    b0, x0 = b.copy(), x.copy()
    Smoother(A, SmootherConfig(kind)).sweep(b, x)
    assert np.array_equal(b, b0) and np.array_equal(x, x0)
