import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import jacobi_mg, textbook_cg
from flexmg import GridSpec, MgPreconditioner, StencilOperator, beta, build_hierarchy, record_c_norm, solve
from flexmg.krylov import CSV_COLUMNS, BETA_VARIANTS


def test_zero_rhs_zero_start_converges_immediately():
    A = StencilOperator(GridSpec.cube(4))
    rep = solve(A, np.zeros(A.size), x0=np.zeros(A.size))
    assert rep.outcome == "converged" and rep.iterations == 0


@pytest.mark.parametrize("variant", ["standard", "flexible"])
def test_plain_cg_matches_textbook(variant):
    A = StencilOperator(GridSpec.cube(5))
    b = np.ones(A.size)
    x0 = np.random.default_rng(42).random(A.size)
    rep = solve(A, b, None, variant, tol=1e-300, maxit=30)
    ref = textbook_cg(A.to_dense(), b, x0, 30) / np.linalg.norm(b)
    np.testing.assert_allclose(rep.r2rel, ref, rtol=1e-12, atol=1e-12 * ref[0])


def test_beta_worked_example():
    s, r, r_prev, s_prev = np.array([1.0, 1.0]), np.array([2.0, 0.0]), np.array([0.0, 3.0]), np.array([0.0, 1.0])
    assert beta("standard", s, r, s_prev, r_prev) == pytest.approx(2 / 3)
    assert beta("flexible", s, r, s_prev, r_prev) == pytest.approx(-1 / 3)
    assert beta("psd", s, r, s_prev, r_prev) == 0.0
    with pytest.raises(ValueError):
        beta("polak", s, r, s_prev, r_prev)


def test_betas_agree_for_spd_preconditioner():
    A = StencilOperator(GridSpec.cube(6))
    T = build_hierarchy(A, jacobi_mg(1, 1, 30))
    std = solve(A, np.ones(A.size), T, "standard", tol=1e-10)
    flex = solve(A, np.ones(A.size), T, "flexible", tol=1e-10)
    assert std.iterations == flex.iterations
    for a, b in zip(std.records[1:], flex.records[1:]):
        assert abs(a.beta - b.beta) <= 1e-10 * abs(a.beta)


def test_c_norm_examples(rng):
    b = rng.standard_normal(10)
    r = rng.standard_normal(10)
    assert record_c_norm(None, r, b) == pytest.approx(np.linalg.norm(r) / np.linalg.norm(b))
    assert record_c_norm(lambda v: 3 * v, b, b) == pytest.approx(1.0)
    # (Tr, r) < 0 for a rotation-like T
    rot = lambda v: np.array([v[1], -v[0]]) - 0.1 * v  # noqa: E731
    assert record_c_norm(rot, np.array([1.0, 0.0]), np.array([1.0, 1.0])) is None


def test_undefined_c_norm_is_recorded_with_two_norm():
    # indefinite diagonal T: (T r, r) turns negative after two steps
    A = StencilOperator(GridSpec.cube(3))
    d = np.ones(A.size)
    d[13] = -1.0
    rep = solve(A, np.ones(A.size), lambda v: d * v, "psd", maxit=20)
    assert rep.records[-1].rCrel is None
    assert np.isfinite(rep.records[-1].r2rel)
    assert "nan" in rep.to_csv().splitlines()[-1]
    assert rep.outcome == "breakdown" and "(s_k, r_k)" in rep.breakdown_reason


@pytest.mark.parametrize("variant", BETA_VARIANTS)
def test_scaling_invariance(variant):
    A = StencilOperator(GridSpec.cube(7))
    H = build_hierarchy(A, jacobi_mg(1, 0))
    a = solve(A, np.ones(A.size), H.apply, variant, maxit=15, tol=1e-300)
    b = solve(A, np.ones(A.size), lambda r: 7.5 * H.apply(r), variant, maxit=15, tol=1e-300)
    np.testing.assert_allclose(a.r2rel, b.r2rel, rtol=1e-9, atol=1e-14)
    np.testing.assert_allclose(a.x, b.x, rtol=0, atol=1e-12 * np.abs(a.x).max())


def test_determinism():
    A = StencilOperator(GridSpec.cube(8))
    T = build_hierarchy(A, jacobi_mg(1, 0))
    one = solve(A, np.ones(A.size), T, "flexible")
    two = solve(A, np.ones(A.size), T, "flexible")
    assert [(r.r2rel, r.alpha, r.beta, r.work_units) for r in one.records] == \
           [(r.r2rel, r.alpha, r.beta, r.work_units) for r in two.records]
    assert np.array_equal(one.x, two.x)


def test_max_iterations_outcome():
    A = StencilOperator(GridSpec.cube(6))
    rep = solve(A, np.ones(A.size), None, "psd", tol=1e-12, maxit=3)
    assert rep.outcome == "max-iterations" and rep.iterations == 3


def test_work_excludes_telemetry_application():
    A = StencilOperator(GridSpec.cube(15))
    M = MgPreconditioner.build(A, jacobi_mg(1, 1))
    rep = solve(A, np.ones(A.size), M, "flexible")
    per_cycle = M.hierarchy.units_per_cycle()
    # one application per iteration, the first one at the start
    assert rep.records[0].work_units == per_cycle
    assert rep.work_units == rep.iterations * per_cycle


def test_drift_monitor_quiet_on_healthy_run():
    A = StencilOperator(GridSpec.cube(10))
    rep = solve(A, np.ones(A.size), None, "standard", tol=1e-300, maxit=40)
    assert not rep.drift_flagged and rep.max_drift < 1e-8


def test_record_vectors_and_residual_after():
    A = StencilOperator(GridSpec.cube(4))
    rep = solve(A, np.ones(A.size), None, "psd", tol=1e-300, maxit=5, record_vectors=True)
    assert len(rep.residuals) == 6
    assert rep.residual_after(0) == rep.initial_r2rel
    assert rep.residual_after(5) == pytest.approx(np.linalg.norm(rep.residuals[5]) / np.sqrt(A.size))


def test_csv_schema(tmp_path):
    A = StencilOperator(GridSpec.cube(5))
    rep = solve(A, np.ones(A.size), build_hierarchy(A, jacobi_mg(1, 0, 10)), "flexible")
    text = rep.to_csv(tmp_path / "h.csv")
    lines = text.splitlines()
    assert tuple(lines[0].split(",")) == CSV_COLUMNS
    assert len(lines) == rep.iterations + 1
    assert (tmp_path / "h.csv").read_text() == text
    assert rep.summary().startswith("flexible: converged after")


def test_input_validation():
    A = StencilOperator(GridSpec.cube(3))
    with pytest.raises(ValueError):
        solve(A, np.ones(A.size), variant="fr")
    with pytest.raises(ValueError):
        solve(A, np.ones(5))
    with pytest.raises(ValueError):
        solve(A, np.ones(A.size), tol=0)


def test_fig4_c_norm_analog(op80, smg80):
    # C-norm telemetry with C = T on the 80^3 stall case
    b = np.ones(op80.size)
    res = {v: solve(op80, b, smg80, v, tol=1e-300, maxit=16) for v in BETA_VARIANTS}
    std = res["standard"].rCrel
    assert np.all(std[np.isfinite(std)] > 3e-2)
    assert res["flexible"].rCrel[-1] < 1e-12
    assert res["psd"].rCrel[-1] < 1e-12


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 6), seed=st.integers(0, 1000), variant=st.sampled_from(["standard", "flexible"]))
def test_unpreconditioned_variants_coincide(n, seed, variant):
    A = StencilOperator(GridSpec.cube(n))
    b = np.random.default_rng(seed).standard_normal(A.size)
    a = solve(A, b, None, "standard", tol=1e-8, seed=seed)
    c = solve(A, b, None, variant, tol=1e-8, seed=seed)
    assert a.iterations == c.iterations
    np.testing.assert_allclose(a.x, c.x, atol=1e-12 * max(1.0, np.abs(a.x).max()))
