import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from scipy.sparse.linalg import aslinearoperator

from cpof.errors import ParameterError, SizeError
from cpof.filtering import apply_circulant, make_pof
from cpof.harness.experiment import psnr
from cpof.sensing import SensingOperator, apply_A, apply_A_adjoint, measure, select_rows
from cpof.selftest import l1_projection_oracle
from cpof.solver import (
    Auto,
    LassoProblem,
    SolverOptions,
    project_l1_ball,
    reconstruct_scene,
    solve_lasso,
)

from conftest import crandn


def sort_projection_oracle(v, tau):
    """Textbook sort-and-threshold projection written out element by element."""
    mag = np.abs(v)
    if mag.sum() <= tau:
        return v.copy()
    u = sorted(mag, reverse=True)
    running = 0.0
    theta = 0.0
    for j, uj in enumerate(u, start=1):
        running += uj
        candidate = (running - tau) / j
        if uj > candidate:
            theta = candidate
    out = np.zeros_like(v)
    keep = mag > theta
    out[keep] = v[keep] * (mag[keep] - theta) / mag[keep]
    return out


def planted(rng, side, k, m, basis="wh", seed=0):
    pof = make_pof(rng.random((4, 4)), shape=(side, side))
    op = SensingOperator(select_rows(basis, side * side, m, seed), pof)
    s = np.zeros(side * side, dtype=np.complex128)
    s[rng.choice(side * side, k, replace=False)] = crandn(rng, k)
    return op, s.reshape(side, side)


# l1 projection

def test_projection_examples():
    np.testing.assert_array_equal(project_l1_ball(np.array([3.0, 1.0]), 2.0), [2.0, 0.0])
    v = np.array([0.5, -0.25])
    np.testing.assert_array_equal(project_l1_ball(v, 1.0), v)
    theta, phi = 0.7, -2.1
    out = project_l1_ball(np.array([3 * np.exp(1j * theta), np.exp(1j * phi)]), 2.0)
    np.testing.assert_allclose(out, [2 * np.exp(1j * theta), 0], atol=1e-15)
    np.testing.assert_array_equal(project_l1_ball(np.array([1.0, -2.0]), 0.0), [0.0, 0.0])


@pytest.mark.parametrize("seed", range(20))
def test_projection_matches_oracles(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 257))
    v = crandn(rng, n)
    tau = rng.random() * np.abs(v).sum()
    out = project_l1_ball(v, tau)
    np.testing.assert_allclose(out, sort_projection_oracle(v, tau), atol=1e-12)
    np.testing.assert_allclose(out, l1_projection_oracle(v, tau), atol=1e-12)


@given(v=hnp.arrays(np.float64, st.integers(1, 40), elements=st.floats(-100, 100)),
       frac=st.floats(0.0, 1.2))
def test_projection_properties(v, frac):
    tau = frac * np.abs(v).sum()
    p = project_l1_ball(v, tau)
    assert np.abs(p).sum() <= tau * (1 + 1e-12) + 1e-12
    # idempotent, sign preserving, no closer point on the ball (variational inequality)
    np.testing.assert_allclose(project_l1_ball(p, tau), p, atol=1e-10)
    assert np.all(p * v >= 0)
    assert np.all(np.abs(p) <= np.abs(v) + 1e-12)
    rng = np.random.default_rng(0)
    for _ in range(5):
        z = project_l1_ball(rng.standard_normal(v.shape) * 10, tau)
        assert np.dot(v - p, z - p) <= 1e-8 * (1 + np.abs(v).sum() ** 2)


def test_projection_negative_tau():
    with pytest.raises(ParameterError):
        project_l1_ball(np.ones(3), -1.0)


# solver

def test_zero_data_returns_zero():
    op = SensingOperator(select_rows("wh", 64, 10, 0))
    res = solve_lasso(LassoProblem(op, np.zeros(10), 5.0))
    np.testing.assert_array_equal(res.s_hat, 0)
    assert res.residual_norm == 0.0 and res.converged and res.iterations == 0


@pytest.mark.parametrize("basis", ["wh", "noiselet", "dft"])
def test_full_measurement_fixed_tau(basis, rng):
    pof = make_pof(rng.random((3, 3)), shape=(8, 8))
    op = SensingOperator(select_rows(basis, 64, 64, 0), pof)
    y = crandn(rng, 64)
    ahy = apply_A_adjoint(op, y)
    res = solve_lasso(LassoProblem(op, y, float(np.abs(ahy).sum())))
    assert res.converged and res.iterations <= 5
    np.testing.assert_allclose(res.s_hat, ahy, atol=1e-8 * np.linalg.norm(y))
    assert res.residual_norm <= 1e-8 * np.linalg.norm(y)


def test_full_measurement_auto_fast_path(rng):
    pof = make_pof(rng.random((5, 5)), shape=(32, 32))
    op = SensingOperator(select_rows("noiselet", 1024, 1024, 0), pof)
    x = rng.random((32, 32))
    res = solve_lasso(LassoProblem(op, measure(x, op.selection).samples, Auto(0.0)))
    assert res.converged and res.iterations <= 5


def test_planted_recovery_n64(rng):
    fails = 0
    for seed in range(10):
        op, s = planted(np.random.default_rng(seed), 8, 3, 32, seed=seed)
        res = solve_lasso(LassoProblem(op, apply_A(op, s), Auto(0.0)), SolverOptions(sigma_tol=1e-6))
        err = np.linalg.norm(res.s_hat - s) / np.linalg.norm(s)
        fails += not (res.converged and err <= 1e-4)
    assert fails == 0


def test_auto_sigma_hits_residual_target(rng):
    op, s = planted(rng, 16, 8, 100)
    y = apply_A(op, s)
    y = y + 0.05 * crandn(rng, y.shape)
    sigma = 0.05 * np.sqrt(2 * 100)
    res = solve_lasso(LassoProblem(op, y, Auto(sigma)))
    assert res.converged
    assert res.residual_norm == pytest.approx(sigma, abs=1e-4 * np.linalg.norm(y))


def test_feasibility_at_every_iterate(rng):
    op, s = planted(rng, 16, 10, 80)
    seen = []

    def check(x, tau):
        seen.append(np.abs(x).sum() <= tau * (1 + 1e-8))

    solve_lasso(LassoProblem(op, apply_A(op, s), Auto(0.0)), SolverOptions(callback=check))
    solve_lasso(LassoProblem(op, apply_A(op, s), 1.5), SolverOptions(callback=check))
    assert seen and all(seen)


def test_pareto_curve_non_increasing(rng):
    op, s = planted(rng, 16, 10, 80)
    y = apply_A(op, s)
    taus = np.linspace(0, 1.2, 9) * np.abs(s).sum()
    opts = SolverOptions(tol=1e-10, max_iter=3000)
    phi = [solve_lasso(LassoProblem(op, y, float(t)), opts).residual_norm for t in taus]
    # a relative gap of tol pins phi only to about sqrt(tol) near phi = 0
    assert np.all(np.diff(phi) <= 1e-5 * np.linalg.norm(y))
    assert phi[-1] <= 1e-5 * np.linalg.norm(y)
    assert phi[0] == pytest.approx(np.linalg.norm(y))


def projected_gradient_qp(a, y, tau, x0, iters=20000):
    """Plain projected gradient with step 1/L on a dense matrix."""
    step = 1.0 / np.linalg.norm(a, 2) ** 2
    x = l1_projection_oracle(x0, tau)
    for _ in range(iters):
        x_new = l1_projection_oracle(x - step * (a.conj().T @ (a @ x - y)), tau)
        if np.linalg.norm(x_new - x) <= 1e-12:
            return x_new
        x = x_new
    return x


@pytest.mark.parametrize("seed", range(6))
def test_dense_qp_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 13))
    m = int(rng.integers(2, min(8, n - 1) + 1))
    a = crandn(rng, (m, n))
    y = crandn(rng, m)
    tau = 0.5 * rng.random() * np.abs(np.linalg.lstsq(a, y, rcond=None)[0]).sum()
    obj = lambda x: 0.5 * np.linalg.norm(a @ x - y) ** 2  # noqa: E731
    best = min(obj(projected_gradient_qp(a, y, tau, crandn(rng, n))) for _ in range(3))
    res = solve_lasso(LassoProblem(a, y, tau), SolverOptions(tol=1e-12, max_iter=5000))
    assert np.abs(res.s_hat).sum() <= tau * (1 + 1e-8)
    assert obj(res.s_hat) == pytest.approx(best, abs=1e-6)


def test_linear_operator_and_ndarray_agree(rng):
    a = crandn(rng, (6, 10))
    y = crandn(rng, 6)
    r1 = solve_lasso(LassoProblem(a, y, 1.0))
    r2 = solve_lasso(LassoProblem(aslinearoperator(a), y, 1.0))
    np.testing.assert_allclose(r1.s_hat, r2.s_hat, atol=1e-12)


def test_non_convergence_is_flagged(rng):
    op, s = planted(rng, 16, 10, 60)
    res = solve_lasso(LassoProblem(op, apply_A(op, s), Auto(0.0)), SolverOptions(max_iter=3))
    assert not res.converged and res.iterations <= 3


def test_solver_errors(rng):
    op = SensingOperator(select_rows("wh", 64, 10, 0))
    with pytest.raises(SizeError):
        solve_lasso(LassoProblem(op, np.ones(9)))
    with pytest.raises(ParameterError):
        LassoProblem(op, np.ones(10), -1.0)
    with pytest.raises(ParameterError):
        Auto(-0.1)
    with pytest.raises(ParameterError):
        solve_lasso(LassoProblem(object(), np.ones(10)))


# reconstruction

def test_conjugate_reconstruction_full_measurement(rng):
    x = rng.random((16, 16)) * 255
    pof = make_pof(rng.random((4, 4)), shape=(16, 16))
    op = SensingOperator(select_rows("noiselet", 256, 256, 0), pof)
    meas = measure(x, op.selection)
    res = solve_lasso(LassoProblem(op, meas.samples, Auto(0.0)), SolverOptions(sigma_tol=1e-10))
    np.testing.assert_allclose(reconstruct_scene(res, pof).real, x, atol=1e-8 * np.abs(x).max())


def test_conjugate_undoes_correlation(rng):
    x = rng.random((16, 16))
    pof = make_pof(rng.random((4, 4)), shape=(16, 16))
    s = apply_circulant(pof, x)
    res = solve_lasso(LassoProblem(np.eye(1), np.zeros(1)))
    res.s_hat = s
    np.testing.assert_allclose(reconstruct_scene(res, pof), x, atol=1e-12)


def test_conjugate_beats_direct_on_sparse_correlation_scene():
    rng = np.random.default_rng(4)
    side, rho = 128, 8
    n = side * side
    pof = make_pof(rng.random((20, 7)), shape=(side, side))
    # a scene whose filtered version is sparse but whose pixels are not
    s_true = np.zeros(n, dtype=np.complex128)
    s_true[rng.choice(n, 60, replace=False)] = 100 * (1 + rng.random(60))
    # real, since the filter of a real reference is Hermitian; an added offset
    # would put a constant into the plane and destroy its sparsity
    x = apply_circulant(pof, s_true.reshape(side, side), "adjoint").real
    sel = select_rows("wh", n, n // rho, 1)
    meas = measure(x, sel)
    res = solve_lasso(LassoProblem(SensingOperator(sel, pof), meas.samples, Auto(0.0)),
                      SolverOptions(sigma_tol=1e-3))
    peak = np.ptp(x)
    conj = psnr(x, reconstruct_scene(res, pof).real, peak)
    direct = psnr(x, reconstruct_scene(res, mode="direct", measurement=meas,
                                       opts=SolverOptions(sigma_tol=1e-3)).real, peak)
    assert conj > direct


def test_reconstruct_errors(rng):
    res = solve_lasso(LassoProblem(np.eye(2), np.zeros(2)))
    with pytest.raises(ParameterError):
        reconstruct_scene(res, None, "conjugate")
    with pytest.raises(ParameterError):
        reconstruct_scene(res, None, "direct")
    with pytest.raises(ParameterError):
        reconstruct_scene(res, None, "sideways")
