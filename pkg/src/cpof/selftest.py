"""Fast invariant checks run by ``cpof selftest``.

Every check returns ``(ok, detail)``. With ``inject_fault=True`` the POF
used by the unitarity check has its modulus halved, which must make that
check fail.
"""

import math

import numpy as np

from .filtering import CirculantOperator, apply_circulant, make_pof
from .sensing import SensingOperator, apply_A, apply_A_adjoint, make_rng, measure, \
    measure_differential_binary, select_rows
from .solver import Auto, LassoProblem, SolverOptions, project_l1_ball, solve_lasso
from .xforms import BasisKind, dense_basis, transform_1d, transform_2d

__all__ = ["CHECKS", "run_selftest", "l1_projection_oracle"]

_TOL = 1e-10


def _crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def l1_projection_oracle(v, tau, iters: int = 200):
    """Projection onto the l1 ball by bisection on the soft threshold.

    Independent of the sort-based projection used by the solver; accurate
    to roughly machine precision after 200 halvings.
    """
    v = np.asarray(v)
    mag = np.abs(v)
    if mag.sum() <= tau:
        return v.copy()
    lo, hi = 0.0, float(mag.max())
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(mag - mid, 0.0).sum() > tau:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(mag > 0, np.maximum(mag - theta, 0.0) / mag, 0.0)
    return v * scale


def check_dense_equivalence(rng):
    worst = 0.0
    for basis in BasisKind:
        for k in range(1, 7):
            n = 2 ** k
            mat = dense_basis(basis, n)
            v = _crandn(rng, n)
            worst = max(worst, float(np.abs(transform_1d(v, basis) - mat @ v).max()),
                        float(np.abs(transform_1d(v, basis, "adjoint") - mat.conj().T @ v).max()))
    return worst <= _TOL, f"max deviation {worst:.2e} for n = 2..64"


def check_round_trip(rng):
    worst = 0.0
    for basis in BasisKind:
        img = _crandn(rng, (256, 256))
        back = transform_2d(transform_2d(img, basis), basis, "adjoint")
        worst = max(worst, float(np.abs(back - img).max()))
    return worst <= _TOL, f"max round-trip error {worst:.2e} at 256x256"


def check_pof_unitarity(rng, inject_fault=False):
    pof = make_pof(rng.random((16, 16)), shape=(64, 64))
    if inject_fault:
        pof = CirculantOperator(0.5 * pof.transfer)
    v = _crandn(rng, (64, 64))
    err = float(np.abs(apply_circulant(pof, apply_circulant(pof, v), "adjoint") - v).max())
    return err <= _TOL, f"max |T^H T v - v| = {err:.2e}"


def _operators(rng, m=64):
    side = 16
    pof = make_pof(rng.random((5, 5)), shape=(side, side))
    for basis in BasisKind:
        yield basis, SensingOperator(select_rows(basis, side * side, m, int(rng.integers(2 ** 32))), pof)


def check_adjoint(rng):
    worst = 0.0
    for _, op in _operators(rng):
        s = _crandn(rng, (op.side, op.side))
        y = _crandn(rng, op.selection.m)
        lhs = np.vdot(y, apply_A(op, s))
        rhs = np.vdot(apply_A_adjoint(op, y), s)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return worst <= _TOL, f"max relative adjoint mismatch {worst:.2e}"


def check_semi_unitary(rng):
    worst = 0.0
    for _, op in _operators(rng):
        y = _crandn(rng, op.selection.m)
        worst = max(worst, float(np.abs(apply_A(op, apply_A_adjoint(op, y)) - y).max()))
    return worst <= _TOL, f"max |A A^H y - y| = {worst:.2e}"


def check_l1_projection(rng):
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 65))
        v = _crandn(rng, n) if rng.random() < 0.5 else rng.standard_normal(n)
        tau = float(rng.random() * 1.5 * np.abs(v).sum())
        worst = max(worst, float(np.abs(project_l1_ball(v, tau) - l1_projection_oracle(v, tau)).max()))
    example = project_l1_ball(np.array([3.0, 1.0]), 2.0)
    ok = worst <= 1e-12 and np.array_equal(example, np.array([2.0, 0.0]))
    return ok, f"max deviation {worst:.2e}; [3, 1] at tau 2 -> {example.tolist()}"


def check_differential(rng):
    side = 16
    scene = rng.random((side, side)) * 255.0
    sel = select_rows("wh", side * side, 32, int(rng.integers(2 ** 32)))
    diff = measure_differential_binary(scene, sel, bias=float(rng.random() * 1e3)).samples
    ref = measure(scene, sel).samples * math.sqrt(side * side)
    err = float(np.abs(diff - ref).max() / np.abs(ref).max())
    return err <= 1e-12, f"relative deviation {err:.2e}"


def check_planted(rng):
    side, k, m = 8, 3, 32
    pof = make_pof(rng.random((4, 4)), shape=(side, side))
    op = SensingOperator(select_rows("wh", side * side, m, int(rng.integers(2 ** 32))), pof)
    s = np.zeros(side * side, dtype=np.complex128)
    s[rng.choice(side * side, k, replace=False)] = _crandn(rng, k)
    s = s.reshape(side, side)
    res = solve_lasso(LassoProblem(op, apply_A(op, s), Auto(0.0)), SolverOptions(sigma_tol=1e-6))
    err = float(np.linalg.norm(res.s_hat - s) / np.linalg.norm(s))
    return err <= 1e-4 and res.converged, f"relative error {err:.2e} in {res.iterations} iterations"


CHECKS = [
    ("dense transform equivalence", check_dense_equivalence),
    ("2D transform round trip", check_round_trip),
    ("POF unitarity", check_pof_unitarity),
    ("sensing adjoint", check_adjoint),
    ("semi-unitary A A^H = I", check_semi_unitary),
    ("l1 projection oracle", check_l1_projection),
    ("differential binary identity", check_differential),
    ("planted recovery", check_planted),
]


def run_selftest(seed: int = 0, inject_fault: bool = False, out=print) -> bool:
    """Run all checks, print one line each, return True iff all pass."""
    all_ok = True
    for i, (name, check) in enumerate(CHECKS):
        rng = make_rng(seed + i)
        if check is check_pof_unitarity:
            ok, detail = check(rng, inject_fault)
        else:
            ok, detail = check(rng)
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
