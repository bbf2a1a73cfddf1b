"""Lasso recovery by spectral projected gradient over the complex l1 ball.

The solver minimizes ``||A s - y||_2`` subject to ``sum |s_k| <= tau``. The
radius is either fixed or found by Newton iterations on the Pareto curve
``phi(tau) = ||A s_tau - y||_2`` so that ``phi(tau) = sigma``; this follows
the structure of SPGL1 (van den Berg and Friedlander, 2008).

The operator is only touched through forward and adjoint products. A
:class:`~cpof.sensing.SensingOperator`, a ``scipy.sparse.linalg.LinearOperator``
or a dense matrix are all accepted.
"""

from dataclasses import dataclass, field
import math
from typing import Callable, Optional, Union

import numpy as np

from .errors import ParameterError, SizeError
from .filtering import CirculantOperator, apply_circulant
from .sensing import Measurement, SensingOperator, apply_A, apply_A_adjoint

NEWTON_GAP = 1e-3
NEWTON_DEC = 1e-4
NEWTON_DAMP = 0.5

__all__ = [
    "Auto",
    "LassoProblem",
    "SolverOptions",
    "SolverResult",
    "project_l1_ball",
    "solve_lasso",
    "reconstruct_scene",
]


@dataclass(frozen=True)
class Auto:
    """Pick ``tau`` so that the residual norm equals ``sigma``."""

    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ParameterError("sigma must be non-negative")


@dataclass
class LassoProblem:
    op: object
    y: np.ndarray
    tau: Union[float, Auto] = field(default_factory=Auto)

    def __post_init__(self):
        if not isinstance(self.tau, Auto) and not self.tau >= 0:
            raise ParameterError("tau must be non-negative")


@dataclass
class SolverOptions:
    """Stopping rules and line-search constants.

    ``tol`` bounds the relative change of the residual norm between two
    iterations and the relative duality gap. ``pg_tol`` is an absolute bound
    on the projected-gradient norm; ``None`` means ``1e-6 * ||A^H y||``.
    """

    tol: float = 1e-6
    pg_tol: Optional[float] = None
    max_iter: int = 500
    sigma_tol: float = 1e-4
    memory: int = 10
    gamma: float = 1e-4
    step_min: float = 1e-16
    step_max: float = 1e5
    max_newton: int = 50
    callback: Optional[Callable[[np.ndarray, float], None]] = None


@dataclass
class SolverResult:
    s_hat: np.ndarray
    residual_norm: float
    tau_used: float
    iterations: int
    newton_steps: int
    converged: bool


def project_l1_ball(v, tau: float) -> np.ndarray:
    """Euclidean projection onto ``{u : sum |u_k| <= tau}``.

    Moduli are soft-thresholded by the level found from the sorted
    cumulative sums; phases are kept. Exact, ``O(n log n)``.
    """
    if not tau >= 0:
        raise ParameterError(f"tau must be non-negative, got {tau}")
    v = np.asarray(v)
    mag = np.abs(v)
    if mag.sum() <= tau:
        return v.copy()
    if tau == 0:
        return np.zeros_like(v)
    u = np.sort(mag, axis=None)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    support = np.nonzero(u * k > css - tau)[0]
    # the largest modulus always belongs to the support; rounding can hide
    # it when tau is below one ulp of u[0]
    last = support[-1] if support.size else 0
    theta = (css[last] - tau) / (last + 1)
    shrunk = np.maximum(mag - theta, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(mag > 0, shrunk / mag, 0.0)
    return v * scale


def _operator_pair(op):
    """Return ``(forward, adjoint, shape_of_s, m)`` acting on flat vectors."""
    if isinstance(op, SensingOperator):
        side = op.side

        def fwd(x):
            return apply_A(op, x.reshape(side, side))

        def adj(r):
            return apply_A_adjoint(op, r).reshape(-1)

        return fwd, adj, (side, side), op.selection.m
    if isinstance(op, np.ndarray):
        mat = op.astype(np.complex128)
        return (lambda x: mat @ x), (lambda r: mat.conj().T @ r), (mat.shape[1],), mat.shape[0]
    if hasattr(op, "matvec") and hasattr(op, "rmatvec"):
        m, n = op.shape
        return (lambda x: np.asarray(op.matvec(x)).reshape(-1),
                lambda r: np.asarray(op.rmatvec(r)).reshape(-1), (n,), m)
    raise ParameterError(f"unsupported operator type {type(op).__name__}")


def _l1(x) -> float:
    return float(np.abs(x).sum())


def _vdot(a, b) -> float:
    return float(np.vdot(a, b).real)


def solve_lasso(problem: LassoProblem, opts: Optional[SolverOptions] = None) -> SolverResult:
    """Solve the lasso problem by spectral projected gradient.

    Each iteration takes ``s <- P_tau(s - alpha * A^H (A s - y))`` with a
    Barzilai-Borwein ``alpha`` and a nonmonotone Armijo line search over the
    last ``opts.memory`` objective values. With ``tau=Auto(sigma)`` the
    radius starts at 0 and is updated by Newton steps on the Pareto curve
    whenever the current subproblem is solved accurately enough.

    Non-convergence is reported through ``converged=False``.
    """
    opts = opts or SolverOptions()
    fwd, adj, out_shape, m = _operator_pair(problem.op)
    y = np.asarray(problem.y, dtype=np.complex128).reshape(-1)
    if y.shape != (m,):
        raise SizeError(f"expected {m} samples, got {y.size}")
    n = int(np.prod(out_shape))
    auto = isinstance(problem.tau, Auto)

    ynorm = float(np.linalg.norm(y))
    if ynorm == 0.0:
        tau0 = 0.0 if auto else float(problem.tau)
        return SolverResult(np.zeros(out_shape, dtype=np.complex128), 0.0, tau0, 0, 0, True)

    # work with unit-norm data; every length below is relative to ||y||
    b = y / ynorm
    sigma = problem.tau.sigma / ynorm if auto else 0.0
    tau = 0.0 if auto else float(problem.tau) / ynorm

    x = np.zeros(n, dtype=np.complex128)
    r = b.copy()
    g = -adj(r)
    f = 0.5 * _vdot(r, r)
    pg_tol = (opts.pg_tol / ynorm) if opts.pg_tol is not None else 1e-6 * float(np.linalg.norm(g))

    gstep = 1.0  # ||A|| = 1 for semi-unitary operators
    history = [f]
    iterations = newton = 0
    converged = False
    rnorm_old = math.inf
    f_old = math.inf
    stationary = False

    while True:
        rnorm = math.sqrt(2.0 * f)
        gnorm = float(np.abs(g).max())
        gap = _vdot(r, r - b) + tau * gnorm

        if auto:
            aerr = rnorm - sigma
            if abs(aerr) <= opts.sigma_tol:
                converged = True
                break
            # the subproblem must be solved to a gap that is small against the
            # distance to the root, otherwise Newton overshoots tau
            solved = stationary or abs(gap) <= NEWTON_GAP * abs(f - 0.5 * sigma * sigma)
            change = abs(f_old - f)
            if rnorm > 2.0 * sigma:
                slow = change <= NEWTON_DEC * f
            else:
                slow = change <= 0.1 * f * abs(aerr)
            if solved or slow:
                if newton >= opts.max_newton or gnorm == 0.0:
                    break
                tau_old = tau
                # an unfinished subproblem only earns a damped step
                damp = 1.0 if solved else NEWTON_DAMP
                tau = max(0.0, tau + damp * rnorm * aerr / gnorm)
                newton += 1
                stationary = False
                if tau < tau_old:
                    x = project_l1_ball(x, tau)
                    r = b - fwd(x)
                    g = -adj(r)
                    f = 0.5 * _vdot(r, r)
                history = [f]
                rnorm_old = f_old = math.inf
                continue
        elif abs(gap) / max(1.0, f) <= opts.tol or abs(rnorm_old - rnorm) <= opts.tol * rnorm:
            converged = True
            break

        if iterations >= opts.max_iter:
            break

        dx = project_l1_ball(x - gstep * g, tau) - x
        gtd = _vdot(g, dx)
        if gtd >= 0.0 or float(np.linalg.norm(dx)) <= pg_tol * min(gstep, 1.0):
            # projected gradient vanishes: this radius is solved
            if not auto:
                converged = True
                break
            stationary = True
            continue

        adx = fwd(dx)
        fmax = max(history)
        step = 1.0
        for _ in range(20):
            r_new = r - step * adx
            f_new = 0.5 * _vdot(r_new, r_new)
            if f_new <= fmax + opts.gamma * step * gtd:
                break
            denom = 2.0 * (f_new - f - step * gtd)
            trial = -gtd * step * step / denom if denom > 0 else 0.5 * step
            step = trial if 0.1 * step <= trial <= 0.9 * step else 0.5 * step
        else:
            step = 0.0

        iterations += 1
        if step == 0.0:
            # line search failed; restart the spectral step
            gstep = 1.0
            continue

        x_new = x + step * dx
        g_new = -adj(r_new)
        sk = x_new - x
        yk = g_new - g
        sts = _vdot(sk, sk)
        sty = _vdot(sk, yk)
        gstep = min(opts.step_max, max(opts.step_min, sts / sty)) if sty > 0 else opts.step_max

        x, r, g = x_new, r_new, g_new
        rnorm_old = rnorm
        f_old, f = f, f_new
        history.append(f)
        if len(history) > opts.memory:
            history.pop(0)
        if opts.callback is not None:
            opts.callback(x.reshape(out_shape) * ynorm, tau * ynorm)

    s_hat = (x * ynorm).reshape(out_shape)
    residual = float(np.linalg.norm(fwd(s_hat.reshape(-1)) - y))
    return SolverResult(s_hat, residual, tau * ynorm, iterations, newton, converged)


def reconstruct_scene(result: SolverResult, pof: Optional[CirculantOperator] = None,
                      mode: str = "conjugate", *, measurement: Optional[Measurement] = None,
                      sigma: float = 0.0, opts: Optional[SolverOptions] = None) -> np.ndarray:
    """Scene estimate from a recovered correlation plane or from raw data.

    ``conjugate`` filters ``s_hat`` with the adjoint of the POF used for
    sensing. ``direct`` ignores the plane and solves the lasso problem with
    pixel-domain sparsity (``A = M``) on ``measurement``; it is a baseline.
    """
    if mode == "conjugate":
        if pof is None:
            raise ParameterError("conjugate reconstruction needs the sensing POF")
        return apply_circulant(pof, result.s_hat, "adjoint")
    if mode == "direct":
        if measurement is None:
            raise ParameterError("direct reconstruction needs the measurement")
        op = SensingOperator(measurement.selection, None)
        direct = solve_lasso(LassoProblem(op, measurement.samples, Auto(sigma)), opts)
        return direct.s_hat
    raise ParameterError(f"mode must be 'conjugate' or 'direct', got {mode!r}")
