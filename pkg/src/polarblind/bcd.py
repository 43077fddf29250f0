"""Off-grid refinement of a per-user polar channel estimate.

Starting from an on-grid support, the per-user fit

    F(theta, r, gamma, delta) = || Y - W(theta, r) gamma delta^T ||_F^2

is reduced by block coordinate descent: gradient steps with a backtracking
line search for the angles and inverse ranges, closed-form least-squares
updates for the gain vector gamma and the data vector delta.  Y here is the
despread per-user block with its pilot column removed.

The line-search blocks steer by the reduced objective

    Phi(theta, r) = -tr(Y^H Psi Y),   Psi = W W^+,

(the data-independent part of F once gamma delta^T is eliminated) but only
accept a step if the full objective F, evaluated with the current gamma and
delta, does not increase.  That keeps F monotone across every block update,
which the closed-form blocks already guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DegenerateChannelError,
    DegenerateDataError,
    DimensionMismatchError,
    RankDeficientError,
)
from .geometry import (
    ArrayGeometry,
    fraunhofer_distance,
    steering_deriv_inv_distance_matrix,
    steering_deriv_theta_matrix,
    steering_matrix,
)
from .numkernel import COND_FLOOR, pseudoinverse


@dataclass(frozen=True)
class BcdConfig:
    max_iters: int = 50
    eps2_rel: float = 1e-6  # stop when F <= eps2_rel * ||Y||_F^2
    beta: float = 0.5  # line-search shrink factor
    c_armijo: float = 1e-4  # sufficient-decrease coefficient
    eta0: float | None = None  # initial step; None -> 1 / (||grad|| + 1)
    max_backtracks: int = 30
    angle_margin: float = 1e-6  # keep angles inside (-pi/2, pi/2) by this much
    r_bounds: tuple[float, float] | None = None  # None -> (R_f / 20, 10 R_f)

    def __post_init__(self):
        if self.max_iters < 0 or self.max_backtracks < 0:
            raise ConfigError("iteration counts must be nonnegative")
        if not (0.0 < self.beta < 1.0):
            raise ConfigError("line-search shrink factor must be in (0, 1)")
        if self.c_armijo <= 0 or self.eps2_rel < 0:
            raise ConfigError("c_armijo must be positive and eps2_rel nonnegative")


@dataclass
class RefinementState:
    """Current (or final) refinement point and its objective value."""

    theta: np.ndarray  # (Lhat,) angles, rad
    r: np.ndarray  # (Lhat,) ranges, m
    gamma: np.ndarray  # (Lhat,) complex path gains
    delta: np.ndarray  # (S,) complex data estimate (pilot excluded)
    objective: float = np.nan  # F at this point
    stationary: bool = False
    n_iters: int = 0
    trace: list = field(default_factory=list, repr=False)

    def channel_estimate(self, geom: ArrayGeometry) -> np.ndarray:
        return effective_dictionary(geom, self.theta, self.r) @ self.gamma


def effective_dictionary(geom: ArrayGeometry, theta, r) -> np.ndarray:
    """Steering matrix W with one column per refined path."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if theta.shape != r.shape:
        raise DimensionMismatchError("theta and r must have matching lengths")
    return steering_matrix(geom, theta, r)


def objective_f(y_acute: np.ndarray, w: np.ndarray, gamma: np.ndarray, delta: np.ndarray) -> float:
    """Full fit residual F = ||Y - (W gamma) delta^T||_F^2."""
    resid = y_acute - np.outer(w @ gamma, delta)
    return float(np.real(np.vdot(resid, resid)))


def _phi_of_w(y_acute: np.ndarray, w: np.ndarray) -> float:
    """Phi = -tr(Y^H Psi Y) from an already-built steering matrix.

    The projector Psi = Q Q^H is formed explicitly from a thin QR of W; a
    collapsed column set (tiny R diagonal relative to its largest entry)
    raises RankDeficientError.  The trace is real up to roundoff; the
    imaginary residue is discarded.
    """
    q, rmat = np.linalg.qr(w)
    diag = np.abs(np.diagonal(rmat))
    if diag.min() <= COND_FLOOR * diag.max():
        raise RankDeficientError("steering columns are numerically dependent")
    psi = q @ q.conj().T
    return float(-np.real(np.sum(y_acute.conj() * (psi @ y_acute))))


def reduced_objective(y_acute: np.ndarray, geom: ArrayGeometry, theta, r) -> float:
    """Phi = -tr(Y^H Psi Y) with Psi the projector onto the steering span."""
    return _phi_of_w(y_acute, effective_dictionary(geom, theta, r))


def _grad_reduced(y_acute, geom, theta, r, deriv_matrix_fn):
    """Gradient of Phi along one geometric block (theta or u = 1/r).

    Component l is -2 Re[ (W^+ Y)_l,: . (Y^H (I - Psi) db_l) ] where db_l is
    the derivative of steering column l.  Returns (grad, phi_at_point); the
    projector residual needed for the gradient gives Phi for free as
    ||(I - Psi) Y||_F^2 - ||Y||_F^2.
    """
    w = effective_dictionary(geom, theta, r)
    wdag = pseudoinverse(w)
    py = y_acute - w @ (wdag @ y_acute)  # (I - Psi) Y
    phi0 = float(np.real(np.vdot(py, py)) - np.real(np.vdot(y_acute, y_acute)))
    b_rows = wdag @ y_acute  # (Lhat, S)
    db = deriv_matrix_fn(geom, theta, r)  # (N, Lhat)
    cross = py.conj().T @ db  # (S, Lhat)
    return -2.0 * np.real(np.einsum("ls,sl->l", b_rows, cross)), phi0


def grad_reduced_theta(y_acute, geom, theta, r) -> np.ndarray:
    return _grad_reduced(y_acute, geom, theta, r, steering_deriv_theta_matrix)[0]


def grad_reduced_inv_distance(y_acute, geom, theta, r) -> np.ndarray:
    return _grad_reduced(y_acute, geom, theta, r, steering_deriv_inv_distance_matrix)[0]


def backtracking_step(f, x0, grad, config: BcdConfig):
    """Armijo backtracking along -grad; returns (x_new, step_used).

    A zero gradient trivially satisfies the descent condition, so x0 comes
    back with the initial step size.  If no tried step passes the test the
    step is declared null: (x0, 0.0).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    gnorm2 = float(grad @ grad)
    eta = config.eta0 if config.eta0 is not None else 1.0 / (np.sqrt(gnorm2) + 1.0)
    if gnorm2 == 0.0:
        return x0, eta
    f0 = f(x0)
    for _ in range(config.max_backtracks + 1):
        x_new = x0 - eta * grad
        if f(x_new) <= f0 - config.c_armijo * eta * gnorm2:
            return x_new, eta
        eta *= config.beta
    return x0, 0.0


def _guarded_step(y_acute, build_w, gamma, delta, phi0, f_cur, x0, grad, config, project):
    """Line search on Phi that refuses any step increasing the full F.

    Returns (x_new, step, backtracks, f_new).  Candidates are projected into
    the feasible box before evaluation and each candidate's steering matrix
    is built once and shared between the Phi and F checks.  A candidate with
    collapsed steering columns is rejected like a failed Armijo test; a
    failed search is a null step.
    """
    gnorm2 = float(grad @ grad)
    eta = config.eta0 if config.eta0 is not None else 1.0 / (np.sqrt(gnorm2) + 1.0)
    if gnorm2 == 0.0:
        return x0, eta, 0, f_cur
    for i in range(config.max_backtracks + 1):
        cand = project(x0 - eta * grad)
        try:
            w = build_w(cand)
            phi = _phi_of_w(y_acute, w)
        except RankDeficientError:
            eta *= config.beta
            continue
        if phi <= phi0 - config.c_armijo * eta * gnorm2:
            f_new = objective_f(y_acute, w, gamma, delta)
            if f_new <= f_cur:
                return cand, eta, i, f_new
        eta *= config.beta
    return x0, 0.0, config.max_backtracks + 1, f_cur


def update_gamma(y_acute: np.ndarray, w: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Exact minimizer of F over gamma: W^+ Y conj(delta) / ||delta||^2."""
    dn2 = float(np.real(np.vdot(delta, delta)))
    if dn2 < 1e-24:
        raise DegenerateDataError("data estimate has numerically zero norm")
    return pseudoinverse(w) @ (y_acute @ delta.conj()) / dn2


def update_delta(y_acute: np.ndarray, w: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Exact minimizer of F over delta: Y^T conj(W gamma) / ||W gamma||^2."""
    c = w @ gamma
    return project_onto_channel(y_acute, c)


def project_onto_channel(y: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Per-column projection coefficients Y^T conj(h) / ||h||^2."""
    hn2 = float(np.real(np.vdot(h, h)))
    if hn2 < 1e-24:
        raise DegenerateChannelError("channel estimate has numerically zero norm")
    return y.T @ h.conj() / hn2


def init_from_support(dictionary, support, gamma0, delta0, r_bounds) -> RefinementState:
    """Seed the refinement from on-grid atoms.

    Far-field atoms (infinite range) are pulled to the far clamp so the
    inverse-range block has a finite starting point.
    """
    support = list(support)
    theta0 = dictionary.angles[support].astype(np.float64).copy()
    r0 = dictionary.distances[support].astype(np.float64).copy()
    r0 = np.clip(r0, r_bounds[0], r_bounds[1])
    return RefinementState(
        theta=theta0,
        r=r0,
        gamma=np.asarray(gamma0, dtype=np.complex128).copy(),
        delta=np.asarray(delta0, dtype=np.complex128).copy(),
    )


def default_r_bounds(geom: ArrayGeometry) -> tuple[float, float]:
    rf = fraunhofer_distance(geom)
    return rf / 20.0, 10.0 * rf


def run_bcd(
    y_acute: np.ndarray,
    geom: ArrayGeometry,
    init: RefinementState,
    config: BcdConfig = BcdConfig(),
    collect_trace: bool = False,
) -> RefinementState:
    """Refine one user's path parameters, gains, and data off the grid.

    Per sweep: theta line-search step, inverse-range line-search step, then
    closed-form gamma and delta updates.  F is monotonically nonincreasing
    across every block update.  Stops at ``max_iters`` sweeps, when F falls
    under ``eps2_rel * ||Y||_F^2``, or at an alternation fixed point (both
    line searches null and gamma/delta unchanged), which is flagged in
    ``state.stationary``.

    Parameters
    ----------
    y_acute : (N, S) despread user block, pilot column removed.
    init : starting point, e.g. from ``init_from_support``.
    collect_trace : record (sweep, block, F, phi, step, backtracks) rows in
        ``state.trace``.
    """
    if y_acute.ndim != 2:
        raise DimensionMismatchError("y_acute must be an (N, S) block")
    if len(init.theta) == 0:
        raise ConfigError("refinement needs at least one path")
    if init.delta.shape[0] != y_acute.shape[1]:
        raise DimensionMismatchError("delta length must match the data columns of y_acute")

    r_lo, r_hi = config.r_bounds if config.r_bounds is not None else default_r_bounds(geom)
    u_lo, u_hi = 1.0 / r_hi, 1.0 / r_lo
    a_lo = -np.pi / 2.0 + config.angle_margin
    a_hi = np.pi / 2.0 - config.angle_margin

    theta = np.clip(init.theta.astype(np.float64), a_lo, a_hi)
    u = 1.0 / np.clip(init.r.astype(np.float64), r_lo, r_hi)
    gamma = init.gamma.astype(np.complex128).copy()
    delta = init.delta.astype(np.complex128).copy()

    eps2_abs = config.eps2_rel * float(np.real(np.vdot(y_acute, y_acute)))
    state = RefinementState(theta=theta, r=1.0 / u, gamma=gamma, delta=delta)

    def w_at(th, uu):
        return effective_dictionary(geom, th, 1.0 / uu)

    f_cur = objective_f(y_acute, w_at(theta, u), gamma, delta)
    sweeps = 0
    stationary = False

    for sweep in range(1, config.max_iters + 1):
        if f_cur <= eps2_abs:
            break
        sweeps = sweep

        # angle block
        g_th, phi0 = _grad_reduced(y_acute, geom, theta, 1.0 / u, steering_deriv_theta_matrix)
        theta_new, eta_th, bt_th, f_cur = _guarded_step(
            y_acute,
            build_w=lambda th: w_at(th, u),
            gamma=gamma,
            delta=delta,
            phi0=phi0,
            f_cur=f_cur,
            x0=theta,
            grad=g_th,
            config=config,
            project=lambda th: np.clip(th, a_lo, a_hi),
        )
        moved_theta = not np.array_equal(theta_new, theta)
        theta = theta_new
        if collect_trace:
            phi_now = reduced_objective(y_acute, geom, theta, 1.0 / u)
            state.trace.append((sweep, "theta", f_cur, phi_now, eta_th, bt_th))

        # inverse-range block
        g_u, phi0 = _grad_reduced(y_acute, geom, theta, 1.0 / u, steering_deriv_inv_distance_matrix)
        u_new, eta_u, bt_u, f_cur = _guarded_step(
            y_acute,
            build_w=lambda uu: w_at(theta, uu),
            gamma=gamma,
            delta=delta,
            phi0=phi0,
            f_cur=f_cur,
            x0=u,
            grad=g_u,
            config=config,
            project=lambda uu: np.clip(uu, u_lo, u_hi),
        )
        moved_u = not np.array_equal(u_new, u)
        u = u_new
        if collect_trace:
            phi_now = reduced_objective(y_acute, geom, theta, 1.0 / u)
            state.trace.append((sweep, "inv_range", f_cur, phi_now, eta_u, bt_u))

        # closed-form blocks
        w = w_at(theta, u)
        gamma_new = update_gamma(y_acute, w, delta)
        f_cur = objective_f(y_acute, w, gamma_new, delta)
        moved_gamma = not np.allclose(gamma_new, gamma, rtol=0.0, atol=1e-10 * (1.0 + np.linalg.norm(gamma)))
        gamma = gamma_new
        if collect_trace:
            state.trace.append((sweep, "gamma", f_cur, np.nan, np.nan, 0))

        delta_new = update_delta(y_acute, w, gamma)
        f_cur = objective_f(y_acute, w, gamma, delta_new)
        moved_delta = not np.allclose(delta_new, delta, rtol=0.0, atol=1e-10 * (1.0 + np.linalg.norm(delta)))
        delta = delta_new
        if collect_trace:
            state.trace.append((sweep, "delta", f_cur, np.nan, np.nan, 0))

        if not (moved_theta or moved_u or moved_gamma or moved_delta):
            stationary = True
            break

    state.theta = theta
    state.r = 1.0 / u
    state.gamma = gamma
    state.delta = delta
    state.objective = f_cur
    state.stationary = stationary
    state.n_iters = sweeps
    return state
