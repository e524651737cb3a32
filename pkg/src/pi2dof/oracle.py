"""Analytic, model-knowing ground truth for testing and evaluation.

Exact infinite-horizon average cost and its gradient via paired Lyapunov
solves, finite-horizon mean/covariance of the augmented closed loop,
the projected-gradient stationarity measure, and the scalar non-convexity
witness.  A gain outside the stabilizing set raises StabilityError rather
than returning a sentinel: the tuner must detect leaving the set explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linmath
from .errors import SingularityError
from .plant import AugmentedClosedLoop, InitialStateDistribution, LtiPlant, PiGain, build_closed_loop
from .tuner import ConstraintBox, project_onto_omega


@dataclass(frozen=True)
class CostGradient:
    """Cost value with its gradient and the two Lyapunov solutions behind them."""

    value: float
    grad: np.ndarray
    x: np.ndarray
    y: np.ndarray


def analytic_cost(cl: AugmentedClosedLoop) -> float:
    """Average cost tr(Q' X) + tr(Q1 V) with X the closed-loop state covariance.

    Raises StabilityError when the closed loop is not Hurwitz (infinite cost).
    """
    x = linmath.solve_lyapunov_continuous(cl.abar_k, cl.wtilde_k)
    return float(np.trace(cl.qprime @ x) + np.trace(cl.q1 @ cl.v))


def _selector_blocks(cl: AugmentedClosedLoop) -> tuple[np.ndarray, np.ndarray]:
    n, p = cl.n, cl.p
    i1 = np.vstack([np.zeros((n, p)), np.eye(p)])          # injects v into the integrator row
    i2t = np.hstack([np.eye(p), np.zeros((p, p))])         # selects the K_P block of K
    return i1, i2t


def analytic_gradient(cl: AugmentedClosedLoop) -> CostGradient:
    """Exact cost gradient -2 B^T Y X C^T + 2 B^T Y (I1 + B K I2) V I2^T.

    X solves the closed-loop covariance equation and Y its adjoint with the
    state weight Q'; the second term carries the gain dependence of the lumped
    noise intensity (through B K_P).
    """
    x = linmath.solve_lyapunov_continuous(cl.abar_k, cl.wtilde_k)
    y = linmath.solve_lyapunov_continuous(cl.abar_k.T, cl.qprime)
    i1, i2t = _selector_blocks(cl)
    m_k = i1 + cl.bbar @ cl.gain.k @ i2t.T
    grad = -2.0 * cl.bbar.T @ y @ x @ cl.cbar.T + 2.0 * cl.bbar.T @ y @ m_k @ cl.v @ i2t
    value = float(np.trace(cl.qprime @ x) + np.trace(cl.q1 @ cl.v))
    return CostGradient(value=value, grad=grad, x=x, y=y)


def finite_horizon_moments(cl: AugmentedClosedLoop, u0: np.ndarray, u_star: np.ndarray,
                           init_mean: np.ndarray, init_cov: np.ndarray,
                           tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form mean and covariance of the augmented state at time tau.

    mean(tau) = e^{A_K tau} (mean(0) + A_K^{-1} B du) - A_K^{-1} B du,
    cov(tau)  = e^{A_K tau} cov(0) e^{A_K^T tau} + int_0^tau e^{A_K s} W_K e^{A_K^T s} ds

    with du = u0 - u*.  The offset term needs A_K invertible.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    init_mean = np.asarray(init_mean, dtype=float).reshape(-1)
    init_cov = np.asarray(init_cov, dtype=float)
    q = cl.n + cl.p
    if init_mean.size != q or init_cov.shape != (q, q):
        raise ValueError(f"initial moments must have augmented dimension {q}")
    if tau == 0:
        return init_mean.copy(), init_cov.copy()

    du = np.asarray(u0, dtype=float) - np.asarray(u_star, dtype=float)
    phi = linmath.expm(cl.abar_k * tau)
    if np.linalg.norm(du) > 0:
        try:
            offset = np.linalg.solve(cl.abar_k, cl.bbar @ du)
        except np.linalg.LinAlgError as err:
            raise SingularityError("closed-loop matrix is singular with a nonzero "
                                   "feedforward offset") from err
        mean = phi @ (init_mean + offset) - offset
    else:
        mean = phi @ init_mean
    wd = linmath.van_loan(cl.abar_k, cl.bbar, cl.wtilde_k, tau).wd
    cov = linmath.symmetrize(phi @ init_cov @ phi.T + wd)
    return mean, cov


def stationarity_measure(gain: PiGain, grad: np.ndarray, omega: ConstraintBox,
                         eta: float) -> float:
    """Projected-gradient residual ||(proj(K - eta grad) - K) / eta||_F.

    Zero at a stationary point of the constrained problem; equals ||grad||_F
    whenever the step stays in the interior of the constraint set.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    stepped = PiGain.from_matrix(gain.k - eta * np.asarray(grad, dtype=float))
    projected = project_onto_omega(stepped, omega)
    return float(np.linalg.norm((projected.k - gain.k) / eta))


def _scalar_witness_plant() -> LtiPlant:
    return LtiPlant(a=[[0.1]], b=[[1.0]], c=[[1.0]], w=[[0.5]], v=[[1.0]],
                    init=InitialStateDistribution.point([0.0]))


def nonconvexity_witness() -> tuple[float, float, float]:
    """Cost at two reference scalar gains and their midpoint.

    Evaluates the Lyapunov-based cost on the scalar plant (a=0.1, b=c=1,
    w=0.5, v=1, unit weights) at K1 = (1, 4), K2 = (4, 1.6) and (K1+K2)/2.
    A triple with (f1 + f2)/2 < f_mid certifies that the cost is non-convex;
    see tests for gain pairs on this plant where that violation occurs.
    """
    plant = _scalar_witness_plant()
    q1 = np.eye(1)
    q2 = np.eye(1)

    def cost(kp: float, ki: float) -> float:
        cl = build_closed_loop(plant, PiGain(kp=[[kp]], ki=[[ki]]), q1, q2)
        return analytic_cost(cl)

    f1 = cost(1.0, 4.0)
    f2 = cost(4.0, 1.6)
    fmid = cost(2.5, 2.8)
    return f1, f2, fmid
