"""Model-free estimation of the equilibrium (feedforward) input.

One baseline experiment under pure P control plus one experiment per input
channel with a unit feedforward excitation; the terminal tracking errors form
a data matrix whose pseudo-inverse maps the baseline error to an estimate of
the equilibrium input.  Also provides the horizon / error-bound calculator for
the estimator (an analysis tool that needs the true model, used by tests and
benchmarks only) and a data-driven estimator of the closed-loop decay
constant that makes the horizon bound usable without model knowledge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linmath
from .errors import EstimationError, StabilityError
from .plant import DEFAULT_H_SIM, LtiPlant, compute_equilibrium

_TINY = 1e-300


@dataclass(frozen=True)
class FeedforwardEstimate:
    """Result of the m+1 probing experiments.

    u_hat = -E^+ e0_tau is reproducible from the stored data matrix E and
    baseline terminal error e0_tau; min_sv_e certifies that E had full row
    rank when the pseudo-inverse was formed.
    """

    u_hat: np.ndarray
    e_matrix: np.ndarray
    e0_tau: np.ndarray
    tau_u: float
    kp_probe: np.ndarray
    min_sv_e: float


@dataclass(frozen=True)
class FeedforwardBounds:
    """Computable horizon / error bound quantities for the feedforward estimator.

    z is the solution of A_K^T Z + Z A_K + I = 0 (its spectral norm sets the
    closed-loop time constant), sigma the stationary state covariance of the
    probing loop.  tau_lower is the horizon lower bound; with probability at
    least 1 - delta_u - m4 the estimation error is bounded by eps_u + sbar.
    The sub-Gaussian norm and the absolute constant of the underlying
    concentration inequalities are unknown universal constants, so all
    probability-flavoured outputs are parametric in them, never calibrated.
    m4 is clamped to [0, 2]; bound_applicable is False when a branch of the
    bound degenerates (non-positive or undefined log argument).
    """

    z: np.ndarray
    tau_lower: float
    m1: float
    m2: float
    m3: float
    m4: float
    sbar: float
    s_val: float
    sm_val: float
    sigma: np.ndarray
    d_x: float
    eps_u: float
    delta_u: float
    subgauss_norm: float
    abs_const_c: float
    snr_precondition_ok: bool
    bound_applicable: bool


def probe_loop_matrix(plant: LtiPlant, kp_probe: np.ndarray) -> np.ndarray:
    """Closed-loop matrix A - B K_P' C of the P-controlled probing loop."""
    kp_probe = np.atleast_2d(np.asarray(kp_probe, dtype=float))
    if kp_probe.shape != (plant.m, plant.p):
        raise ValueError(f"probe gain must be {plant.m} x {plant.p}, got {kp_probe.shape}")
    return plant.a - plant.b @ kp_probe @ plant.c


def _probe_noise_intensity(plant: LtiPlant, kp_probe: np.ndarray) -> np.ndarray:
    bkp = plant.b @ kp_probe
    return linmath.symmetrize(plant.w + bkp @ plant.v @ bkp.T)


def _simulate_probe_outputs(plant: LtiPlant, kp_probe: np.ndarray, y_star: np.ndarray,
                            u0: np.ndarray, horizon: float, h_sim: float,
                            rng: np.random.Generator, record: bool = False):
    """Exact sampled simulation of the P-controlled loop; returns measured errors.

    The loop input is u(t) = K_P' e(t) + u0 with measured e = y* - C x - v, so x
    evolves as an affine SDE with matrix A - B K_P' C, constant drive
    B (K_P' y* + u0) and lumped noise intensity W + B K_P' V (B K_P')^T.
    Returns e(horizon) (with a fresh measurement-noise draw); with
    ``record=True`` also the measured outputs at every grid point.
    """
    a_k = probe_loop_matrix(plant, kp_probe)
    nsteps = int(round(horizon / h_sim))
    if nsteps < 1 or abs(nsteps * h_sim - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"h_sim {h_sim} does not divide horizon {horizon}")

    vl = linmath.van_loan(a_k, np.eye(plant.n), _probe_noise_intensity(plant, kp_probe), h_sim)
    noise_factor = linmath.psd_factor(vl.wd)
    v_factor = linmath.psd_factor(plant.v)
    drive = vl.bd @ (plant.b @ (kp_probe @ y_star + u0))

    x = plant.init.sample(rng)
    ys = np.empty((nsteps + 1, plant.p)) if record else None
    if record:
        ys[0] = plant.c @ x + v_factor @ rng.standard_normal(plant.p)
    for k in range(nsteps):
        x = vl.ad @ x + drive + noise_factor @ rng.standard_normal(plant.n)
        if record:
            ys[k + 1] = plant.c @ x + v_factor @ rng.standard_normal(plant.p)
    if not np.isfinite(x).all():
        raise EstimationError("probe experiment diverged")
    e_tau = y_star - (plant.c @ x + v_factor @ rng.standard_normal(plant.p))
    return (e_tau, ys) if record else e_tau


def estimate_feedforward(plant: LtiPlant, kp_probe: np.ndarray, y_star: np.ndarray,
                         tau_u: float, h_sim: float = DEFAULT_H_SIM,
                         rng: np.random.Generator | None = None) -> FeedforwardEstimate:
    """Estimate the equilibrium input from m+1 closed-loop experiments.

    Experiment 0 runs pure P control; experiment i adds the i-th standard
    basis vector as feedforward.  Each experiment redraws x(0) and uses an
    independent noise stream.  The data matrix of terminal error differences
    approaches C A_K^{-1} B, so u_hat = -E^+ e0(tau_u) approaches u*.

    Raises StabilityError if the probe gain does not stabilize the plant and
    RankError (from the pseudo-inverse) if E is numerically rank deficient,
    which is possible at very short horizons.
    """
    if rng is None:
        rng = np.random.default_rng()
    kp_probe = np.atleast_2d(np.asarray(kp_probe, dtype=float))
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    a_k = probe_loop_matrix(plant, kp_probe)
    if not linmath.is_hurwitz(a_k):
        raise StabilityError("probe gain K_P' does not stabilize the plant")

    child_rngs = rng.spawn(plant.m + 1)
    e0 = _simulate_probe_outputs(plant, kp_probe, y_star, np.zeros(plant.m),
                                 tau_u, h_sim, child_rngs[0])
    e_cols = []
    for i in range(plant.m):
        u0_i = np.zeros(plant.m)
        u0_i[i] = 1.0
        e_i = _simulate_probe_outputs(plant, kp_probe, y_star, u0_i,
                                      tau_u, h_sim, child_rngs[i + 1])
        e_cols.append(e_i - e0)
    e_mat = np.column_stack(e_cols)
    sv = np.linalg.svd(e_mat, compute_uv=False)
    u_hat = -linmath.right_pinv(e_mat) @ e0
    return FeedforwardEstimate(u_hat=u_hat, e_matrix=e_mat, e0_tau=e0, tau_u=tau_u,
                               kp_probe=kp_probe, min_sv_e=float(sv[-1]))


def estimate_decay_constant(plant: LtiPlant, kp_probe: np.ndarray, y_star: np.ndarray,
                            tau_large: float, h_sim: float = DEFAULT_H_SIM,
                            rng: np.random.Generator | None = None) -> float:
    """Data-driven estimate of ||Z||_2 from one long probing experiment.

    Runs the baseline experiment to tau_large and fits
    log ||y(t) - y(tau_large)|| ~ log c' - t / (2 ||Z||_2) by least squares
    over the window [tau_large/4, 3 tau_large/4].  The returned value makes the
    horizon bound usable without model knowledge (up to its log factors).
    """
    if rng is None:
        rng = np.random.default_rng()
    kp_probe = np.atleast_2d(np.asarray(kp_probe, dtype=float))
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    if not linmath.is_hurwitz(probe_loop_matrix(plant, kp_probe)):
        raise StabilityError("probe gain K_P' does not stabilize the plant")

    _, ys = _simulate_probe_outputs(plant, kp_probe, y_star, np.zeros(plant.m),
                                    tau_large, h_sim, rng, record=True)
    t = np.arange(ys.shape[0]) * h_sim
    d = np.linalg.norm(ys - ys[-1], axis=1)
    window = (t >= tau_large / 4.0) & (t <= 3.0 * tau_large / 4.0) & (d > _TINY)
    if window.sum() < 2:
        raise EstimationError("signal below noise floor over the whole fitting window")
    slope, _ = np.polyfit(t[window], np.log(d[window]), 1)
    if slope >= 0:
        raise EstimationError(f"no measurable decay over the fitting window (slope {slope:.3g})")
    return -1.0 / (2.0 * slope)


def feedforward_bounds(plant: LtiPlant, kp_probe: np.ndarray, y_star: np.ndarray,
                    u_star: np.ndarray | None = None, sigma0: np.ndarray | None = None,
                    d_x: float | None = None, eps_u: float = 1e-3, delta_u: float = 0.05,
                    subgauss_norm: float = 1.0, abs_const_c: float = 1.0) -> FeedforwardBounds:
    """Evaluate the computable horizon and error bounds of the feedforward estimator.

    This needs the true model, so it is an analysis / benchmarking tool; the
    model-free path never calls it.  When not supplied, the initial-condition
    spread sigma0 and mean offset d_x are derived from the plant's configured
    initial distribution shifted by the equilibrium state.
    """
    kp_probe = np.atleast_2d(np.asarray(kp_probe, dtype=float))
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    a_k = probe_loop_matrix(plant, kp_probe)
    if not linmath.is_hurwitz(a_k):
        raise StabilityError("probe gain K_P' does not stabilize the plant")

    equi = compute_equilibrium(plant, y_star)
    if u_star is None:
        u_star = equi.u_star
    u_star = np.asarray(u_star, dtype=float).reshape(-1)
    if sigma0 is None:
        sigma0 = plant.init.cov()
    sigma0 = np.atleast_2d(np.asarray(sigma0, dtype=float))
    if d_x is None:
        d_x = float(np.linalg.norm(plant.init.mean() - equi.x_star))

    z = linmath.solve_lyapunov_continuous(a_k.T, np.eye(plant.n))
    sigma = linmath.solve_lyapunov_continuous(a_k, _probe_noise_intensity(plant, kp_probe))

    z2 = float(np.linalg.norm(z, 2))
    z_min = float(np.linalg.eigvalsh(z).min())
    c2 = float(np.linalg.norm(plant.c, 2))
    b2 = float(np.linalg.norm(plant.b, 2))
    ak_inv2 = float(np.linalg.norm(np.linalg.inv(a_k), 2))
    ustar_norm = float(np.linalg.norm(u_star))
    ystar_norm = float(np.linalg.norm(y_star))
    m, p = plant.m, plant.p

    e_star = plant.c @ np.linalg.solve(a_k, plant.b)
    sig_p_estar = float(np.linalg.svd(e_star, compute_uv=False)[-1])

    csc = plant.c @ sigma @ plant.c.T
    tr_csc = float(np.trace(csc))
    fro_csc = float(np.linalg.norm(csc, "fro"))
    tr_sigma0 = float(np.trace(sigma0))
    fro_sigma0 = float(np.linalg.norm(sigma0, "fro"))

    m1 = (z2 / z_min) * max(
        2.0 * c2 * (d_x + ak_inv2 * b2 * ustar_norm) / sig_p_estar,
        8.0 * math.sqrt(2 * m * p) * c2 ** 2 * ak_inv2 ** 2 * b2 ** 2 * ustar_norm / sig_p_estar,
    )
    m3 = (z2 * c2 / z_min) * max(
        2.0 * math.sqrt(2 * m * p) * c2 * ak_inv2 ** 2 * b2 ** 2,
        (d_x + ak_inv2 * b2 * ustar_norm) / ystar_norm,
    )

    gg = subgauss_norm
    cc = abs_const_c
    noisy = tr_csc > 0.0 and fro_csc > 0.0
    if noisy:
        m2 = (z2 ** 2 * c2 ** 2 / z_min ** 2) * max(tr_sigma0 / tr_csc, fro_sigma0 / fro_csc)

        def s_of(delta: float) -> float:
            return math.sqrt(2.0 * tr_csc
                             + 9.0 * (math.sqrt(2.0 * cc) + 2.0) * gg ** 2 * fro_csc / cc ** 2
                             * math.log(2.0 / delta))

        def sm_of(delta: float) -> float:
            return math.sqrt(2.0 * m * tr_csc
                             + 9.0 * (math.sqrt(2.0 * m * cc) + 2.0) * gg ** 2 * fro_csc / cc ** 2
                             * math.log(2.0 / delta))

        s_val = s_of(delta_u)
        sm_val = sm_of(delta_u)
        sm_half = sm_of(delta_u / 2.0)
        s_half = s_of(delta_u / 2.0)
        sbar = (4.0 * math.sqrt(2.0) * c2 * ak_inv2 * b2 * ystar_norm * sm_half
                + 2.0 * (1.0 + math.sqrt(2.0) * c2 * ak_inv2 * b2 * sm_half) * s_half) / sig_p_estar
        m4_arg = cc ** 2 * (sig_p_estar ** 2 / 16.0 - 2.0 * m * tr_csc) \
            / (9.0 * (math.sqrt(2.0 * m * cc) + 2.0) * gg ** 2 * fro_csc)
        m4 = min(2.0, 2.0 * math.exp(-m4_arg))
    else:
        # noise-free probing loop: no stochastic terms; the variance-settling
        # branch is vacuous unless the initial spread is itself nonzero
        s_val = sm_val = sbar = m4 = 0.0
        m2 = math.inf if tr_sigma0 > 0.0 else math.nan

    branches = []
    arg1 = max(m1 / eps_u if eps_u > 0 else math.inf, m3)
    if arg1 > 0:
        branches.append(2.0 * z2 * math.log(arg1))
    if not math.isnan(m2):
        branches.append(z2 * math.log(m2) if m2 > 0 else -math.inf)
    tau_lower = max(branches) if branches else math.nan
    applicable = bool(branches) and math.isfinite(tau_lower) and tau_lower > 0

    snr_ok = sig_p_estar >= 4.0 * math.sqrt(2.0 * m * tr_csc)
    return FeedforwardBounds(z=z, tau_lower=float(tau_lower), m1=m1, m2=m2, m3=m3, m4=m4,
                          sbar=sbar, s_val=s_val, sm_val=sm_val, sigma=sigma, d_x=d_x,
                          eps_u=eps_u, delta_u=delta_u, subgauss_norm=gg, abs_const_c=cc,
                          snr_precondition_ok=bool(snr_ok), bound_applicable=applicable)


def tau_from_bounds(bounds: FeedforwardBounds, z_norm: float | None = None) -> float:
    """Horizon bound with an optional data-driven ||Z||_2 in the leading factors.

    Re-evaluates the right side of the horizon bound using ``z_norm`` (e.g. a
    decay-constant estimate) in place of the model value; the constants inside
    m1, m2, m3 keep their stored values.
    """
    z2 = float(np.linalg.norm(bounds.z, 2)) if z_norm is None else float(z_norm)
    branches = []
    arg1 = max(bounds.m1 / bounds.eps_u if bounds.eps_u > 0 else math.inf, bounds.m3)
    if arg1 > 0:
        branches.append(2.0 * z2 * math.log(arg1))
    if not math.isnan(bounds.m2) and bounds.m2 > 0 and math.isfinite(bounds.m2):
        branches.append(z2 * math.log(bounds.m2))
    if not branches:
        raise EstimationError("horizon bound is not applicable for this configuration")
    return max(branches)
