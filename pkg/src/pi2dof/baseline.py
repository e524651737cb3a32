"""Model-based comparison pipeline.

Zero-order-hold discretization, Ho-Kalman identification from open-loop
input/output data, discrete equilibrium feedforward, the identified-model PI
tuning problem solved by projected gradient descent with the exact discrete
gradient, and sampled-data (ZOH) closed-loop simulation of the continuous
plant for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import blas as _blas

from . import linmath
from .errors import DivergenceError, IdentificationError, StabilityError
from .plant import LtiPlant, PiGain, RolloutSample, compute_equilibrium
from .oracle import CostGradient
from .tuner import ConstraintBox, TuneTrace, project_onto_omega

# internal batching constants of the long-horizon simulator; fixed values keep
# noise draws (and therefore outputs) bitwise reproducible
_CHUNK = 64
_BLOCK = 1 << 18


@dataclass(frozen=True)
class DiscretePlant:
    """Exact ZOH discretization of a continuous plant over step h."""

    ad: np.ndarray
    bd: np.ndarray
    c: np.ndarray
    wd: np.ndarray
    v: np.ndarray
    h: float

    @property
    def n(self) -> int:
        return self.ad.shape[0]

    @property
    def m(self) -> int:
        return self.bd.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class IdentifiedModel:
    """State-space model realized from estimated Markov parameters.

    hankel_sv are the Hankel singular values (model-order diagnostic); markov
    holds the FIR estimates the realization was built from.  wd / v come from
    a residual-based estimator and are flagged as approximations: the
    identification theory used here covers (ad, bd, c) only.
    """

    ad: np.ndarray
    bd: np.ndarray
    c: np.ndarray
    wd: np.ndarray
    v: np.ndarray
    h: float
    hankel_sv: np.ndarray
    markov: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.ad.shape[0]

    @property
    def m(self) -> int:
        return self.bd.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.abs(np.linalg.eigvals(self.ad)).max())

    @property
    def is_stable(self) -> bool:
        return self.spectral_radius < 1.0


@dataclass(frozen=True)
class DiscreteEquilibrium:
    x_star_d: np.ndarray
    u_star_d: np.ndarray


def discretize_zoh(plant: LtiPlant, h: float) -> DiscretePlant:
    """Exact ZOH discretization; noise increments get the Van Loan covariance."""
    vl = linmath.van_loan(plant.a, plant.b, plant.w, h)
    return DiscretePlant(ad=vl.ad, bd=vl.bd, c=plant.c.copy(), wd=vl.wd, v=plant.v.copy(), h=h)


# ---------------------------------------------------------------------------
# open-loop data generation (black box for identification)
# ---------------------------------------------------------------------------

def simulate_openloop(dplant: DiscretePlant, u: np.ndarray, rng: np.random.Generator,
                      x0: np.ndarray | None = None) -> np.ndarray:
    """Outputs of x_{k+1} = Ad x_k + Bd u_k + w_k, y_k = C x_k + v_k for a given input.

    Blocked so multi-million-step records stay fast: the per-step recursion is
    advanced chunk-by-chunk at the block level and the intra-chunk states are
    filled in by a batched sweep, which is exactly equivalent to the scalar
    recursion.
    """
    u = np.asarray(u, dtype=float)
    n_steps = u.shape[0]
    n, p = dplant.n, dplant.p
    lw = linmath.psd_factor(dplant.wd)
    lv = linmath.psd_factor(dplant.v)
    ad_t = dplant.ad.T
    bd_t = dplant.bd.T

    # powers Ad^0 .. Ad^_CHUNK, highest first for the per-chunk drive reduction
    pows = np.empty((_CHUNK + 1, n, n))
    pows[0] = np.eye(n)
    for i in range(_CHUNK):
        pows[i + 1] = dplant.ad @ pows[i]
    a_big = pows[_CHUNK]
    # drive reduction as one GEMM: row (j*n+b) of this matrix maps chunk drive
    # component (j, b) to its Ad^(chunk-1-j) image
    reduce_mat = pows[_CHUNK - 1:: -1].transpose(0, 2, 1).reshape(_CHUNK * n, n)

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = np.empty((n_steps, p))
    n_chunks = -(-min(_BLOCK, n_steps) // _CHUNK)
    noise = np.empty((n_chunks * _CHUNK, n))
    padded = np.empty((n_chunks * _CHUNK, n))
    states = np.empty((_CHUNK, n_chunks, n))  # time-major: contiguous sweep slices
    for start in range(0, n_steps, _BLOCK):
        stop = min(start + _BLOCK, n_steps)
        nb = stop - start
        nc = -(-nb // _CHUNK)
        rng.standard_normal(out=noise[:nb])
        np.matmul(noise[:nb], lw.T, out=padded[:nb])
        padded[:nb] += u[start:stop] @ bd_t
        padded[nb: nc * _CHUNK] = 0.0
        drive_t = padded[: nc * _CHUNK].reshape(nc, _CHUNK, n).transpose(1, 0, 2)

        g = padded[: nc * _CHUNK].reshape(nc, _CHUNK * n) @ reduce_mat
        xb = x
        for c in range(nc):
            states[0, c] = xb
            xb = a_big @ xb + g[c]

        for i in range(1, _CHUNK):
            np.matmul(states[i - 1, :nc], ad_t, out=states[i, :nc])
            states[i, :nc] += drive_t[i - 1, :nc]
        flat = states[:, :nc].transpose(1, 0, 2).reshape(nc * _CHUNK, n)[:nb]

        rng.standard_normal(out=y[start:stop])
        y[start:stop] = flat @ dplant.c.T + y[start:stop] @ lv.T
        x = dplant.ad @ flat[-1] + padded[nb - 1]
        if not np.isfinite(x).all():
            raise DivergenceError("open-loop simulation diverged", time=stop * dplant.h)
    return y


def make_openloop_sim(dplant: DiscretePlant):
    """Package the discrete plant as an input->output black box for identification."""

    def sim(u: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return simulate_openloop(dplant, u, rng)

    return sim


# ---------------------------------------------------------------------------
# Ho-Kalman identification
# ---------------------------------------------------------------------------

def _fir_markov_estimates(u: np.ndarray, y: np.ndarray, lag: int) -> np.ndarray:
    """Least-squares FIR fit of y_k on [u_{k-1}, ..., u_{k-lag}]; returns (lag, p, m)."""
    n_steps, m = u.shape
    p = y.shape[1]
    cols = lag * m
    # Gram accumulated in the lower triangle via dsyrk (halves the flops); the
    # lagged design is assembled chunkwise from contiguous column copies, which
    # is an order of magnitude faster than gathering sliding windows
    xtx = np.zeros((cols, cols), order="F")
    xty = np.zeros((cols, p))
    chunk = 1 << 20
    n_rows = n_steps - lag
    # transposed design buffer: row block j is u_{k-1-j}, written contiguously
    xc_t = np.empty((cols, min(chunk, n_rows)))
    for start in range(0, n_rows, chunk):
        stop = min(start + chunk, n_rows)
        rows = stop - start
        for j in range(lag):
            lo = lag + start - 1 - j
            xc_t[j * m:(j + 1) * m, :rows] = u[lo: lo + rows].T
        block = xc_t[:, :rows]
        xtx = _blas.dsyrk(1.0, block.T, beta=1.0, c=xtx, trans=1, lower=1,
                          overwrite_c=1)
        xty += block @ y[lag + start: lag + stop]
    xtx = np.tril(xtx) + np.tril(xtx, -1).T
    try:
        g = np.linalg.solve(xtx, xty)
    except np.linalg.LinAlgError as err:
        raise IdentificationError("FIR regression is singular; excitation insufficient") from err
    return np.stack([g[j * m:(j + 1) * m].T for j in range(lag)])


def _block_hankel(markov: np.ndarray, rows: int, shift: int = 0) -> np.ndarray:
    _, p, m = markov.shape
    h = np.empty((rows * p, rows * m))
    for i in range(rows):
        for j in range(rows):
            h[i * p:(i + 1) * p, j * m:(j + 1) * m] = markov[i + j + shift]
    return h


def _rank_orders(sv: np.ndarray, min_order: int = 1) -> list[int]:
    """Candidate model orders ranked by singular-value gap prominence.

    The numerical-zero floor participates as a final "neighbour" so that an
    exactly low-rank Hankel ranks the true rank first.  Candidates below
    ``min_order`` are excluded (set-point tracking needs the realized C to
    have full row rank, so the order must reach the output count), as are
    orders whose last retained direction carries a negligible share of the
    Hankel energy: gaps inside the noise plateau are spurious and can
    otherwise produce large unstable realizations.
    """
    floor = 1e-12 * sv[0]
    kept = sv[sv > floor]
    vals = np.append(kept, floor) if kept.size < sv.size else kept
    visible = 1e-3 * sv[0]
    min_order = max(1, min(min_order, vals.size - 1 if kept.size < vals.size else vals.size))
    orders = [i + 1 for i in range(min_order - 1, vals.size - 1)
              if vals[i] >= visible or i + 1 == min_order]
    if not orders:
        return [min_order]
    return sorted(orders, key=lambda o: vals[o - 1] / vals[o], reverse=True)


def identify_ho_kalman(sim, m: int, n_id: int, input_std: float = 1.0,
                       model_order: int | None = None, fir_lag: int = 50,
                       rng: np.random.Generator | None = None,
                       h: float = 0.01, cov_samples: int = 100_000) -> IdentifiedModel:
    """Realize a state-space model from input/output data of a black-box plant.

    Excites the plant with i.i.d. Normal(0, input_std^2 I) inputs, estimates
    the Markov parameters by FIR least squares, stacks them into a block
    Hankel matrix, and truncates its SVD at ``model_order`` (default: largest
    singular-value gap) to obtain a balanced realization.  The noise
    covariances are then approximated from reconstructed-state residuals: the
    output residual covariance estimates the measurement noise and the
    one-step state residual covariance the process noise, both floored to PSD.

    Raises IdentificationError when the Hankel singular values collapse.
    """
    if rng is None:
        rng = np.random.default_rng()
    if n_id < 20 * fir_lag:
        raise ValueError(f"n_id={n_id} too short for FIR lag {fir_lag}; need >= {20 * fir_lag}")
    u = input_std * rng.standard_normal((n_id, m))
    y = np.asarray(sim(u, rng), dtype=float)
    p = y.shape[1]

    markov = _fir_markov_estimates(u, y, fir_lag)
    rows = fir_lag // 2
    hank = _block_hankel(markov, rows)
    uu, sv, vt = np.linalg.svd(hank, full_matrices=False)
    if sv[0] < 1e-12:
        raise IdentificationError("Hankel singular values collapsed; no realizable dynamics")
    hank_shift = _block_hankel(markov, rows, shift=1)

    def realize(order):
        order = min(order, sv.size)
        sqrt_s = np.sqrt(sv[:order])
        obs = uu[:, :order] * sqrt_s
        con = sqrt_s[:, None] * vt[:order]
        a_id = np.linalg.pinv(obs) @ hank_shift @ np.linalg.pinv(con)
        return a_id, con[:, :m], obs[:p], obs

    if model_order is not None:
        a_id, b_id, c_id, obs = realize(int(model_order))
    else:
        # rank candidate orders by gap prominence; keep the first whose
        # realization is stable (the data came from a stable plant, so an
        # unstable realization marks a spurious order choice)
        candidates = _rank_orders(sv, min_order=p)
        a_id, b_id, c_id, obs = realize(candidates[0])
        for order in candidates:
            a_try, b_try, c_try, obs_try = realize(order)
            if np.abs(np.linalg.eigvals(a_try)).max() < 1.0:
                a_id, b_id, c_id, obs = a_try, b_try, c_try, obs_try
                break

    w_id, v_id = _residual_noise_covariances(u, y, markov, obs, a_id, b_id, c_id,
                                             rows, cov_samples)
    return IdentifiedModel(ad=a_id, bd=b_id, c=c_id, wd=w_id, v=v_id, h=h,
                           hankel_sv=sv, markov=markov)


def _residual_noise_covariances(u, y, markov, obs, a_id, b_id, c_id, rows, cov_samples):
    """Residual-based noise covariance approximation (pragmatic, flagged as such)."""
    n_steps, m = u.shape
    p = y.shape[1]
    order = a_id.shape[0]
    ns = min(n_steps - rows - 1, cov_samples)
    start = rows  # skip the zero-state start-up
    count = min(ns, n_steps - rows - start)
    if count < 10 * max(order, 1):
        raise IdentificationError("too little data for residual covariance estimation")

    # forced-response Toeplitz: y_{k+i} gets markov[i-1-q] @ u_{k+q} for q < i
    toep = np.zeros((rows * p, rows * m))
    for i in range(1, rows):
        for q in range(i):
            toep[i * p:(i + 1) * p, q * m:(q + 1) * m] = markov[i - 1 - q]

    idx = np.arange(count + 1) + start
    y_f = np.lib.stride_tricks.sliding_window_view(y, (rows, p)).reshape(-1, rows * p)
    u_f = np.lib.stride_tricks.sliding_window_view(u, (rows, m)).reshape(-1, rows * m)
    states = (y_f[idx] - u_f[idx] @ toep.T) @ np.linalg.pinv(obs).T

    w_res = states[1:] - states[:-1] @ a_id.T - u[idx[:-1]] @ b_id.T
    v_res = y[idx[:-1]] - states[:-1] @ c_id.T
    w_id = _floor_psd(np.cov(w_res, rowvar=False).reshape(order, order))
    v_id = _floor_psd(np.cov(v_res, rowvar=False).reshape(p, p), make_pd=True)
    return w_id, v_id


def _floor_psd(s: np.ndarray, make_pd: bool = False) -> np.ndarray:
    s = linmath.symmetrize(s)
    w, v = np.linalg.eigh(s)
    floor = max(1e-12, 1e-8 * max(w.max(), 0.0)) if make_pd else 0.0
    return linmath.symmetrize((v * np.clip(w, floor, None)) @ v.T)


# ---------------------------------------------------------------------------
# discrete equilibrium and PI tuning on the (identified) model
# ---------------------------------------------------------------------------

def discrete_equilibrium(model, y_star: np.ndarray) -> DiscreteEquilibrium:
    """Minimum-norm discrete equilibrium: x = Ad x + Bd u, y* = C x."""
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    n, m, p = model.n, model.m, model.p
    mat = np.block([[model.ad - np.eye(n), model.bd], [model.c, np.zeros((p, m))]])
    sol = linmath.right_pinv(mat) @ np.concatenate([np.zeros(n), y_star])
    return DiscreteEquilibrium(x_star_d=sol[:n], u_star_d=sol[n:])


def build_discrete_closed_loop(model, gain: PiGain, q1, q2):
    """Augmented discrete closed loop (abar_kd, wtilde, qprime) plus selectors.

    Assembled with explicit slice writes: this sits inside the model-based
    projected-gradient loop, where np.block overhead dominates otherwise.
    """
    n, m, p = model.n, model.m, model.p
    if gain.kp.shape != (m, p):
        raise ValueError(f"gain blocks must be {m} x {p}, got {gain.kp.shape}")
    q1 = np.atleast_2d(np.asarray(q1, dtype=float))
    q2 = np.atleast_2d(np.asarray(q2, dtype=float))
    q = n + p

    bkp = model.bd @ gain.kp
    abar_kd = np.zeros((q, q))
    abar_kd[:n, :n] = model.ad - bkp @ model.c
    abar_kd[:n, n:] = model.bd @ gain.ki
    abar_kd[n:, :n] = -model.c @ model.ad
    abar_kd[n:, n:] = np.eye(p)

    bbar_d = np.zeros((q, m))
    bbar_d[:n] = model.bd
    cbar = np.zeros((2 * p, q))
    cbar[:p, :n] = model.c
    cbar[p:, n:] = -np.eye(p)

    bkpv = bkp @ model.v
    wtilde = np.zeros((q, q))
    wtilde[:n, :n] = model.wd + bkpv @ bkp.T
    wtilde[:n, n:] = bkpv
    wtilde[n:, :n] = bkpv.T
    wtilde[n:, n:] = model.v

    qprime = np.zeros((q, q))
    qprime[:n, :n] = model.c.T @ q1 @ model.c
    qprime[n:, n:] = q2
    return abar_kd, bbar_d, cbar, linmath.symmetrize(wtilde), qprime, q1, q2


def _doubling_lyap_pair(f: np.ndarray, qx: np.ndarray, qy: np.ndarray,
                        max_doublings: int = 64):
    """Solve F X F^T - X + qx = 0 and F^T Y F - Y + qy = 0 with shared squarings.

    Smith doubling: X_{j+1} = X_j + M_j X_j M_j^T with M_{j+1} = M_j^2 converges
    quadratically for Schur-stable F; both equations reuse the same M_j
    sequence.  Divergence of the squarings doubles as the stability check.
    """
    x = qx.copy()
    y = qy.copy()
    mp = f.copy()
    for _ in range(max_doublings):
        mn2 = float(np.einsum("ij,ij->", mp, mp))  # ||M||_F^2
        if mn2 < 1e-22:
            return linmath.symmetrize(x), linmath.symmetrize(y)
        if not np.isfinite(mn2) or mn2 > 1e40:
            break
        x = x + mp @ x @ mp.T
        y = y + mp.T @ y @ mp
        mp = mp @ mp
    raise StabilityError("discrete Lyapunov doubling did not converge; "
                         "closed loop is not Schur stable")


def discrete_cost_gradient(model, gain: PiGain, q1, q2) -> CostGradient:
    """Discrete-model cost tr(X Q') + tr(V Q1) and its exact gradient.

    X and Y solve the paired discrete Lyapunov equations of the closed loop;
    the gradient is -2 B^T Y A_K X C^T plus the noise-shaping term
    2 B^T Y [[Bd K_P V, 0], [V, 0]].

    Raises StabilityError when the discrete closed loop is not Schur stable.
    """
    abar_kd, bbar_d, cbar, wtilde, qprime, q1, q2 = build_discrete_closed_loop(model, gain, q1, q2)
    x, y = _doubling_lyap_pair(abar_kd, wtilde, qprime)
    n, p = model.n, model.p
    m_k = np.vstack([model.bd @ gain.kp, np.eye(p)])
    i2t = np.hstack([np.eye(p), np.zeros((p, p))])
    grad = -2.0 * bbar_d.T @ y @ abar_kd @ x @ cbar.T + 2.0 * bbar_d.T @ y @ m_k @ model.v @ i2t
    value = float(np.trace(x @ qprime) + np.trace(model.v @ q1))
    return CostGradient(value=value, grad=grad, x=x, y=y)


def tune_gains_modelbased(model, k0: PiGain, omega: ConstraintBox, eta: float,
                          iters: int, q1, q2, record_every: int = 1) -> TuneTrace:
    """Projected gradient descent on the discrete-model PI problem.

    Uses exact model gradients; aborts with StabilityError (carrying the
    iterate index in the message) if an iterate leaves the discrete
    stabilizing set.  ``record_every`` thins the stored trace for long runs;
    the first and final iterates are always recorded.
    """
    if eta <= 0 or iters < 1:
        raise ValueError("eta must be positive and iters >= 1")
    if not omega.contains(k0):
        raise ValueError("K0 must lie in the constraint set")
    gain = k0
    trace = TuneTrace(iterates=[k0], est_gradients=[], analytic_costs=[])
    for it in range(iters):
        try:
            cg = discrete_cost_gradient(model, gain, q1, q2)
        except StabilityError as err:
            raise StabilityError(f"iterate {it} left the discrete stabilizing set") from err
        if it % record_every == 0:
            trace.est_gradients.append(cg.grad)
            trace.analytic_costs.append(cg.value)
            if it > 0:
                trace.iterates.append(gain)
        gain = project_onto_omega(PiGain.from_matrix(gain.k - eta * cg.grad), omega)
    final = discrete_cost_gradient(model, gain, q1, q2)
    trace.iterates.append(gain)
    trace.est_gradients.append(final.grad)
    trace.analytic_costs.append(final.value)
    return trace


# ---------------------------------------------------------------------------
# sampled-data (ZOH) closed-loop simulation of the continuous plant
# ---------------------------------------------------------------------------

def simulate_zoh_closed_loop(plant: LtiPlant, gain: PiGain, u0: np.ndarray,
                             y_star: np.ndarray, horizon: float, h: float,
                             rng: np.random.Generator, q1, q2):
    """Continuous plant under the sampled-data 2DOF PI law; exact between samples.

    Within each interval the input is the constant u_k = K_P e_k + K_I z_k + u0
    computed from the sampled measurement e_k = y* - (C x_k + v_k); the state
    advance over the interval uses the Van Loan discretization, and the
    integrator accumulates z_{k+1} = z_k + e_k.  Returns the terminal cost
    sample and the recorded trajectory.
    """
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    q1 = np.atleast_2d(np.asarray(q1, dtype=float))
    q2 = np.atleast_2d(np.asarray(q2, dtype=float))
    nsteps = int(round(horizon / h))
    if nsteps < 1 or abs(nsteps * h - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"h {h} does not divide horizon {horizon}")
    vl = linmath.van_loan(plant.a, plant.b, plant.w, h)
    lw = linmath.psd_factor(vl.wd)
    lv = linmath.psd_factor(plant.v)

    x = plant.init.sample(rng)
    z = np.zeros(plant.p)
    times = np.arange(nsteps + 1) * h
    ys = np.empty((nsteps + 1, plant.p))
    es = np.empty((nsteps + 1, plant.p))
    zs = np.empty((nsteps + 1, plant.p))
    for k in range(nsteps + 1):
        y_meas = plant.c @ x + lv @ rng.standard_normal(plant.p)
        e = y_star - y_meas
        ys[k], es[k], zs[k] = y_meas, e, z
        if k == nsteps:
            break
        u = gain.kp @ e + gain.ki @ z + u0
        x = vl.ad @ x + vl.bd @ u + lw @ rng.standard_normal(plant.n)
        z = z + e
        if not np.isfinite(x).all():
            raise DivergenceError("ZOH closed loop diverged", time=(k + 1) * h)
    cost = float(es[-1] @ q1 @ es[-1] + zs[-1] @ q2 @ zs[-1])
    sample = RolloutSample(e_tau=es[-1], z_tau=zs[-1], cost_sample=cost)
    traj = {"t": times, "y": ys, "e": es, "z": zs}
    return sample, traj
