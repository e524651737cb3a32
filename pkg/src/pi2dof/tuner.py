"""Model-free PI gain optimization.

Two-point zeroth-order gradient estimation over random Frobenius-sphere
directions, with inner averaging of rollout cost samples, and projected
gradient descent over a product of Frobenius balls.  The plant is consumed
only through an opaque rollout callable ``(k_matrix, n_samples, rng) -> costs``;
no model parameters cross that boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linmath, streams
from .errors import DivergenceError, StabilityError
from .plant import PiGain


@dataclass(frozen=True)
class ConstraintBox:
    """Feasible set: ||K_P||_F <= kp_radius and ||K_I||_F <= ki_radius."""

    kp_radius: float
    ki_radius: float

    def __post_init__(self):
        if self.kp_radius <= 0 or self.ki_radius <= 0:
            raise ValueError("constraint radii must be positive")

    def contains(self, gain: PiGain, atol: float = 1e-12) -> bool:
        return (np.linalg.norm(gain.kp) <= self.kp_radius + atol
                and np.linalg.norm(gain.ki) <= self.ki_radius + atol)


@dataclass(frozen=True)
class ZoConfig:
    """Zeroth-order gradient estimator settings.

    n_dirs outer directions, n_sub inner cost averages per sign, rollout
    horizon tau, smoothing radius r, simulation grid h_sim, and the master
    seed from which every direction / rollout stream is derived.
    """

    n_dirs: int
    n_sub: int
    tau: float
    r: float
    h_sim: float = 0.01
    master_seed: int = 0

    def __post_init__(self):
        if self.n_dirs < 1 or self.n_sub < 1:
            raise ValueError("n_dirs and n_sub must be >= 1")
        if self.tau <= 0 or self.r <= 0 or self.h_sim <= 0:
            raise ValueError("tau, r and h_sim must be positive")


@dataclass(frozen=True)
class PgdConfig:
    """Projected-gradient settings: max iterations, step size, stopping threshold."""

    t_max: int
    eta: float
    eps_stop: float = 0.0

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")


@dataclass
class TuneTrace:
    """Iterate history of a projected-gradient run.

    analytic_costs is populated only when a cost oracle is supplied (for
    benchmarking); non-stabilizing iterates are recorded as inf there.
    """

    iterates: list[PiGain] = field(default_factory=list)
    est_gradients: list[np.ndarray] = field(default_factory=list)
    analytic_costs: list[float] | None = None
    stopped_at: int | None = None

    @property
    def final_gain(self) -> PiGain:
        return self.iterates[-1]


def project_onto_omega(gain: PiGain, omega: ConstraintBox) -> PiGain:
    """Orthogonal projection onto the product of Frobenius balls (blockwise rescaling).

    The rescale triggers only beyond a 1e-12 relative overshoot so that a
    projected point re-projects to itself exactly (rescaling alone can land a
    rounding ulp outside the ball).
    """
    kp, ki = gain.kp, gain.ki
    np_norm = np.linalg.norm(kp)
    ni_norm = np.linalg.norm(ki)
    if np_norm > omega.kp_radius * (1.0 + 1e-12):
        kp = kp * (omega.kp_radius / np_norm)
    if ni_norm > omega.ki_radius * (1.0 + 1e-12):
        ki = ki * (omega.ki_radius / ni_norm)
    return PiGain(kp=kp, ki=ki)


def estimate_gradient(rollout, gain: PiGain, cfg: ZoConfig, iteration: int = 0,
                      directions: np.ndarray | None = None) -> np.ndarray:
    """Two-point zeroth-order estimate of the cost gradient at K.

    For each of n_dirs directions U drawn uniformly from the Frobenius sphere
    of radius sqrt(2 m p), averages n_sub rollout cost samples at K + rU and
    K - rU and returns

        (1 / (2 r n_dirs)) * sum_i (fbar_i_plus - fbar_i_minus) U_i.

    Rollouts consume the plant only through ``rollout(k_matrix, n_samples, rng)``.
    A diverging rollout aborts the estimate: costs are never clamped, the
    DivergenceError is re-raised carrying the (i, j, k) indices.  ``directions``
    overrides the sphere draws with a fixed (n_dirs, m, 2p) stack, for
    diagnostics and symmetry tests.
    """
    m, twop = gain.k.shape
    p = twop // 2
    radius = math.sqrt(2 * m * p)
    rng_dirs = streams.substream(cfg.master_seed, streams.TAG_DIRECTIONS, iteration)

    grad = np.zeros((m, twop))
    for i in range(cfg.n_dirs):
        if directions is not None:
            u = np.asarray(directions[i], dtype=float)
        else:
            u = linmath.sample_frobenius_sphere(m, twop, radius, rng_dirs)
        f_two = np.empty(2)
        for k_idx, sign in enumerate((+1.0, -1.0)):
            k_pert = gain.k + sign * cfg.r * u
            rng_roll = streams.substream(cfg.master_seed, streams.TAG_ROLLOUT,
                                         iteration, i, k_idx)
            try:
                costs = np.asarray(rollout(k_pert, cfg.n_sub, rng_roll), dtype=float)
            except DivergenceError as err:
                raise DivergenceError(
                    f"rollout diverged at direction i={i}, sign index k={k_idx + 1}",
                    time=err.time, i=i, j=err.j, k=k_idx + 1) from err
            f_two[k_idx] = costs.mean()
        grad += (f_two[0] - f_two[1]) * u
    return grad / (2.0 * cfg.r * cfg.n_dirs)


def tune_gains(rollout, k0: PiGain, omega: ConstraintBox, zo: ZoConfig, pgd: PgdConfig,
               cost_oracle=None, use_stop_test: bool = True) -> TuneTrace:
    """Projected zeroth-order gradient descent from a stabilizing K0 in Omega.

    K_{i+1} = proj_Omega(K_i - eta * grad_hat(K_i)); stops early when
    ||K_{i+1} - K_i||_F <= eps_stop * eta unless ``use_stop_test`` is False
    (a fixed iteration count makes sample budgets comparable across methods).

    K0 stabilization is checked by a probe rollout not diverging and, when a
    ``cost_oracle`` callable is supplied, by the oracle as well (the oracle
    raising StabilityError means K0 is outside the stabilizing set).  The
    oracle is also evaluated along the iterates for benchmarking.
    """
    if not omega.contains(k0):
        raise ValueError("K0 must lie in the constraint set")
    probe_rng = streams.substream(zo.master_seed, streams.TAG_PROBE)
    try:
        rollout(k0.k, 1, probe_rng)
    except DivergenceError as err:
        raise StabilityError("probe rollout at K0 diverged; K0 does not stabilize") from err

    costs = None
    if cost_oracle is not None:
        costs = [float(cost_oracle(k0))]  # raises StabilityError if K0 not stabilizing

    trace = TuneTrace(iterates=[k0], est_gradients=[], analytic_costs=costs)
    gain = k0
    for it in range(pgd.t_max):
        grad = estimate_gradient(rollout, gain, zo, iteration=it)
        new_gain = project_onto_omega(PiGain.from_matrix(gain.k - pgd.eta * grad), omega)
        trace.est_gradients.append(grad)
        trace.iterates.append(new_gain)
        if cost_oracle is not None:
            try:
                trace.analytic_costs.append(float(cost_oracle(new_gain)))
            except StabilityError:
                trace.analytic_costs.append(float("inf"))
        step_norm = np.linalg.norm(new_gain.k - gain.k)
        gain = new_gain
        if use_stop_test and step_norm <= pgd.eps_stop * pgd.eta:
            trace.stopped_at = it + 1
            break
    return trace
