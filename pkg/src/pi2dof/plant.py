"""Continuous-time plant, 2DOF PI control law, and exact stochastic simulation.

The plant is ``xdot = A x + B u + w``, ``y = C x + v`` with white process noise
of intensity W and measurement noise of intensity/covariance V.  The control
law is ``u = K_P e + K_I z + u0`` with tracking error ``e = y* - y`` and
integrator ``zdot = e``.  Around the set-point equilibrium the closed loop is
an augmented linear SDE in (e_x, z); advancing it with the Van Loan
discretization of that SDE makes the simulator exact in law at every step
size, so the step only sets the sampling grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import linmath
from .errors import DivergenceError, RankError

DEFAULT_H_SIM = 0.01  # sampling grid, not an accuracy knob (simulation is exact per step)


# ---------------------------------------------------------------------------
# initial-state distribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialStateDistribution:
    """Distribution of x(0): a Gaussian (possibly degenerate) or a uniform box."""

    kind: str  # "gaussian" | "uniform_box"
    mean_vec: np.ndarray
    cov_mat: np.ndarray | None = None      # gaussian only; zero matrix = point mass
    low: np.ndarray | None = None          # uniform_box only
    high: np.ndarray | None = None

    @staticmethod
    def gaussian(mean, cov) -> "InitialStateDistribution":
        mean = np.asarray(mean, dtype=float)
        cov = linmath.symmetrize(np.asarray(cov, dtype=float))
        return InitialStateDistribution("gaussian", mean, cov_mat=cov)

    @staticmethod
    def point(mean) -> "InitialStateDistribution":
        mean = np.asarray(mean, dtype=float)
        return InitialStateDistribution("gaussian", mean, cov_mat=np.zeros((mean.size, mean.size)))

    @staticmethod
    def uniform_box(low, high) -> "InitialStateDistribution":
        low = np.asarray(low, dtype=float)
        high = np.asarray(high, dtype=float)
        if low.shape != high.shape or np.any(high < low):
            raise ValueError("box bounds must satisfy low <= high elementwise")
        return InitialStateDistribution("uniform_box", 0.5 * (low + high), low=low, high=high)

    @property
    def dim(self) -> int:
        return self.mean_vec.size

    def mean(self) -> np.ndarray:
        return self.mean_vec.copy()

    def cov(self) -> np.ndarray:
        if self.kind == "gaussian":
            return self.cov_mat.copy()
        width = self.high - self.low
        return np.diag(width ** 2 / 12.0)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        n = size if size is not None else 1
        if self.kind == "gaussian":
            factor = linmath.psd_factor(self.cov_mat)
            out = self.mean_vec + rng.standard_normal((n, self.dim)) @ factor.T
        else:
            out = rng.uniform(self.low, self.high, size=(n, self.dim))
        return out if size is not None else out[0]

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mean": self.mean_vec.tolist(), "cov": self.cov_mat.tolist()}
        return {"kind": "uniform_box", "low": self.low.tolist(), "high": self.high.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "InitialStateDistribution":
        if d["kind"] == "gaussian":
            return InitialStateDistribution.gaussian(d["mean"], d["cov"])
        if d["kind"] == "uniform_box":
            return InitialStateDistribution.uniform_box(d["low"], d["high"])
        raise ValueError(f"unknown initial-state distribution kind {d['kind']!r}")


# ---------------------------------------------------------------------------
# core data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LtiPlant:
    """Continuous-time LTI plant with noise intensities and initial-state law."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    w: np.ndarray
    v: np.ndarray
    init: InitialStateDistribution
    seed: int | None = None  # generator provenance, optional

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        for name, mat in (("A", a), ("B", b), ("C", c), ("W", w), ("V", v)):
            if not np.isfinite(mat).all():
                raise ValueError(f"{name} contains NaN or Inf entries")
        n = a.shape[0]
        if a.shape != (n, n) or b.shape[0] != n or c.shape[1] != n:
            raise ValueError("inconsistent A/B/C dimensions")
        m, p = b.shape[1], c.shape[0]
        if p > m:
            raise ValueError(f"need p <= m, got p={p}, m={m}")
        if w.shape != (n, n) or v.shape != (p, p):
            raise ValueError("W must be n x n and V p x p")
        if np.abs(w - w.T).max() > 1e-9 * (1 + np.abs(w).max()):
            raise ValueError("W must be symmetric")
        if np.abs(v - v.T).max() > 1e-9 * (1 + np.abs(v).max()):
            raise ValueError("V must be symmetric")
        if np.linalg.eigvalsh(linmath.symmetrize(w)).min() < -1e-10 * max(1.0, np.abs(w).max()):
            raise ValueError("W must be positive semi-definite")
        # V > 0 makes the tuning problem well posed, but V = 0 is allowed so the
        # noiseless verification scenarios can reuse the same type
        if np.linalg.eigvalsh(linmath.symmetrize(v)).min() < -1e-10 * max(1.0, np.abs(v).max()):
            raise ValueError("V must be positive semi-definite")
        if self.init.dim != n:
            raise ValueError("initial-state distribution dimension must equal n")
        # equilibria exist for every set-point iff [[A, B], [C, 0]] has full row rank
        sv = np.linalg.svd(equilibrium_matrix(a, b, c), compute_uv=False)
        if sv[-1] <= linmath.RANK_RTOL * sv[0]:
            raise RankError("[[A, B], [C, 0]] is rank deficient; set-point equilibria may not exist")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "w", linmath.symmetrize(w))
        object.__setattr__(self, "v", linmath.symmetrize(v))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class PiGain:
    """PI gain pair; the decision variable is the concatenation K = [K_P K_I] (m x 2p)."""

    kp: np.ndarray
    ki: np.ndarray

    def __post_init__(self):
        kp = np.atleast_2d(np.asarray(self.kp, dtype=float))
        ki = np.atleast_2d(np.asarray(self.ki, dtype=float))
        if kp.shape != ki.shape:
            raise ValueError(f"K_P and K_I must have equal shapes, got {kp.shape} vs {ki.shape}")
        if not (np.isfinite(kp).all() and np.isfinite(ki).all()):
            raise ValueError("gain entries must be finite")
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "ki", ki)

    @property
    def k(self) -> np.ndarray:
        return np.hstack([self.kp, self.ki])

    @staticmethod
    def from_matrix(k: np.ndarray) -> "PiGain":
        k = np.atleast_2d(np.asarray(k, dtype=float))
        if k.shape[1] % 2 != 0:
            raise ValueError(f"K must be m x 2p, got {k.shape}")
        p = k.shape[1] // 2
        return PiGain(kp=k[:, :p], ki=k[:, p:])


@dataclass(frozen=True)
class Equilibrium:
    x_star: np.ndarray
    u_star: np.ndarray
    y_star: np.ndarray


@dataclass(frozen=True)
class AugmentedClosedLoop:
    """Augmented error dynamics (e_x, z) of the PI loop around the set-point.

    abar_k = abar - bbar @ K @ cbar is the closed-loop matrix; wtilde_k is the
    intensity of the lumped white noise driving (e_x, z); qprime is the state
    weight blockdiag(C^T Q1 C, Q2) of the average cost.
    """

    abar: np.ndarray
    bbar: np.ndarray
    cbar: np.ndarray
    abar_k: np.ndarray
    wtilde_k: np.ndarray
    qprime: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    gain: "PiGain"
    n: int
    m: int
    p: int

    @property
    def v(self) -> np.ndarray:
        """Measurement-noise covariance (lower-right block of wtilde_k)."""
        return self.wtilde_k[self.n :, self.n :]


@dataclass(frozen=True)
class RolloutSample:
    """Terminal cost sample of one closed-loop rollout.

    e_tau includes the measurement-noise draw at the evaluation instant;
    cost_sample = e(tau)^T Q1 e(tau) + z(tau)^T Q2 z(tau).
    """

    e_tau: np.ndarray
    z_tau: np.ndarray
    cost_sample: float


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def equilibrium_matrix(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    n, m, p = a.shape[0], b.shape[1], c.shape[0]
    return np.block([[a, b], [c, np.zeros((p, m))]])


def compute_equilibrium(plant: LtiPlant, y_star: np.ndarray) -> Equilibrium:
    """Minimum-norm (x*, u*) with A x* + B u* = 0 and C x* = y*."""
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    if y_star.size != plant.p:
        raise ValueError(f"y_star must have length p={plant.p}")
    mat = equilibrium_matrix(plant.a, plant.b, plant.c)
    rhs = np.concatenate([np.zeros(plant.n), y_star])
    sol = linmath.right_pinv(mat) @ rhs
    return Equilibrium(x_star=sol[: plant.n], u_star=sol[plant.n :], y_star=y_star)


def build_closed_loop(plant: LtiPlant, gain: PiGain, q1: np.ndarray, q2: np.ndarray) -> AugmentedClosedLoop:
    """Assemble the augmented closed loop for gain K and cost weights Q1, Q2."""
    n, m, p = plant.n, plant.m, plant.p
    if gain.kp.shape != (m, p):
        raise ValueError(f"gain blocks must be {m} x {p}, got {gain.kp.shape}")
    q1 = np.atleast_2d(np.asarray(q1, dtype=float))
    q2 = np.atleast_2d(np.asarray(q2, dtype=float))
    if q1.shape != (p, p) or q2.shape != (p, p):
        raise ValueError("Q1 and Q2 must be p x p")

    abar = np.block([[plant.a, np.zeros((n, p))], [-plant.c, np.zeros((p, p))]])
    bbar = np.vstack([plant.b, np.zeros((p, m))])
    cbar = np.block([[plant.c, np.zeros((p, p))], [np.zeros((p, n)), -np.eye(p)]])
    abar_k = abar - bbar @ gain.k @ cbar

    bkp = plant.b @ gain.kp
    wtilde_k = np.block([[plant.w + bkp @ plant.v @ bkp.T, bkp @ plant.v],
                         [(bkp @ plant.v).T, plant.v]])
    qprime = np.block([[plant.c.T @ q1 @ plant.c, np.zeros((n, p))],
                       [np.zeros((p, n)), q2]])
    return AugmentedClosedLoop(abar=abar, bbar=bbar, cbar=cbar, abar_k=abar_k,
                               wtilde_k=linmath.symmetrize(wtilde_k), qprime=qprime,
                               q1=q1, q2=q2, gain=gain, n=n, m=m, p=p)


def is_stabilizing(cl: AugmentedClosedLoop) -> bool:
    """True iff the closed-loop matrix is Hurwitz (gain inside the stabilizing set)."""
    return linmath.is_hurwitz(cl.abar_k)


def _steps_for(horizon: float, step: float) -> int:
    if horizon <= 0 or step <= 0:
        raise ValueError("horizon and step must be positive")
    nsteps = int(round(horizon / step))
    if nsteps < 1 or abs(nsteps * step - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"step {step} does not divide horizon {horizon}")
    return nsteps


def simulate_augmented_states(cl: AugmentedClosedLoop, plant: LtiPlant, u0: np.ndarray,
                              u_star: np.ndarray, x_star: np.ndarray, n_rollouts: int,
                              horizon: float, step: float, rng: np.random.Generator,
                              check_every: int = 25) -> np.ndarray:
    """Exact sampled simulation of the augmented state for a batch of rollouts.

    Draws e_x(0) = x(0) - x* from the plant's initial distribution (z(0) = 0),
    advances each rollout with the one-step Van Loan transition of the closed
    loop, and returns the (n_rollouts, n+p) states at the horizon.

    Raises
    ------
    DivergenceError
        If any state stops being finite (severe instability overflow).
    """
    nsteps = _steps_for(horizon, step)
    vl = linmath.van_loan(cl.abar_k, cl.bbar, cl.wtilde_k, step)
    noise_factor = linmath.psd_factor(vl.wd)
    du = np.asarray(u0, dtype=float) - np.asarray(u_star, dtype=float)
    drive = vl.bd @ du

    q = cl.n + cl.p
    states = np.zeros((n_rollouts, q))
    states[:, : cl.n] = plant.init.sample(rng, size=n_rollouts) - x_star
    phi_t = vl.ad.T
    fac_t = noise_factor.T
    # overflow of an unstable loop is expected and detected, not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nsteps):
            states = states @ phi_t + drive + rng.standard_normal((n_rollouts, q)) @ fac_t
            if (k % check_every == check_every - 1 or k == nsteps - 1) \
                    and not np.isfinite(states).all():
                bad = int(np.argmax(~np.isfinite(states).all(axis=1)))
                raise DivergenceError(f"state diverged by t={(k + 1) * step:.6g}",
                                      time=(k + 1) * step, j=bad)
    return states


def sample_costs(cl: AugmentedClosedLoop, plant: LtiPlant, states_tau: np.ndarray,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Terminal tracking errors (with fresh measurement noise) and cost samples."""
    v_factor = linmath.psd_factor(plant.v)
    e = states_tau[:, : cl.n] @ (-plant.c.T) + rng.standard_normal((states_tau.shape[0], cl.p)) @ v_factor.T
    z = states_tau[:, cl.n :]
    costs = np.einsum("ij,jk,ik->i", e, cl.q1, e) + np.einsum("ij,jk,ik->i", z, cl.q2, z)
    return e, costs


def simulate_closed_loop(cl: AugmentedClosedLoop, plant: LtiPlant, u0: np.ndarray,
                         u_star: np.ndarray, y_star: np.ndarray, horizon: float,
                         step: float, rng: np.random.Generator) -> RolloutSample:
    """One exact rollout of the PI closed loop; returns the terminal cost sample."""
    equi = compute_equilibrium(plant, y_star)
    states = simulate_augmented_states(cl, plant, u0, u_star, equi.x_star,
                                       n_rollouts=1, horizon=horizon, step=step, rng=rng)
    e, costs = sample_costs(cl, plant, states, rng)
    return RolloutSample(e_tau=e[0], z_tau=states[0, cl.n :], cost_sample=float(costs[0]))


def generate_random_plant(n: int, m: int, p: int, rng: np.random.Generator,
                          box_half_width: float = 3.0) -> LtiPlant:
    """Random Hurwitz plant: A = J - R with skew J and R = Rbar Rbar^T positive definite.

    B has i.i.d. N(0, 9) entries and C is the transposed (first p columns of) B;
    W = 1e-2 I and V = 5e-4 I; x(0) uniform on the centered box.  Redraws until
    the equilibrium matrix passes its rank check (at most 100 attempts).
    """
    if not (p <= m <= n):
        raise ValueError(f"need p <= m <= n, got n={n}, m={m}, p={p}")
    init = InitialStateDistribution.uniform_box(-box_half_width * np.ones(n),
                                                box_half_width * np.ones(n))
    for _ in range(100):
        jbar = rng.standard_normal((n, n))
        j = 0.5 * (jbar - jbar.T)
        rbar = 2.0 * rng.standard_normal((n, n))
        a = j - rbar @ rbar.T
        b = 3.0 * rng.standard_normal((n, m))
        c = b[:, :p].T
        try:
            return LtiPlant(a=a, b=b, c=c, w=1e-2 * np.eye(n), v=5e-4 * np.eye(p), init=init)
        except RankError:
            continue
    raise RankError("could not generate a plant passing the rank check in 100 attempts")


# ---------------------------------------------------------------------------
# black-box rollout interface for the model-free tuner
# ---------------------------------------------------------------------------

def make_pi_rollout(plant: LtiPlant, y_star: np.ndarray, u0: np.ndarray,
                    q1: np.ndarray, q2: np.ndarray, tau: float,
                    h_sim: float = DEFAULT_H_SIM):
    """Package the plant as an opaque rollout function for the tuner.

    The returned callable maps ``(k_matrix, n_samples, rng)`` to an array of
    ``n_samples`` terminal cost samples under gain K, feedforward u0 and
    z(0) = 0.  No model parameters cross this boundary: the tuner only ever
    sees cost samples.
    """
    equi = compute_equilibrium(plant, y_star)
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    if u0.size != plant.m:
        raise ValueError(f"u0 must have length m={plant.m}")

    def rollout(k_matrix: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        gain = PiGain.from_matrix(k_matrix)
        cl = build_closed_loop(plant, gain, q1, q2)
        states = simulate_augmented_states(cl, plant, u0, equi.u_star, equi.x_star,
                                           n_rollouts=n_samples, horizon=tau,
                                           step=h_sim, rng=rng)
        _, costs = sample_costs(cl, plant, states, rng)
        return costs

    return rollout


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def plant_to_dict(plant: LtiPlant) -> dict:
    return {
        "n": plant.n,
        "m": plant.m,
        "p": plant.p,
        "A": plant.a.tolist(),
        "B": plant.b.tolist(),
        "C": plant.c.tolist(),
        "W": plant.w.tolist(),
        "V": plant.v.tolist(),
        "init": plant.init.to_dict(),
        "seed": plant.seed,
    }


def plant_from_dict(d: dict) -> LtiPlant:
    return LtiPlant(a=np.array(d["A"], dtype=float), b=np.array(d["B"], dtype=float),
                    c=np.array(d["C"], dtype=float), w=np.array(d["W"], dtype=float),
                    v=np.array(d["V"], dtype=float),
                    init=InitialStateDistribution.from_dict(d["init"]),
                    seed=d.get("seed"))


def save_plant(plant: LtiPlant, path) -> None:
    with open(path, "w") as fh:
        json.dump(plant_to_dict(plant), fh, indent=1)
        fh.write("\n")


def load_plant(path) -> LtiPlant:
    with open(path) as fh:
        return plant_from_dict(json.load(fh))
