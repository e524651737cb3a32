"""Shared test helpers: independent oracles and random problem generators."""

import numpy as np
import pytest

from pi2dof.plant import InitialStateDistribution, LtiPlant, PiGain, build_closed_loop
from pi2dof.plant import generate_random_plant


def kron_lyap_continuous(f: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Brute-force vectorization solve of F X + X F^T + Q = 0 (test oracle only, O(q^6))."""
    n = f.shape[0]
    lhs = np.kron(np.eye(n), f) + np.kron(f, np.eye(n))
    x = np.linalg.solve(lhs, -q.reshape(-1, order="F"))
    return x.reshape(n, n, order="F")


def kron_lyap_discrete(f: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Brute-force vectorization solve of F X F^T - X + Q = 0 (test oracle only)."""
    n = f.shape[0]
    lhs = np.kron(f, f) - np.eye(n * n)
    x = np.linalg.solve(lhs, -q.reshape(-1, order="F"))
    return x.reshape(n, n, order="F")


def random_hurwitz(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random Hurwitz matrix: skew part plus a negative-definite symmetric part."""
    g = rng.standard_normal((n, n))
    s = rng.standard_normal((n, n))
    return 0.5 * (g - g.T) - (s @ s.T + 0.3 * np.eye(n))


def random_schur(n: int, rng: np.random.Generator, rho: float = 0.85) -> np.ndarray:
    """Random matrix with spectral radius scaled to about rho."""
    f = rng.standard_normal((n, n))
    return f * (rho / np.abs(np.linalg.eigvals(f)).max())


def random_sym(n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, n))
    return 0.5 * (g + g.T)


def random_psd(n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, n))
    return g @ g.T / n + 0.1 * np.eye(n)


def near_normal_plant(n, m, p, seed, x0=None, w_scale=0.0, v_scale=0.0) -> LtiPlant:
    """Plant with symmetric Hurwitz A, so 1/(2 ||Z||_2) equals the slowest pole exactly."""
    rng = np.random.default_rng(seed)
    rbar = rng.standard_normal((n, n))
    a = -(rbar @ rbar.T) / n - 0.3 * np.eye(n)
    b = rng.standard_normal((n, m))
    c = b[:, :p].T
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    return LtiPlant(a=a, b=b, c=c, w=w_scale * np.eye(n), v=v_scale * np.eye(p),
                    init=InitialStateDistribution.point(x0))


def simple_plant(n=4, m=2, p=2, w_scale=1e-2, v_scale=1e-3, seed=0,
                 init=None) -> LtiPlant:
    """Small random plant with configurable noise scales (Hurwitz by construction)."""
    rng = np.random.default_rng(seed)
    plant = generate_random_plant(n, m, p, rng)
    if init is None:
        init = plant.init
    return LtiPlant(a=plant.a, b=plant.b, c=plant.c, w=w_scale * np.eye(n),
                    v=v_scale * np.eye(p), init=init)


def stabilizing_gain(plant: LtiPlant, q1, q2, rng: np.random.Generator,
                     scale: float = 0.5, attempts: int = 200) -> PiGain:
    """Random gain rejected until the augmented closed loop is Hurwitz."""
    from pi2dof.plant import is_stabilizing

    for _ in range(attempts):
        gain = PiGain(kp=scale * rng.standard_normal((plant.m, plant.p)) + scale * np.eye(plant.m, plant.p),
                      ki=scale * rng.standard_normal((plant.m, plant.p)) + scale * np.eye(plant.m, plant.p))
        if is_stabilizing(build_closed_loop(plant, gain, q1, q2)):
            return gain
    raise RuntimeError("no stabilizing gain found")
