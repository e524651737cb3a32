"""Dense linear-algebra kernels used throughout the package.

Matrix exponential, joint zero-order-hold discretization of dynamics and
process-noise covariance (single augmented exponential), continuous and
discrete Lyapunov solvers, the right pseudo-inverse, and uniform sampling on
a Frobenius sphere.  All solvers are dense and intended for state dimensions
up to a few hundred.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import RankError, StabilityError

# margin for Hurwitz / Schur decisions: callers need a crisp stabilizing /
# not-stabilizing signal, so eigenvalues within the margin count as unstable
STABILITY_MARGIN = 1e-9

# singular values below RANK_RTOL * sigma_1 count as zero
RANK_RTOL = 1e-10


def _check_finite(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or Inf entries")
    return a


def _check_square(a: np.ndarray, name: str) -> np.ndarray:
    a = _check_finite(a, name)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return (A + A^T) / 2; downstream PSD checks must not fail on rounding asymmetry."""
    return 0.5 * (a + a.T)


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential e^A (scaling-and-squaring with Pade approximant).

    Parameters
    ----------
    a : (n, n) array_like
        Square matrix with finite entries.

    Returns
    -------
    (n, n) ndarray
    """
    a = _check_square(a, "A")
    return scipy.linalg.expm(a)


@dataclass(frozen=True)
class VanLoanResult:
    """Joint discretization of (A, B, W) over one step h.

    ad : state transition e^{Ah}
    bd : input map  int_0^h e^{At} dt B
    wd : noise-increment covariance  int_0^h e^{At} W e^{A^T t} dt (symmetric PSD)
    """

    ad: np.ndarray
    bd: np.ndarray
    wd: np.ndarray


def van_loan(a: np.ndarray, b: np.ndarray, w_int: np.ndarray, h: float) -> VanLoanResult:
    """Exact discretization of dynamics, input map and noise covariance.

    Computes all three blocks from a single exponential of the (2n+m) x (2n+m)
    augmented matrix

        M = [[A,  W,    B],
             [0, -A^T,  0],
             [0,  0,    0]] * h

    following Van Loan's method: with E = e^M, ``ad = E11``, ``bd = E13`` and
    ``wd = E12 @ ad^T``.  No quadrature error.

    Parameters
    ----------
    a : (n, n) array_like
    b : (n, m) array_like
    w_int : (n, n) array_like
        Symmetric PSD noise intensity (power spectral density) matrix.
    h : float
        Step length, must be positive.

    Returns
    -------
    VanLoanResult
    """
    a = _check_square(a, "A")
    b = _check_finite(b, "B")
    w_int = _check_square(w_int, "W")
    n = a.shape[0]
    if b.ndim != 2 or b.shape[0] != n:
        raise ValueError(f"B must be (n, m) with n={n}, got {b.shape}")
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    if np.abs(w_int - w_int.T).max() > 1e-10 * (1.0 + np.abs(w_int).max()):
        raise ValueError("W must be symmetric")
    m = b.shape[1]

    # the augmented exponential carries an e^{+A^T t} block, so evaluate it on a
    # step with ||A h|| <= 1/2 and double up: ad(2t) = ad^2,
    # bd(2t) = (I + ad) bd, wd(2t) = ad wd ad^T + wd (exact semigroup identities)
    doublings = max(0, int(np.ceil(np.log2(max(np.linalg.norm(a, 1) * h, 1e-12) / 0.5))))
    h_base = h / (1 << doublings)

    big = np.zeros((2 * n + m, 2 * n + m))
    big[:n, :n] = a
    big[:n, n : 2 * n] = w_int
    big[:n, 2 * n :] = b
    big[n : 2 * n, n : 2 * n] = -a.T
    e = scipy.linalg.expm(big * h_base)

    ad = e[:n, :n]
    bd = e[:n, 2 * n :]
    wd = symmetrize(e[:n, n : 2 * n] @ ad.T)
    for _ in range(doublings):
        wd = symmetrize(ad @ wd @ ad.T + wd)
        bd = bd + ad @ bd
        ad = ad @ ad
    return VanLoanResult(ad=ad, bd=bd, wd=wd)


def is_hurwitz(f: np.ndarray, margin: float = STABILITY_MARGIN) -> bool:
    """True iff all eigenvalues of F have real part < -margin."""
    return bool(np.max(np.linalg.eigvals(f).real) < -margin)


def is_schur(f: np.ndarray, margin: float = STABILITY_MARGIN) -> bool:
    """True iff the spectral radius of F is < 1 - margin."""
    return bool(np.max(np.abs(np.linalg.eigvals(f))) < 1.0 - margin)


def _check_residual(residual: np.ndarray, q: np.ndarray, what: str) -> None:
    limit = 1e-9 * (1.0 + np.linalg.norm(q, "fro"))
    res = np.linalg.norm(residual, "fro")
    if res > limit:
        raise ArithmeticError(f"{what} residual {res:.3e} exceeds {limit:.3e}")


def solve_lyapunov_continuous(f: np.ndarray, qc: np.ndarray) -> np.ndarray:
    """Solve F X + X F^T + Q = 0 for Hurwitz F and symmetric Q.

    Uses the Schur-decomposition (Bartels-Stewart) solver from scipy; the
    result is symmetrized and the residual is verified against
    1e-9 * (1 + ||Q||_F).

    Raises
    ------
    StabilityError
        If F is not Hurwitz (callers treat this as "gain not stabilizing").
    """
    f = _check_square(f, "F")
    qc = _check_square(qc, "Q")
    if f.shape != qc.shape:
        raise ValueError(f"F and Q must have equal shapes, got {f.shape} vs {qc.shape}")
    if not is_hurwitz(f):
        raise StabilityError("F is not Hurwitz; continuous Lyapunov equation has no stable solution")
    x = scipy.linalg.solve_continuous_lyapunov(f, -qc)
    x = symmetrize(x)
    _check_residual(f @ x + x @ f.T + qc, qc, "continuous Lyapunov")
    return x


def solve_lyapunov_discrete(f: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Solve F X F^T - X + Q = 0 for Schur-stable F and symmetric Q.

    Raises
    ------
    StabilityError
        If the spectral radius of F is >= 1 - margin.
    """
    f = _check_square(f, "F")
    qd = _check_square(qd, "Q")
    if f.shape != qd.shape:
        raise ValueError(f"F and Q must have equal shapes, got {f.shape} vs {qd.shape}")
    if not is_schur(f):
        raise StabilityError("F is not Schur stable; discrete Lyapunov equation has no stable solution")
    x = scipy.linalg.solve_discrete_lyapunov(f, qd, method="bilinear")
    x = symmetrize(x)
    _check_residual(f @ x @ f.T - x + qd, qd, "discrete Lyapunov")
    return x


def right_pinv(mat: np.ndarray) -> np.ndarray:
    """Right pseudo-inverse M^+ = M^T (M M^T)^{-1} of a full-row-rank p x m matrix.

    Raises
    ------
    RankError
        If the smallest singular value is below RANK_RTOL * sigma_1, i.e. the
        matrix is numerically rank deficient.
    """
    mat = _check_finite(mat, "M")
    if mat.ndim != 2 or mat.shape[0] > mat.shape[1]:
        raise ValueError(f"M must be p x m with p <= m, got {mat.shape}")
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0] or sv[0] == 0.0:
        raise RankError(f"matrix is rank deficient (singular values {sv})")
    return np.linalg.solve(mat @ mat.T, mat).T


def sample_frobenius_sphere(m: int, q: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Draw an m x q matrix uniformly from the sphere ||U||_F = radius.

    A matrix of i.i.d. standard normals is normalized to the requested radius;
    the (probability-zero) all-zero draw is redrawn.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    while True:
        u = rng.standard_normal((m, q))
        norm = np.linalg.norm(u)
        if norm > 0.0:
            return (radius / norm) * u


def psd_factor(s: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Factor L of a symmetric PSD matrix with S = L L^T, tolerant of tiny negative eigenvalues."""
    s = symmetrize(np.asarray(s, dtype=float))
    w, v = np.linalg.eigh(s)
    w = np.clip(w, floor, None)
    return v * np.sqrt(w)
