"""Independent reference computations used to freeze expected test values.

Everything here deliberately avoids the library's own code paths: closed
forms, LAPACK calls, generalized eigenvalue problems and adaptive
quadrature stand in as the second route.
"""

import numpy as np
import scipy.linalg
from scipy.integrate import quad


def eig2x2_closed_form(mat):
    """Roots of the characteristic polynomial of a symmetric 2x2 matrix."""
    a, b, d = mat[0, 0], mat[0, 1], mat[1, 1]
    tr = a + d
    disc = np.sqrt((a - d) ** 2 + 4.0 * b * b)
    return np.sort([(tr - disc) / 2.0, (tr + disc) / 2.0])


def kernel_weight(t):
    """Squared amplitude of the closed-form homoclinic solution."""
    t = np.asarray(t, dtype=float)
    return (t * t + 1.0) * np.exp(-2.0 * t * np.arctan(t))


def closed_form_kernel(times):
    """The decaying solution sqrt(t^2+1) exp(-t arctan t) (1, 0)."""
    times = np.asarray(times, dtype=float)
    out = np.zeros((times.size, 2))
    out[:, 0] = np.sqrt(kernel_weight(times))
    return out


# The crossing-form integral over [0, inf).  Adaptive quadrature gives
# 0.5000000000000001 with a [60, 200] tail below 1e-77; the integrand is
# -0.5 d/dt[(t^2+1) exp(-2t arctan t)], so the exact value is 1/2.
CROSSING_INTEGRAL = 0.5


def crossing_integral_quadrature(upper=60.0):
    f = lambda t: np.arctan(t) * (t * t + 1.0) * np.exp(-2.0 * t * np.arctan(t))
    val, _ = quad(f, 0.0, upper, limit=400, epsabs=1e-14, epsrel=1e-13)
    return val


def expected_crossing_form(horizon):
    """Crossing form for the unit-L2 normalized kernel on [-T, T]."""
    mass = quad(kernel_weight, -horizon, 0.0, limit=400)[0] \
        + quad(kernel_weight, 0.0, horizon, limit=400)[0]
    return -crossing_integral_quadrature(min(horizon, 80.0)) / mass


def affine_crossing_positions(b, c, lo=-1.0, hi=1.0):
    """Parameters where b + s c is singular, via the generalized eigenproblem."""
    vals = scipy.linalg.eigvals(b, -c)
    out = []
    for v in vals:
        if np.isfinite(v) and abs(v.imag) < 1e-10 and lo < v.real < hi:
            out.append(float(v.real))
    return sorted(out)


def morse_flow(b, c, lo=-1.0, hi=1.0):
    """Negative-eigenvalue count difference between the endpoints."""
    neg_lo = int(np.sum(np.linalg.eigvalsh(b + lo * c) < 0))
    neg_hi = int(np.sum(np.linalg.eigvalsh(b + hi * c) < 0))
    return neg_lo - neg_hi


def rand_sym(rng, m, scale=1.0):
    q = rng.normal(size=(m, m))
    return scale * 0.5 * (q + q.T)


def rand_orthogonal(rng, m):
    q, r = np.linalg.qr(rng.normal(size=(m, m)))
    return q * np.sign(np.diag(r))
