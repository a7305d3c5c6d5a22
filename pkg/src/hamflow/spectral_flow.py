"""Spectral flow engines for paths of selfadjoint operators.

Two independent routes to the same integer: eigenvalue counting through
spectral windows on a refined partition, and summation of crossing-form
signatures at isolated degeneracies.  Matrix paths support both engines;
homoclinic families along a parameter path expose the crossing route
through their boundary subspaces.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import (ClusteredCrossingError, DegenerateCrossingError,
                     EndpointSingularError, PartitionError, ValidationError)
from .families import TorusPath, as_angles
from .flow import StepControl
from .linalg import check_symmetric, eigvals_batch, signature
from .subspaces import ShootingOptions, boundary_data, gap_batch, kernel_solutions

GOLDEN_WIDTH = 1e-8
REGULARITY_TOL = 1e-8


@dataclass
class Crossing:
    """A parameter instant with nontrivial kernel and its crossing form."""

    position: float
    kernel_dim: int
    form: np.ndarray
    signature: int
    regular: bool
    kernel: object = None
    torus_point: tuple | None = None


@dataclass
class SflResult:
    value: int
    crossings: list
    method: str
    diagnostics: dict


class MatrixPath:
    """A path of symmetric matrices s -> L(s) on [a, b]."""

    default_gap_tol = 1e-8

    def __init__(self, fn, a: float, b: float, deriv=None, fd_step: float = 1e-5):
        if not b > a:
            raise ValidationError("path domain must have positive length")
        self.fn = fn
        self.a = float(a)
        self.b = float(b)
        self.deriv = deriv
        self.fd_step = float(fd_step)

    def value(self, s: float) -> np.ndarray:
        return check_symmetric(self.fn(s))

    def values_batch(self, ss) -> np.ndarray:
        return np.stack([self.value(float(s)) for s in np.atleast_1d(ss)])

    def eig_batch(self, ss) -> np.ndarray:
        return eigvals_batch(self.values_batch(ss))

    def gap(self, s: float) -> float:
        return float(np.abs(self.eig_batch([s])[0]).min())

    def gap_batch(self, ss) -> np.ndarray:
        return np.abs(self.eig_batch(ss)).min(axis=1)

    def derivative(self, s: float) -> np.ndarray:
        if self.deriv is not None:
            return check_symmetric(self.deriv(s))
        h = self.fd_step
        return check_symmetric((self.fn(s + h) - self.fn(s - h)) / (2.0 * h))

    def kernel(self, s: float, tol: float):
        from .linalg import sym_eig
        spec = sym_eig(self.value(s))
        sel = np.abs(spec.eigenvalues) <= tol
        return spec.eigenvectors[:, sel]

    def form(self, s: float, kernel) -> np.ndarray:
        ldot = self.derivative(s)
        gamma = kernel.T @ ldot @ kernel
        return 0.5 * (gamma + gamma.T)


class HomoclinicPath:
    """The family of homoclinic linearizations along a torus parameter path.

    The degeneracy gap is the smallest principal angle between the unstable
    and stable subspaces at t = 0; the kernel at a crossing consists of the
    solutions decaying at both ends, and the crossing form integrates the
    directional coefficient derivative against them.
    """

    default_gap_tol = 1e-5

    def __init__(self, family, path: TorusPath, opts: ShootingOptions | None = None):
        self.family = family
        self.path = path
        self.a = path.a
        self.b = path.b
        self.opts = opts or ShootingOptions()
        self._horizon = None
        self._step = None

    def _calibrate(self):
        if self._horizon is None:
            bd = boundary_data(self.family, self.path.point(np.asarray(self.a)),
                               self.opts)
            self._horizon = bd.base_horizon
            self._step = bd.step
        return self._horizon, self._step

    def gap_batch(self, ss) -> np.ndarray:
        horizon, step = self._calibrate()
        lams = self.path.point(np.atleast_1d(np.asarray(ss, dtype=float)))
        return gap_batch(self.family, lams, horizon, step)

    def gap(self, s: float) -> float:
        return float(self.gap_batch([s])[0])

    def kernel(self, s: float, tol: float = 1e-7):
        lam = self.path.point(np.asarray(float(s)))
        return kernel_solutions(self.family, lam, self.opts, intersection_tol=tol)

    def form(self, s: float, kernel_basis) -> np.ndarray:
        lam = self.path.point(np.asarray(float(s)))
        direction = self.path.direction(float(s))
        dim = kernel_basis.dim
        gamma = np.zeros((dim, dim))
        for i in range(dim):
            for j in range(i, dim):
                ti = kernel_basis.trajectories[i]
                tj = kernel_basis.trajectories[j]
                da = self.family.dA(as_angles(lam), direction, ti.times)
                integrand = np.einsum("ta,tab,tb->t", ti.values, da, tj.values)
                # the coefficient derivative is only piecewise smooth at t = 0
                idx0 = int(np.searchsorted(ti.times, 0.0))
                val = simpson(integrand[:idx0 + 1], x=ti.times[:idx0 + 1]) \
                    + simpson(integrand[idx0:], x=ti.times[idx0:])
                gamma[i, j] = gamma[j, i] = val
        return gamma


def _golden_minimize(f, lo: float, hi: float, width: float):
    """Golden-section localization of a minimum; returns (s, f(s))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > width:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = f(x2)
    s = 0.5 * (lo + hi)
    return s, min(f1, f2)


def find_crossings(path, grid: int = 64, tol: float | None = None,
                   localize_width: float = GOLDEN_WIDTH) -> list:
    """Localize the parameter instants where the path degenerates.

    The gap is sampled on a uniform grid; local minima that dip below a
    slope-scaled bracket threshold are localized by golden-section search
    and kept when the localized gap falls below tol.
    """
    tol = path.default_gap_tol if tol is None else tol
    if grid < 8:
        raise ValidationError("crossing grid needs at least 8 samples")
    ss = np.linspace(path.a, path.b, grid + 1)
    gaps = path.gap_batch(ss)
    if gaps[0] <= tol or gaps[-1] <= tol:
        raise EndpointSingularError("path endpoint is degenerate")
    ds = ss[1] - ss[0]
    slope = np.abs(np.diff(gaps)).max() / ds
    thresh = max(2.0 * tol, 1.5 * slope * ds)

    minima = [i for i in range(1, grid)
              if gaps[i] <= thresh
              and gaps[i] <= gaps[i - 1] and gaps[i] <= gaps[i + 1]]
    groups = []
    for i in minima:
        if groups and i - groups[-1][-1] == 1:  # plateau spanning two samples
            groups[-1].append(i)
        else:
            groups.append([i])
    brackets = [(group[0] - 1, group[-1] + 1) for group in groups]
    # a dip can hide between the outermost samples and a non-degenerate endpoint
    if gaps[0] <= thresh and gaps[0] < gaps[1]:
        brackets.insert(0, (0, 1))
    if gaps[grid] <= thresh and gaps[grid] < gaps[grid - 1]:
        brackets.append((grid - 1, grid))

    found = []
    for lo_i, hi_i in brackets:
        s_star, g_star = _golden_minimize(path.gap, ss[lo_i], ss[hi_i], localize_width)
        if g_star <= tol:
            found.append(float(s_star))
    found.sort()
    deduped = []
    for s in found:
        if deduped and s - deduped[-1] <= 2.0 * localize_width:
            continue  # overlapping brackets localized the same minimum
        deduped.append(s)
    for s1, s2 in zip(deduped, deduped[1:]):
        if s2 - s1 < 10.0 * localize_width:
            raise ClusteredCrossingError(
                f"crossings at {s1} and {s2} need a finer grid to separate")
    return deduped


def crossing_form(path, s0: float, kernel_tol: float | None = None,
                  regularity_tol: float = REGULARITY_TOL,
                  allow_degenerate: bool = False) -> Crossing:
    """Evaluate the crossing form on the kernel at a localized crossing."""
    if isinstance(path, MatrixPath):
        tol = kernel_tol if kernel_tol is not None else 1e-7
        kernel = path.kernel(s0, tol)
        dim = kernel.shape[1]
        if dim == 0:
            raise ValidationError(f"no kernel at parameter {s0}; not a crossing")
        gamma = path.form(s0, kernel)
    else:
        kernel = path.kernel(s0, kernel_tol if kernel_tol is not None else 1e-7)
        dim = kernel.dim
        if dim == 0:
            raise ValidationError(f"no kernel at parameter {s0}; not a crossing")
        gamma = path.form(s0, kernel)
    n_plus, n_zero, n_minus = signature(gamma, regularity_tol)
    regular = n_zero == 0
    if not regular and not allow_degenerate:
        raise DegenerateCrossingError(
            f"crossing at {s0} has a degenerate form (kernel dim {dim})")
    torus_point = None
    if isinstance(path, HomoclinicPath):
        torus_point = tuple(as_angles(path.path.point(np.asarray(float(s0)))))
    return Crossing(position=float(s0), kernel_dim=dim, form=gamma,
                    signature=n_plus - n_minus, regular=regular,
                    kernel=kernel, torus_point=torus_point)


def sfl_crossing(path, grid: int = 64, tol: float | None = None) -> SflResult:
    """Spectral flow as the sum of crossing-form signatures."""
    crossings = [crossing_form(path, s) for s in find_crossings(path, grid, tol)]
    value = int(sum(c.signature for c in crossings))
    return SflResult(value=value, crossings=crossings, method="crossing-form",
                     diagnostics={"grid": grid,
                                  "tol": path.default_gap_tol if tol is None else tol})


@dataclass(frozen=True)
class PartitionControl:
    initial_segments: int = 16
    max_segments: int = 2 ** 20
    interior_samples: int = 17


def _choose_window(moduli: np.ndarray):
    """Window edge inside the widest gap of the sampled eigenvalue moduli.

    Candidate gaps are (0, smallest), the gaps between consecutive sampled
    moduli, and a slot above the largest modulus (credited with width equal
    to that modulus).  Returns (window, gap_width) or None when the whole
    sampled spectrum sits at zero.
    """
    vals = np.unique(moduli)
    top = vals[-1]
    if top <= 0.0:
        return None
    widths = [(vals[0], 0.0, vals[0])]
    widths += [(vals[i + 1] - vals[i], vals[i], vals[i + 1])
               for i in range(len(vals) - 1)]
    widths.append((top, top, 2.0 * top))
    width, lo, hi = max(widths, key=lambda w: (w[0], -w[1]))
    if width <= 0.0:
        return None
    return 0.5 * (lo + hi), width


def sfl_eigcount(path: MatrixPath, partition: PartitionControl | None = None,
                 endpoint_tol: float = 1e-10) -> SflResult:
    """Spectral flow by counting eigenvalues through admissible windows.

    Each segment gets a window placed in the widest gap of its sampled
    eigenvalue moduli; admissibility (no sampled eigenvalue near the window
    edge, constant window count across the segment) is verified on interior
    samples, and failing segments are bisected.
    """
    if not isinstance(path, MatrixPath):
        raise ValidationError("eigenvalue counting needs a matrix-valued path")
    part = partition or PartitionControl()
    cache: dict = {}

    def eigs(s: float) -> np.ndarray:
        if s not in cache:
            cache[s] = eigvals_batch(path.value(s)[None])[0]
        return cache[s]

    for s_end in (path.a, path.b):
        if np.abs(eigs(s_end)).min() <= endpoint_tol:
            raise EndpointSingularError(f"path endpoint at {s_end} is singular")

    grid = np.linspace(path.a, path.b, part.initial_segments + 1)
    stack = [(grid[i], grid[i + 1]) for i in range(part.initial_segments)][::-1]
    n_segments = part.initial_segments
    total = 0
    while stack:
        t0, t1 = stack.pop()
        e0, e1 = eigs(t0), eigs(t1)

        def split():
            nonlocal n_segments
            n_segments += 1
            if n_segments > part.max_segments:
                raise PartitionError("window refinement exceeded the segment budget")
            mid = 0.5 * (t0 + t1)
            stack.append((mid, t1))
            stack.append((t0, mid))

        samples = np.linspace(t0, t1, part.interior_samples + 2)[1:-1]
        sample_eigs = eigvals_batch(path.values_batch(samples))
        all_eigs = np.vstack([e0[None], sample_eigs, e1[None]])
        chosen = _choose_window(np.abs(all_eigs).ravel())
        if chosen is None:
            split()
            continue
        window, gap_width = chosen
        if np.abs(np.abs(all_eigs) - window).min() < 0.25 * gap_width:
            split()
            continue
        counts = (np.abs(all_eigs) <= window).sum(axis=1)
        if np.any(counts != counts[0]):
            split()
            continue
        total += int(((e1 >= 0.0) & (e1 <= window)).sum()
                     - ((e0 >= 0.0) & (e0 <= window)).sum())
    return SflResult(value=total, crossings=[], method="eig-count",
                     diagnostics={"segments": n_segments,
                                  "initial_segments": part.initial_segments})


def concat_paths(p1: MatrixPath, p2: MatrixPath) -> MatrixPath:
    """Concatenation, reparametrized so p2 follows p1 on a shared axis."""
    offset = p1.b - p2.a

    def fn(s):
        return p1.fn(s) if s <= p1.b else p2.fn(s - offset)

    return MatrixPath(fn, p1.a, p2.b + offset)


def reverse_path(p: MatrixPath) -> MatrixPath:
    return MatrixPath(lambda s: p.fn(p.a + p.b - s), p.a, p.b)


def concat_reverse_check(p1: MatrixPath, p2: MatrixPath,
                         partition: PartitionControl | None = None,
                         junction_tol: float = 1e-10) -> bool:
    """Additivity under concatenation and negation under reversal, by counting."""
    if np.abs(p1.value(p1.b) - p2.value(p2.a)).max() > 1e-9:
        raise ValidationError("paths do not join continuously")
    junction_gap = np.abs(eigvals_batch(p1.value(p1.b)[None])[0]).min()
    if junction_gap <= junction_tol:
        raise ValidationError("junction value is singular")
    v1 = sfl_eigcount(p1, partition).value
    v2 = sfl_eigcount(p2, partition).value
    v_cat = sfl_eigcount(concat_paths(p1, p2), partition).value
    v_rev = sfl_eigcount(reverse_path(p1), partition).value
    return v_cat == v1 + v2 and v_rev == -v1
