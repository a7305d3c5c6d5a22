"""Loop invariants and degeneracy geometry on the parameter torus.

The Chern vector collects the spectral flow around the k coordinate loops;
together with one invertible parameter point it certifies that the
bifurcation set has codimension at most one.  The scanner classifies grid
cells by kernel dimension and estimates the box-counting dimension of the
degenerate set across dyadic resolutions.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BasePointError, CertificateUnavailable, NumericalError
from .families import CoordinateLoop, HamiltonianFamily, TorusPath, wrap_angles
from .flow import StepControl
from .spectral_flow import HomoclinicPath, sfl_crossing
from .subspaces import ShootingOptions, boundary_frames_batch, kernel_solutions

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ChernVector:
    """Loop spectral flows along the coordinate loops, with any base shifts."""

    components: tuple
    base: tuple
    loop_starts: tuple

    def __iter__(self):
        return iter(self.components)


@dataclass(frozen=True)
class Certificate:
    invertible_point: tuple
    nonzero_component: int  # 1-based loop index
    chern: ChernVector
    conclusion: str


@dataclass
class ScanReport:
    family: str
    resolution: int
    tol: float
    cell_width: float
    degenerate_cells: list
    box_counts: dict
    dimension_estimate: float | None
    chern: ChernVector | None
    certificate: Certificate | None
    warning: str | None = None
    cells_by_resolution: dict | None = None
    gap_grid: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        out = {
            "family": self.family,
            "resolution": self.resolution,
            "tol": self.tol,
            "cell_width": self.cell_width,
            "box_counts": {str(k): int(v) for k, v in self.box_counts.items()},
            "dimension_estimate": self.dimension_estimate,
            "degenerate_cells": self.degenerate_cells,
            "warning": self.warning,
        }
        if self.chern is not None:
            out["chern"] = {"components": list(self.chern.components),
                            "base": list(self.chern.base),
                            "loop_starts": list(self.chern.loop_starts)}
        else:
            out["chern"] = None
        if self.certificate is not None:
            out["certificate"] = {
                "invertible_point": list(self.certificate.invertible_point),
                "nonzero_component": self.certificate.nonzero_component,
                "conclusion": self.certificate.conclusion,
            }
        else:
            out["certificate"] = None
        return out


def _probe_start(path: HomoclinicPath, tol: float, probes: int = 64) -> float:
    """First probe instant along the loop whose gap clears the threshold."""
    ss = np.linspace(path.a, path.b, probes, endpoint=False)
    gaps = path.gap_batch(ss)
    thresh = 10.0 * tol
    if gaps[0] > thresh:
        return float(ss[0])
    ok = np.nonzero(gaps > thresh)[0]
    if ok.size == 0:
        raise BasePointError("no invertible base point on a 64-point loop probe")
    return float(ss[ok[0]])


def chern_vector(family: HamiltonianFamily, base=None,
                 opts: ShootingOptions | None = None, grid: int = 64,
                 gap_tol: float = 1e-5) -> ChernVector:
    """Spectral flow along each coordinate loop, base-shifted off degeneracies."""
    base_arr = np.zeros(family.k) if base is None else \
        np.atleast_1d(np.asarray(getattr(base, "angles", base), dtype=float))
    components = []
    starts = []
    for j in range(family.k):
        loop = CoordinateLoop(family.k, j, base_arr)
        path = HomoclinicPath(family, loop, opts)
        start = _probe_start(path, gap_tol)
        if start != loop.a:
            shifted = CoordinateLoop(family.k, j, base_arr, start=start)
            moved = HomoclinicPath(family, shifted, opts)
            moved._horizon, moved._step = path._horizon, path._step
            path = moved
        res = sfl_crossing(path, grid=grid, tol=gap_tol)
        components.append(int(res.value))
        starts.append(float(start))
    return ChernVector(components=tuple(components),
                       base=tuple(wrap_angles(base_arr)),
                       loop_starts=tuple(starts))


def _coarse_grid(k: int, per_axis: int = 8) -> np.ndarray:
    axes = [np.linspace(-math.pi, math.pi, per_axis, endpoint=False)] * k
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def certify(family: HamiltonianFamily, opts: ShootingOptions | None = None,
            grid: int = 64, gap_tol: float = 1e-5) -> Certificate:
    """Certificate that the bifurcation hypotheses hold for the family.

    Searches a coarse parameter grid for an invertible point (verified by a
    full kernel computation), evaluates the loop invariants, and re-derives
    the nonzero component on a different grid before emitting.
    """
    opts = opts or ShootingOptions()
    pts = _coarse_grid(family.k)
    from .subspaces import gap_batch as _gap_batch
    probe_step = StepControl(h=1.0 / 32.0, verify=False)
    gaps = _gap_batch(family, pts, 16.0, probe_step)
    order = np.argsort(-gaps, kind="stable")
    invertible = None
    for idx in order[:4]:
        if gaps[idx] <= 10.0 * gap_tol:
            break
        candidate = pts[idx]
        kb = kernel_solutions(family, candidate, opts)
        if kb.dim == 0:
            invertible = wrap_angles(candidate)
            break
    if invertible is None:
        raise CertificateUnavailable(
            "invertible-point", "no parameter with trivial kernel found on the grid")

    chern = chern_vector(family, opts=opts, grid=grid, gap_tol=gap_tol)
    nonzero = [j for j, c in enumerate(chern.components) if c != 0]
    if not nonzero:
        raise CertificateUnavailable(
            "nonzero-loop-index", "all coordinate loop spectral flows vanish")
    j = nonzero[0]

    # independent re-derivation of the nonzero component on a different grid
    loop = CoordinateLoop(family.k, j, np.asarray(chern.base))
    path = HomoclinicPath(family, loop, opts)
    start = _probe_start(path, gap_tol)
    if start != loop.a:
        path = HomoclinicPath(
            family, CoordinateLoop(family.k, j, np.asarray(chern.base), start=start),
            opts)
    check = sfl_crossing(path, grid=grid + 29, tol=gap_tol).value
    if check != chern.components[j]:
        raise NumericalError(
            f"loop index {j + 1} unstable under regridding: {chern.components[j]} vs {check}")

    if family.k >= 2:
        conclusion = (
            f"invertible parameter and nonzero loop index {j + 1} certify that the "
            f"bifurcation set on the {family.k}-torus has covering dimension at "
            f"least {family.k - 1} and is not contractible to a point")
    else:
        conclusion = (
            f"nonzero loop index {j + 1} certifies bifurcation somewhere along "
            "the parameter circle")
    return Certificate(invertible_point=tuple(float(v) for v in invertible),
                       nonzero_component=j + 1, chern=chern,
                       conclusion=conclusion)


@dataclass(frozen=True)
class ScanOptions:
    horizon: float = 16.0
    step_h: float = 1.0 / 32.0
    workers: int = 1
    chunk: int = 8192
    include_invariant: bool = True


def _cell_centers(resolution: int, k: int) -> np.ndarray:
    w = TWO_PI / resolution
    axis = -math.pi + (np.arange(resolution) + 0.5) * w
    mesh = np.meshgrid(*([axis] * k), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _sines_batch(family, lams, horizon, step, workers, chunk):
    """Principal-angle sines between unstable and stable frames, chunked."""

    def work(block):
        es, eu = boundary_frames_batch(family, block, horizon, step)
        resid = es - eu @ (np.swapaxes(eu, -2, -1) @ es)
        sv = np.linalg.svd(resid, compute_uv=False)
        return np.sort(np.clip(sv, 0.0, 1.0), axis=-1)

    blocks = [lams[i:i + chunk] for i in range(0, lams.shape[0], chunk)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    return np.concatenate(parts, axis=0)


def _grid_lipschitz(gaps: np.ndarray, cell_width: float) -> float:
    est = 0.0
    for axis in range(gaps.ndim):
        diff = np.abs(np.roll(gaps, -1, axis=axis) - gaps)
        est = max(est, float(diff.max()) / cell_width)
    return est


def scan_degeneracy(family: HamiltonianFamily, resolution: int, tol: float = 1e-4,
                    scan_opts: ScanOptions | None = None,
                    opts: ShootingOptions | None = None) -> ScanReport:
    """Classify grid cells on T^k by kernel dimension and estimate the
    box-counting dimension of the degenerate set over three dyadic
    resolutions.

    A cell is flagged when its center gap falls below the larger of tol and
    a slope-scaled threshold covering the half-diagonal of the cell, so the
    flagged set tracks the cells the degeneracy locus can pass through.
    """
    if resolution < 8:
        raise NumericalError("scan resolution must be at least 8")
    so = scan_opts or ScanOptions()
    step = StepControl(h=so.step_h, verify=False)
    k = family.k

    box_counts: dict = {}
    cells_by_resolution: dict = {}
    base_cells = []
    base_gap_grid = None
    warning = None
    for res in (resolution, 2 * resolution, 4 * resolution):
        w = TWO_PI / res
        lams = _cell_centers(res, k)
        sines = _sines_batch(family, lams, so.horizon, step, so.workers, so.chunk)
        gaps = np.arcsin(sines[:, 0]).reshape((res,) * k)
        lip = _grid_lipschitz(gaps, w)
        thresh = max(tol, lip * 0.5 * w * math.sqrt(k))
        flagged = np.argwhere(gaps <= thresh)
        box_counts[res] = int(flagged.shape[0])
        cells_by_resolution[res] = flagged
        if res == resolution:
            base_gap_grid = gaps
            dims = (np.arcsin(sines) <= thresh).sum(axis=1).reshape((res,) * k)
            for idx in flagged:
                tup = tuple(int(i) for i in idx)
                base_cells.append({
                    "index": list(tup),
                    "angles": [float(-math.pi + (i + 0.5) * w) for i in tup],
                    "kernel_dim": int(dims[tup]),
                    "gap": float(gaps[tup]),
                })

    counts = [box_counts[r] for r in sorted(box_counts)]
    if all(c > 0 for c in counts):
        res_list = np.array(sorted(box_counts), dtype=float)
        slope = np.polyfit(np.log(res_list), np.log(counts), 1)[0]
        dimension = float(slope)
    else:
        dimension = None
        warning = "degenerate set empty at some resolution; no dimension estimate"

    chern = None
    certificate = None
    if so.include_invariant:
        chern = chern_vector(family, opts=opts)
        try:
            certificate = certify(family, opts=opts)
        except CertificateUnavailable:
            certificate = None

    return ScanReport(family=family.name, resolution=resolution, tol=tol,
                      cell_width=TWO_PI / resolution, degenerate_cells=base_cells,
                      box_counts=box_counts, dimension_estimate=dimension,
                      chern=chern, certificate=certificate, warning=warning,
                      cells_by_resolution=cells_by_resolution,
                      gap_grid=base_gap_grid)


def gap_profile(family: HamiltonianFamily, path: TorusPath, samples: int = 256,
                scan_opts: ScanOptions | None = None):
    """Gap of the linearization along a parameter path; returns (s, gap)."""
    so = scan_opts or ScanOptions()
    step = StepControl(h=so.step_h, verify=False)
    ss = np.linspace(path.a, path.b, samples + 1)
    lams = path.point(ss)
    sines = _sines_batch(family, lams, so.horizon, step, so.workers, so.chunk)
    return ss, np.arcsin(sines[:, 0])


def degenerate_instants(family: HamiltonianFamily, path: TorusPath,
                        samples: int = 256, tol: float = 1e-3,
                        scan_opts: ScanOptions | None = None) -> list:
    """Detection-only localization of gap minima below tol along a path.

    Unlike crossing localization this tolerates degenerate path endpoints,
    so it can probe loops that start on the degenerate set.
    """
    from .spectral_flow import _golden_minimize
    so = scan_opts or ScanOptions()
    step = StepControl(h=so.step_h, verify=False)
    ss, gaps = gap_profile(family, path, samples, so)

    def gap_one(s):
        lam = path.point(np.asarray([s], dtype=float))
        sines = _sines_batch(family, lam, so.horizon, step, 1, so.chunk)
        return float(np.arcsin(sines[0, 0]))

    ds = ss[1] - ss[0]
    slope = np.abs(np.diff(gaps)).max() / ds
    thresh = max(2.0 * tol, 1.5 * slope * ds)
    found = []
    n = len(ss)
    for i in range(n):
        if gaps[i] > thresh:
            continue
        left = gaps[i - 1] if i > 0 else np.inf
        right = gaps[i + 1] if i < n - 1 else np.inf
        if gaps[i] <= left and gaps[i] <= right:
            lo = ss[max(i - 1, 0)]
            hi = ss[min(i + 1, n - 1)]
            s_star, g_star = _golden_minimize(gap_one, lo, hi, 1e-8)
            if g_star <= tol:
                found.append(float(s_star))
    merged = []
    for s in sorted(found):
        if not merged or s - merged[-1] > 1e-6:
            merged.append(s)
    return merged
