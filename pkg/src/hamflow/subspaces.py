"""Stable and unstable subspaces at t = 0 and homoclinic kernel solutions.

The stable space is found by shooting: seed the stable frame of the
instantaneous coefficient matrix at t = +T and propagate backward to 0,
where the backward dynamics make the stable directions dominant, so the
frame self-corrects.  The unstable space is the stable space of the
time-reflected system, which lets both run in one stacked batch.  Horizons
escalate (T, 2T, ...) until two consecutive answers agree in subspace
angle; at the cap the remaining drift is removed by Richardson
extrapolation in 1/T.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (ConvergenceError, HyperbolicityError,
                     InconsistentKernelError, ValidationError)
from .families import HamiltonianFamily, as_angles, check_hyperbolic
from .flow import (Frame, SampledSolution, StepControl, TrajectoryFrame,
                   integrate_frames, propagate_recorded, residual)
from .linalg import (intersection, min_angle_batch, stable_projector_batch,
                     subspace_angle, sym_eig)

LAGRANGIAN_TOL = 1e-6
KERNEL_RESIDUAL_TOL = 1e-4
KERNEL_DECAY_TOL = 1e-3


@dataclass(frozen=True)
class ShootingOptions:
    horizon: float = 40.0
    horizon_max: float = 320.0
    accept_angle: float = 1e-5
    hyper_tol: float = 1e-6
    step: StepControl = field(default_factory=StepControl)


@dataclass(frozen=True)
class BoundaryData:
    lam: tuple
    stable: Frame
    unstable: Frame
    horizon: float
    init_error_estimate: float
    step: StepControl       # the verified step, frozen for follow-up work
    base_horizon: float     # smallest horizon the acceptance test certified


@dataclass
class KernelBasis:
    """Basis of the space of solutions decaying at both ends.

    directions spans the intersection of the unstable and stable spaces at
    t = 0; each trajectory is the corresponding solution on [-T, T],
    normalized to unit discrete (trapezoidal) L2 norm.
    """

    dim: int
    directions: Frame
    trajectories: list


def _stacked_ja(family, lams):
    """Evaluator for [u-system; time-reflected system] as one batch.

    With v(t) = u(-t), v solves v' = -J A(lambda, -t) v, and the stable
    space of the reflected system at 0 is the unstable space of the
    original.
    """
    fwd = family.ja_factory(np.asarray(lams, dtype=float))

    def ja_of_t(t):
        return np.concatenate([fwd(t), -fwd(-t)], axis=0)

    return ja_of_t


def boundary_frames_batch(family, lams, horizon: float, step: StepControl,
                          return_step: bool = False):
    """(stable, unstable) frames at t = 0 for a batch of points, fixed horizon."""
    lams = np.asarray(lams, dtype=float)
    nb = lams.shape[0]
    ja = _stacked_ja(family, lams)
    seeds = stable_projector_batch(ja(horizon), 1e-9)
    out = integrate_frames(ja, seeds, horizon, 0.0, step, return_step=return_step)
    frames = out[0]
    if return_step:
        return frames[:nb], frames[nb:], out[-1]
    return frames[:nb], frames[nb:]


def gap_batch(family, lams, horizon: float, step: StepControl) -> np.ndarray:
    """Smallest principal angle between unstable and stable frames, per point."""
    es, eu = boundary_frames_batch(family, lams, horizon, step)
    return min_angle_batch(eu, es)


def _richardson_pair(cols_t, cols_2t):
    """Extrapolate subspace projectors linearly in 1/T and re-extract a frame."""
    p_t = cols_t @ cols_t.T
    p_2t = cols_2t @ cols_2t.T
    spec = sym_eig(2.0 * p_2t - p_t)
    d = cols_t.shape[1]
    return spec.eigenvectors[:, -d:]


def _escalated(family, lam, opts: ShootingOptions):
    """Escalate the horizon for one point.

    Returns (es, eu, accepted horizon, certified base horizon, error
    estimate, frozen step).  The base horizon already meets the acceptance
    angle and is what fixed-horizon follow-up sweeps should reuse.
    """
    lam_b = as_angles(lam)[None]
    horizon = opts.horizon
    es, eu, step = boundary_frames_batch(family, lam_b, horizon, opts.step,
                                         return_step=True)
    hist = [(es[0], eu[0])]
    while 2.0 * horizon <= opts.horizon_max + 1e-9:
        es2, eu2 = boundary_frames_batch(family, lam_b, 2.0 * horizon, step)
        hist.append((es2[0], eu2[0]))
        ang = max(subspace_angle(hist[-2][0], es2[0]),
                  subspace_angle(hist[-2][1], eu2[0]))
        if ang <= opts.accept_angle:
            return es2[0], eu2[0], 2.0 * horizon, horizon, ang, step
        horizon *= 2.0
    if len(hist) >= 3:
        x1 = tuple(_richardson_pair(hist[-3][i], hist[-2][i]) for i in (0, 1))
        x2 = tuple(_richardson_pair(hist[-2][i], hist[-1][i]) for i in (0, 1))
        ang = max(subspace_angle(x1[0], x2[0]), subspace_angle(x1[1], x2[1]))
        if ang <= opts.accept_angle:
            return x2[0], x2[1], horizon, horizon, ang, step
    raise ConvergenceError(
        f"subspace shooting did not settle below {opts.accept_angle} by T = {horizon}")


def _require_hyperbolic(family, lam, opts):
    ok, gap = check_hyperbolic(family, lam, opts.hyper_tol)
    if not ok:
        raise HyperbolicityError(
            f"asymptotic system at lambda is not hyperbolic (gap {gap:.2e})")


def stable_space(family: HamiltonianFamily, lam,
                 opts: ShootingOptions | None = None) -> Frame:
    """Initial values at t = 0 of solutions decaying as t -> +infinity."""
    opts = opts or ShootingOptions()
    _require_hyperbolic(family, lam, opts)
    es = _escalated(family, lam, opts)[0]
    return Frame(columns=es)


def unstable_space(family: HamiltonianFamily, lam,
                   opts: ShootingOptions | None = None) -> Frame:
    """Initial values at t = 0 of solutions decaying as t -> -infinity."""
    opts = opts or ShootingOptions()
    _require_hyperbolic(family, lam, opts)
    eu = _escalated(family, lam, opts)[1]
    return Frame(columns=eu)


def lagrangian_defect(family: HamiltonianFamily, frame: Frame) -> float:
    j = family.j_matrix()
    g = frame.columns.T @ j @ frame.columns
    return float(np.abs(g).max()) if frame.dim else 0.0


def boundary_data(family: HamiltonianFamily, lam,
                  opts: ShootingOptions | None = None) -> BoundaryData:
    """Stable and unstable frames together, with the shooting error estimate."""
    opts = opts or ShootingOptions()
    _require_hyperbolic(family, lam, opts)
    es_cols, eu_cols, horizon, base_horizon, est, step = _escalated(family, lam, opts)
    es, eu = Frame(columns=es_cols), Frame(columns=eu_cols)
    for frame in (es, eu):
        if frame.dim != family.n:
            raise ValidationError("boundary frame does not have dimension n")
        if lagrangian_defect(family, frame) > LAGRANGIAN_TOL:
            raise ValidationError("boundary frame is not Lagrangian within tolerance")
    return BoundaryData(lam=tuple(as_angles(lam)), stable=es, unstable=eu,
                        horizon=horizon, init_error_estimate=est, step=step,
                        base_horizon=base_horizon)


def _record_half_line(family, lam, horizon, side, step):
    """Recorded propagation toward 0; returns a FlowRecord ending at t = 0."""
    lam_b = as_angles(lam)[None]
    if side == "+":
        seeds = stable_projector_batch(family.ja(lam_b, horizon), 1e-9)
        start_t = horizon
    else:
        seeds = stable_projector_batch(-family.ja(lam_b, -horizon), 1e-9)
        start_t = -horizon
    start = TrajectoryFrame(t=start_t, frame=Frame(columns=seeds[0]))
    _, rec = propagate_recorded(family, lam, start, 0.0, step)
    return rec


def kernel_solutions(family: HamiltonianFamily, lam,
                     opts: ShootingOptions | None = None,
                     intersection_tol: float = 1e-7) -> KernelBasis:
    """Solutions decaying at both ends, as unit-L2 trajectories on [-T, T].

    The two half-line parts are reconstructed inside the stable and unstable
    bundles (never by shooting a single vector forward, which would excite
    the growing mode), then glued at t = 0 and normalized.
    """
    opts = opts or ShootingOptions()
    bd = boundary_data(family, lam, opts)
    dim, directions = intersection(bd.unstable, bd.stable, intersection_tol)
    if dim == 0:
        return KernelBasis(dim=0, directions=directions, trajectories=[])

    rec_s = _record_half_line(family, lam, bd.horizon, "+", bd.step)
    rec_u = _record_half_line(family, lam, bd.horizon, "-", bd.step)

    trajectories = []
    for i in range(dim):
        v = directions.columns[:, i]
        sol_s = rec_s.solution_through(v)   # samples on [0, T]
        sol_u = rec_u.solution_through(v)   # samples on [-T, 0]
        times = np.concatenate([sol_u.times[:-1], sol_s.times])
        values = np.concatenate([sol_u.values[:-1], sol_s.values])
        norm_sq = np.trapezoid(np.sum(values * values, axis=1), times)
        if norm_sq <= 0.0:
            raise InconsistentKernelError("kernel trajectory has zero mass")
        values = values / np.sqrt(norm_sq)
        sol = SampledSolution(times=times, values=values)
        peak = np.linalg.norm(values, axis=1).max()
        tails = max(np.linalg.norm(values[0]), np.linalg.norm(values[-1]))
        if tails > KERNEL_DECAY_TOL * peak:
            raise InconsistentKernelError(
                f"kernel trajectory does not decay: tail/peak = {tails / peak:.2e}")
        res = residual(family, lam, sol)
        if res > KERNEL_RESIDUAL_TOL:
            raise InconsistentKernelError(
                f"kernel trajectory residual {res:.2e} exceeds {KERNEL_RESIDUAL_TOL}")
        trajectories.append(sol)
    return KernelBasis(dim=dim, directions=directions, trajectories=trajectories)
