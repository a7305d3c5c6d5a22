"""Propagation of solution frames of u' = J A(lambda, t) u.

The integrator is classical fixed-step RK4.  Frames are re-orthonormalized
by QR whenever their condition drifts, with the discarded growth collected
into a running log so the exponential scale of solutions stays recoverable.
Batched propagation (many parameter points sharing the time grid) is the
workhorse behind grid scans.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError, ValidationError
from .linalg import Frame, subspace_angle_batch

COND_LIMIT = 1e3
NORM_HI = 1e6
NORM_LO = 1e-6
RENORM_CHECK_EVERY = 16


@dataclass(frozen=True)
class StepControl:
    """Fixed-step RK4 settings.

    With verify on, the span is integrated again at half the step until two
    successive answers agree to angle_tol in subspace angle.
    """

    h: float = 1.0 / 64.0
    angle_tol: float = 1e-9
    max_halvings: int = 12
    verify: bool = True

    def frozen(self, h: float | None = None) -> "StepControl":
        return StepControl(h=self.h if h is None else h,
                           angle_tol=self.angle_tol,
                           max_halvings=self.max_halvings, verify=False)


@dataclass(frozen=True)
class TrajectoryFrame:
    t: float
    frame: Frame
    log_scale: float = 0.0


@dataclass
class SampledSolution:
    """A single solution sampled on an ascending time grid; values are (N, 2n)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.values.shape[0] != self.times.shape[0]:
            raise ValidationError("times and values are inconsistent")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("times must be strictly increasing")
        if not np.isfinite(self.values).all():
            raise ValidationError("solution values must be finite")


@dataclass
class FlowRecord:
    """Per-step history of a frame propagation, renormalized at every step.

    Satisfies flow(t0 -> times[i]) @ X0 = frames[i] @ (r[i] @ ... @ r[1])
    * exp(logs[i]) with each r[j] upper triangular with unit geometric-mean
    diagonal, so solutions through any vector in the propagated subspace can
    be reconstructed without overflow.
    """

    times: np.ndarray              # (N+1,), monotone in integration order
    frames: np.ndarray             # (N+1, 2n, d), orthonormal columns
    rfactors: np.ndarray           # (N+1, d, d); rfactors[0] = identity
    logs: np.ndarray               # (N+1,), cumulative scalar log growth

    def solution_through(self, v: np.ndarray, max_exponent: float = 700.0) -> SampledSolution:
        """Solution with value v at the final recorded time, sampled everywhere.

        Scales are taken relative to the final sample, which must be where
        the solution is largest for the reconstruction to stay bounded.
        """
        v = np.asarray(v, dtype=float).reshape(-1)
        n_samp, _, d = self.frames.shape
        coeff = self.frames[-1].T @ v
        rel = v - self.frames[-1] @ coeff
        if np.linalg.norm(rel) > 1e-6 * max(1.0, np.linalg.norm(v)):
            raise ValidationError("vector does not lie in the propagated subspace")
        # back-solve coeff through the accumulated triangular factors
        a = coeff.copy()
        for j in range(n_samp - 1, 0, -1):
            a = np.linalg.solve(self.rfactors[j], a) if d > 1 else a / self.rfactors[j, 0, 0]
        values = np.empty((n_samp, self.frames.shape[1]))
        w = a.copy()
        log_ref = self.logs[-1]
        for i in range(n_samp):
            if i > 0:
                w = self.rfactors[i] @ w
            expo = self.logs[i] - log_ref
            if expo > max_exponent:
                raise NumericalError("solution reconstruction overflows")
            values[i] = (self.frames[i] @ w) * np.exp(max(expo, -max_exponent))
        order = np.argsort(self.times)
        return SampledSolution(times=self.times[order], values=values[order])


def _qr_renorm(x: np.ndarray, logs: np.ndarray):
    """Orthonormalize frames (B, m, d); returns (Q, logs, rhat (B, d, d))."""
    d = x.shape[-1]
    if d == 1:
        nrm = np.linalg.norm(x, axis=1, keepdims=True)
        if np.any(nrm <= 0.0) or not np.isfinite(nrm).all():
            raise NumericalError("frame collapsed during propagation")
        q = x / nrm
        logs = logs + np.log(nrm[:, 0, 0])
        rhat = np.ones(x.shape[:1] + (1, 1))
        return q, logs, rhat
    q, r = np.linalg.qr(x)
    diag = np.einsum("bii->bi", r)
    sgn = np.where(diag < 0.0, -1.0, 1.0)
    q = q * sgn[:, None, :]
    r = r * sgn[:, :, None]
    diag = np.abs(diag)
    if np.any(diag <= 0.0) or not np.isfinite(diag).all():
        raise NumericalError("frame collapsed during propagation")
    mlog = np.log(diag).mean(axis=1)
    rhat = r * np.exp(-mlog)[:, None, None]
    return q, logs + mlog, rhat


def _needs_renorm(x: np.ndarray) -> bool:
    sv = np.linalg.svd(x, compute_uv=False)
    smax = sv.max()
    smin = sv.min()
    return smin <= 0.0 or smax / max(smin, 1e-300) > COND_LIMIT \
        or smax > NORM_HI or smax < NORM_LO


def _integrate_span(ja_of_t, x, logs, t0, t1, h_req, record: bool):
    """Fixed-step RK4 over [t0, t1] (either direction, not crossing zero).

    ja_of_t(t) returns the batch (B, 2n, 2n) of J A(lambda, t).  With record
    on, frames are renormalized at every step and the full history returned.
    """
    span = t1 - t0
    nsteps = max(1, int(round(abs(span) / h_req)))
    if abs(span) / nsteps > h_req * (1.0 + 1e-12):
        nsteps = int(np.ceil(abs(span) / h_req))
    h = span / nsteps

    hist = None
    if record:
        if x.shape[0] != 1:
            raise ValidationError("recording supports a single parameter point")
        d = x.shape[-1]
        hist = {
            "times": np.empty(nsteps + 1),
            "frames": np.empty((nsteps + 1,) + x.shape[1:]),
            "rfactors": np.empty((nsteps + 1, d, d)),
            "logs": np.empty(nsteps + 1),
        }
        x, logs, _ = _qr_renorm(x, logs)
        hist["times"][0] = t0
        hist["frames"][0] = x[0]
        hist["rfactors"][0] = np.eye(d)
        hist["logs"][0] = logs[0]

    m_right = ja_of_t(t0)
    for i in range(nsteps):
        t = t0 + i * h
        m0 = m_right
        mh = ja_of_t(t + 0.5 * h)
        m_right = ja_of_t(t0 + (i + 1) * h)
        k1 = m0 @ x
        k2 = mh @ (x + (0.5 * h) * k1)
        k3 = mh @ (x + (0.5 * h) * k2)
        k4 = m_right @ (x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if record:
            x, logs, rhat = _qr_renorm(x, logs)
            hist["times"][i + 1] = t0 + (i + 1) * h
            hist["frames"][i + 1] = x[0]
            hist["rfactors"][i + 1] = rhat[0]
            hist["logs"][i + 1] = logs[0]
        elif (i + 1) % RENORM_CHECK_EVERY == 0:
            if not np.isfinite(x).all():
                raise NumericalError("propagation produced non-finite values")
            if _needs_renorm(x):
                x, logs, _ = _qr_renorm(x, logs)
    if not np.isfinite(x).all():
        raise NumericalError("propagation produced non-finite values")
    x, logs, _ = _qr_renorm(x, logs)
    if record:
        rec = FlowRecord(times=hist["times"], frames=hist["frames"],
                         rfactors=hist["rfactors"], logs=hist["logs"])
        return x, logs, rec
    return x, logs, None


def _split_at_zero(t0: float, t1: float):
    if t0 < 0.0 < t1 or t1 < 0.0 < t0:
        return [(t0, 0.0), (0.0, t1)]
    return [(t0, t1)]


def _merge_records(recs):
    if not recs:
        return None
    if len(recs) == 1:
        return recs[0]
    first, second = recs
    # drop the duplicated junction sample at t = 0 from the first piece
    return FlowRecord(
        times=np.concatenate([first.times[:-1], second.times]),
        frames=np.concatenate([first.frames[:-1], second.frames]),
        rfactors=np.concatenate([first.rfactors[:-1], second.rfactors]),
        logs=np.concatenate([first.logs[:-1],
                             second.logs - second.logs[0] + first.logs[-1]]),
    )


def integrate_frames(ja_of_t, x0, t0: float, t1: float,
                     step: StepControl | None = None, record: bool = False,
                     return_step: bool = False):
    """Drive a batch of frames from t0 to t1 under x' = ja_of_t(t) x.

    The coefficient families are only piecewise smooth at t = 0, so spans
    crossing zero are integrated in two pieces with a grid point at 0.
    Returns (frames, logs[, record][, accepted_step]).
    """
    step = step or StepControl()
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 3:
        raise ValidationError("frames must have shape (B, 2n, d)")

    def run(h):
        x = x0.copy()
        logs = np.zeros(x.shape[0])
        recs = []
        for a, b in _split_at_zero(t0, t1):
            x, logs, rec = _integrate_span(ja_of_t, x, logs, a, b, h, record)
            if rec is not None:
                recs.append(rec)
        return x, logs, recs

    h = step.h
    h_ok = h
    x_prev, logs_prev, recs_prev = run(h)
    if step.verify:
        accepted = False
        for _ in range(step.max_halvings):
            h_next = h / 2.0
            x_cur, logs_cur, recs_cur = run(h_next)
            ang = subspace_angle_batch(x_prev, x_cur).max()
            x_prev, logs_prev, recs_prev = x_cur, logs_cur, recs_cur
            if ang <= step.angle_tol:
                # the comparison certifies the coarser step already met the
                # tolerance; freeze that one for follow-up propagations
                h_ok = h
                accepted = True
                break
            h = h_next
        if not accepted:
            raise NumericalError(
                "step halving did not reach the requested subspace angle")

    out = [x_prev, logs_prev]
    if record:
        out.append(_merge_records(recs_prev))
    if return_step:
        out.append(step.frozen(h_ok))
    return tuple(out)


def propagate_batch(family, lams: np.ndarray, x0: np.ndarray, t0: float, t1: float,
                    step: StepControl | None = None, record: bool = False,
                    return_step: bool = False):
    """Propagate a batch of frames of u' = J A(lambda, t) u from t0 to t1."""
    lams = np.asarray(lams, dtype=float)
    return integrate_frames(family.ja_factory(lams), x0, t0, t1,
                            step=step, record=record, return_step=return_step)


def propagate(family, lam, start: TrajectoryFrame, t_end: float,
              step: StepControl | None = None) -> TrajectoryFrame:
    """Propagate an orthonormal frame under u' = J A(lambda, t) u.

    Returns the frame at t_end spanning the image of the initial subspace,
    re-orthonormalized, with log_scale accumulating the discarded growth.
    """
    lam_arr = as_angle_array(lam)
    if t_end == start.t:
        return replace(start)
    x0 = start.frame.columns[None]
    frames, logs = propagate_batch(family, lam_arr[None], x0, start.t, t_end, step)
    return TrajectoryFrame(t=t_end, frame=Frame(columns=frames[0]),
                           log_scale=start.log_scale + float(logs[0]))


def propagate_recorded(family, lam, start: TrajectoryFrame, t_end: float,
                       step: StepControl | None = None):
    """Like propagate, but also return the per-step FlowRecord."""
    lam_arr = as_angle_array(lam)
    if t_end == start.t:
        raise ValidationError("recorded propagation needs a nonzero span")
    x0 = start.frame.columns[None]
    frames, logs, rec = propagate_batch(
        family, lam_arr[None], x0, start.t, t_end, step, record=True)
    return TrajectoryFrame(t=t_end, frame=Frame(columns=frames[0]),
                           log_scale=start.log_scale + float(logs[0])), rec


def as_angle_array(lam) -> np.ndarray:
    angles = getattr(lam, "angles", lam)
    return np.atleast_1d(np.asarray(angles, dtype=float))


def residual(family, lam, sol: SampledSolution) -> float:
    """Scale-normalized defect max_t |J u'(t) + A(lambda, t) u(t)|.

    The derivative is taken by centered differences on the interior of a
    uniform grid, so at least 5 samples are required.
    """
    times = sol.times
    if times.size < 5:
        raise ValidationError("residual needs at least 5 samples")
    steps = np.diff(times)
    h = steps[0]
    if np.abs(steps - h).max() > 1e-8 * h:
        raise ValidationError("residual needs a uniform time grid")
    lam_arr = as_angle_array(lam)
    u = sol.values
    du = (u[2:] - u[:-2]) / (2.0 * h)
    a_mid = family.A(lam_arr, times[1:-1])
    j = family.j_matrix()
    defect = du @ j.T + np.einsum("tij,tj->ti", a_mid, u[1:-1])
    scale = np.linalg.norm(u, axis=1).max()
    if scale == 0.0:
        raise ValidationError("residual of the zero solution is undefined")
    return float(np.linalg.norm(defect, axis=1).max() / scale)


def symplectic_pairings(family, sols: list) -> np.ndarray:
    """omega(u_i(t), u_j(t)) = <J u_i, u_j> on the common grid; shape (N, k, k)."""
    j = family.j_matrix()
    vals = np.stack([s.values for s in sols], axis=1)  # (N, k, 2n)
    return np.einsum("nia,ab,njb->nij", vals, j.T, vals)
