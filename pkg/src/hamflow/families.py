"""Registry of Hamiltonian coefficient families over torus parameter spaces.

A family packages the symmetric coefficient matrix A(lambda, t), its
parameter derivative, and the asymptotic matrices A(lambda, +-inf) whose
products with the symplectic J must be hyperbolic.  Built-in constructors
cover the arctan rotation family and a constant negative-control family;
user families are composed from the same profile/matrix building blocks via
a TOML config.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError

TWO_PI = 2.0 * math.pi


def wrap_angles(values):
    """Wrap angles to the canonical representative in (-pi, pi]."""
    x = np.asarray(values, dtype=float)
    return np.pi - np.mod(np.pi - x, TWO_PI)


@dataclass(frozen=True)
class TorusPoint:
    """A point on T^k, angles stored wrapped to (-pi, pi]."""

    angles: tuple

    @classmethod
    def of(cls, values) -> "TorusPoint":
        x = np.atleast_1d(np.asarray(values, dtype=float))
        if x.ndim != 1 or not np.isfinite(x).all():
            raise ValidationError("torus point needs a finite angle vector")
        return cls(angles=tuple(float(v) for v in wrap_angles(x)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.angles, dtype=float)

    @property
    def k(self) -> int:
        return len(self.angles)


def as_angles(lam) -> np.ndarray:
    """Accept a TorusPoint or a plain angle array; return a float array (..., k)."""
    angles = getattr(lam, "angles", lam)
    return np.atleast_1d(np.asarray(angles, dtype=float))


def symplectic_j(n: int) -> np.ndarray:
    j = np.zeros((2 * n, 2 * n))
    j[:n, n:] = -np.eye(n)
    j[n:, :n] = np.eye(n)
    return j


def s_rotation(theta):
    """The trace-free reflection [[cos, sin], [sin, -cos]]; shape (..., 2, 2)."""
    a = np.asarray(theta, dtype=float)
    out = np.empty(a.shape + (2, 2))
    out[..., 0, 0] = np.cos(a)
    out[..., 0, 1] = np.sin(a)
    out[..., 1, 0] = np.sin(a)
    out[..., 1, 1] = -np.cos(a)
    return out


def _j_s_rotation(theta):
    """J @ s_rotation(theta), which is symmetric; shape (..., 2, 2)."""
    a = np.asarray(theta, dtype=float)
    out = np.empty(a.shape + (2, 2))
    out[..., 0, 0] = -np.sin(a)
    out[..., 0, 1] = np.cos(a)
    out[..., 1, 0] = np.cos(a)
    out[..., 1, 1] = np.sin(a)
    return out


def _j_s_rotation_deriv(theta):
    a = np.asarray(theta, dtype=float)
    out = np.empty(a.shape + (2, 2))
    out[..., 0, 0] = -np.cos(a)
    out[..., 0, 1] = -np.sin(a)
    out[..., 1, 0] = -np.sin(a)
    out[..., 1, 1] = np.cos(a)
    return out


class HamiltonianFamily:
    """A family lambda -> A(lambda, t) of symmetric matrices with hyperbolic limits.

    Evaluators broadcast: the angle argument may be a single point (k,) or a
    batch (..., k); the time argument may be a scalar or an array, as long
    as only one of the two carries batch shape.  Instances are immutable and
    safe to share between workers.
    """

    def __init__(self, n, k, a_eval, a_plus_eval, a_minus_eval, da_eval=None,
                 growth_meta=None, name="family", decay_rate=2.0, fd_step=1e-5,
                 ja_factory_hook=None):
        self.n = int(n)
        self.k = int(k)
        self._a = a_eval
        self._a_plus = a_plus_eval
        self._a_minus = a_minus_eval
        self._da = da_eval
        self.growth_meta = dict(growth_meta) if growth_meta else None
        self.name = name
        self._decay_rate = float(decay_rate)
        self._fd_step = float(fd_step)
        self._j = symplectic_j(self.n)
        self._ja_hook = ja_factory_hook

    def j_matrix(self) -> np.ndarray:
        return self._j

    def ja_factory(self, lams):
        """Closure t -> J A(lams, t) for a frozen parameter batch, scalar t.

        Built-in families precompute their parameter-dependent matrices here,
        which keeps the per-step cost of the integrator to a couple of array
        operations.
        """
        lams = np.asarray(lams, dtype=float)
        if self._ja_hook is not None:
            return self._ja_hook(lams)
        j = self._j

        def ja_of_t(t):
            return np.einsum("ij,...jk->...ik", j, self._a(lams, t))

        return ja_of_t

    def A(self, lam, t) -> np.ndarray:
        return self._a(as_angles(lam), t)

    def dA(self, lam, direction, t) -> np.ndarray:
        """Directional parameter derivative of A, analytic when available."""
        theta = as_angles(lam)
        direction = np.asarray(direction, dtype=float)
        if self._da is not None:
            return self._da(theta, direction, t)
        h = self._fd_step
        return (self._a(theta + h * direction, t)
                - self._a(theta - h * direction, t)) / (2.0 * h)

    def A_plus(self, lam) -> np.ndarray:
        return self._a_plus(as_angles(lam))

    def A_minus(self, lam) -> np.ndarray:
        return self._a_minus(as_angles(lam))

    def ja(self, lam, t) -> np.ndarray:
        return np.einsum("ij,...jk->...ik", self._j, self.A(lam, t))

    def ja_plus(self, lam) -> np.ndarray:
        return np.einsum("ij,...jk->...ik", self._j, self.A_plus(lam))

    def ja_minus(self, lam) -> np.ndarray:
        return np.einsum("ij,...jk->...ik", self._j, self.A_minus(lam))

    def decay_bound(self, horizon: float) -> float:
        """Bound on |A(lambda, +-T) - A(lambda, +-inf)| at T = horizon."""
        return self._decay_rate / float(horizon)


def example_family(k: int, growth_meta=None) -> HamiltonianFamily:
    """The arctan rotation family on T^k with coupled angle sum.

    A(lambda, t) = arctan(t) * J S_{Theta_1 + ... + Theta_k} for t >= 0 and
    arctan(t) * J S_0 for t < 0, so the asymptotic systems are the
    hyperbolic reflections -+ (pi/2) S.
    """
    if k < 1:
        raise ValidationError("torus dimension must be at least 1")

    def a_eval(theta, t):
        total = theta.sum(axis=-1)
        t = np.asarray(t, dtype=float)
        at = np.arctan(t)
        ang = np.where(t >= 0.0, total, 0.0)
        return at[..., None, None] * _j_s_rotation(ang)

    def da_eval(theta, direction, t):
        total = theta.sum(axis=-1)
        dir_total = direction.sum(axis=-1)
        t = np.asarray(t, dtype=float)
        at = np.where(t >= 0.0, np.arctan(t), 0.0)
        return (dir_total * at)[..., None, None] * _j_s_rotation_deriv(total)

    def a_plus(theta):
        return (math.pi / 2.0) * _j_s_rotation(theta.sum(axis=-1))

    def a_minus(theta):
        zero = np.zeros(theta.shape[:-1])
        return (-math.pi / 2.0) * _j_s_rotation(zero)

    def ja_hook(lams):
        # J A = -arctan(t) S_theta with theta the angle sum for t >= 0, else 0
        total = lams.sum(axis=-1)
        m_pos = -s_rotation(total)
        m_neg = -s_rotation(np.zeros_like(total))

        def ja_of_t(t):
            factor = math.atan(t)
            return factor * (m_pos if t >= 0.0 else m_neg)

        return ja_of_t

    fam = HamiltonianFamily(
        n=1, k=k, a_eval=a_eval, a_plus_eval=a_plus, a_minus_eval=a_minus,
        da_eval=da_eval, growth_meta=growth_meta,
        name=f"example-k{k}", decay_rate=2.0, ja_factory_hook=ja_hook)
    validate_family(fam)
    return fam


def compact_control_family(k: int) -> HamiltonianFamily:
    """Constant family with J A0 = diag(-1, 1); every loop invariant vanishes."""
    if k < 1:
        raise ValidationError("torus dimension must be at least 1")
    a0 = np.array([[0.0, 1.0], [1.0, 0.0]])

    def a_eval(theta, t):
        shape = np.broadcast_shapes(theta.shape[:-1], np.shape(t))
        return np.broadcast_to(a0, shape + (2, 2)).copy()

    def da_eval(theta, direction, t):
        shape = np.broadcast_shapes(theta.shape[:-1], np.shape(t))
        return np.zeros(shape + (2, 2))

    def a_limit(theta):
        return np.broadcast_to(a0, theta.shape[:-1] + (2, 2)).copy()

    def ja_hook(lams):
        mat = np.broadcast_to(np.diag([-1.0, 1.0]),
                              lams.shape[:-1] + (2, 2)).copy()
        return lambda t: mat

    fam = HamiltonianFamily(
        n=1, k=k, a_eval=a_eval, a_plus_eval=a_limit, a_minus_eval=a_limit,
        da_eval=da_eval, name=f"compact-control-k{k}", decay_rate=1e-9,
        ja_factory_hook=ja_hook)
    validate_family(fam)
    return fam


def check_hyperbolic(family: HamiltonianFamily, lam, tol: float):
    """(ok, min_real_gap) for both asymptotic systems at lam."""
    gaps = []
    for mat in (family.ja_plus(lam), family.ja_minus(lam)):
        re = np.linalg.eigvals(mat).real
        gaps.append(np.abs(re).min())
    gap = float(min(gaps))
    return gap > tol, gap


def validate_family(family: HamiltonianFamily, hyper_tol: float = 1e-6,
                    seed: int = 0, n_samples: int = 8) -> None:
    """Sampled checks: symmetry, decay to the asymptotic matrices, hyperbolicity."""
    rng = np.random.default_rng(seed)
    lams = rng.uniform(-math.pi, math.pi, size=(n_samples, family.k))
    times = np.concatenate([rng.uniform(-5.0, 5.0, size=6), [0.0, 1.0, -1.0]])
    for lam in lams:
        a_all = family.A(lam, times)
        sym_defect = np.abs(a_all - np.swapaxes(a_all, -2, -1)).max()
        if sym_defect > 1e-10:
            raise ValidationError(
                f"A(lambda, t) is not symmetric: defect {sym_defect:.2e}")
        for horizon in (50.0, 100.0):
            bound = family.decay_bound(horizon) + 1e-12
            for t_lim, a_lim in ((horizon, family.A_plus(lam)),
                                 (-horizon, family.A_minus(lam))):
                diff = np.abs(family.A(lam, t_lim) - a_lim).max()
                if diff > bound:
                    raise ValidationError(
                        f"A does not reach its limit: |A({t_lim}) - A(inf)| = {diff:.2e}"
                        f" exceeds {bound:.2e}")
        ok, gap = check_hyperbolic(family, lam, hyper_tol)
        if not ok:
            raise ValidationError(f"asymptotic system not hyperbolic, gap {gap:.2e}")


# ---------------------------------------------------------------------------
# parameter paths


class TorusPath:
    """Base class: a path s -> T^k on [a, b] with a piecewise-constant direction."""

    a: float
    b: float
    k: int

    def point(self, s):
        raise NotImplementedError

    def direction(self, s):
        raise NotImplementedError


class PiecewiseTorusPath(TorusPath):
    """Linear interpolation between waypoints along the shortest arc per angle.

    The parameter runs over [0, m-1] with segment i covering [i, i+1].  A
    coordinate difference of exactly pi is traversed in the +pi direction.
    """

    def __init__(self, waypoints):
        w = np.asarray(waypoints, dtype=float)
        if w.ndim != 2 or w.shape[0] < 2:
            raise ValidationError("need at least two waypoints of equal dimension")
        self.waypoints = wrap_angles(w)
        deltas = self.waypoints[1:] - self.waypoints[:-1]
        self.deltas = wrap_angles(deltas)
        self.k = w.shape[1]
        self.a = 0.0
        self.b = float(w.shape[0] - 1)

    def point(self, s):
        s = np.asarray(s, dtype=float)
        seg = np.clip(np.floor(s).astype(int), 0, self.waypoints.shape[0] - 2)
        frac = s - seg
        return self.waypoints[seg] + frac[..., None] * self.deltas[seg]

    def direction(self, s):
        seg = int(np.clip(math.floor(float(s)), 0, self.waypoints.shape[0] - 2))
        return self.deltas[seg].copy()


class CoordinateLoop(TorusPath):
    """The j-th coordinate loop through a base point, parametrized by the angle."""

    def __init__(self, k: int, index: int, base=None, start: float = -math.pi):
        if not 0 <= index < k:
            raise ValidationError("loop index out of range")
        self.k = k
        self.index = index
        base = np.zeros(k) if base is None else as_angles(base)
        if base.shape != (k,):
            raise ValidationError("base point dimension mismatch")
        self.base = wrap_angles(base)
        self.a = float(start)
        self.b = float(start) + TWO_PI

    def point(self, s):
        s = np.asarray(s, dtype=float)
        out = np.broadcast_to(self.base, s.shape + (self.k,)).copy()
        out[..., self.index] = s
        return out

    def direction(self, s):
        e = np.zeros(self.k)
        e[self.index] = 1.0
        return e


# ---------------------------------------------------------------------------
# declarative family configs

_PROFILES = {
    "arctan": {
        "eval": lambda t: np.arctan(np.asarray(t, dtype=float)),
        "limit_plus": math.pi / 2.0,
        "limit_minus": -math.pi / 2.0,
        "decay_rate": 2.0,
    },
    "const": {
        "eval": lambda t: np.ones(np.shape(t)),
        "limit_plus": 1.0,
        "limit_minus": 1.0,
        "decay_rate": 0.0,
    },
}

_SIDES = ("positive", "negative", "both")


def _require_keys(table: dict, allowed: set, where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _composed_term(raw: dict, k: int, idx: int):
    where = f"term[{idx}]"
    _require_keys(raw, {"profile", "side", "coeff", "matrix"}, where)
    profile = raw.get("profile", "arctan")
    if profile not in _PROFILES:
        raise ConfigError(f"{where}: unknown profile {profile!r}")
    side = raw.get("side", "both")
    if side not in _SIDES:
        raise ConfigError(f"{where}: side must be one of {_SIDES}")
    coeff = float(raw.get("coeff", 1.0))
    mat = raw.get("matrix")
    if not isinstance(mat, dict):
        raise ConfigError(f"{where}: matrix table is required")
    mtype = mat.get("type")
    if mtype == "rotation":
        _require_keys(mat, {"type", "weights", "offset"}, f"{where}.matrix")
        weights = np.asarray(mat.get("weights", [0.0] * k), dtype=float)
        if weights.shape != (k,):
            raise ConfigError(f"{where}.matrix: weights must have length k={k}")
        offset = float(mat.get("offset", 0.0))
        spec = {"kind": "rotation", "weights": weights, "offset": offset}
    elif mtype == "const":
        _require_keys(mat, {"type", "entries"}, f"{where}.matrix")
        entries = np.asarray(mat.get("entries"), dtype=float)
        if entries.shape != (2, 2) or np.abs(entries - entries.T).max() > 1e-12:
            raise ConfigError(f"{where}.matrix: entries must be symmetric 2x2")
        spec = {"kind": "const", "entries": entries}
    else:
        raise ConfigError(f"{where}.matrix: type must be 'rotation' or 'const'")
    return {"profile": profile, "side": side, "coeff": coeff, "matrix": spec}


def _composed_family(cfg: dict) -> HamiltonianFamily:
    _require_keys(cfg, {"kind", "k", "n", "term", "growth", "name"}, "family")
    k = int(cfg.get("k", 1))
    n = int(cfg.get("n", 1))
    if n != 1:
        raise ConfigError("composed families currently support n = 1 only")
    raw_terms = cfg.get("term")
    if not raw_terms:
        raise ConfigError("composed family needs at least one [[term]]")
    terms = [_composed_term(t, k, i) for i, t in enumerate(raw_terms)]

    def term_matrix(term, theta):
        m = term["matrix"]
        if m["kind"] == "rotation":
            ang = np.tensordot(theta, m["weights"], axes=([-1], [0])) + m["offset"]
            return _j_s_rotation(ang)
        shape = theta.shape[:-1]
        return np.broadcast_to(m["entries"], shape + (2, 2)).copy()

    def term_matrix_deriv(term, theta, direction):
        m = term["matrix"]
        if m["kind"] == "rotation":
            ang = np.tensordot(theta, m["weights"], axes=([-1], [0])) + m["offset"]
            dd = np.tensordot(direction, m["weights"], axes=([-1], [0]))
            return dd[..., None, None] * _j_s_rotation_deriv(ang)
        return np.zeros(theta.shape[:-1] + (2, 2))

    def side_mask(side, t):
        t = np.asarray(t, dtype=float)
        if side == "both":
            return np.ones(t.shape)
        if side == "positive":
            return (t >= 0.0).astype(float)
        return (t < 0.0).astype(float)

    def a_eval(theta, t):
        shape = np.broadcast_shapes(theta.shape[:-1], np.shape(t))
        out = np.zeros(shape + (2, 2))
        for term in terms:
            prof = _PROFILES[term["profile"]]["eval"](t) * side_mask(term["side"], t)
            out += term["coeff"] * prof[..., None, None] * term_matrix(term, theta)
        return out

    def da_eval(theta, direction, t):
        shape = np.broadcast_shapes(theta.shape[:-1], np.shape(t))
        out = np.zeros(shape + (2, 2))
        for term in terms:
            prof = _PROFILES[term["profile"]]["eval"](t) * side_mask(term["side"], t)
            out += term["coeff"] * prof[..., None, None] \
                * term_matrix_deriv(term, theta, direction)
        return out

    def limit_eval(sign):
        def a_limit(theta):
            out = np.zeros(theta.shape[:-1] + (2, 2))
            for term in terms:
                prof = _PROFILES[term["profile"]]
                if sign > 0 and term["side"] == "negative":
                    continue
                if sign < 0 and term["side"] == "positive":
                    continue
                lim = prof["limit_plus"] if sign > 0 else prof["limit_minus"]
                out += term["coeff"] * lim * term_matrix(term, theta)
            return out
        return a_limit

    decay_rate = sum(abs(t["coeff"]) * _PROFILES[t["profile"]]["decay_rate"]
                     for t in terms)

    def ja_hook(lams):
        j2 = symplectic_j(1)
        mats = []
        for term in terms:
            m = term["matrix"]
            if m["kind"] == "rotation":
                ang = lams @ m["weights"] + m["offset"]
                base = -s_rotation(ang)  # J (J S_theta) = -S_theta
            else:
                base = np.broadcast_to(
                    j2 @ m["entries"], lams.shape[:-1] + (2, 2)).copy()
            mats.append((term["profile"], term["side"], term["coeff"], base))
        shape = lams.shape[:-1] + (2, 2)

        def ja_of_t(t):
            out = np.zeros(shape)
            for profile, side, coeff, base in mats:
                if side == "positive" and t < 0.0:
                    continue
                if side == "negative" and t >= 0.0:
                    continue
                factor = math.atan(t) if profile == "arctan" else 1.0
                out += (coeff * factor) * base
            return out

        return ja_of_t

    growth = cfg.get("growth")
    if growth is not None:
        _require_keys(growth, {"p", "C", "g"}, "growth")
    fam = HamiltonianFamily(
        n=n, k=k, a_eval=a_eval, a_plus_eval=limit_eval(+1),
        a_minus_eval=limit_eval(-1), da_eval=da_eval, growth_meta=growth,
        name=str(cfg.get("name", f"composed-k{k}")),
        decay_rate=max(decay_rate, 1e-9), ja_factory_hook=ja_hook)
    validate_family(fam)
    return fam


def family_from_config(cfg: dict) -> HamiltonianFamily:
    """Build a family from a parsed config table; unknown keys are rejected."""
    if not isinstance(cfg, dict):
        raise ConfigError("family config must be a table")
    kind = cfg.get("kind")
    if kind == "example":
        _require_keys(cfg, {"kind", "k", "n", "growth", "name"}, "family")
        if int(cfg.get("n", 1)) != 1:
            raise ConfigError("the example family has n = 1")
        growth = cfg.get("growth")
        if growth is not None:
            _require_keys(growth, {"p", "C", "g"}, "growth")
        return example_family(int(cfg.get("k", 1)), growth_meta=growth)
    if kind == "compact-control":
        _require_keys(cfg, {"kind", "k", "n", "name"}, "family")
        if int(cfg.get("n", 1)) != 1:
            raise ConfigError("the compact control family has n = 1")
        return compact_control_family(int(cfg.get("k", 1)))
    if kind == "composed":
        return _composed_family(cfg)
    raise ConfigError("family.kind must be 'example', 'compact-control' or 'composed'")


def normalized_config(cfg: dict) -> dict:
    """Echo a family config in canonical key order with defaults filled in."""
    fam = family_from_config(cfg)  # validates
    out = {"kind": cfg["kind"], "k": fam.k, "n": fam.n, "name": fam.name}
    if cfg.get("growth") is not None:
        out["growth"] = dict(cfg["growth"])
    if cfg["kind"] == "composed":
        out["term"] = []
        for i, t in enumerate(cfg["term"]):
            term = _composed_term(t, fam.k, i)
            m = term["matrix"]
            mat = {"type": m["kind"]}
            if m["kind"] == "rotation":
                mat["weights"] = [float(w) for w in m["weights"]]
                mat["offset"] = m["offset"]
            else:
                mat["entries"] = [[float(v) for v in row] for row in m["entries"]]
            out["term"].append({"profile": term["profile"], "side": term["side"],
                                "coeff": term["coeff"], "matrix": mat})
    return out
