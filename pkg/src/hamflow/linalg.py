"""Dense small-matrix kernels.

Symmetric eigendecomposition (cyclic Jacobi), quadratic-form signatures,
invariant-subspace projectors of hyperbolic matrices via the matrix sign
function, and subspace intersection through principal angles.  Everything
here targets matrices of order a few dozen at most; no sparse or large-scale
paths exist on purpose.
"""

from dataclasses import dataclass

import numpy as np

from .errors import HyperbolicityError, NumericalError, ValidationError

SYMMETRY_ATOL = 1e-12
FRAME_ORTHO_TOL = 1e-10
INTERSECTION_TOL = 1e-7


@dataclass(frozen=True)
class Spectrum:
    """Full symmetric eigendecomposition, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # orthonormal columns, eigenvectors[:, i] <-> eigenvalues[i]


@dataclass(frozen=True)
class Frame:
    """Orthonormal basis of a subspace, stored as columns of a 2n x d matrix."""

    columns: np.ndarray

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=float)
        if cols.ndim != 2:
            raise ValidationError("frame columns must form a 2-d array")
        object.__setattr__(self, "columns", cols)
        if cols.shape[1] > 0:
            g = cols.T @ cols
            if np.abs(g - np.eye(cols.shape[1])).max() > FRAME_ORTHO_TOL:
                raise ValidationError("frame columns are not orthonormal")

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    @property
    def ambient(self) -> int:
        return self.columns.shape[0]


def check_symmetric(mat: np.ndarray, atol: float = SYMMETRY_ATOL) -> np.ndarray:
    """Validate symmetry entrywise and return the symmetrized copy."""
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError("expected a square matrix")
    if np.abs(m - m.T).max() > atol * max(1.0, np.abs(m).max()):
        raise ValidationError("matrix is not symmetric within tolerance")
    return 0.5 * (m + m.T)


def jacobi_eig_batch(mats: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60,
                     vectors: bool = True):
    """Cyclic Jacobi eigendecomposition of a batch of symmetric matrices.

    mats has shape (B, m, m).  Returns (eigenvalues (B, m) ascending,
    eigenvectors (B, m, m) or None).  Rotations with a pivot already below
    the deflation threshold are skipped via masking, so matrices that
    converge early ride along for free.
    """
    a = np.array(mats, dtype=float, copy=True)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValidationError("expected batch of square matrices")
    nb, m, _ = a.shape
    v = np.tile(np.eye(m), (nb, 1, 1)) if vectors else None
    scale = np.sqrt((a * a).sum(axis=(1, 2)))
    scale = np.maximum(scale, 1e-300)
    if m == 1:
        vals = a[:, 0, :].copy()
        return vals, v

    iu = np.triu_indices(m, k=1)
    skip = tol * scale * 1e-2
    converged = False
    for _ in range(max_sweeps):
        off = np.abs(a[:, iu[0], iu[1]]).max(axis=1)
        if np.all(off <= tol * scale):
            converged = True
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[:, p, q]
                active = np.abs(apq) > skip
                if not active.any():
                    continue
                denom = 2.0 * np.where(active, apq, 1.0)
                theta = (a[:, q, q] - a[:, p, p]) / denom
                root = np.sqrt(theta * theta + 1.0)
                t = np.where(theta == 0.0, 1.0,
                             np.sign(theta) / (np.abs(theta) + root))
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cp = c[:, None]
                sp = s[:, None]
                rp = a[:, p, :].copy()
                rq = a[:, q, :].copy()
                a[:, p, :] = cp * rp - sp * rq
                a[:, q, :] = sp * rp + cp * rq
                kp = a[:, :, p].copy()
                kq = a[:, :, q].copy()
                a[:, :, p] = cp * kp - sp * kq
                a[:, :, q] = sp * kp + cp * kq
                if vectors:
                    wp = v[:, :, p].copy()
                    wq = v[:, :, q].copy()
                    v[:, :, p] = cp * wp - sp * wq
                    v[:, :, q] = sp * wp + cp * wq
    if not converged:
        off = np.abs(a[:, iu[0], iu[1]]).max(axis=1)
        if not np.all(off <= 100 * tol * scale):
            raise NumericalError("Jacobi sweeps did not converge")

    vals = np.einsum("bii->bi", a).copy()
    order = np.argsort(vals, axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1)
    if vectors:
        v = np.take_along_axis(v, order[:, None, :], axis=2)
    return vals, v


def eigvals_batch(mats: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a batch of symmetric matrices (no vectors)."""
    vals, _ = jacobi_eig_batch(np.asarray(mats, dtype=float), vectors=False)
    return vals


def _fix_vector_signs(vecs: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    out = vecs.copy()
    for i in range(out.shape[1]):
        col = out[:, i]
        nz = np.nonzero(np.abs(col) > tol)[0]
        lead = nz[0] if nz.size else int(np.argmax(np.abs(col)))
        if col[lead] < 0:
            out[:, i] = -col
    return out


def sym_eig(mat: np.ndarray) -> Spectrum:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues come back ascending.  Within clusters of numerically equal
    eigenvalues the eigenvectors are sign-normalized (first significant
    component positive) and ordered lexicographically, so repeated runs on
    the same input are bit-stable.
    """
    m = check_symmetric(mat)
    vals, vecs = jacobi_eig_batch(m[None])
    vals, vecs = vals[0], _fix_vector_signs(vecs[0])

    ctol = 1e-9 * (1.0 + np.abs(vals).max() if vals.size else 1.0)
    order = list(range(len(vals)))
    i = 0
    while i < len(vals):
        j = i
        while j + 1 < len(vals) and vals[order[j + 1]] - vals[order[i]] <= ctol:
            j += 1
        if j > i:
            block = sorted(order[i:j + 1],
                           key=lambda idx: tuple(np.round(vecs[:, idx], 9)))
            order[i:j + 1] = block
        i = j + 1
    vals = vals[order]
    vecs = vecs[:, order]
    return Spectrum(eigenvalues=vals, eigenvectors=vecs)


def signature(q: np.ndarray, tol: float) -> tuple[int, int, int]:
    """Inertia (n_plus, n_zero, n_minus) of a symmetric matrix at threshold tol."""
    if tol <= 0:
        raise ValidationError("signature tolerance must be positive")
    vals = sym_eig(q).eigenvalues
    n_plus = int(np.sum(vals > tol))
    n_minus = int(np.sum(vals < -tol))
    n_zero = vals.size - n_plus - n_minus
    return n_plus, n_zero, n_minus


def _sign_iteration_batch(mats: np.ndarray, step_tol: float = 1e-12,
                          max_iter: int = 100) -> np.ndarray:
    s = np.array(mats, dtype=float, copy=True)
    for _ in range(max_iter):
        try:
            s_inv = np.linalg.inv(s)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("sign iteration hit a singular iterate") from exc
        s_new = 0.5 * (s + s_inv)
        if not np.isfinite(s_new).all():
            raise NumericalError("sign iteration produced non-finite values")
        delta = np.abs(s_new - s).max(axis=(-2, -1))
        s = s_new
        if np.all(delta <= step_tol):
            return s
    raise NumericalError("sign iteration did not converge")


def stable_projector_batch(mats: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal bases (B, m, d) of the stable invariant subspaces.

    All matrices in the batch must share the stable dimension d; this holds
    for the asymptotic systems of one family sampled over its parameter
    space.
    """
    a = np.asarray(mats, dtype=float)
    if a.ndim == 2:
        a = a[None]
    re = np.linalg.eigvals(a).real
    if np.abs(re).min() <= tol:
        raise HyperbolicityError(
            "eigenvalue within tolerance of the imaginary axis")
    s = _sign_iteration_batch(a)
    m = a.shape[-1]
    proj = 0.5 * (np.eye(m) - s)
    dims = np.round(np.einsum("bii->b", proj)).astype(int)
    if np.abs(np.einsum("bii->b", proj) - dims).max() > 1e-6:
        raise NumericalError("stable projector has non-integer trace")
    if np.any(dims != dims[0]):
        raise ValidationError("stable dimension varies across the batch")
    d = int(dims[0])
    u, sv, _ = np.linalg.svd(proj)
    if d > 0 and np.any(sv[:, d - 1] < 1e-8):
        raise NumericalError("projector range extraction is rank deficient")
    return u[:, :, :d]


def stable_projector(mat: np.ndarray, tol: float) -> Frame:
    """Frame of the invariant subspace for eigenvalues with negative real part.

    Uses the Newton iteration S <- (S + S^-1)/2 for the matrix sign function,
    then extracts the range of (I - S)/2.
    """
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError("expected a square matrix")
    cols = stable_projector_batch(m[None], tol)[0]
    return Frame(columns=cols)


def unstable_projector(mat: np.ndarray, tol: float) -> Frame:
    """Frame of the invariant subspace for eigenvalues with positive real part."""
    return stable_projector(-np.asarray(mat, dtype=float), tol)


def intersection(f1: Frame, f2: Frame, tol: float = INTERSECTION_TOL):
    """Numerical intersection of two subspaces.

    The dimension is the number of cosines of principal angles within tol
    of 1; the basis spans the corresponding principal directions on the f1
    side.  Returns (dim, Frame).
    """
    if f1.ambient != f2.ambient:
        raise ValidationError("frames live in different ambient dimensions")
    if f1.dim == 0 or f2.dim == 0:
        return 0, Frame(columns=np.zeros((f1.ambient, 0)))
    u, sv, _ = np.linalg.svd(f1.columns.T @ f2.columns)
    dim = int(np.sum(sv >= 1.0 - tol))
    if dim == 0:
        return 0, Frame(columns=np.zeros((f1.ambient, 0)))
    basis = f1.columns @ u[:, :dim]
    q, _ = np.linalg.qr(basis)
    return dim, Frame(columns=q[:, :dim])


def principal_sines(f1_cols: np.ndarray, f2_cols: np.ndarray) -> np.ndarray:
    """Sines of the principal angles, ascending; accurate for small angles."""
    resid = f2_cols - f1_cols @ (f1_cols.T @ f2_cols)
    sv = np.linalg.svd(resid, compute_uv=False)
    return np.sort(np.clip(sv, 0.0, 1.0))


def min_principal_angle(f1_cols: np.ndarray, f2_cols: np.ndarray) -> float:
    """Smallest principal angle between two subspaces, in radians."""
    return float(np.arcsin(principal_sines(f1_cols, f2_cols)[0]))


def subspace_angle(f1_cols: np.ndarray, f2_cols: np.ndarray) -> float:
    """Largest principal angle; the natural distance for equal-dim subspaces."""
    return float(np.arcsin(principal_sines(f1_cols, f2_cols)[-1]))


def subspace_angle_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Largest principal angle per batch item; a, b have shape (B, m, d)."""
    resid = b - a @ (np.swapaxes(a, -2, -1) @ b)
    sv = np.linalg.svd(resid, compute_uv=False)
    return np.arcsin(np.clip(sv.max(axis=-1), 0.0, 1.0))


def min_angle_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest principal angle per batch item."""
    resid = b - a @ (np.swapaxes(a, -2, -1) @ b)
    sv = np.linalg.svd(resid, compute_uv=False)
    return np.arcsin(np.clip(sv.min(axis=-1), 0.0, 1.0))


def complexify_eig_check(mat: np.ndarray, tol: float = 1e-9) -> bool:
    """Eigenvalue-doubling test for the real embedding of the complexification.

    The complexified operator acts on pairs (u, v) as the block matrix
    [[M, 0], [0, M]]; the check confirms every eigenvalue of M shows up
    there with exactly doubled multiplicity.
    """
    m = check_symmetric(mat)
    k = m.shape[0]
    emb = np.zeros((2 * k, 2 * k))
    emb[:k, :k] = m
    emb[k:, k:] = m
    base = sym_eig(m).eigenvalues
    doubled = sym_eig(emb).eigenvalues
    expected = np.repeat(base, 2)
    atol = tol * (1.0 + (np.abs(base).max() if base.size else 0.0))
    return bool(np.abs(doubled - expected).max() <= atol)
