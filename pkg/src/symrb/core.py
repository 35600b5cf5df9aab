"""Structure-preserving linear algebra kernels.

Everything here works in the split layout: a state vector is u = [q; p],
the canonical Poisson tensor J maps [q; p] to [p; -q], and a basis with
half-rank n stores the partner of column j in column n + j.  J is never
materialized; it is applied as a signed block swap.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal


class DegenerateDirectionError(Exception):
    """A candidate column collapsed to numerical zero after projection."""


class StructureError(Exception):
    """Input violates a required matrix structure."""


def poisson_apply(x, transpose=False):
    """Apply the Poisson tensor J (or J^T when `transpose`) to the rows of x.

    Parameters
    ----------
    x : (2N, ...) array
        Vector or matrix with an even number of rows.
    """
    x = np.asarray(x)
    m = x.shape[0]
    if m % 2:
        raise ValueError("even row count required, got %d" % m)
    half = m // 2
    top, bot = x[:half], x[half:]
    if transpose:
        return np.concatenate((-bot, top), axis=0)
    return np.concatenate((bot, -top), axis=0)


@dataclass(frozen=True)
class PoissonTensor:
    """Canonical Poisson tensor of a 2N-dimensional phase space."""

    half_dim: int

    def apply(self, x, transpose=False):
        x = np.asarray(x)
        if x.shape[0] != 2 * self.half_dim:
            raise ValueError(
                "expected %d rows, got %d" % (2 * self.half_dim, x.shape[0])
            )
        return poisson_apply(x, transpose=transpose)


@dataclass
class OrthosymplecticBasis:
    """Orthogonal symplectic basis stored as [E | J^T E]."""

    cols: np.ndarray

    @property
    def half_rank(self):
        return self.cols.shape[1] // 2

    def __array__(self, dtype=None):
        if dtype is None:
            return self.cols
        return self.cols.astype(dtype)

    def validate(self, tol=1e-12):
        """Raise StructureError unless the two basis identities hold."""
        u = self.cols
        k = u.shape[1]
        gram = u.T @ u
        err_orth = np.linalg.norm(gram - np.eye(k))
        sym = u.T @ poisson_apply(u)
        err_symp = np.linalg.norm(sym - poisson_apply(np.eye(k)))
        if err_orth > tol or err_symp > tol:
            raise StructureError(
                "basis identities violated: orth %.3e symp %.3e" % (err_orth, err_symp)
            )
        return self


def _mgs_pass(v, kept, partners):
    for e, f in zip(kept, partners):
        v = v - e * (e @ v)
        v = v - f * (f @ v)
    return v


def symplectic_gram_schmidt(a, reorthogonalize=True, on_degenerate="skip"):
    """Orthosymplectic orthogonalization of the columns of `a`.

    Columns are processed left to right; each surviving column emits the
    pair (e, J^T e).  Candidates whose post-projection norm falls below
    1e-10 * ||a||_F are degenerate: skipped by default, or raised as
    DegenerateDirectionError when on_degenerate="raise".

    Returns
    -------
    OrthosymplecticBasis
        Columns laid out as [e_1 .. e_m | J^T e_1 .. J^T e_m].
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a matrix")
    if a.shape[0] % 2:
        raise ValueError("even row count required")
    if on_degenerate not in ("skip", "raise"):
        raise ValueError("on_degenerate must be 'skip' or 'raise'")
    drop_tol = 1e-10 * np.linalg.norm(a)
    kept, partners = [], []
    for idx in range(a.shape[1]):
        v = _mgs_pass(a[:, idx].copy(), kept, partners)
        if reorthogonalize:
            v = _mgs_pass(v, kept, partners)
        nrm = np.linalg.norm(v)
        if nrm < drop_tol:
            if on_degenerate == "raise":
                raise DegenerateDirectionError(
                    "column %d is degenerate after projection (norm %.3e)" % (idx, nrm)
                )
            continue
        e = v / nrm
        kept.append(e)
        partners.append(poisson_apply(e, transpose=True))
    if not kept:
        return OrthosymplecticBasis(np.zeros((a.shape[0], 0)))
    return OrthosymplecticBasis(np.column_stack(kept + partners))


def complex_svd_basis(s, half_rank):
    """Best orthosymplectic basis of an ensemble via the complex SVD.

    The ensemble s = [s_q; s_p] is mapped to the complex matrix
    s_q + i s_p, whose leading `half_rank` left singular vectors
    yield the basis [Re Y | block | Im Y] in paired layout.

    Returns
    -------
    (OrthosymplecticBasis, ndarray)
        The basis and the full nonincreasing singular value vector.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] % 2:
        raise ValueError("expected a matrix with an even row count")
    big_n = s.shape[0] // 2
    p = s.shape[1]
    if not 1 <= half_rank <= min(big_n, p):
        raise ValueError(
            "half_rank %d out of range [1, %d]" % (half_rank, min(big_n, p))
        )
    c = s[:big_n] + 1j * s[big_n:]
    y, sigma, _ = np.linalg.svd(c, full_matrices=False)
    y = y[:, :half_rank]
    e = np.concatenate((y.real, y.imag), axis=0)
    cols = np.concatenate((e, poisson_apply(e, transpose=True)), axis=1)
    return OrthosymplecticBasis(cols), sigma


def coefficient_gram(z):
    """Gram operator S(Z) = Z Z^T + J^T Z Z^T J of a coefficient matrix."""
    z = np.asarray(z, dtype=float)
    jtz = poisson_apply(z, transpose=True)
    s = z @ z.T + jtz @ jtz.T
    return (s + s.T) / 2.0


@dataclass
class PVLFactorization:
    """Eigenfactorization S = Q blkdiag(D_n, D_n) Q^T with Q orthosymplectic."""

    q_factor: np.ndarray
    diag: np.ndarray

    def matrix(self):
        dd = np.concatenate((self.diag, self.diag))
        return (self.q_factor * dd) @ self.q_factor.T


def _check_gram_structure(s):
    m = s.shape[0]
    if s.ndim != 2 or s.shape[1] != m or m % 2:
        raise StructureError("expected a square matrix of even size")
    scale = np.linalg.norm(s)
    if scale == 0.0:
        return
    if np.linalg.norm(s - s.T) > 1e-12 * scale:
        raise StructureError("matrix is not symmetric")
    j = poisson_apply(np.eye(m))
    if np.linalg.norm(s @ j - j @ s.T) > 1e-12 * scale:
        raise StructureError("matrix is not skew-Hamiltonian")


def _apply_householder_rows(m, v, beta, rows):
    m[rows] -= np.outer(beta * v, v @ m[rows])


def _apply_householder_cols(m, v, beta, cols):
    m[:, cols] -= np.outer(m[:, cols] @ v, beta * v)


def pvl_factorize(s):
    """Factor a symmetric PSD skew-Hamiltonian matrix in PVL form.

    Reduction to twin symmetric tridiagonal blocks by a sweep of
    rotations in the (j, n+j) planes (which realify one column of the
    complex image) and paired Householder reflections, followed by a
    tridiagonal eigensolve.  Eigenvalues are returned nonincreasing;
    roundoff-negative ones are clipped to zero.
    """
    s = np.asarray(s, dtype=float)
    _check_gram_structure(s)
    m = s.shape[0]
    n = m // 2
    t = s.copy()
    q = np.eye(m)
    for k in range(n - 1):
        for j in range(k + 1, n):
            a_jk = t[j, k]
            b_jk = -t[n + j, k]
            r = np.hypot(a_jk, b_jk)
            if r == 0.0:
                continue
            c, d = a_jk / r, b_jk / r
            rot_left = np.array([[c, -d], [d, c]])
            rot_right = np.array([[c, d], [-d, c]])
            pair = [j, n + j]
            t[pair] = rot_left @ t[pair]
            t[:, pair] = t[:, pair] @ rot_right
            q[:, pair] = q[:, pair] @ rot_right
        x = t[k + 1 : n, k]
        nx = np.linalg.norm(x)
        if nx > 0.0 and np.linalg.norm(x[1:]) > 0.0:
            v = x.copy()
            v[0] += (1.0 if x[0] >= 0 else -1.0) * nx
            beta = 2.0 / (v @ v)
            top = np.arange(k + 1, n)
            bot = top + n
            for rows in (top, bot):
                _apply_householder_rows(t, v, beta, rows)
            for cols in (top, bot):
                _apply_householder_cols(t, v, beta, cols)
                _apply_householder_cols(q, v, beta, cols)
    if n == 1:
        w = np.array([t[0, 0]])
        vecs = np.ones((1, 1))
    else:
        w, vecs = eigh_tridiagonal(np.diag(t[:n, :n]).copy(), np.diag(t[:n, :n], -1).copy())
    order = np.argsort(-w, kind="stable")
    w = w[order]
    vecs = vecs[:, order]
    q = np.concatenate((q[:, :n] @ vecs, q[:, n:] @ vecs), axis=1)
    scale = np.max(np.abs(w)) if w.size else 0.0
    if scale > 0.0:
        if np.min(w) < -1e-10 * scale:
            raise StructureError("matrix is not positive semidefinite")
        w = np.where(w < 0.0, 0.0, w)
    return PVLFactorization(q_factor=q, diag=w)


def epsilon_regularize(f, eps):
    """Lift the small eigenvalues of a PVL-factored Gram operator.

    Every entry of the half-spectrum that is <= eps is replaced by eps.
    Returns the regularized matrix and the number of lifted entries.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    lifted = np.where(f.diag > eps, f.diag, eps)
    m_eps = int(np.count_nonzero(f.diag <= eps))
    dd = np.concatenate((lifted, lifted))
    return (f.q_factor * dd) @ f.q_factor.T, m_eps
