"""Parametrized canonical Hamiltonian test models.

Every model stores states in split layout u = [q; p] and exposes the same
surface: Hamiltonian value, hand-coded gradient, Hessian action assembled
from the polynomial structure, and a deterministic initial ensemble over a
parameter set.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import ndtri


@dataclass
class ParameterSet:
    """Ordered collection of parameter vectors; row j is sample j."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] < 1:
            raise ValueError("need at least one parameter sample")

    @classmethod
    def grid(cls, ranges, per_dim):
        """Tensor-product grid over a box.

        ranges : list of (lo, hi) per dimension
        per_dim : samples per dimension (int, or one int per dimension)
        """
        if np.isscalar(per_dim):
            per_dim = [int(per_dim)] * len(ranges)
        axes = [np.linspace(lo, hi, k) for (lo, hi), k in zip(ranges, per_dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.column_stack([m.ravel() for m in mesh]))

    def subset(self, idx):
        return ParameterSet(self.values[np.asarray(idx)])

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, j):
        return self.values[j]


@dataclass
class PolynomialTerm:
    """One term c(eta) * B (A_1 u * ... * A_q u) of a polynomial gradient."""

    degree: int
    coeff: object  # callable eta -> float
    weight: object  # sparse 2N x 2N
    factors: list  # q sparse 2N x 2N matrices


def _row_scale(a_csr, m):
    """diag(m) @ A for csr A without building the diagonal."""
    out = a_csr.copy()
    out.data = out.data * np.repeat(m, np.diff(out.indptr))
    return out


def _poisson_rows(w):
    """J @ W for sparse W: swap row blocks with a sign."""
    n = w.shape[0] // 2
    return sp.vstack([w[n:], -w[:n]], format="csr")


@dataclass
class PolynomialStructure:
    """Sum of Hadamard-product terms assembling a polynomial gradient."""

    terms: list

    def __post_init__(self):
        self._poisson_weights = None

    @property
    def degree(self):
        return max(t.degree for t in self.terms)

    def coefficients(self, params):
        """Per-term coefficient rows, shape (n_terms, p)."""
        return np.array(
            [[t.coeff(eta) for eta in params.values] for t in self.terms]
        )

    def gradient(self, r, params):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for t, row in zip(self.terms, self.coefficients(params)):
            prod = t.factors[0] @ r
            for a in t.factors[1:]:
                prod = prod * (a @ r)
            out += (t.weight @ prod) * row
        return out

    def hessian_apply(self, u, eta, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(u)
        for t in self.terms:
            c = t.coeff(eta)
            fac = [a @ u for a in t.factors]
            for i in range(t.degree):
                slot = t.factors[i] @ v
                for j in range(t.degree):
                    if j != i:
                        slot = slot * fac[j]
                out += c * (t.weight @ slot)
        return out

    def hessian_matrix(self, u, eta):
        u = np.asarray(u, dtype=float)
        total = None
        for t in self.terms:
            c = t.coeff(eta)
            fac = [a @ u for a in t.factors]
            acc = None
            for i in range(t.degree):
                others = np.ones_like(u)
                for j in range(t.degree):
                    if j != i:
                        others = others * fac[j]
                part = sp.diags(others) @ t.factors[i]
                acc = part if acc is None else acc + part
            part = c * (t.weight @ acc)
            total = part if total is None else total + part
        return total.tocsr()


@dataclass
class EnsembleState:
    """State matrix with one column per parameter sample."""

    matrix: np.ndarray
    params: ParameterSet
    time: float = 0.0


@dataclass
class HamiltonianModel:
    """Canonical Hamiltonian system du/dt = J grad H(u; eta)."""

    name: str
    full_dim: int
    polynomial: PolynomialStructure
    hamiltonian_fn: object = field(repr=False)
    gradient_fn: object = field(repr=False)
    ensemble_fn: object = field(repr=False)

    def hamiltonian(self, u, eta):
        return float(self.hamiltonian_fn(np.asarray(u, dtype=float), eta))

    def gradient(self, r, params):
        r = np.asarray(r, dtype=float)
        if r.ndim != 2 or r.shape != (self.full_dim, len(params)):
            raise ValueError("state matrix shape mismatch")
        return self.gradient_fn(r, params)

    def gradient_one(self, u, eta):
        r = np.asarray(u, dtype=float).reshape(self.full_dim, 1)
        return self.gradient_fn(r, ParameterSet(np.atleast_2d(eta)))[:, 0]

    def hessian_apply(self, u, eta, v):
        return self.polynomial.hessian_apply(u, eta, v)

    def hessian_matrix(self, u, eta):
        return self.polynomial.hessian_matrix(u, eta)

    def initial_ensemble(self, params):
        return EnsembleState(matrix=self.ensemble_fn(params), params=params)


def _centered_difference(m, dx):
    """Periodic centered first difference; exactly skew-symmetric."""
    w = 1.0 / (2.0 * dx)
    rows = np.arange(m)
    data = np.concatenate([np.full(m, w), np.full(m, -w)])
    cols = np.concatenate([(rows + 1) % m, (rows - 1) % m])
    return sp.csr_matrix(
        (data, (np.concatenate([rows, rows]), cols)), shape=(m, m)
    )


def _forward_difference(m, dx):
    """Periodic forward first difference (u_{i+1} - u_i)/dx."""
    w = 1.0 / dx
    rows = np.arange(m)
    data = np.concatenate([np.full(m, w), np.full(m, -w)])
    cols = np.concatenate([(rows + 1) % m, rows])
    return sp.csr_matrix(
        (data, (np.concatenate([rows, rows]), cols)), shape=(m, m)
    )


def _blocks(tl, tr, bl, br):
    return sp.bmat([[tl, tr], [bl, br]], format="csr")


def swe1d_model(m, domain=(-10.0, 10.0)):
    """Shallow water equations on a periodic interval; state (h, phi)."""
    if m < 3:
        raise ValueError("need at least 3 grid points")
    lo, hi = domain
    dx = (hi - lo) / m
    x = lo + dx * np.arange(m)
    d = _centered_difference(m, dx)
    eye = sp.identity(m, format="csr")
    zero = sp.csr_matrix((m, m))
    two_n = 2 * m

    sel_h = _blocks(eye, zero, zero, zero)
    grad_phi = _blocks(zero, d, zero, zero)
    dup_h = _blocks(eye, zero, eye, zero)
    dup_gphi = _blocks(zero, d, zero, d)
    bottom_div = _blocks(zero, zero, zero, -d)
    full_eye = sp.identity(two_n, format="csr")

    poly = PolynomialStructure(
        terms=[
            PolynomialTerm(1, lambda eta: 1.0, full_eye, [sel_h]),
            PolynomialTerm(2, lambda eta: 0.5, full_eye, [grad_phi, grad_phi]),
            PolynomialTerm(2, lambda eta: 1.0, bottom_div, [dup_h, dup_gphi]),
        ]
    )

    def ham(u, eta):
        h, phi = u[:m], u[m:]
        dphi = d @ phi
        return 0.5 * np.sum(h * dphi**2 + h * h)

    def grad(r, params):
        h, phi = r[:m], r[m:]
        dphi = d @ phi
        top = 0.5 * dphi**2 + h
        bot = -(d @ (h * dphi))
        return np.concatenate((top, bot), axis=0)

    def ensemble(params):
        cols = []
        for eta in params.values:
            alpha, beta = eta[0], eta[1]
            h0 = 1.0 + alpha * np.exp(-beta * x**2)
            cols.append(np.concatenate((h0, np.zeros(m))))
        return np.column_stack(cols)

    return HamiltonianModel("swe1d", two_n, poly, ham, grad, ensemble)


def swe2d_model(m, domain=(-10.0, 10.0)):
    """Shallow water equations on a periodic square; x index fastest."""
    if m < 3:
        raise ValueError("need at least 3 grid points per side")
    lo, hi = domain
    dx = (hi - lo) / m
    ax = lo + dx * np.arange(m)
    xx = np.tile(ax, m)
    yy = np.repeat(ax, m)
    d1 = _centered_difference(m, dx)
    eye1 = sp.identity(m, format="csr")
    d_x = sp.kron(eye1, d1, format="csr")
    d_y = sp.kron(d1, eye1, format="csr")
    n = m * m
    eye = sp.identity(n, format="csr")
    zero = sp.csr_matrix((n, n))
    two_n = 2 * n

    sel_h = _blocks(eye, zero, zero, zero)
    dup_h = _blocks(eye, zero, eye, zero)
    full_eye = sp.identity(two_n, format="csr")

    terms = [PolynomialTerm(1, lambda eta: 1.0, full_eye, [sel_h])]
    for dop in (d_x, d_y):
        grad_phi = _blocks(zero, dop, zero, zero)
        dup_gphi = _blocks(zero, dop, zero, dop)
        bottom_div = _blocks(zero, zero, zero, -dop)
        terms.append(PolynomialTerm(2, lambda eta: 0.5, full_eye, [grad_phi, grad_phi]))
        terms.append(PolynomialTerm(2, lambda eta: 1.0, bottom_div, [dup_h, dup_gphi]))
    poly = PolynomialStructure(terms=terms)

    def ham(u, eta):
        h, phi = u[:n], u[n:]
        gx = d_x @ phi
        gy = d_y @ phi
        return 0.5 * np.sum(h * (gx**2 + gy**2) + h * h)

    def grad(r, params):
        h, phi = r[:n], r[n:]
        gx = d_x @ phi
        gy = d_y @ phi
        top = 0.5 * (gx**2 + gy**2) + h
        bot = -(d_x @ (h * gx)) - (d_y @ (h * gy))
        return np.concatenate((top, bot), axis=0)

    def ensemble(params):
        cols = []
        for eta in params.values:
            alpha, beta = eta[0], eta[1]
            h0 = 1.0 + alpha * np.exp(-beta * (xx**2 + yy**2))
            cols.append(np.concatenate((h0, np.zeros(n))))
        return np.column_stack(cols)

    return HamiltonianModel("swe2d", two_n, poly, ham, grad, ensemble)


def _nls_terms(k_op, n, gamma_fn):
    eye = sp.identity(n, format="csr")
    zero = sp.csr_matrix((n, n))
    swap = _blocks(zero, eye, eye, zero)
    full_eye = sp.identity(2 * n, format="csr")
    lap = _blocks(k_op, zero, zero, k_op)

    def neg_gamma(eta):
        return -gamma_fn(eta)

    return PolynomialStructure(
        terms=[
            PolynomialTerm(1, lambda eta: 1.0, full_eye, [lap]),
            PolynomialTerm(3, neg_gamma, full_eye, [full_eye, full_eye, full_eye]),
            PolynomialTerm(3, neg_gamma, full_eye, [swap, swap, full_eye]),
        ]
    )


def nls1d_model(n, domain=(-20.0 * np.pi, 20.0 * np.pi), gamma_mode="parametric"):
    """Cubic Schroedinger on a periodic interval; state (Re u, Im u)."""
    if n < 3:
        raise ValueError("need at least 3 grid points")
    if gamma_mode not in ("parametric", "fixed"):
        raise ValueError("gamma_mode must be 'parametric' or 'fixed'")
    lo, hi = domain
    dx = (hi - lo) / n
    x = lo + dx * np.arange(n)
    df = _forward_difference(n, dx)
    k_op = (df.T @ df).tocsr()

    if gamma_mode == "parametric":
        gamma_fn = lambda eta: eta[1]
    else:
        gamma_fn = lambda eta: 1.0

    poly = _nls_terms(k_op, n, gamma_fn)

    def ham(u, eta):
        q, v = u[:n], u[n:]
        dq = df @ q
        dv = df @ v
        gam = gamma_fn(eta)
        return 0.5 * np.sum(dq**2 + dv**2) - 0.25 * gam * np.sum((q*q + v*v) ** 2)

    def grad(r, params):
        q, v = r[:n], r[n:]
        gam = np.array([gamma_fn(eta) for eta in params.values])
        amp2 = q*q + v*v
        top = k_op @ q - gam * amp2 * q
        bot = k_op @ v - gam * amp2 * v
        return np.concatenate((top, bot), axis=0)

    def ensemble(params):
        cols = []
        for eta in params.values:
            alpha = eta[0]
            prof = np.sqrt(2.0) / np.cosh(alpha * x)
            cols.append(
                np.concatenate((prof * np.cos(x / 2.0), prof * np.sin(x / 2.0)))
            )
        return np.column_stack(cols)

    return HamiltonianModel("nls1d", 2 * n, poly, ham, grad, ensemble)


def nls2d_model(m, domain=(0.0, 2.0 * np.pi)):
    """Cubic Schroedinger (gamma = 1) on a periodic square; x index fastest."""
    if m < 3:
        raise ValueError("need at least 3 grid points per side")
    lo, hi = domain
    dx = (hi - lo) / m
    ax = lo + dx * np.arange(m)
    xx = np.tile(ax, m)
    yy = np.repeat(ax, m)
    d1 = _forward_difference(m, dx)
    k1 = (d1.T @ d1).tocsr()
    eye1 = sp.identity(m, format="csr")
    k_op = (sp.kron(eye1, k1) + sp.kron(k1, eye1)).tocsr()
    dfx = sp.kron(eye1, d1, format="csr")
    dfy = sp.kron(d1, eye1, format="csr")
    n = m * m

    poly = _nls_terms(k_op, n, lambda eta: 1.0)

    def ham(u, eta):
        q, v = u[:n], u[n:]
        quad = 0.0
        for dop in (dfx, dfy):
            quad += np.sum((dop @ q) ** 2 + (dop @ v) ** 2)
        return 0.5 * quad - 0.25 * np.sum((q*q + v*v) ** 2)

    def grad(r, params):
        q, v = r[:n], r[n:]
        amp2 = q*q + v*v
        top = k_op @ q - amp2 * q
        bot = k_op @ v - amp2 * v
        return np.concatenate((top, bot), axis=0)

    def ensemble(params):
        cols = []
        for eta in params.values:
            alpha, beta = eta[0], eta[1]
            q0 = (1.0 + alpha * np.sin(xx)) * (2.0 + beta * np.sin(yy))
            cols.append(np.concatenate((q0, np.zeros(n))))
        return np.column_stack(cols)

    return HamiltonianModel("nls2d", 2 * n, poly, ham, grad, ensemble)


def _splitmix_uniforms(seed, count):
    """Deterministic uniforms in (0,1) from a 64-bit avalanche stream."""
    mask = (1 << 64) - 1
    x = int(seed) & mask
    out = np.empty(count)
    for i in range(count):
        x = (x + 0x9E3779B97F4A7C15) & mask
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        z = z ^ (z >> 31)
        out[i] = ((z >> 11) + 0.5) / 9007199254740992.0
    return out


def _perturbed_uniform_quantile(u, beta, lo=-0.8, length=1.6):
    """Invert the CDF of the cosine-perturbed uniform spatial density."""
    k = 4.0 * np.pi / length
    x = lo + length * np.asarray(u, dtype=float)
    for _ in range(60):
        s = x - lo
        f = (s + (beta / k) * np.sin(k * s)) / length - u
        if np.max(np.abs(f)) < 1e-14:
            break
        fp = (1.0 + beta * np.cos(k * s)) / length
        x = x - f / fp
    return x


def vlasov_model(p_count, field="cubic", seed=0):
    """Particle ensemble in a forced external field; state (X, V).

    Characteristics: dX/dt = V/eps, dV/dt = -X^3.  The parameter vector is
    (alpha, beta, eps): thermal spread, density perturbation, scaling.
    Initial positions/velocities use inverse-transform sampling driven by a
    seeded deterministic stream shared across parameter columns.
    """
    if p_count < 1:
        raise ValueError("need at least one particle")
    if field != "cubic":
        raise ValueError("only the cubic external field is supported")
    eye = sp.identity(p_count, format="csr")
    zero = sp.csr_matrix((p_count, p_count))
    sel_x = _blocks(eye, zero, zero, zero)
    sel_v = _blocks(zero, zero, zero, eye)
    full_eye = sp.identity(2 * p_count, format="csr")

    poly = PolynomialStructure(
        terms=[
            PolynomialTerm(1, lambda eta: 1.0 / eta[2], full_eye, [sel_v]),
            PolynomialTerm(3, lambda eta: 1.0, full_eye, [sel_x, sel_x, sel_x]),
        ]
    )

    def ham(u, eta):
        xs, vs = u[:p_count], u[p_count:]
        return np.sum(vs**2) / (2.0 * eta[2]) + 0.25 * np.sum(xs**4)

    def grad(r, params):
        xs, vs = r[:p_count], r[p_count:]
        inv_eps = np.array([1.0 / eta[2] for eta in params.values])
        return np.concatenate((xs**3, vs * inv_eps), axis=0)

    draws = _splitmix_uniforms(seed, 2 * p_count)
    u_draw = draws[0::2]
    w_draw = draws[1::2]
    v_shape = ndtri(w_draw)

    def ensemble(params):
        cols = []
        for eta in params.values:
            alpha, beta = eta[0], eta[1]
            xs = _perturbed_uniform_quantile(u_draw, beta)
            cols.append(np.concatenate((xs, alpha * v_shape)))
        return np.column_stack(cols)

    return HamiltonianModel("vlasov", 2 * p_count, poly, ham, grad, ensemble)


def harmonic_model(half_dim):
    """Linear oscillator H = (omega/2)||u||^2; eta = (omega, amplitude).

    The coefficient flow is an exact rotation, which makes this the
    reference model for error-indicator exactness checks.
    """
    if half_dim < 1:
        raise ValueError("need half_dim >= 1")
    full_eye = sp.identity(2 * half_dim, format="csr")
    poly = PolynomialStructure(
        terms=[PolynomialTerm(1, lambda eta: eta[0], full_eye, [full_eye])]
    )
    t = np.arange(half_dim) / half_dim
    profile = np.exp(-25.0 * (t - 0.5) ** 2)
    profile = profile / np.linalg.norm(profile)

    def ham(u, eta):
        return 0.5 * eta[0] * np.sum(u * u)

    def grad(r, params):
        omega = np.array([eta[0] for eta in params.values])
        return r * omega

    def ensemble(params):
        cols = []
        for eta in params.values:
            cols.append(np.concatenate((eta[1] * profile, np.zeros(half_dim))))
        return np.column_stack(cols)

    return HamiltonianModel("harmonic", 2 * half_dim, poly, ham, grad, ensemble)
