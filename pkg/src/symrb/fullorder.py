"""Full-order ensemble integration with the implicit midpoint rule.

One Newton solve per parameter column per step; snapshots are collected in
memory and can spill to a run directory as raw little-endian column-major
doubles next to a JSON header.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .core import poisson_apply
from .models import EnsembleState, ParameterSet


@dataclass
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 50
    jacobian_mode: str = "analytic"

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.jacobian_mode not in ("analytic", "finite-difference"):
            raise ValueError("unknown jacobian_mode %r" % self.jacobian_mode)


class StepFailureError(RuntimeError):
    """Newton failed to reach tolerance for one parameter column."""

    def __init__(self, column, residual):
        super().__init__(
            "Newton stalled on column %d (residual %.3e)" % (column, residual)
        )
        self.column = column
        self.residual = residual


def _apply_poisson_sparse(h):
    """J @ H for sparse H: swap row blocks with a sign."""
    n = h.shape[0] // 2
    return sp.vstack([h[n:], -h[:n]], format="csc")


def _fd_residual_jacobian(model, u, u_prev, eta, dt):
    dim = u.size
    jac = np.empty((dim, dim))
    h = 1e-7 * max(1.0, np.linalg.norm(u))

    def resid(w):
        mid = 0.5 * (w + u_prev)
        return w - u_prev - dt * poisson_apply(model.gradient_one(mid, eta))

    for k in range(dim):
        e = np.zeros(dim)
        e[k] = h
        jac[:, k] = (resid(u + e) - resid(u - e)) / (2 * h)
    return jac


def _midpoint_column(model, u_prev, eta, dt, cfg, column):
    u = u_prev + dt * poisson_apply(model.gradient_one(u_prev, eta))
    eye = sp.identity(model.full_dim, format="csc")

    def residual(w):
        mid = 0.5 * (w + u_prev)
        return w - u_prev - dt * poisson_apply(model.gradient_one(mid, eta))

    for _ in range(cfg.max_iter):
        resid = residual(u)
        rnorm = np.linalg.norm(resid)
        if rnorm <= cfg.tol:
            return u
        if cfg.jacobian_mode == "analytic":
            hess = model.hessian_matrix(0.5 * (u + u_prev), eta)
            jac = (eye - (dt / 2.0) * _apply_poisson_sparse(hess)).tocsc()
            delta = splu(jac).solve(resid)
        else:
            jac = _fd_residual_jacobian(model, u, u_prev, eta, dt)
            delta = np.linalg.solve(jac, resid)
        u = u - delta
    rnorm = np.linalg.norm(residual(u))
    if rnorm <= cfg.tol:
        return u
    raise StepFailureError(column, rnorm)


def implicit_midpoint_step(model, state, dt, cfg=None):
    """Advance every ensemble column by one implicit midpoint step."""
    if dt == 0.0:
        raise ValueError("dt must be nonzero")
    cfg = cfg or NewtonConfig()
    r = state.matrix
    out = np.empty_like(r)
    for j in range(r.shape[1]):
        out[:, j] = _midpoint_column(model, r[:, j], state.params[j], dt, cfg, j)
    return EnsembleState(out, state.params, state.time + dt)


@dataclass
class SnapshotStore:
    """Time-stamped ensemble snapshots at a fixed sampling stride."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    stride: int = 1

    def append(self, t, state):
        if self.times and t <= self.times[-1]:
            raise ValueError("times must be strictly increasing")
        self.times.append(float(t))
        self.states.append(state)

    def __len__(self):
        return len(self.states)

    @property
    def initial(self):
        return self.states[0]

    @property
    def final(self):
        return self.states[-1]

    def spill(self, run_dir):
        """Write snapshots/<index>.f64 (column-major doubles) and meta.json."""
        snap_dir = os.path.join(run_dir, "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        for idx, st in enumerate(self.states):
            st.matrix.astype("<f8").T.tofile(
                os.path.join(snap_dir, "%d.f64" % idx)
            )
        first = self.states[0]
        meta = {
            "dim": int(first.matrix.shape[0]),
            "columns": int(first.matrix.shape[1]),
            "count": len(self.states),
            "stride": int(self.stride),
            "times": [float(t) for t in self.times],
            "params": first.params.values.tolist(),
        }
        with open(os.path.join(run_dir, "meta.json"), "w") as fh:
            json.dump(meta, fh, indent=1)

    @classmethod
    def from_dir(cls, run_dir):
        with open(os.path.join(run_dir, "meta.json")) as fh:
            meta = json.load(fh)
        params = ParameterSet(np.array(meta["params"]))
        store = cls(stride=meta["stride"])
        for idx in range(meta["count"]):
            raw = np.fromfile(
                os.path.join(run_dir, "snapshots", "%d.f64" % idx), dtype="<f8"
            )
            mat = raw.reshape(meta["columns"], meta["dim"]).T
            store.append(meta["times"][idx], EnsembleState(mat, params, meta["times"][idx]))
        return store


def solve_ensemble(model, params, t_span, dt, cfg=None, store_stride=1):
    """Integrate the ensemble over t_span, recording every store_stride steps.

    The initial and final states are always recorded.
    """
    t0, t1 = t_span
    span = t1 - t0
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(span / dt))
    if abs(n_steps * dt - span) > 1e-12 * max(1.0, abs(span)):
        raise ValueError("dt must divide the time span")
    cfg = cfg or NewtonConfig()
    state = model.initial_ensemble(params)
    state.time = t0
    store = SnapshotStore(stride=store_stride)
    store.append(t0, state)
    for k in range(1, n_steps + 1):
        state = implicit_midpoint_step(model, state, dt, cfg)
        if k % store_stride == 0 or k == n_steps:
            store.append(state.time, state)
    return store


def epsilon_rank(s, eps):
    """Count singular values with sigma_i / sigma_1 > eps (strict)."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    s = np.asarray(s, dtype=float)
    if s.ndim == 1:
        sigma = np.sort(np.abs(s))[::-1]
    else:
        sigma = np.linalg.svd(s, compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma / sigma[0] > eps))


def singular_spectrum(store, mode="global"):
    """Normalized singular spectrum of a snapshot store.

    mode="global": spectrum of the column-concatenation of all snapshots.
    mode="averaged": mean of the per-time normalized spectra, zero-padded
    to a common length.
    """
    if len(store) == 0:
        raise ValueError("empty store")
    if mode == "global":
        concat = np.concatenate([st.matrix for st in store.states], axis=1)
        sigma = np.linalg.svd(concat, compute_uv=False)
        return sigma / sigma[0] if sigma[0] > 0 else sigma
    if mode == "averaged":
        spectra = []
        for st in store.states:
            sig = np.linalg.svd(st.matrix, compute_uv=False)
            if sig[0] > 0:
                sig = sig / sig[0]
            spectra.append(sig)
        width = max(s.size for s in spectra)
        padded = np.zeros((len(spectra), width))
        for i, s in enumerate(spectra):
            padded[i, : s.size] = s
        return padded.mean(axis=0)
    raise ValueError("mode must be 'global' or 'averaged'")
