"""Kernel update with a log-det low-rank penalty.

The kernel sub-problem is split with an auxiliary variable ``psi``:

* a quadratic ``psi`` step, ``||x conv psi - y||^2 + mu_j ||psi - k_j||^2``,
  solved by a fixed number of conjugate-gradient iterations on its normal
  equations;
* a low-rank ``k`` step that repeatedly applies the proximal map of the
  log-det surrogate linearised at the previous iterate, i.e. singular value
  shrinkage with weights ``1 / (s_hat + delta)``;

followed by non-negativity and unit-sum projection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence

import numpy as np

from .convops import BoundaryMode, KernelOperator
from .types import GradientPair, Kernel


@dataclass(frozen=True)
class KStepParams:
    mu: float = 1.0
    tau: float = 5e-5
    sigma: float = 1.0
    delta: float = 0.01
    outer_iter_max: int = 20
    cg_iter_max: int = 3
    inner_iter_max: int = 10

    def __post_init__(self):
        if not (self.mu >= 0 and self.tau > 0 and self.delta > 0 and self.sigma >= 0):
            raise ValueError("need mu >= 0, tau > 0, delta > 0, sigma >= 0")
        for name in ("outer_iter_max", "cg_iter_max", "inner_iter_max"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def from_config(cls, cfg) -> "KStepParams":
        return cls(mu=cfg.mu, tau=cfg.tau, sigma=cfg.sigma, delta=cfg.delta,
                   outer_iter_max=cfg.outer_iter_max, cg_iter_max=cfg.cg_iter_max,
                   inner_iter_max=cfg.inner_iter_max)


class SVDTriple(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def svd(m) -> SVDTriple:
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=np.float64), full_matrices=False)
    return SVDTriple(u, s, vt.T)


def logdet_cost(k, delta: float) -> float:
    """``sum_i log(s_i + delta)`` over the singular values of ``k``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    m = np.asarray(k, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf")
    if m.ndim == 1:
        m = m[None, :]
    s = np.linalg.svd(m, compute_uv=False)
    return float(np.sum(np.log(s + delta)))


def prox_logdet(psi, z, tau: float, delta: float) -> np.ndarray:
    """Proximal map of ``tau * h_z`` evaluated at ``psi``.

    ``h_z`` is the log-det surrogate linearised at ``z``; its prox keeps the
    singular vectors of ``psi`` and shrinks singular value ``s_i`` to
    ``max(s_i - tau / (s_hat_i + delta), 0)``, ``s_hat`` being the (sorted)
    singular values of ``z``.
    """
    psi = np.asarray(psi, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if psi.shape != z.shape:
        raise ValueError(f"shape mismatch: {psi.shape} vs {z.shape}")
    if tau <= 0 or delta <= 0:
        raise ValueError("tau and delta must be positive")
    u, s, vt = np.linalg.svd(psi, full_matrices=False)
    s_hat = np.linalg.svd(z, compute_uv=False)
    shrunk = np.maximum(s - tau / (s_hat + delta), 0.0)
    return (u * shrunk) @ vt


def linearized_objective(k, psi, z, tau: float, delta: float) -> float:
    """``(1/2tau)||k - psi||^2 + sum_i s_i(k) / (s_hat_i + delta)``, constant dropped."""
    s_k = np.linalg.svd(np.asarray(k, dtype=np.float64), compute_uv=False)
    s_hat = np.linalg.svd(np.asarray(z, dtype=np.float64), compute_uv=False)
    return float(np.sum((k - psi) ** 2) / (2 * tau) + np.sum(s_k / (s_hat + delta)))


def unit_singular_init(psi) -> np.ndarray:
    """``U V^T`` from the SVD of ``psi``: same orientation, all singular values 1."""
    u, _, vt = np.linalg.svd(np.asarray(psi, dtype=np.float64), full_matrices=False)
    return u @ vt


def project_kernel(m) -> Kernel:
    """Clip negatives to zero and rescale to unit sum."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("kernel matrix contains NaN or Inf")
    pos = np.maximum(m, 0.0)
    total = pos.sum()
    if total <= 0:
        raise ValueError("kernel annihilated")
    out = pos / total
    # one more division pins the sum to 1 within rounding for any magnitude
    return Kernel(out / out.sum())


# --- psi sub-step -------------------------------------------------------------

@dataclass
class CGTrace:
    objective: List[float] = field(default_factory=list)
    residual_norm: List[float] = field(default_factory=list)


def _as_ops(x, kdims, mode, mask):
    chans = x if isinstance(x, (tuple, list)) else (x,)
    return [KernelOperator(c, kdims, mode, mask) for c in chans]


def _as_chans(y):
    return list(y) if isinstance(y, (tuple, list)) else [y]


def cg_solve_psi(x, y, k_anchor, mu: float, iters: int, kdims=None, *,
                 start=None, mode=BoundaryMode.CIRCULAR, mask=None, ops=None,
                 trace: CGTrace | None = None) -> np.ndarray:
    """Conjugate gradient on ``(sum_c T_c^T T_c + mu I) psi = sum_c T_c^T y_c + mu k_anchor``.

    ``x`` and ``y`` are gradient pairs (or single images); every channel adds
    to the data term. Exactly ``iters`` iterations run, stopping early only
    if the residual becomes exactly zero. ``start`` defaults to the anchor.
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    anchor = None if k_anchor is None else np.asarray(k_anchor, dtype=np.float64)
    if kdims is None:
        kdims = anchor.shape
    kdims = tuple(int(v) for v in kdims)
    if ops is None:
        ops = _as_ops(x, kdims, mode, mask)
    ys = _as_chans(y)

    def apply(v):
        out = sum(op.normal(v) for op in ops)
        return out + mu * v if mu else out

    b = sum(op.rmatvec(yc) for op, yc in zip(ops, ys))
    if mu and anchor is not None:
        b = b + mu * anchor
    if start is not None:
        p0 = np.asarray(start, dtype=np.float64).reshape(kdims)
    elif anchor is not None:
        p0 = anchor.reshape(kdims)
    else:
        p0 = np.zeros(kdims)
    psi = p0.copy()
    r = b - apply(psi)
    d = r.copy()
    rr = float(np.sum(r * r))

    def objective(v):
        data = sum(float(np.sum((op.matvec(v) - yc) ** 2)) for op, yc in zip(ops, ys))
        prox = mu * float(np.sum((v - anchor) ** 2)) if (mu and anchor is not None) else 0.0
        return data + prox

    if trace is not None:
        trace.objective.append(objective(psi))
        trace.residual_norm.append(math.sqrt(rr))
    for _ in range(iters):
        if rr == 0.0:
            break
        ad = apply(d)
        dad = float(np.sum(d * ad))
        if not math.isfinite(dad) or dad <= 0.0:
            if dad == 0.0:
                break
            raise FloatingPointError("conjugate gradient diverged")
        alpha = rr / dad
        psi = psi + alpha * d
        r = r - alpha * ad
        rr_new = float(np.sum(r * r))
        if not math.isfinite(rr_new):
            raise FloatingPointError("conjugate gradient residual is not finite")
        d = r + (rr_new / rr) * d
        rr = rr_new
        if trace is not None:
            trace.objective.append(objective(psi))
            trace.residual_norm.append(math.sqrt(rr))
    return psi


# --- full kernel update -------------------------------------------------------

def mu_schedule(mu: float, j: int, outer_iter_max: int) -> float:
    """``mu * e^j / e^outer_iter_max``; grows exponentially with ``j``."""
    return mu * math.exp(j - outer_iter_max)


@dataclass
class KStepTrace:
    psi: List[np.ndarray] = field(default_factory=list)
    kernels: List[Kernel] = field(default_factory=list)


def update_kernel(x, y, k_init, p: KStepParams, *, mode=BoundaryMode.CIRCULAR,
                  mask=None, trace: KStepTrace | None = None) -> Kernel:
    """Low-rank regularised kernel update.

    Outer pass ``j = 0`` solves the plain least-squares ``psi`` problem; later
    passes anchor ``psi`` to the previous kernel with weight
    :func:`mu_schedule`. With ``sigma > 0`` each pass then runs
    ``inner_iter_max`` prox iterations starting from ``psi``'s orientation
    with unit singular values; with ``sigma == 0`` that stage is skipped.
    Every pass ends with :func:`project_kernel`.
    """
    k = np.asarray(k_init, dtype=np.float64)
    kdims = k.shape
    ops = _as_ops(x, kdims, mode, mask)
    ys = _as_chans(y)
    tau = p.tau * p.sigma
    kernel = None
    for j in range(p.outer_iter_max):
        if j == 0:
            psi = cg_solve_psi(None, ys, None, 0.0, p.cg_iter_max, kdims, start=k, ops=ops)
        else:
            mu_j = mu_schedule(p.mu, j, p.outer_iter_max)
            psi = cg_solve_psi(None, ys, k, mu_j, p.cg_iter_max, kdims, start=k, ops=ops)
        if p.sigma > 0:
            kt = unit_singular_init(psi)
            for _ in range(p.inner_iter_max):
                kt = prox_logdet(psi, kt, tau, p.delta)
        else:
            kt = psi
        kernel = project_kernel(kt)
        k = np.array(kernel.weights)
        if trace is not None:
            trace.psi.append(psi)
            trace.kernels.append(kernel)
    return kernel
