"""Numerical studies of the larger-kernel effect.

Monte Carlo and deterministic experiments on 1-D Toeplitz operators and on
kernel regularizers. Every experiment returns an :class:`ExperimentReport`
and is deterministic given its parameters; trial ``t`` draws from
``default_rng([seed, t])`` so trials can be reordered or parallelised
without changing results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from . import kstep, xstep
from .convops import BoundaryMode, build_toeplitz_1d, conv1d_zeropad
from .synthetic import gaussian_psf, piecewise_smooth_row
from .types import ExperimentReport, GradientPair, Kernel

# log-det smoothing used by the cost studies; see the decisions ledger
ANALYSIS_DELTA = 1e-8
RANK_RTOL = 1e-10
CDF_RESOLUTION = 1e-6


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(trial)])


# --- sampling -----------------------------------------------------------------

@dataclass(frozen=True)
class HyperLaplacianSampler:
    """Density proportional to ``exp(-gamma |x|^alpha)`` on ``[-1, 1]``."""

    gamma: float = 10.0
    alpha: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    def table(self):
        """Grid and normalised CDF at ``CDF_RESOLUTION`` spacing."""
        n = int(round(2.0 / CDF_RESOLUTION)) + 1
        grid = np.linspace(-1.0, 1.0, n)
        dens = np.exp(-self.gamma * np.abs(grid) ** self.alpha)
        # trapezoid rule, cumulative
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]))])
        return grid, cdf / cdf[-1]

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        grid, cdf = _cached_table(self.gamma, self.alpha)
        return np.interp(rng.uniform(size=n), cdf, grid)


_TABLES: Dict[tuple, tuple] = {}


def _cached_table(gamma, alpha):
    key = (float(gamma), float(alpha))
    if key not in _TABLES:
        _TABLES[key] = HyperLaplacianSampler(gamma, alpha).table()
    return _TABLES[key]


def sample_hyper_laplacian(n: int, s: HyperLaplacianSampler) -> np.ndarray:
    """``n`` i.i.d. draws by inverse CDF; deterministic given ``s.seed``."""
    return s.draw(n, np.random.default_rng(s.seed))


# --- singular values ----------------------------------------------------------

@dataclass(frozen=True)
class SingularSummary:
    s_min: float
    s_max: float
    s_mean: float


def singular_summary(T) -> SingularSummary:
    s = np.linalg.svd(np.asarray(T, dtype=np.float64), compute_uv=False)
    return SingularSummary(float(s.min()), float(s.max()), float(s.mean()))


def numerical_rank(T, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(T, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def gf2_rank(m) -> int:
    """Rank over the two-element field by Gaussian elimination."""
    a = (np.asarray(m) % 2).astype(bool)
    rows, cols = a.shape
    rank = 0
    for c in range(cols):
        pivots = np.nonzero(a[rank:, c])[0]
        if pivots.size == 0:
            continue
        p = rank + pivots[0]
        if p != rank:
            a[[rank, p]] = a[[p, rank]]
        below = np.nonzero(a[:, c])[0]
        below = below[below != rank]
        a[below] ^= a[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def random_toeplitz_gf2(M: int, rng: np.random.Generator) -> np.ndarray:
    """``M x M`` Toeplitz matrix with its ``2M - 1`` diagonals uniform over {0, 1}."""
    diag = rng.integers(0, 2, size=2 * M - 1)
    idx = np.arange(M)[:, None] - np.arange(M)[None, :] + M - 1
    return diag[idx]


# --- Toeplitz experiments -----------------------------------------------------

def default_signal(M: int = 255, seed: int = 0) -> np.ndarray:
    return piecewise_smooth_row(M, seed)


def experiment_noise_amplification(x=None, sizes: Sequence[int] = tuple(range(3, 32, 2)),
                                   trials: int = 50, seed: int = 0) -> ExperimentReport:
    """Amplification ``||T_x(L)^+ n||`` of unit-norm Gaussian ``n`` per kernel size.

    Columns per size: extreme nonzero singular values of the pseudo-inverse,
    the mean amplification, the mean in-range ratio ``||T^+ n|| / ||P n||``
    (``P`` projects onto the range of ``T``) and the fraction of samples that
    respect the bounds. For ``L < M`` the pseudo-inverse has a null space, so
    the plain amplification is bounded below only by zero; the in-range ratio
    is the quantity bounded by the smallest nonzero singular value.
    """
    x = default_signal() if x is None else np.asarray(x, dtype=np.float64).ravel()
    M = x.size
    rows = []
    for L in sizes:
        T = np.asarray(build_toeplitz_1d(x, L))
        u, s, vt = np.linalg.svd(T, full_matrices=False)
        keep = s > RANK_RTOL * s[0]
        u, s, vt = u[:, keep], s[keep], vt[keep]
        pinv = (vt.T / s) @ u.T
        inv_s = 1.0 / s
        lo, hi = float(inv_s.min()), float(inv_s.max())
        amps, ratios, ok = [], [], 0
        for t in range(trials):
            n = trial_rng(seed, t).standard_normal(M)
            n /= np.linalg.norm(n)
            amp = float(np.linalg.norm(pinv @ n))
            in_range = float(np.linalg.norm(u.T @ n))
            ratio = amp / in_range
            slack = 1e-9 * hi
            if 0.0 <= amp <= hi + slack and lo - slack <= ratio <= hi + slack:
                ok += 1
            amps.append(amp)
            ratios.append(ratio)
        rows.append([L, lo, hi, float(np.mean(amps)), float(np.mean(ratios)), ok / trials])
    header = ["size", "s_min_pinv", "s_max_pinv", "mean_amplification", "mean_inrange_ratio",
              "frac_within_bounds"]
    return ExperimentReport.from_rows("amplification", header, rows,
                                      params={"M": M, "sizes": list(sizes), "trials": trials},
                                      seed=seed)


def experiment_perturbed_pseudoinverse(M: int = 254, sizes: Sequence[int] = (5, 9, 13, 17, 21),
                                       trials: int = 100, sampler: HyperLaplacianSampler | None = None,
                                       rel_noise: float = 0.01) -> ExperimentReport:
    """Singular values of ``(T_{x+dx})^+ T_x - I`` under a small signal perturbation."""
    sampler = sampler or HyperLaplacianSampler()
    if trials < 1:
        raise ValueError("trials must be >= 1")
    per_size = {L: [] for L in sizes}
    for t in range(trials):
        rng = trial_rng(sampler.seed, t)
        x = sampler.draw(M, rng)
        dx = rng.standard_normal(M)
        dx *= rel_noise * np.linalg.norm(x) / np.linalg.norm(dx)
        for L in sizes:
            T = np.asarray(build_toeplitz_1d(x, L))
            Tp = np.asarray(build_toeplitz_1d(x + dx, L))
            E = np.linalg.pinv(Tp, rcond=1e-12) @ T - np.eye(L)
            per_size[L].append(singular_summary(E))
    rows = []
    for L in sizes:
        mins = [v.s_min for v in per_size[L]]
        maxs = [v.s_max for v in per_size[L]]
        means = [v.s_mean for v in per_size[L]]
        rows.append([L, np.mean(mins), np.std(mins), np.mean(maxs), np.std(maxs),
                     np.mean(means), np.std(means)])
    header = ["size", "s_min_mean", "s_min_std", "s_max_mean", "s_max_std", "s_mean_mean", "s_mean_std"]
    params = {"M": M, "sizes": list(sizes), "trials": trials, "rel_noise": rel_noise,
              "gamma": sampler.gamma, "alpha": sampler.alpha}
    return ExperimentReport.from_rows("perturbed", header, rows, params=params, seed=sampler.seed)


def experiment_toeplitz_rank(M: int = 21, trials: int = 1000,
                             sampler: HyperLaplacianSampler | None = None) -> ExperimentReport:
    """Fraction of full-rank ``T_x(M)`` for sampled ``x``, plus the GF(2) analog.

    The binary-field analog draws all ``2M - 1`` diagonals of a square
    Toeplitz matrix uniformly from {0, 1} and tests invertibility mod 2.
    """
    sampler = sampler or HyperLaplacianSampler()
    if M < 1 or M % 2 == 0:
        raise ValueError("M must be odd")
    full = 0
    full_gf2 = 0
    for t in range(trials):
        rng = trial_rng(sampler.seed, t)
        x = sampler.draw(M, rng)
        if numerical_rank(build_toeplitz_1d(x, M)) == M:
            full += 1
        if gf2_rank(random_toeplitz_gf2(M, rng)) == M:
            full_gf2 += 1
    rows = [[M, trials, full / trials, full_gf2 / trials]]
    header = ["M", "trials", "full_rank_fraction", "gf2_full_rank_fraction"]
    params = {"M": M, "trials": trials, "gamma": sampler.gamma, "alpha": sampler.alpha,
              "rank_rtol": RANK_RTOL}
    return ExperimentReport.from_rows("rank", header, rows, params=params, seed=sampler.seed)


# --- regularizer costs ----------------------------------------------------------

def _fsum(values) -> float:
    # exactly rounded, hence independent of element order
    return math.fsum(np.asarray(values, dtype=np.float64).ravel().tolist())


def cost_l2sq(k) -> float:
    return _fsum(np.square(k))


def cost_l1(k) -> float:
    return _fsum(np.abs(k))


def cost_lalpha(k, alpha: float = 0.5) -> float:
    return _fsum(np.abs(k) ** alpha)


def cost_logdet(k, delta: float = ANALYSIS_DELTA) -> float:
    return kstep.logdet_cost(k, delta)


REGULARIZERS = {
    "l2sq": cost_l2sq,
    "l1": cost_l1,
    "lalpha": cost_lalpha,
    "logdet": cost_logdet,
}


def cost_ratio(cost0: float, cost_eps: float) -> float:
    """``1 + (cost(eps) - cost(0)) / |cost(0)|``."""
    if cost0 == 0:
        raise ZeroDivisionError("cost at eps = 0 is zero; ratio undefined")
    return 1.0 + (cost_eps - cost0) / abs(cost0)


def nonneg_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """Clipped Gaussian ``max(N(0, 1), 0)`` rescaled to unit sum."""
    n = np.maximum(rng.standard_normal(shape), 0.0)
    total = n.sum()
    if total == 0:
        n = np.full(shape, 1.0)
        total = n.sum()
    return n / total


def cost_ratio_samples(k_true, regularizers: Sequence[str] = ("l2sq", "l1", "lalpha", "logdet"),
                       epsilons: Sequence[float] = (0.0, 0.05, 0.1, 0.2, 0.3), trials: int = 20,
                       seed: int = 0) -> ExperimentReport:
    """Per-trial cost ratios of ``(1 - eps) k_true + eps n``; one row per (trial, eps)."""
    k = np.asarray(k_true, dtype=np.float64)
    for e in epsilons:
        if not 0 <= e < 1:
            raise ValueError("epsilons must lie in [0, 1)")
    unknown = [r for r in regularizers if r not in REGULARIZERS]
    if unknown:
        raise ValueError(f"unknown regularizers: {unknown}")
    base = {r: REGULARIZERS[r](k) for r in regularizers}
    cols = {"trial": [], "eps": []}
    cols.update({r: [] for r in regularizers})
    for t in range(trials):
        n = nonneg_noise(k.shape, trial_rng(seed, t))
        for e in epsilons:
            mixed = (1.0 - e) * k + e * n
            cols["trial"].append(t)
            cols["eps"].append(float(e))
            for r in regularizers:
                cols[r].append(1.0 if e == 0 else cost_ratio(base[r], REGULARIZERS[r](mixed)))
    params = {"regularizers": list(regularizers), "epsilons": list(epsilons), "trials": trials,
              "delta": ANALYSIS_DELTA, "kernel_shape": list(k.shape)}
    return ExperimentReport("cost-ratio-samples", params, cols, seed)


def cost_ratio_curve(k_true, regularizers: Sequence[str] = ("l2sq", "l1", "lalpha", "logdet"),
                     epsilons: Sequence[float] = (0.0, 0.05, 0.1, 0.2, 0.3), trials: int = 20,
                     seed: int = 0) -> ExperimentReport:
    """Mean cost ratio over trials for each regularizer and mixing level."""
    samples = cost_ratio_samples(k_true, regularizers, epsilons, trials, seed)
    eps_col = samples.column("eps")
    cols = {"eps": list(map(float, epsilons))}
    for r in regularizers:
        vals = samples.column(r)
        cols[r] = [float(vals[eps_col == float(e)].mean()) for e in epsilons]
    params = dict(samples.params)
    return ExperimentReport("cost-ratio", params, cols, seed)


def permutation_check(k_true, seed: int = 0, delta: float = ANALYSIS_DELTA) -> Dict[str, tuple]:
    """Costs of ``k_true`` and of a random rearrangement of its entries."""
    k = np.asarray(k_true, dtype=np.float64)
    perm = np.random.default_rng(seed).permutation(k.size)
    kp = k.ravel()[perm].reshape(k.shape)
    out = {name: (fn(k), fn(kp)) for name, fn in REGULARIZERS.items() if name != "logdet"}
    out["logdet"] = (cost_logdet(k, delta), cost_logdet(kp, delta))
    return out


def pad_to(k, n: int) -> np.ndarray:
    """Zero-pad ``k`` to ``n x n`` keeping it centred."""
    k = np.asarray(k, dtype=np.float64)
    if n < max(k.shape):
        raise ValueError("target size smaller than kernel")
    out = np.zeros((n, n))
    r0, c0 = (n - k.shape[0]) // 2, (n - k.shape[1]) // 2
    out[r0: r0 + k.shape[0], c0: c0 + k.shape[1]] = k
    return out


def logdet_vs_size_curve(k_true, sizes: Sequence[int] = (23, 31, 39, 47, 55, 63), seed: int = 0,
                         trials: int = 20, delta: float = ANALYSIS_DELTA) -> ExperimentReport:
    """Log-det cost against frame size for noise, padded truth and a Gaussian PSF.

    One row per (size, trial); only the noise column varies across trials.
    """
    k = np.asarray(k_true, dtype=np.float64)
    cols = {"size": [], "trial": [], "noise": [], "padded_truth": [], "gaussian": []}
    for n in sizes:
        padded = cost_logdet(pad_to(k, n), delta)
        gauss = cost_logdet(np.asarray(gaussian_psf(n, n / 6.0)), delta)
        for t in range(trials):
            noise = nonneg_noise((n, n), trial_rng(seed, t))
            cols["size"].append(n)
            cols["trial"].append(t)
            cols["noise"].append(cost_logdet(noise, delta))
            cols["padded_truth"].append(padded)
            cols["gaussian"].append(gauss)
    params = {"sizes": list(sizes), "trials": trials, "delta": delta, "kernel_shape": list(k.shape)}
    return ExperimentReport("logdet-size", params, cols, seed)


# --- 1-D blind deconvolution -----------------------------------------------------

def _diff1d(v):
    d = np.zeros_like(v)
    d[:-1] = v[1:] - v[:-1]
    return d


def _init_kernel_1d(L: int) -> np.ndarray:
    k = np.zeros(L)
    c = L // 2
    k[c - 1: c + 1] = 0.5
    return k


def ls_kernel_1d(x, y, L: int) -> np.ndarray:
    """Least-squares ``argmin_k ||T_x(L) k - y||`` by pseudo-inverse."""
    T = np.asarray(build_toeplitz_1d(x, L))
    return np.linalg.lstsq(T, y, rcond=1e-12)[0]


def experiment_1d_blind(x_row=None, k_true_1d=None, sizes: Sequence[int] = (23, 47, 93),
                        iters: int = 49, lam: float = 5e-3, xstep_iters: int = 10,
                        seed: int = 0) -> ExperimentReport:
    """1-D alternation at the truth size, then one kernel solve per declared size.

    The alternation runs ``iters`` rounds of an l1/l2 image update and a
    projected least-squares kernel update on derivatives, with zero boundary.
    The last latent then feeds an unregularised least-squares kernel solve at
    each declared size. Rows hold the raw solution and its projection per
    kernel tap; ``outside`` flags taps beyond the truth support.
    """
    x_row = default_signal(255, seed) if x_row is None else np.asarray(x_row, dtype=np.float64).ravel()
    if k_true_1d is None:
        from .synthetic import marginalize, motion_kernel
        k_true_1d = marginalize(motion_kernel(23, seed))
    k_true = np.asarray(k_true_1d, dtype=np.float64).ravel()
    Lt = k_true.size
    if Lt % 2 == 0:
        raise ValueError("truth kernel length must be odd")
    for L in sizes:
        if L % 2 == 0 or L < Lt or L > 2 * x_row.size - 1:
            raise ValueError(f"invalid declared size {L}")
    y = conv1d_zeropad(x_row, k_true)
    gy = _diff1d(y)
    g = GradientPair(gy[None, :], np.zeros((1, gy.size)))
    k = _init_kernel_1d(Lt)
    latent = g
    for _ in range(iters):
        latent = xstep.update_image(g, Kernel(k[None, :]), lam, xstep_iters, x0=latent,
                                    mode=BoundaryMode.ZERO, seed=seed)
        if latent.norm() == 0:
            break
        k = np.asarray(kstep.project_kernel(ls_kernel_1d(latent.horiz[0], gy, Lt)[None, :]))[0]
    lx = latent.horiz[0]
    cols = {"size": [], "offset": [], "truth": [], "raw": [], "projected": [], "outside": []}
    half_t = Lt // 2
    for L in sizes:
        raw = ls_kernel_1d(lx, gy, L)
        proj = np.asarray(kstep.project_kernel(raw[None, :]))[0]
        for i in range(L):
            off = i - L // 2
            cols["size"].append(L)
            cols["offset"].append(off)
            cols["truth"].append(float(k_true[off + half_t]) if abs(off) <= half_t else 0.0)
            cols["raw"].append(float(raw[i]))
            cols["projected"].append(float(proj[i]))
            cols["outside"].append(int(abs(off) > half_t))
    params = {"sizes": list(sizes), "iters": iters, "lambda": lam, "xstep_iters": xstep_iters,
              "M": x_row.size, "truth_size": Lt}
    return ExperimentReport("blind1d", params, cols, seed)


def sidelobe_mass(report: ExperimentReport, column: str = "projected") -> Dict[int, float]:
    """Sum of ``column`` over taps outside the truth support, per declared size."""
    size = report.column("size")
    outside = report.column("outside") > 0
    vals = report.column(column)
    return {int(L): float(np.abs(vals[(size == L) & outside]).sum()) for L in np.unique(size)}
