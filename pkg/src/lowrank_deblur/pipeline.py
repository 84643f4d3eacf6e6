"""Blind deconvolution driver: single-scale alternation and the multi-scale pyramid."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from . import kstep, xstep
from .convops import BoundaryMode, gradients
from .nonblind import HQParams, deconv_hyper_laplacian
from .types import DeblurConfig, GradientPair, Kernel, as_image, validate_config

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PyramidLevel:
    image: np.ndarray
    kernel_dims: Tuple[int, int]
    scale_index: int


@dataclass
class DeblurResult:
    image: np.ndarray | None
    kernel: Kernel
    per_level_kernels: List[Kernel] = field(default_factory=list)
    objective_trace: List[float] = field(default_factory=list)
    latent: GradientPair | None = None


def round_odd(v: float, minimum: int = 3) -> int:
    """Nearest odd integer to ``v`` (ties go down), but at least ``minimum``."""
    half = (v - 1) / 2
    n = math.floor(half)
    if half - n > 0.5:
        n += 1
    return max(minimum, 2 * n + 1)


def resize_bilinear(img, shape) -> np.ndarray:
    """Bilinear resampling with pixel centres aligned (edges clamp)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    H, W = shape
    r = (np.arange(H) + 0.5) * h / H - 0.5
    c = (np.arange(W) + 0.5) * w / W - 0.5
    rr, cc = np.meshgrid(r, c, indexing="ij")
    return ndimage.map_coordinates(img, [rr, cc], order=1, mode="nearest")


def build_pyramid(y, kernel_size, levels: int, factor: float = 1 / math.sqrt(2)) -> List[PyramidLevel]:
    """Coarse-to-fine list of levels; the last entry is full resolution."""
    y = as_image(y)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if not 0 < factor < 1:
        raise ValueError("factor must lie in (0, 1)")
    L, K = kernel_size
    out = []
    for i in range(levels):
        s = factor**i
        if i == 0:
            img, dims = y, (int(L), int(K))
        else:
            shape = (max(1, int(round(y.shape[0] * s))), max(1, int(round(y.shape[1] * s))))
            img = resize_bilinear(y, shape)
            dims = (round_odd(L * s), round_odd(K * s))
        if dims[0] > img.shape[0] or dims[1] > img.shape[1]:
            raise ValueError(f"kernel {dims} exceeds image {img.shape} at pyramid level {i}")
        out.append(PyramidLevel(img, dims, i))
    return out[::-1]


def init_kernel(L: int, K: int | None = None) -> Kernel:
    """Zero ``L x K`` matrix with ``[0.5 0.5]`` placed at the centre."""
    K = L if K is None else K
    k = np.zeros((L, K))
    c_r, c_c = L // 2, K // 2
    if K >= 2:
        k[c_r, c_c - 1: c_c + 1] = 0.5
    else:
        k[c_r, c_c] = 1.0
    return Kernel(k)


def threshold_kernel(k, ratio: float) -> Kernel:
    """Zero entries below ``ratio * max(k)`` and renormalise."""
    if not 0 <= ratio < 1:
        raise ValueError("ratio must lie in [0, 1)")
    w = np.array(k, dtype=np.float64)
    if ratio > 0:
        w[w < ratio * w.max()] = 0.0
    return kstep.project_kernel(w)


def recenter_kernel(k) -> Kernel:
    """Shift ``k`` by whole pixels so its centre of mass is nearest the frame centre.

    Mass pushed past the frame edge is dropped and the rest renormalised.
    """
    w = np.asarray(k, dtype=np.float64)
    r, c = np.indices(w.shape)
    total = w.sum()
    shift = (int(round(w.shape[0] // 2 - float((w * r).sum()) / total)),
             int(round(w.shape[1] // 2 - float((w * c).sum()) / total)))
    if shift == (0, 0):
        return kstep.project_kernel(w)
    return kstep.project_kernel(ndimage.shift(w, shift, order=0, mode="constant", cval=0.0))


def resize_kernel(k, dims) -> Kernel:
    w = np.asarray(k, dtype=np.float64)
    if w.shape == tuple(dims):
        return kstep.project_kernel(w)
    return kstep.project_kernel(resize_bilinear(w, dims))


def border_mask(shape, kdims) -> np.ndarray:
    """1 where the blur footprint lies inside the frame, 0 in the border band."""
    m = np.zeros(shape)
    br, bc = kdims[0] // 2, kdims[1] // 2
    m[br: shape[0] - br, bc: shape[1] - bc] = 1.0
    return m


def hq_params(cfg: DeblurConfig) -> HQParams:
    return HQParams(alpha=cfg.nb_alpha, lambda_nb=cfg.nb_lambda)


def _check(cfg):
    errors = validate_config(cfg)
    if errors:
        raise ValueError("invalid config: " + "; ".join(errors))


def lambda_schedule(cfg: DeblurConfig) -> np.ndarray:
    """Image-prior weight per alternation: geometric from ``lam_start`` down to ``lam``."""
    n = cfg.iter_max
    if cfg.lam_start <= cfg.lam or n == 1:
        return np.full(n, cfg.lam)
    return np.geomspace(cfg.lam_start, cfg.lam, n)


def data_objective(x: GradientPair, y: GradientPair, k, mask) -> float:
    from .convops import ImageOperator

    op = ImageOperator(k, y.shape, BoundaryMode.CIRCULAR, mask)
    return sum(float(np.sum((op.matvec(xc) - yc) ** 2)) for xc, yc in zip(x, y))


def deblur_single_scale(y, cfg: DeblurConfig, k_init=None, final_nonblind: bool = True) -> DeblurResult:
    """Alternate image and kernel updates on the gradient pair of ``y``.

    ``k_init`` defaults to the centred ``[0.5 0.5]`` kernel of size
    ``cfg.kernel_size``. The data terms cover only pixels whose blur
    footprint lies inside the frame. The final kernel is shifted by whole
    pixels to centre its mass before the non-blind pass.
    """
    _check(cfg)
    y = as_image(y, "blurry image")
    kernel = init_kernel(*cfg.kernel_size) if k_init is None else Kernel(np.asarray(k_init))
    dims = kernel.shape
    if dims[0] > y.shape[0] or dims[1] > y.shape[1]:
        raise ValueError(f"kernel {dims} larger than image {y.shape}")
    g = gradients(y)
    mask = border_mask(y.shape, dims)
    params = kstep.KStepParams.from_config(cfg)
    x = g
    trace = []
    schedule = lambda_schedule(cfg)
    for it in range(cfg.iter_max):
        lam = float(schedule[it])
        x_new = xstep.update_image(g, kernel, lam, cfg.xstep_iters, x0=x,
                                   mode=BoundaryMode.CIRCULAR, mask=mask, seed=cfg.seed)
        while x_new.norm() == 0.0 and lam > cfg.lam:
            # the prior swamped the data term; weaken it for the rest of the run
            lam = max(0.5 * lam, cfg.lam)
            log.debug("iter %d: latent collapsed, lambda lowered to %.3g", it, lam)
            schedule = np.minimum(schedule, lam)
            x_new = xstep.update_image(g, kernel, lam, cfg.xstep_iters, x0=x,
                                       mode=BoundaryMode.CIRCULAR, mask=mask, seed=cfg.seed)
        if x_new.norm() == 0.0:
            raise RuntimeError("latent image collapsed to zero; lower lambda")
        x = x_new
        kernel = kstep.update_kernel(x, g, kernel, params, mode=BoundaryMode.CIRCULAR, mask=mask)
        trace.append(data_objective(x, g, kernel, mask))
        log.debug("iter %d: data misfit %.6g", it, trace[-1])
    kernel = recenter_kernel(kernel)
    image = deconv_hyper_laplacian(y, kernel, hq_params(cfg)) if final_nonblind else None
    return DeblurResult(image=image, kernel=kernel, per_level_kernels=[kernel],
                        objective_trace=trace, latent=x)


def deblur_blind(y, cfg: DeblurConfig) -> DeblurResult:
    """Coarse-to-fine blind deconvolution followed by a non-blind pass."""
    _check(cfg)
    y = as_image(y, "blurry image")
    levels = build_pyramid(y, cfg.kernel_size, cfg.pyramid_levels, cfg.pyramid_factor)
    kernel = None
    per_level = []
    trace = []
    res = None
    for lvl in levels:
        k0 = init_kernel(*lvl.kernel_dims) if kernel is None else resize_kernel(kernel, lvl.kernel_dims)
        res = deblur_single_scale(lvl.image, cfg, k_init=k0, final_nonblind=False)
        kernel = threshold_kernel(res.kernel, cfg.threshold_ratio)
        per_level.append(kernel)
        trace.extend(res.objective_trace)
        log.info("level %d: image %s kernel %s", lvl.scale_index, lvl.image.shape, lvl.kernel_dims)
    image = deconv_hyper_laplacian(y, kernel, hq_params(cfg))
    return DeblurResult(image=image, kernel=kernel, per_level_kernels=per_level,
                        objective_trace=trace, latent=res.latent)
