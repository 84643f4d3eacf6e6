"""Seeded synthetic test material: sharp images, motion kernels, 1-D signals."""
from __future__ import annotations

import numpy as np
from scipy import ndimage, signal

from .types import Kernel


def motion_kernel(size: int, seed: int, length: float | None = None,
                  steps: int = 400, turn: float = 0.15) -> Kernel:
    """Camera-shake style kernel: a smooth random trajectory splatted bilinearly.

    The trajectory is a random walk in heading with path length ``length``
    (default ``0.8 * size``), placed so its centre of mass is near the
    middle of a ``size x size`` frame.
    """
    if size < 3 or size % 2 == 0:
        raise ValueError("size must be odd and >= 3")
    rng = np.random.default_rng(seed)
    length = 0.8 * size if length is None else length
    heading = rng.uniform(0, 2 * np.pi) + np.cumsum(rng.normal(scale=turn, size=steps))
    step = length / steps
    path = np.cumsum(np.stack([np.sin(heading), np.cos(heading)], axis=1) * step, axis=0)
    # centre the mass, then slide back inside the frame if the extent allows
    half = size // 2
    path -= path.mean(axis=0)
    lo, hi = path.min(axis=0), path.max(axis=0)
    path -= np.clip(0.0, hi - half + 1e-9, lo + half)
    path = np.clip(path + half, 0, size - 1 - 1e-9)
    k = np.zeros((size, size))
    base = np.floor(path).astype(int)
    frac = path - base
    for (r, c), (fr, fc) in zip(base, frac):
        k[r, c] += (1 - fr) * (1 - fc)
        k[r + 1 if r + 1 < size else r, c] += fr * (1 - fc)
        k[r, c + 1 if c + 1 < size else c] += (1 - fr) * fc
        k[r + 1 if r + 1 < size else r, c + 1 if c + 1 < size else c] += fr * fc
    return Kernel(k / k.sum())


def gaussian_psf(n: int, std: float) -> Kernel:
    r = np.arange(n) - n // 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * std * std))
    return Kernel(g / g.sum())


def sharp_image(shape, seed: int, texture: float = 0.06) -> np.ndarray:
    """Piecewise-smooth scene: shaded background plus random flat shapes.

    Values lie in [0, 1]; edges are sharp, regions are smooth, which gives
    the sparse gradient statistics natural images have.
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    img = 0.35 + 0.25 * (rng.uniform(-1, 1) * yy + rng.uniform(-1, 1) * xx)
    n_shapes = max(6, (h * w) // 500)
    for _ in range(n_shapes):
        kind = rng.integers(3)
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        size = rng.uniform(0.05, 0.3) * max(h, w)
        val = rng.uniform(0.0, 1.0)
        if kind == 0:
            m = (np.abs(yy * max(h, w) - cy) < size / 2) & (np.abs(xx * max(h, w) - cx) < size / 3)
        elif kind == 1:
            m = (yy * max(h, w) - cy) ** 2 + (xx * max(h, w) - cx) ** 2 < (size / 2) ** 2
        else:
            a = rng.uniform(0, np.pi)
            d = (yy * max(h, w) - cy) * np.cos(a) + (xx * max(h, w) - cx) * np.sin(a)
            m = (np.abs(d) < size / 8) & ((yy * max(h, w) - cy) ** 2 + (xx * max(h, w) - cx) ** 2 < size**2)
        img = np.where(m, val, img)
    img = img + texture * _pink_noise((h, w), rng)
    img = ndimage.gaussian_filter(img, 0.6)
    return np.clip(img, 0.0, 1.0)


def _pink_noise(shape, rng) -> np.ndarray:
    """Zero-mean 1/f noise with unit standard deviation."""
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.rfftfreq(shape[1])[None, :]
    f = np.sqrt(fy**2 + fx**2)
    f[0, 0] = 1.0
    spec = (rng.standard_normal(f.shape) + 1j * rng.standard_normal(f.shape)) / f
    spec[0, 0] = 0.0
    n = np.fft.irfft2(spec, s=shape)
    return n / n.std()


def blurry_pair(shape, k, seed: int, noise: float = 0.0):
    """Return ``(sharp, blurry)`` of the same ``shape``.

    The blurry image is the valid part of the convolution of a larger sharp
    scene, so its borders carry real out-of-frame content rather than a
    periodic or zero extension. ``noise`` is the std of additive Gaussian noise.
    """
    k = np.asarray(k, dtype=np.float64)
    L, K = k.shape
    big = sharp_image((shape[0] + L - 1, shape[1] + K - 1), seed)
    blurry = signal.fftconvolve(big, k, mode="valid")
    sharp = big[L // 2: L // 2 + shape[0], K // 2: K // 2 + shape[1]]
    if noise > 0:
        rng = np.random.default_rng([seed, 1])
        blurry = blurry + rng.normal(scale=noise, size=blurry.shape)
    return sharp.copy(), blurry


def piecewise_smooth_row(M: int = 255, seed: int = 0) -> np.ndarray:
    """Row-like 1-D signal in [0, 1]: smooth ramps joined by jumps."""
    rng = np.random.default_rng(seed)
    n_jumps = max(3, M // 25)
    cuts = np.sort(rng.choice(np.arange(5, M - 5), size=n_jumps, replace=False))
    out = np.empty(M)
    start = 0
    for end in list(cuts) + [M]:
        t = np.linspace(0, 1, end - start)
        a, b = rng.uniform(0.1, 0.9, size=2)
        out[start:end] = a + (b - a) * t + 0.03 * np.sin(2 * np.pi * rng.uniform(0.5, 2) * t)
        start = end
    out = ndimage.gaussian_filter1d(out, 0.7)
    return np.clip(out, 0.0, 1.0)


def marginalize(k) -> np.ndarray:
    """Sum a 2-D kernel over rows to a unit-sum 1-D kernel (length = columns)."""
    k = np.asarray(k, dtype=np.float64)
    m = k.sum(axis=0)
    return m / m.sum()
