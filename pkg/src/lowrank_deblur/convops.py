"""Convolution operators, their adjoints, and explicit 1-D Toeplitz matrices.

All 2-D operators are "same"-size: the input is extended by the boundary
mode, then convolved in the valid region. Kernels are centred, so a
delta at the centre of an odd kernel is the identity.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .types import Kernel, as_image

# kernel area above which the transform-domain path is used
FFT_AREA_THRESHOLD = 81


class BoundaryMode(str, enum.Enum):
    ZERO = "zero"
    REPLICATE = "replicate"
    CIRCULAR = "circular"


def _mode(mode) -> BoundaryMode:
    return mode if isinstance(mode, BoundaryMode) else BoundaryMode(mode)


def _kernel_array(k) -> np.ndarray:
    arr = np.asarray(k, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("kernel must be 2-D")
    if arr.shape[0] % 2 == 0 or arr.shape[1] % 2 == 0:
        raise ValueError(f"kernel dims must be odd, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("kernel contains NaN or Inf")
    return arr


def _check_fits(image_shape, kernel_shape):
    if kernel_shape[0] > image_shape[0] or kernel_shape[1] > image_shape[1]:
        raise ValueError(f"kernel {kernel_shape} larger than image {image_shape}")


def _pad_index(n: int, pad: int, mode: BoundaryMode) -> np.ndarray:
    """Source index for each padded position; -1 marks a zero."""
    idx = np.arange(-pad, n + pad)
    if mode is BoundaryMode.ZERO:
        idx[(idx < 0) | (idx >= n)] = -1
    elif mode is BoundaryMode.REPLICATE:
        idx = np.clip(idx, 0, n - 1)
    else:
        idx = np.mod(idx, n)
    return idx


def pad(x: np.ndarray, pad_r: int, pad_c: int, mode) -> np.ndarray:
    """Extend ``x`` by ``pad_r`` rows / ``pad_c`` columns on each side."""
    mode = _mode(mode)
    ir = _pad_index(x.shape[0], pad_r, mode)
    ic = _pad_index(x.shape[1], pad_c, mode)
    out = x[np.clip(ir, 0, None)][:, np.clip(ic, 0, None)]
    if mode is BoundaryMode.ZERO:
        out = out.copy()
        out[ir < 0, :] = 0.0
        out[:, ic < 0] = 0.0
    return out


def pad_adjoint(z: np.ndarray, shape, pad_r: int, pad_c: int, mode) -> np.ndarray:
    """Adjoint of :func:`pad`: scatter-add padded values back to their sources."""
    mode = _mode(mode)
    ir = _pad_index(shape[0], pad_r, mode)
    ic = _pad_index(shape[1], pad_c, mode)
    rows = np.zeros((shape[0], z.shape[1]))
    keep = ir >= 0
    np.add.at(rows, ir[keep], z[keep])
    out = np.zeros(shape)
    keep = ic >= 0
    np.add.at(out.T, ic[keep], rows[:, keep].T)
    return out


def _valid_conv(xp: np.ndarray, k: np.ndarray) -> np.ndarray:
    if k.size > FFT_AREA_THRESHOLD:
        return signal.fftconvolve(xp, k, mode="valid")
    return signal.convolve2d(xp, k, mode="valid")


def _full_conv(r: np.ndarray, k: np.ndarray) -> np.ndarray:
    if k.size > FFT_AREA_THRESHOLD:
        return signal.fftconvolve(r, k, mode="full")
    return signal.convolve2d(r, k, mode="full")


def convolve2d(x, k, mode=BoundaryMode.ZERO) -> np.ndarray:
    """Same-size 2-D convolution of image ``x`` with centred kernel ``k``.

    ``out[i, j] = sum_{a,b} k[a, b] * x_ext[i + l - a, j + m - b]`` with
    ``l, m`` the kernel half-sizes and ``x_ext`` the boundary-extended image.
    """
    x = as_image(x)
    k = _kernel_array(k)
    _check_fits(x.shape, k.shape)
    l, m = k.shape[0] // 2, k.shape[1] // 2
    return _valid_conv(pad(x, l, m, mode), k)


def correlate2d_adjoint(r, k, mode=BoundaryMode.ZERO) -> np.ndarray:
    """Adjoint of ``convolve2d(., k, mode)`` applied to ``r``.

    For zero and circular boundaries this is plain correlation with ``k``;
    for replicate the border contributions are folded back onto the edge
    pixels, so the adjoint identity holds exactly in every mode.
    """
    r = as_image(r)
    k = _kernel_array(k)
    _check_fits(r.shape, k.shape)
    l, m = k.shape[0] // 2, k.shape[1] // 2
    full = _full_conv(r, k[::-1, ::-1])
    return pad_adjoint(full, r.shape, l, m, mode)


# --- circular fast path -----------------------------------------------------

def kernel_to_otf(k: np.ndarray, shape) -> np.ndarray:
    """rfft2 of ``k`` embedded in ``shape`` with its centre moved to (0, 0)."""
    k = np.asarray(k, dtype=np.float64)
    buf = np.zeros(shape)
    buf[: k.shape[0], : k.shape[1]] = k
    buf = np.roll(buf, (-(k.shape[0] // 2), -(k.shape[1] // 2)), axis=(0, 1))
    return np.fft.rfft2(buf)


def otf_to_kernel(spec: np.ndarray, shape, kdims) -> np.ndarray:
    """Inverse of :func:`kernel_to_otf` restricted to a ``kdims`` window."""
    full = np.fft.irfft2(spec, s=shape)
    L, K = kdims
    full = np.roll(full, (L // 2, K // 2), axis=(0, 1))
    return full[:L, :K]


# --- kernel-side operator -----------------------------------------------------

class KernelOperator:
    """The map ``k -> mask * conv(x, k)`` for a fixed image ``x``.

    This is the matrix-free form of the Toeplitz operator acting on
    kernels. ``matvec`` takes an ``(L, K)`` kernel to an image, ``rmatvec``
    takes an image back to an ``(L, K)`` array. An optional 0/1 ``mask``
    restricts the data term to selected pixels.
    """

    def __init__(self, x, kdims, mode=BoundaryMode.ZERO, mask=None):
        self.x = as_image(x)
        L, K = (int(v) for v in kdims)
        if L < 1 or K < 1 or L % 2 == 0 or K % 2 == 0:
            raise ValueError(f"kernel dims must be odd, got {kdims}")
        _check_fits(self.x.shape, (L, K))
        self.kdims = (L, K)
        self.mode = _mode(mode)
        self.mask = None if mask is None else np.asarray(mask, dtype=np.float64)
        if self.mode is BoundaryMode.CIRCULAR:
            self._xf = np.fft.rfft2(self.x)
        else:
            self._xp = pad(self.x, L // 2, K // 2, self.mode)

    @property
    def shape(self):
        return (self.x.size, self.kdims[0] * self.kdims[1])

    def matvec(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.float64).reshape(self.kdims)
        if self.mode is BoundaryMode.CIRCULAR:
            out = np.fft.irfft2(self._xf * kernel_to_otf(k, self.x.shape), s=self.x.shape)
        else:
            out = _valid_conv(self._xp, k)
        if self.mask is not None:
            out = out * self.mask
        return out

    def rmatvec(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64).reshape(self.x.shape)
        if self.mask is not None:
            r = r * self.mask
        if self.mode is BoundaryMode.CIRCULAR:
            return otf_to_kernel(np.conj(self._xf) * np.fft.rfft2(r), self.x.shape, self.kdims)
        # adj[a, b] = sum_ij r[i, j] xp[i + L-1-a, j + K-1-b]
        c = signal.correlate(self._xp, r, mode="valid", method="auto")
        return c[::-1, ::-1].copy()

    def normal(self, k) -> np.ndarray:
        return self.rmatvec(self.matvec(k))

    def as_linear_operator(self):
        from scipy.sparse.linalg import LinearOperator

        return LinearOperator(
            self.shape,
            matvec=lambda v: self.matvec(v).ravel(),
            rmatvec=lambda v: self.rmatvec(v).ravel(),
            dtype=np.float64,
        )


def conv_image_as_operator_on_kernel(x, kdims, mode=BoundaryMode.ZERO, mask=None) -> KernelOperator:
    return KernelOperator(x, kdims, mode, mask)


class ImageOperator:
    """The map ``x -> mask * conv(x, k)`` for a fixed kernel ``k``."""

    def __init__(self, k, shape, mode=BoundaryMode.ZERO, mask=None):
        self.k = _kernel_array(k)
        self.image_shape = tuple(shape)
        _check_fits(self.image_shape, self.k.shape)
        self.mode = _mode(mode)
        self.mask = None if mask is None else np.asarray(mask, dtype=np.float64)
        if self.mode is BoundaryMode.CIRCULAR:
            self._kf = kernel_to_otf(self.k, self.image_shape)

    def matvec(self, x) -> np.ndarray:
        if self.mode is BoundaryMode.CIRCULAR:
            out = np.fft.irfft2(np.fft.rfft2(x) * self._kf, s=self.image_shape)
        else:
            out = convolve2d(x, self.k, self.mode)
        if self.mask is not None:
            out = out * self.mask
        return out

    def rmatvec(self, r) -> np.ndarray:
        if self.mask is not None:
            r = r * self.mask
        if self.mode is BoundaryMode.CIRCULAR:
            return np.fft.irfft2(np.fft.rfft2(r) * np.conj(self._kf), s=self.image_shape)
        return correlate2d_adjoint(r, self.k, self.mode)

    def norm_sq_estimate(self, iters: int = 30, seed: int = 0) -> float:
        """Power-iteration estimate of the largest eigenvalue of ``A^T A``."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.image_shape)
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(iters):
            w = self.rmatvec(self.matvec(v))
            est = float(np.linalg.norm(w))
            if est == 0.0:
                return 0.0
            v = w / est
        return est


# --- explicit 1-D Toeplitz ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class Toeplitz1D:
    """Dense ``M x L`` matrix realising zero-padded same-size 1-D convolution."""

    entries: np.ndarray

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __matmul__(self, other):
        return self.entries @ other


def build_toeplitz_1d(x, L: int) -> Toeplitz1D:
    """``T[i, j] = x[i + l - j]`` (0-based, ``l = (L-1)/2``), zero outside ``x``.

    Column ``l`` is ``x`` itself; ``T @ k`` equals same-size zero-padded
    convolution of ``x`` with the length-``L`` kernel ``k``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    M = x.size
    if L < 1 or L % 2 == 0:
        raise ValueError(f"kernel length must be odd, got {L}")
    if L > 2 * M - 1:
        raise ValueError(f"kernel length {L} exceeds 2M-1 = {2 * M - 1}")
    l = (L - 1) // 2
    src = np.arange(M)[:, None] + l - np.arange(L)[None, :]
    valid = (src >= 0) & (src < M)
    T = np.where(valid, x[np.clip(src, 0, M - 1)], 0.0)
    return Toeplitz1D(T)


def conv1d_zeropad(x, k) -> np.ndarray:
    """Same-size zero-padded 1-D convolution with a centred odd kernel."""
    x = np.asarray(x, dtype=np.float64).ravel()
    k = np.asarray(k, dtype=np.float64).ravel()
    l = (k.size - 1) // 2
    full = np.convolve(x, k, mode="full")
    return full[l: l + x.size]


def pseudo_inverse_apply(T, b, rcond: float = 1e-12) -> np.ndarray:
    """``T^+ b`` through the SVD, dropping singular values below ``rcond * s_max``."""
    A = np.asarray(T, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(A.shape[1])
    inv = np.where(s > rcond * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return Vt.T @ (inv * (U.T @ b))


def gradients(img) -> "GradientPair":
    """Forward differences ``[1, -1]`` horizontally and vertically.

    The last column / row has no forward neighbour and is set to zero.
    """
    from .types import GradientPair

    img = as_image(img)
    gh = np.zeros_like(img)
    gv = np.zeros_like(img)
    gh[:, :-1] = img[:, 1:] - img[:, :-1]
    gv[:-1, :] = img[1:, :] - img[:-1, :]
    return GradientPair(gh, gv)
