"""Domain types shared across the package.

Images are plain 2-D ``float64`` numpy arrays; :func:`as_image` is the single
gate that checks them. Kernels get a small immutable wrapper because their
invariants (odd dims, non-negative, unit sum) are relied on everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Mapping, NamedTuple, Sequence, Tuple

import numpy as np

KERNEL_SUM_TOL = 1e-9


def as_image(data, name: str = "image") -> np.ndarray:
    """Return ``data`` as a finite 2-D float64 array or raise ``ValueError``."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def _read_only(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Kernel:
    """Non-negative, unit-sum blur kernel with odd dimensions.

    Construction validates; there is no way to hold an invalid ``Kernel``.
    Use :func:`lowrank_deblur.kstep.project_kernel` to turn an arbitrary
    matrix into one.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim == 1:
            w = w[None, :]
        if w.ndim != 2:
            raise ValueError("kernel must be 2-D")
        if w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
            raise ValueError(f"kernel dims must be odd, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel contains NaN or Inf")
        if np.any(w < 0):
            raise ValueError("kernel weights must be non-negative")
        if abs(w.sum() - 1.0) > KERNEL_SUM_TOL:
            raise ValueError(f"kernel must sum to 1, sums to {w.sum()!r}")
        object.__setattr__(self, "weights", _read_only(w))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.weights.shape

    @property
    def size_l(self) -> int:
        return self.weights.shape[0]

    @property
    def size_k(self) -> int:
        return self.weights.shape[1]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.weights
        return self.weights.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Kernel):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.shape, self.weights.tobytes()))

    @classmethod
    def delta(cls, size_l: int, size_k: int | None = None) -> "Kernel":
        size_k = size_l if size_k is None else size_k
        w = np.zeros((size_l, size_k))
        w[size_l // 2, size_k // 2] = 1.0
        return cls(w)


class GradientPair(NamedTuple):
    """Horizontal and vertical gradient images of equal shape."""

    horiz: np.ndarray
    vert: np.ndarray

    @classmethod
    def of(cls, horiz, vert) -> "GradientPair":
        h = as_image(horiz, "horizontal gradient")
        v = as_image(vert, "vertical gradient")
        if h.shape != v.shape:
            raise ValueError(f"gradient shapes differ: {h.shape} vs {v.shape}")
        return cls(h, v)

    @property
    def shape(self):
        return self.horiz.shape

    def norm(self) -> float:
        return math.sqrt(float(np.sum(self.horiz**2) + np.sum(self.vert**2)))


@dataclass(frozen=True)
class DeblurConfig:
    """All tunables of the blind deconvolution method.

    ``eta`` is carried for completeness of the original parameter list; no
    step of the method reads it. The image-prior weight decays geometrically
    from ``lam_start`` to ``lam`` over the ``iter_max`` alternations of each
    scale; ``lam_start <= lam`` keeps it constant.
    """

    lam: float = 5e-3
    lam_start: float = 0.3
    sigma: float = 1.0
    mu: float = 1.0
    tau: float = 5e-5
    delta: float = 0.01
    eta: float = 0.0
    outer_iter_max: int = 20
    cg_iter_max: int = 3
    inner_iter_max: int = 10
    iter_max: int = 15
    xstep_iters: int = 10
    pyramid_levels: int = 7
    pyramid_factor: float = 1.0 / math.sqrt(2.0)
    kernel_size: Tuple[int, int] = (23, 23)
    threshold_ratio: float = 0.05
    nb_alpha: float = 2.0 / 3.0
    nb_lambda: float = 2000.0
    seed: int = 0

    def with_(self, **changes) -> "DeblurConfig":
        return replace(self, **changes)


def default_config() -> DeblurConfig:
    return DeblurConfig()


_COUNT_FIELDS = ("outer_iter_max", "cg_iter_max", "inner_iter_max", "iter_max",
                 "xstep_iters", "pyramid_levels")


def validate_config(c: DeblurConfig) -> List[str]:
    """Return every invariant violation of ``c``; an empty list means valid."""
    errors = []
    if not c.lam > 0:
        errors.append("lambda must be positive")
    if not c.lam_start >= 0:
        errors.append("lam_start must be non-negative")
    if not c.sigma >= 0:
        errors.append("sigma must be non-negative")
    for name in ("mu", "tau", "delta"):
        if not getattr(c, name) > 0:
            errors.append(f"{name} must be positive")
    for name in _COUNT_FIELDS:
        v = getattr(c, name)
        if not isinstance(v, (int, np.integer)) or v < 1:
            errors.append(f"{name} must be an integer >= 1")
    if not 0 < c.pyramid_factor < 1:
        errors.append("pyramid_factor must lie in (0, 1)")
    ks = c.kernel_size
    if len(ks) != 2 or any(int(v) != v or v < 1 for v in ks):
        errors.append("kernel dims must be positive integers")
    elif any(int(v) % 2 == 0 for v in ks):
        errors.append("kernel dims must be odd")
    if not 0 <= c.threshold_ratio < 1:
        errors.append("threshold_ratio must lie in [0, 1)")
    if c.nb_alpha not in (0.5, 2.0 / 3.0):
        errors.append("nb_alpha must be 1/2 or 2/3")
    if not c.nb_lambda > 0:
        errors.append("nb_lambda must be positive")
    if not 0 <= int(c.seed) < 2**64:
        errors.append("seed must fit in 64 bits")
    return errors


# --- text config format -----------------------------------------------------

# file key -> dataclass attribute
_KEY_ALIASES = {"lambda": "lam"}
_ATTR_KEYS = {v: k for k, v in _KEY_ALIASES.items()}


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(int(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(c: DeblurConfig) -> str:
    """Serialize to ``key = value`` lines; floats use ``repr`` so parsing is exact."""
    lines = []
    for f in fields(c):
        key = _ATTR_KEYS.get(f.name, f.name)
        lines.append(f"{key} = {_format_value(getattr(c, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str, base: DeblurConfig | None = None) -> DeblurConfig:
    """Parse ``key = value`` lines (``#`` comments allowed) on top of ``base``."""
    base = base or default_config()
    types = {f.name: f.type for f in fields(base)}
    changes: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        attr = _KEY_ALIASES.get(key, key)
        if attr not in types:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        changes[attr] = coerce_field(attr, value)
    return replace(base, **changes)


def coerce_field(attr: str, value: str):
    """Convert a textual value to the type of config field ``attr``."""
    default = getattr(DeblurConfig(), attr)
    if isinstance(default, tuple):
        parts = [p for p in value.replace("x", ",").split(",") if p.strip()]
        if len(parts) == 1:
            parts = parts * 2
        return tuple(int(p) for p in parts)
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    return float(value)


# --- experiment reports -----------------------------------------------------

@dataclass
class ExperimentReport:
    """Tabular experiment output; every column has the same length."""

    name: str
    params: Dict[str, Any] = field(default_factory=dict)
    columns: Dict[str, List[float]] = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.columns = {k: list(v) for k, v in self.columns.items()}
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"report columns have unequal lengths: {sorted(lengths)}")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=np.float64)

    @classmethod
    def from_rows(cls, name: str, header: Sequence[str], rows: Sequence[Sequence[float]],
                  params: Mapping[str, Any] | None = None, seed: int | None = None):
        cols = {h: [r[i] for r in rows] for i, h in enumerate(header)}
        return cls(name=name, params=dict(params or {}), columns=cols, seed=seed)
