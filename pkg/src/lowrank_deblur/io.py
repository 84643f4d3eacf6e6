"""Image, kernel and report files.

Images load as float arrays in [0, 1]. PGM (ASCII ``P2`` and binary ``P5``)
is parsed here; PNG goes through Pillow. Kernels are plain text: a first
line ``L K`` followed by ``L`` rows of ``K`` reals. Reports are CSV with
leading ``# key=value`` metadata lines. Every writer goes through a
temporary file and an atomic rename, so a failed write leaves no partial
output behind.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .types import ExperimentReport, Kernel, as_image

LUMA = (0.299, 0.587, 0.114)


class ImageFormatError(ValueError):
    pass


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


# --- PGM ----------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int, start: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        if j == i:
            raise ImageFormatError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i


def parse_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ImageFormatError("not a PGM file")
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ImageFormatError(f"corrupt PGM header: {exc}") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ImageFormatError("corrupt PGM header")
    if magic == b"P2":
        try:
            vals = [int(t) for t in data[pos:].split()]
        except ValueError:
            raise ImageFormatError("non-integer pixel in ASCII PGM") from None
        if len(vals) < w * h:
            raise ImageFormatError("truncated PGM data")
        pix = np.asarray(vals[: w * h], dtype=np.float64)
    else:
        pos += 1  # single whitespace byte ends the header
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = w * h * dtype.itemsize
        raw = data[pos: pos + need]
        if len(raw) < need:
            raise ImageFormatError("truncated PGM data")
        pix = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    if pix.max(initial=0) > maxval:
        raise ImageFormatError("pixel exceeds maxval")
    return (pix / maxval).reshape(h, w)


def format_pgm(img, maxval: int = 255) -> bytes:
    img = as_image(img)
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode()
    dtype = ">u2" if maxval > 255 else "u1"
    return header + q.astype(dtype).tobytes()


# --- generic images -------------------------------------------------------------

def load_image(path) -> np.ndarray:
    """Load a PGM or PNG as a 2-D float image in [0, 1]; colour becomes luma."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P2", b"P5"):
        return parse_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    raise ImageFormatError(f"unknown image format: {path}")


def _load_png(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"cannot decode PNG: {exc}") from None
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        return arr.astype(np.float64) / 65535.0
    if mode == "P":
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
        mode = "RGB"
    if mode == "LA":
        arr = arr[..., 0]
    elif mode in ("RGB", "RGBA"):
        rgb = arr[..., :3].astype(np.float64)
        arr = rgb @ np.asarray(LUMA)
    elif mode == "1":
        return arr.astype(np.float64)
    elif mode != "L":
        raise ImageFormatError(f"unsupported PNG mode {mode}")
    return np.asarray(arr, dtype=np.float64) / 255.0


def save_image(path, img, bits: int = 8) -> None:
    """Write ``img`` (clipped to [0, 1]) as PGM or PNG depending on the suffix."""
    path = Path(path)
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    maxval = 255 if bits == 8 else 65535
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        _atomic_write(path, format_pgm(img, maxval))
    elif suffix == ".png":
        _atomic_write(path, png_bytes(img, bits))
    else:
        raise ImageFormatError(f"unsupported output suffix {suffix!r}")


def png_bytes(img, bits: int = 8) -> bytes:
    import io as _io

    from PIL import Image

    img = as_image(img)
    maxval = 255 if bits == 8 else 65535
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    im = Image.fromarray(q.astype(np.uint8 if bits == 8 else np.uint16))
    buf = _io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


# --- kernels ------------------------------------------------------------------

def format_kernel(k) -> str:
    w = np.asarray(k, dtype=np.float64)
    lines = [f"{w.shape[0]} {w.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in w]
    return "\n".join(lines) + "\n"


def parse_kernel(text: str, normalize: bool = False) -> Kernel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty kernel file")
    try:
        L, K = (int(v) for v in lines[0].split())
    except ValueError:
        raise ValueError("kernel header must be 'L K'") from None
    rows = lines[1:]
    if len(rows) != L:
        raise ValueError(f"expected {L} kernel rows, found {len(rows)}")
    w = np.array([[float(v) for v in r.split()] for r in rows]) if L else np.zeros((0, K))
    if w.shape != (L, K):
        raise ValueError(f"kernel rows must hold {K} values each")
    if normalize:
        total = w.sum()
        if total <= 0:
            raise ValueError("kernel sums to zero")
        w = w / total
    return Kernel(w)


def save_kernel(path, k) -> None:
    _atomic_write(path, format_kernel(k).encode())


def load_kernel(path, normalize: bool = False) -> Kernel:
    return parse_kernel(Path(path).read_text(), normalize)


def save_kernel_png(path, k) -> None:
    """Max-scaled 8-bit visualisation of a kernel."""
    w = np.asarray(k, dtype=np.float64)
    peak = w.max()
    _atomic_write(path, png_bytes(w / peak if peak > 0 else w, 8))


# --- reports ------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def format_report(report: ExperimentReport) -> str:
    meta = {"name": report.name, "seed": report.seed}
    meta.update(report.params)
    lines = [f"# {k}={json.dumps(v, sort_keys=True)}" for k, v in meta.items()]
    names = list(report.columns)
    lines.append(",".join(names))
    for i in range(report.n_rows):
        lines.append(",".join(_cell(report.columns[c][i]) for c in names))
    return "\n".join(lines) + "\n"


def _parse_cell(c: str):
    c = c.strip()
    try:
        return int(c)
    except ValueError:
        return float(c)


def parse_report(text: str) -> ExperimentReport:
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = json.loads(value)
        elif line.strip():
            body.append(line)
    if not body:
        raise ValueError("report has no header row")
    names = body[0].split(",")
    cols = {n: [] for n in names}
    for line in body[1:]:
        cells = line.split(",")
        if len(cells) != len(names):
            raise ValueError("ragged report row")
        for n, c in zip(names, cells):
            cols[n].append(_parse_cell(c))
    name = meta.pop("name", "")
    seed = meta.pop("seed", None)
    return ExperimentReport(name, meta, cols, seed)


def save_report(path, report: ExperimentReport) -> None:
    _atomic_write(path, format_report(report).encode())


def load_report(path) -> ExperimentReport:
    return parse_report(Path(path).read_text())
