"""Binary file formats.

All multi-byte fields are little-endian.

PCSP (complex plane)::

    b"PCSP" | version u16 | side u64 | side*side x (re f64, im f64)

PCSM (measurement)::

    b"PCSM" | version u16 | basis u8 | whitened u8 | n u64 | m u64 |
    seed u64 | noise_seed u64 | snr_db f64 | m x (re f64, im f64)

Row indices are not stored; they are regenerated from ``(basis, n, m, seed)``.

PCSR (solver result)::

    b"PCSR" | version u16 | side u64 | residual f64 | tau f64 |
    iterations u64 | newton_steps u64 | converged u8 | side*side x (re, im)

Scenes and references are 8-bit binary PGM (P5).
"""

import os
import struct

import numpy as np

from .errors import FormatError
from .sensing import Measurement, select_rows
from .solver import SolverResult
from .xforms import BasisKind, is_power_of_two

__all__ = [
    "FORMAT_VERSION",
    "read_pgm",
    "write_pgm",
    "write_pgm_scaled",
    "write_plane",
    "read_plane",
    "write_measurement",
    "read_measurement",
    "write_result",
    "read_result",
    "image_io",
]

FORMAT_VERSION = 1

_PLANE_HEAD = struct.Struct("<4sHQ")
_MEAS_HEAD = struct.Struct("<4sHBBQQQQd")
_RESULT_HEAD = struct.Struct("<4sHQddQQB")
_COMPLEX = np.dtype("<c16")


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write_bytes(path, payload: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(payload)


def _pgm_tokens(data: bytes, count: int):
    """Header tokens of a PNM file and the offset of the raster; comments
    (``#`` to end of line) are skipped."""
    tokens, comments = [], []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            end = len(data) if end < 0 else end
            comments.append(data[pos + 1:end].decode("ascii", "replace").strip())
            pos = end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1, comments


def read_pgm(path, require_power_of_two: bool = True):
    """Load a binary PGM (P5) image as a float64 array.

    Returns ``(image, comments)``. Maxval up to 255 (one byte per pixel) and
    up to 65535 (two bytes, big-endian) are accepted.
    """
    data = _read_bytes(path)
    tokens, offset, comments = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid PGM dimensions or maxval")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    need = width * height * dtype.itemsize
    raster = data[offset:offset + need]
    if len(raster) != need:
        raise FormatError(f"{path}: PGM raster is truncated")
    img = np.frombuffer(raster, dtype=dtype).reshape(height, width).astype(np.float64)
    if require_power_of_two and (width != height or not is_power_of_two(width)):
        raise FormatError(f"{path}: image must be square with power-of-two side, got {width}x{height}")
    return img, comments


def write_pgm(path, image, comments=()) -> None:
    """Store an image with values in [0, 255] as 8-bit P5 (values rounded)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise FormatError("PGM images must be 2D")
    if np.iscomplexobj(img):
        raise FormatError("PGM cannot hold complex data; use the PCSP format")
    px = np.round(img)
    if px.min() < 0 or px.max() > 255:
        raise FormatError("pixel values must lie in [0, 255]; use write_pgm_scaled")
    header = "P5\n"
    for c in comments:
        header += f"# {c}\n"
    header += f"{img.shape[1]} {img.shape[0]}\n255\n"
    _write_bytes(path, header.encode("ascii") + px.astype(np.uint8).tobytes())


def write_pgm_scaled(path, plane):
    """Store a real plane mapped linearly onto [0, 255].

    The mapping is recorded in a ``cpof-scale`` comment so that
    ``value = offset + pixel * scale``. Returns ``(scale, offset)``.
    """
    plane = np.asarray(plane, dtype=np.float64)
    lo, hi = float(plane.min()), float(plane.max())
    scale = (hi - lo) / 255.0 if hi > lo else 1.0
    write_pgm(path, (plane - lo) / scale, comments=[f"cpof-scale {scale!r} {lo!r}"])
    return scale, lo


def _complex_payload(values) -> bytes:
    return np.ascontiguousarray(values, dtype=np.complex128).astype(_COMPLEX).tobytes()


def _complex_values(data: bytes, offset: int, count: int, path) -> np.ndarray:
    need = count * _COMPLEX.itemsize
    if len(data) != offset + need:
        raise FormatError(f"{path}: expected {need} payload bytes, found {len(data) - offset}")
    return np.frombuffer(data, dtype=_COMPLEX, count=count, offset=offset).astype(np.complex128)


def _check_magic(data: bytes, head: struct.Struct, magic: bytes, path):
    if len(data) < head.size:
        raise FormatError(f"{path}: file too short")
    fields = head.unpack_from(data)
    if fields[0] != magic:
        raise FormatError(f"{path}: bad magic {fields[0]!r}, expected {magic!r}")
    if fields[1] != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {fields[1]}")
    return fields


def write_plane(path, plane) -> None:
    plane = np.asarray(plane)
    if plane.ndim != 2 or plane.shape[0] != plane.shape[1]:
        raise FormatError(f"planes must be square, got shape {plane.shape}")
    _write_bytes(path, _PLANE_HEAD.pack(b"PCSP", FORMAT_VERSION, plane.shape[0]) + _complex_payload(plane))


def read_plane(path) -> np.ndarray:
    data = _read_bytes(path)
    _, _, side = _check_magic(data, _PLANE_HEAD, b"PCSP", path)
    return _complex_values(data, _PLANE_HEAD.size, side * side, path).reshape(side, side)


def write_measurement(path, meas: Measurement) -> None:
    sel = meas.selection
    head = _MEAS_HEAD.pack(b"PCSM", FORMAT_VERSION, sel.basis.tag, int(bool(meas.whitened)),
                           sel.n, sel.m, sel.seed, meas.noise_seed, float(meas.snr_db))
    _write_bytes(path, head + _complex_payload(meas.samples))


def read_measurement(path) -> Measurement:
    data = _read_bytes(path)
    _, _, tag, whitened, n, m, seed, noise_seed, snr_db = _check_magic(data, _MEAS_HEAD, b"PCSM", path)
    samples = _complex_values(data, _MEAS_HEAD.size, m, path)
    try:
        basis = BasisKind.from_tag(tag)
        selection = select_rows(basis, n, m, seed)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return Measurement(samples, selection, whitened=bool(whitened), snr_db=snr_db, noise_seed=noise_seed)


def write_result(path, result: SolverResult) -> None:
    s = np.asarray(result.s_hat)
    head = _RESULT_HEAD.pack(b"PCSR", FORMAT_VERSION, s.shape[0], float(result.residual_norm),
                             float(result.tau_used), int(result.iterations),
                             int(result.newton_steps), int(bool(result.converged)))
    _write_bytes(path, head + _complex_payload(s))


def read_result(path) -> SolverResult:
    data = _read_bytes(path)
    _, _, side, residual, tau, iters, newton, conv = _check_magic(data, _RESULT_HEAD, b"PCSR", path)
    s = _complex_values(data, _RESULT_HEAD.size, side * side, path).reshape(side, side)
    return SolverResult(s, residual, tau, iters, newton, bool(conv))


def image_io(path, direction: str = "load", data=None, require_power_of_two: bool = True):
    """Load or store an image/plane, choosing the format from the extension.

    ``.pgm`` files hold 8-bit scenes and references (real planes outside
    [0, 255] are stored scaled, see :func:`write_pgm_scaled`); anything else
    is a PCSP complex plane. References that are not square power-of-two
    images load with ``require_power_of_two=False``.
    """
    is_pgm = os.fspath(path).lower().endswith(".pgm")
    if direction == "load":
        if is_pgm:
            img, comments = read_pgm(path, require_power_of_two)
            for c in comments:
                if c.startswith("cpof-scale"):
                    _, scale, offset = c.split()
                    return float(offset) + img * float(scale)
            return img
        return read_plane(path)
    if direction == "store":
        if data is None:
            raise FormatError("nothing to store")
        arr = np.asarray(data)
        if not is_pgm:
            write_plane(path, arr)
            return None
        if np.iscomplexobj(arr):
            if np.any(arr.imag):
                raise FormatError("complex plane cannot be stored as PGM")
            arr = arr.real
        rounded = np.round(arr)
        if np.array_equal(rounded, arr) and arr.min() >= 0 and arr.max() <= 255:
            write_pgm(path, arr)
        else:
            write_pgm_scaled(path, arr)
        return None
    raise FormatError(f"direction must be 'load' or 'store', got {direction!r}")

