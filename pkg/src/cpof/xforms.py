"""Fast unitary transforms: Walsh-Hadamard, noiselet and discrete Fourier.

Walsh-Hadamard and noiselet matrices are built from the 2x2 kernels

    H_2 = [[1, 1], [1, -1]] / sqrt(2)
    N_2 = [[1 - i, 1 + i], [1 + i, 1 - i]] / 2

by repeated Kronecker products, so the fast transforms are radix-2
butterflies applied once per bit of the index. Ordering is natural
(Hadamard) order, i.e. the order produced by the block recursion. The
Fourier transform uses the unitary ``norm="ortho"`` FFT.

Two-dimensional transforms act on square images and are the Kronecker
product of the 1D transform with itself, acting on the row-major
flattening of the image.
"""

from enum import Enum
import functools

import numpy as np

from .errors import ParameterError, SizeError

__all__ = [
    "BasisKind",
    "is_power_of_two",
    "wht_1d",
    "wht_adjoint_1d",
    "noiselet_1d",
    "noiselet_adjoint_1d",
    "dft_1d",
    "dft_adjoint_1d",
    "transform_1d",
    "transform_2d",
    "dense_basis",
]


class BasisKind(Enum):
    """Unitary basis used for sampling or analysis."""

    WALSH_HADAMARD = "wh"
    NOISELET = "noiselet"
    FOURIER = "dft"

    @property
    def tag(self) -> int:
        """Integer tag used in binary file headers."""
        return _TAGS[self]

    @classmethod
    def from_tag(cls, tag: int) -> "BasisKind":
        for kind, value in _TAGS.items():
            if value == tag:
                return kind
        raise ParameterError(f"unknown basis tag {tag}")

    @classmethod
    def parse(cls, value) -> "BasisKind":
        """Accept a BasisKind, its short name (``wh``, ``noiselet``, ``dft``)
        or a few common aliases."""
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "wh": cls.WALSH_HADAMARD,
            "walsh-hadamard": cls.WALSH_HADAMARD,
            "walshhadamard": cls.WALSH_HADAMARD,
            "hadamard": cls.WALSH_HADAMARD,
            "noiselet": cls.NOISELET,
            "dft": cls.FOURIER,
            "fourier": cls.FOURIER,
            "fft": cls.FOURIER,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ParameterError(f"unknown basis {value!r}") from None


_TAGS = {
    BasisKind.WALSH_HADAMARD: 0,
    BasisKind.NOISELET: 1,
    BasisKind.FOURIER: 2,
}


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _check_length(n: int) -> None:
    if not is_power_of_two(n):
        raise SizeError(f"transform length must be a power of two, got {n}")


_BLOCK = 16
_KERNELS = {
    "wh": np.array([[1.0, 1.0], [1.0, -1.0]]),
    "nl": 0.5 * np.array([[1 - 1j, 1 + 1j], [1 + 1j, 1 - 1j]]),
    "nl*": 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]]),
}


@functools.lru_cache(maxsize=None)
def _block_kernel(kind: str, size: int) -> np.ndarray:
    """``size x size`` Kronecker power of the 2x2 kernel (symmetric)."""
    mat = np.ones((1, 1))
    while mat.shape[0] < size:
        mat = np.kron(_KERNELS[kind], mat)
    mat.setflags(write=False)
    return mat


def _butterfly(x: np.ndarray, kind: str) -> np.ndarray:
    """Radix-2 butterflies along the last axis, one stage per index bit.

    ``kind`` selects the 2x2 kernel: "wh" (unnormalized +/-), "nl" (noiselet)
    or "nl*" (conjugate noiselet kernel).
    """
    n = x.shape[-1]
    lead = x.shape[:-1]
    # the first stages act inside short contiguous blocks; one small dense
    # product with the Kronecker power of the kernel replaces them
    block = min(n, _BLOCK)
    cur = np.ascontiguousarray(x.reshape(lead + (n // block, block)) @ _block_kernel(kind, block))
    cur = cur.reshape(lead + (n,))
    out = np.empty_like(cur, order="C")
    h = block
    while h < n:
        a_in = cur.reshape(lead + (n // (2 * h), 2, h))
        b_out = out.reshape(lead + (n // (2 * h), 2, h))
        a = a_in[..., 0, :]
        b = a_in[..., 1, :]
        if kind == "wh":
            np.add(a, b, out=b_out[..., 0, :])
            np.subtract(a, b, out=b_out[..., 1, :])
        else:
            p = a + b
            q = a - b
            q *= 1j if kind == "nl*" else -1j
            np.add(p, q, out=b_out[..., 0, :])
            np.subtract(p, q, out=b_out[..., 1, :])
            b_out *= 0.5
        cur, out = out, cur
        h *= 2
    if kind == "wh":
        cur *= 1.0 / np.sqrt(n)
    return cur


def _as_signal(v) -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise SizeError(f"expected a 1D signal, got shape {arr.shape}")
    if not np.iscomplexobj(arr):
        arr = arr.astype(np.float64)
    return arr


def wht_1d(v) -> np.ndarray:
    """Orthonormal Walsh-Hadamard transform in natural order.

    Real input gives real output; complex input is transformed as is.
    """
    arr = _as_signal(v)
    _check_length(arr.shape[-1])
    return _butterfly(arr, "wh")


def wht_adjoint_1d(v) -> np.ndarray:
    """Adjoint (and inverse) Walsh-Hadamard transform; equals :func:`wht_1d`."""
    return wht_1d(v)


def noiselet_1d(v) -> np.ndarray:
    """Unitary noiselet transform of a power-of-two length signal."""
    arr = _as_signal(v).astype(np.complex128)
    _check_length(arr.shape[-1])
    return _butterfly(arr, "nl")


def noiselet_adjoint_1d(v) -> np.ndarray:
    """Inverse noiselet transform (conjugate transpose of the forward one).

    The noiselet matrix is symmetric, so the adjoint only conjugates the
    butterfly kernel.
    """
    arr = _as_signal(v).astype(np.complex128)
    _check_length(arr.shape[-1])
    return _butterfly(arr, "nl*")


def dft_1d(v) -> np.ndarray:
    """Unitary DFT (``1/sqrt(n)`` scaling)."""
    arr = _as_signal(v)
    if arr.shape[-1] == 0:
        raise SizeError("empty signal")
    return np.fft.fft(arr, norm="ortho")


def dft_adjoint_1d(v) -> np.ndarray:
    arr = _as_signal(v)
    if arr.shape[-1] == 0:
        raise SizeError("empty signal")
    return np.fft.ifft(arr, norm="ortho")


def _along_last(x: np.ndarray, basis: BasisKind, adjoint: bool) -> np.ndarray:
    n = x.shape[-1]
    if basis is BasisKind.FOURIER:
        return np.fft.ifft(x, norm="ortho") if adjoint else np.fft.fft(x, norm="ortho")
    _check_length(n)
    if basis is BasisKind.WALSH_HADAMARD:
        if not np.iscomplexobj(x):
            x = x.astype(np.float64, copy=False)
        return _butterfly(x, "wh")
    return _butterfly(x.astype(np.complex128, copy=False), "nl*" if adjoint else "nl")


def _is_adjoint(direction: str) -> bool:
    if direction == "forward":
        return False
    if direction in ("adjoint", "inverse"):
        return True
    raise ParameterError(f"direction must be 'forward' or 'adjoint', got {direction!r}")


def transform_1d(v, basis, direction: str = "forward") -> np.ndarray:
    """Dispatch to the 1D transform of ``basis`` in the given direction."""
    basis = BasisKind.parse(basis)
    arr = _as_signal(v)
    return _along_last(arr, basis, _is_adjoint(direction))


def transform_2d(img, basis, direction: str = "forward") -> np.ndarray:
    """Separable 2D transform of a square power-of-two image.

    Equivalent to applying the 1D transform to every row and then to every
    column, i.e. multiplying the row-major flattened image by ``B kron B``.
    """
    basis = BasisKind.parse(basis)
    adjoint = _is_adjoint(direction)
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise SizeError(f"expected a square image, got shape {arr.shape}")
    if not is_power_of_two(arr.shape[0]):
        raise SizeError(f"image side must be a power of two, got {arr.shape[0]}")
    if not np.iscomplexobj(arr):
        arr = arr.astype(np.float64)
    if basis is BasisKind.FOURIER:
        return np.fft.ifft2(arr, norm="ortho") if adjoint else np.fft.fft2(arr, norm="ortho")
    # B_side kron B_side equals the length side**2 transform for both
    # butterfly bases, so a single pass over the flattened image is enough.
    side = arr.shape[0]
    return _along_last(arr.reshape(side * side), basis, adjoint).reshape(side, side)


def dense_basis(basis, n: int) -> np.ndarray:
    """Explicit ``n x n`` basis matrix built from the block recursions.

    Intended for small ``n`` only (verification and self-tests).
    """
    basis = BasisKind.parse(basis)
    if basis is BasisKind.FOURIER:
        k = np.arange(n)
        return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)
    _check_length(n)
    mat = np.ones((1, 1), dtype=np.complex128)
    while mat.shape[0] < n:
        if basis is BasisKind.WALSH_HADAMARD:
            mat = np.block([[mat, mat], [mat, -mat]]) / np.sqrt(2)
        else:
            mat = 0.5 * np.block([[(1 - 1j) * mat, (1 + 1j) * mat],
                                  [(1 + 1j) * mat, (1 - 1j) * mat]])
    if basis is BasisKind.WALSH_HADAMARD:
        return mat.real.copy()
    return mat
