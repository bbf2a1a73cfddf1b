"""Circulant filters: generic transfer functions, phase-only filters and
pure-phase whitening.

A circulant operator of size ``n`` is stored through its transfer function
``h_hat`` (unitary DFT of the point spread function ``h``). The operator
itself keeps the ``n**-1/2`` normalization,

    T v = F^H (h_hat * F v),

so that ``T`` is unitary whenever ``|h_hat| == 1``. Circular convolution is
``h * v = sqrt(n) T v``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError, SizeError

__all__ = [
    "DEFAULT_ZERO_TOL",
    "CirculantOperator",
    "apply_circulant",
    "embed_reference",
    "make_pof",
    "pof_correlate",
    "whiten",
    "fresnel_transfer",
]

DEFAULT_ZERO_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CirculantOperator:
    """Circulant (block-circulant in 2D) operator given by its transfer function."""

    transfer: np.ndarray

    def __post_init__(self):
        t = np.array(self.transfer, dtype=np.complex128)
        t.setflags(write=False)
        object.__setattr__(self, "transfer", t)

    @property
    def shape(self):
        return self.transfer.shape

    @property
    def size(self) -> int:
        return self.transfer.size

    @property
    def side(self) -> int:
        return self.transfer.shape[0]

    def is_unitary(self, atol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(np.abs(self.transfer) - 1.0) <= atol))

    @classmethod
    def identity(cls, shape) -> "CirculantOperator":
        return cls(np.ones(shape, dtype=np.complex128))


def _check_shape(op: CirculantOperator, v: np.ndarray) -> None:
    if v.shape != op.shape:
        raise SizeError(f"operator shape {op.shape} does not match input shape {v.shape}")


def apply_circulant(op: CirculantOperator, v, direction: str = "forward") -> np.ndarray:
    """Apply ``T`` (forward) or ``T^H`` (adjoint) to ``v``.

    Works for 1D signals and 2D images alike; the DFT runs over every axis.
    """
    v = np.asarray(v)
    _check_shape(op, v)
    if direction == "forward":
        h = op.transfer
    elif direction == "adjoint":
        h = op.transfer.conj()
    else:
        raise ParameterError(f"direction must be 'forward' or 'adjoint', got {direction!r}")
    return np.fft.ifftn(h * np.fft.fftn(v, norm="ortho"), norm="ortho")


def embed_reference(reference, shape) -> np.ndarray:
    """Zero-pad a target image into ``shape``, anchored at the top-left corner."""
    ref = np.asarray(reference)
    shape = tuple(shape)
    if ref.ndim != len(shape) or any(a > b for a, b in zip(ref.shape, shape)):
        raise SizeError(f"reference of shape {ref.shape} does not fit into {shape}")
    out = np.zeros(shape, dtype=np.result_type(ref.dtype, np.float64))
    out[tuple(slice(0, k) for k in ref.shape)] = ref
    return out


def _unit_phase(spectrum: np.ndarray, zero_tol: float, what: str) -> np.ndarray:
    mag = np.abs(spectrum)
    peak = mag.max()
    if not peak > 0:
        raise DegenerateInputError(f"{what} is identically zero")
    keep = mag > zero_tol * peak
    out = np.ones_like(spectrum)
    out[keep] = spectrum[keep] / mag[keep]
    return out


def make_pof(reference, zero_tol: float = DEFAULT_ZERO_TOL, shape=None) -> CirculantOperator:
    """Matched phase-only filter ``conj(r_hat) / |r_hat|`` for a target image.

    ``reference`` is embedded top-left into ``shape`` when given (otherwise it
    must already have the scene shape). Spectral bins whose modulus does not
    exceed ``zero_tol * max|r_hat|`` get transfer 1, so the filter stays
    unitary.
    """
    if zero_tol < 0:
        raise ParameterError("zero_tol must be non-negative")
    ref = np.asarray(reference)
    if shape is not None:
        ref = embed_reference(ref, shape)
    spectrum = np.fft.fftn(ref, norm="ortho")
    return CirculantOperator(_unit_phase(spectrum, zero_tol, "reference").conj())


def pof_correlate(op: CirculantOperator, scene) -> np.ndarray:
    """Correlation plane ``s = h * x`` (circular convolution, sqrt(n) scaled)."""
    scene = np.asarray(scene)
    return np.sqrt(op.size) * apply_circulant(op, scene, "forward")


def whiten(scene, zero_tol: float = DEFAULT_ZERO_TOL) -> np.ndarray:
    """Scene whose spectrum is reduced to unit modulus (pure-phase input).

    Zero-modulus bins are set to 1, as for :func:`make_pof`. The result is
    real whenever the scene is real.
    """
    x = np.asarray(scene)
    spectrum = np.fft.fftn(x, norm="ortho")
    out = np.fft.ifftn(_unit_phase(spectrum, zero_tol, "scene"), norm="ortho")
    if not np.iscomplexobj(x):
        return out.real
    return out


def fresnel_frequencies(side: int, pixel_pitch: float) -> np.ndarray:
    return np.fft.fftfreq(side, d=pixel_pitch)


def fresnel_transfer(side: int, wavelength: float, distance: float,
                     pixel_pitch: float) -> np.ndarray:
    """Fresnel propagation transfer function on the DFT frequency grid.

    ``exp(-2 pi i l / lambda) * exp(i pi lambda l (nu_x^2 + nu_y^2))`` with
    DC at index 0 and negative frequencies wrapped (``numpy.fft.fftfreq``
    layout). ``distance`` may be zero (identity propagation).
    """
    if side < 1:
        raise ParameterError("side must be positive")
    if wavelength <= 0 or pixel_pitch <= 0:
        raise ParameterError("wavelength and pixel_pitch must be positive")
    if distance < 0:
        raise ParameterError("distance must be non-negative")
    nu = fresnel_frequencies(side, pixel_pitch)
    nu2 = nu[:, None] ** 2 + nu[None, :] ** 2
    return np.exp(-2j * np.pi * distance / wavelength) * np.exp(1j * np.pi * wavelength * distance * nu2)
