"""Compressive measurement operators.

A measurement keeps ``m`` randomly chosen coefficients of a unitary basis
transform of the scene, ``y = M x``. When the scene is to be recovered
through a phase-only filter, the lasso variable is the correlation plane
``s = T x`` and the sensing operator becomes

    A s = M B T^H s,

with ``B`` the 2D basis transform and ``T`` the matched POF. Since every
factor has orthonormal rows, ``A A^H = I_m``.
"""

from dataclasses import dataclass, replace
import math

import numpy as np

from .errors import ParameterError, SizeError, UnsupportedModeError
from .filtering import CirculantOperator, apply_circulant, whiten
from .xforms import BasisKind, is_power_of_two, transform_2d

__all__ = [
    "RowSelection",
    "Measurement",
    "SensingOperator",
    "make_rng",
    "select_rows",
    "measure",
    "apply_A",
    "apply_A_adjoint",
    "noise_sigma",
    "add_noise",
    "quantize",
    "wh_rows",
    "measure_differential_binary",
]

_SEED_MASK = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit seed; the only RNG constructor in use."""
    return np.random.Generator(np.random.PCG64(int(seed) & _SEED_MASK))


@dataclass(frozen=True, eq=False)
class RowSelection:
    basis: BasisKind
    n: int
    m: int
    seed: int
    indices: np.ndarray

    @property
    def side(self) -> int:
        return math.isqrt(self.n)

    @property
    def compression_ratio(self) -> float:
        return self.n / self.m


def select_rows(basis, n: int, m: int, seed: int) -> RowSelection:
    """Draw ``m`` distinct row indices out of ``n`` with a seeded partial
    Fisher-Yates shuffle. Indices are stored sorted."""
    basis = BasisKind.parse(basis)
    if not is_power_of_two(n):
        raise SizeError(f"n must be a power of two, got {n}")
    if not 1 <= m <= n:
        raise ParameterError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = make_rng(seed)
    picks = rng.integers(np.arange(m), n)
    # sparse swap table: only touched positions are materialized
    table = {}
    for i, j in enumerate(picks.tolist()):
        vi = table.get(i, i)
        table[i] = table.get(j, j)
        table[j] = vi
    chosen = np.fromiter((table.get(i, i) for i in range(m)), dtype=np.int64, count=m)
    chosen.sort()
    chosen.setflags(write=False)
    return RowSelection(basis, n, m, int(seed) & _SEED_MASK, chosen)


@dataclass(frozen=True, eq=False)
class Measurement:
    samples: np.ndarray
    selection: RowSelection
    whitened: bool = False
    snr_db: float = math.inf
    noise_seed: int = 0

    @property
    def m(self) -> int:
        return self.selection.m

    @property
    def n(self) -> int:
        return self.selection.n

    @property
    def compression_ratio(self) -> float:
        return self.selection.compression_ratio


def _scene_array(scene, n: int) -> np.ndarray:
    x = np.asarray(scene)
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.size != n:
        raise SizeError(f"scene of shape {x.shape} does not match n={n}")
    return x


def measure(scene, selection: RowSelection, whitened: bool = False) -> Measurement:
    """Selected coefficients of the full (optionally whitened) basis transform."""
    x = _scene_array(scene, selection.n)
    if whitened:
        x = whiten(x)
    coeffs = transform_2d(x, selection.basis).reshape(-1)
    samples = coeffs[selection.indices].astype(np.complex128)
    return Measurement(samples, selection, whitened=bool(whitened))


@dataclass(frozen=True, eq=False)
class SensingOperator:
    """``A = M B T^H``; ``pof=None`` stands for the identity filter."""

    selection: RowSelection
    pof: CirculantOperator | None = None

    def __post_init__(self):
        side = self.selection.side
        if side * side != self.selection.n:
            raise SizeError(f"n={self.selection.n} is not a square image size")
        if self.pof is not None and self.pof.shape != (side, side):
            raise SizeError(f"filter shape {self.pof.shape} does not match side {side}")

    @property
    def shape(self):
        return (self.selection.m, self.selection.n)

    @property
    def side(self) -> int:
        return self.selection.side

    def __matmul__(self, s):
        return apply_A(self, s)


def apply_A(op: SensingOperator, s) -> np.ndarray:
    """``A s``: adjoint filter, basis transform, row extraction."""
    side = op.side
    s = np.asarray(s)
    if s.shape != (side, side):
        raise SizeError(f"plane shape {s.shape} does not match side {side}")
    x = s if op.pof is None else apply_circulant(op.pof, s, "adjoint")
    coeffs = transform_2d(x, op.selection.basis).reshape(-1)
    return coeffs[op.selection.indices].astype(np.complex128, copy=False)


def apply_A_adjoint(op: SensingOperator, y) -> np.ndarray:
    """``A^H y``: scatter into the selected slots, inverse transform, filter."""
    y = np.asarray(y)
    if y.shape != (op.selection.m,):
        raise SizeError(f"expected {op.selection.m} samples, got shape {y.shape}")
    side = op.side
    coeffs = np.zeros(op.selection.n, dtype=np.complex128)
    coeffs[op.selection.indices] = y
    x = transform_2d(coeffs.reshape(side, side), op.selection.basis, "adjoint")
    if op.pof is None:
        return x
    return apply_circulant(op.pof, x, "forward")


def _is_real(samples: np.ndarray) -> bool:
    return not np.iscomplexobj(samples) or not np.any(samples.imag)


def noise_sigma(samples, snr_db: float) -> float:
    """Per-sample noise standard deviation for the given SNR.

    Signal power is the mean squared modulus of the samples after their mean
    is removed; the large DC level of an intensity measurement is excluded.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    y = np.asarray(samples)
    power = float(np.mean(np.abs(y - y.mean()) ** 2)) if y.size else 0.0
    return math.sqrt(power * 10.0 ** (-snr_db / 10.0))


def add_noise(meas: Measurement, snr_db: float, noise_seed: int) -> Measurement:
    """Additive white Gaussian noise at ``snr_db``; ``+inf`` is a no-op.

    Real samples get real noise of variance sigma^2; complex samples get
    independent real and imaginary parts of variance sigma^2/2 each.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return replace(meas, snr_db=math.inf, noise_seed=int(noise_seed) & _SEED_MASK)
    sigma = noise_sigma(meas.samples, snr_db)
    rng = make_rng(noise_seed)
    y = meas.samples
    if _is_real(y):
        noise = sigma * rng.standard_normal(y.shape)
    else:
        noise = (sigma / math.sqrt(2.0)) * (rng.standard_normal(y.shape)
                                           + 1j * rng.standard_normal(y.shape))
    return replace(meas, samples=(y + noise).astype(np.complex128),
                   snr_db=float(snr_db), noise_seed=int(noise_seed) & _SEED_MASK)


def quantize(meas: Measurement, bits: int) -> Measurement:
    """Uniform ``bits``-bit rounding of the samples over their own range
    (real and imaginary parts separately)."""
    if bits < 1:
        raise ParameterError("bits must be >= 1")
    levels = 2 ** bits - 1

    def _round(part):
        lo, hi = part.min(), part.max()
        if hi == lo:
            return part
        step = (hi - lo) / levels
        return lo + np.round((part - lo) / step) * step

    y = meas.samples
    return replace(meas, samples=_round(y.real) + 1j * _round(y.imag))


def wh_rows(indices, n: int) -> np.ndarray:
    """Signed natural-order Walsh-Hadamard rows as a ``(len(indices), n)``
    array of +/-1 (unnormalized): ``H[i, j] = (-1)**popcount(i & j)``."""
    idx = np.asarray(indices, dtype=np.uint64)[:, None]
    cols = np.arange(n, dtype=np.uint64)[None, :]
    parity = np.bitwise_count(idx & cols) & 1
    return (1 - 2 * parity.astype(np.int8)).astype(np.int8)


def measure_differential_binary(scene, selection: RowSelection, bias: float = 0.0,
                                read_noise_std: float = 0.0, noise_seed: int = 0,
                                chunk: int = 64) -> Measurement:
    """Simulated single-pixel measurement with binary patterns.

    Each selected WH row ``w`` becomes a {0,1} pattern ``b = (1 + sqrt(n) w)/2``
    that is displayed together with its complement. The detector reads
    ``b.x + bias`` and ``(1 - b).x + bias`` (plus optional Gaussian read
    noise); the returned sample is their difference, which equals
    ``sqrt(n) * (w . x)`` whatever the bias.
    """
    if selection.basis is not BasisKind.WALSH_HADAMARD:
        raise UnsupportedModeError("binary differential measurement needs the WH basis")
    x = np.asarray(_scene_array(scene, selection.n), dtype=np.float64).reshape(-1)
    if np.iscomplexobj(scene) or np.any(x < 0):
        raise ParameterError("binary patterns need a real non-negative scene")
    rng = make_rng(noise_seed) if read_noise_std > 0 else None
    out = np.empty(selection.m, dtype=np.float64)
    for start in range(0, selection.m, chunk):
        rows = selection.indices[start:start + chunk]
        on = (wh_rows(rows, selection.n) > 0).astype(np.float64)
        positive = on @ x + bias
        negative = (1.0 - on) @ x + bias
        if rng is not None:
            positive = positive + read_noise_std * rng.standard_normal(positive.shape)
            negative = negative + read_noise_std * rng.standard_normal(negative.shape)
        out[start:start + len(rows)] = positive - negative
    return Measurement(out.astype(np.complex128), selection, whitened=False,
                       noise_seed=int(noise_seed) & _SEED_MASK)
