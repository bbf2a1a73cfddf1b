import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from cpof.errors import ParameterError, SizeError, UnsupportedModeError
from cpof.filtering import make_pof, whiten
from cpof.sensing import (
    SensingOperator,
    add_noise,
    apply_A,
    apply_A_adjoint,
    measure,
    measure_differential_binary,
    noise_sigma,
    quantize,
    select_rows,
    wh_rows,
)
from cpof.xforms import BasisKind, transform_2d

from conftest import crandn
from test_xforms import ORACLES

BASES = list(BasisKind)


def dense_circulant_2d(transfer):
    """Dense matrix of the 2D circulant by applying it to every unit vector."""
    side = transfer.shape[0]
    n = side * side
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(np.fft.ifft2(transfer * np.fft.fft2(e.reshape(side, side))).reshape(-1))
    return np.stack(cols, axis=1)


def test_select_rows_full():
    sel = select_rows("wh", 64, 64, 3)
    np.testing.assert_array_equal(sel.indices, np.arange(64))
    assert sel.compression_ratio == 1.0


def test_select_rows_deterministic():
    a = select_rows("noiselet", 4096, 100, 42)
    b = select_rows("noiselet", 4096, 100, 42)
    c = select_rows("noiselet", 4096, 100, 43)
    np.testing.assert_array_equal(a.indices, b.indices)
    assert not np.array_equal(a.indices, c.indices)


def test_select_rows_large_n_no_duplicates():
    sel = select_rows("wh", 2 ** 20, 1000, 7)
    assert len(np.unique(sel.indices)) == 1000
    assert sel.indices.min() >= 0 and sel.indices.max() < 2 ** 20


def test_select_rows_uniform():
    draws = np.concatenate([select_rows("wh", 2 ** 20, 1000, s).indices for s in range(50)])
    assert stats.kstest(draws / 2 ** 20, "uniform").pvalue > 1e-3


@given(n_exp=st.integers(0, 12), frac=st.floats(0.0, 1.0), seed=st.integers(0, 2 ** 63))
def test_select_rows_properties(n_exp, frac, seed):
    n = 2 ** n_exp
    m = max(1, int(round(frac * n)))
    idx = select_rows("dft", n, m, seed).indices
    assert len(idx) == m
    assert np.all(np.diff(idx) > 0)


def test_select_rows_errors():
    with pytest.raises(ParameterError):
        select_rows("wh", 16, 17, 0)
    with pytest.raises(ParameterError):
        select_rows("wh", 16, 0, 0)
    with pytest.raises(SizeError):
        select_rows("wh", 12, 3, 0)


@pytest.mark.parametrize("basis", BASES)
def test_full_measurement_inverts(basis, rng):
    x = rng.random((16, 16))
    meas = measure(x, select_rows(basis, 256, 256, 0))
    back = transform_2d(meas.samples.reshape(16, 16), basis, "adjoint")
    np.testing.assert_allclose(back, x, atol=1e-10)


@pytest.mark.parametrize("basis", BASES)
def test_measure_dense_row_oracle(basis, rng):
    x = rng.random((8, 8))
    sel = select_rows(basis, 64, 10, 5)
    basis_1d = ORACLES[basis](8)
    dense = np.kron(basis_1d, basis_1d)
    expected = dense[sel.indices] @ x.reshape(-1)
    np.testing.assert_allclose(measure(x, sel).samples, expected, atol=1e-12)


def test_measure_whitened(rng):
    x = rng.random((16, 16))
    sel = select_rows("noiselet", 256, 40, 1)
    np.testing.assert_allclose(measure(x, sel, whitened=True).samples, measure(whiten(x), sel).samples)


def test_compression_ratio_bookkeeping():
    meas = measure(np.ones((16, 16)), select_rows("wh", 256, 32, 0))
    assert meas.compression_ratio == 8.0 == meas.n / meas.m


@pytest.mark.parametrize("basis", BASES)
def test_apply_A_dense_oracle(basis, rng):
    side = 4
    pof = make_pof(rng.random((2, 3)), shape=(side, side))
    sel = select_rows(basis, 16, 6, 11)
    op = SensingOperator(sel, pof)
    b = np.kron(ORACLES[basis](side), ORACLES[basis](side))
    t = dense_circulant_2d(pof.transfer)
    a = b[sel.indices] @ t.conj().T
    s = crandn(rng, (side, side))
    y = crandn(rng, 6)
    np.testing.assert_allclose(apply_A(op, s), a @ s.reshape(-1), atol=1e-12)
    np.testing.assert_allclose(apply_A_adjoint(op, y).reshape(-1), a.conj().T @ y, atol=1e-12)
    np.testing.assert_allclose(a @ a.conj().T, np.eye(6), atol=1e-12)


@pytest.mark.parametrize("basis", BASES)
def test_identity_filter_is_plain_transform(basis, rng):
    x = crandn(rng, (8, 8))
    op = SensingOperator(select_rows(basis, 64, 64, 0))
    np.testing.assert_allclose(apply_A(op, x), transform_2d(x, basis).reshape(-1), atol=1e-12)
    np.testing.assert_allclose(apply_A_adjoint(op, x.reshape(-1)),
                               transform_2d(x, basis, "adjoint"), atol=1e-12)


@pytest.mark.parametrize("basis", BASES)
@pytest.mark.parametrize("m", [1, 10, 256])
def test_semi_unitary_and_adjoint(basis, m, rng):
    pof = make_pof(rng.random((5, 5)), shape=(16, 16))
    op = SensingOperator(select_rows(basis, 256, m, m), pof)
    y = crandn(rng, m)
    s = crandn(rng, (16, 16))
    np.testing.assert_allclose(apply_A(op, apply_A_adjoint(op, y)), y, atol=1e-10)
    lhs = np.vdot(y, apply_A(op, s))
    rhs = np.vdot(apply_A_adjoint(op, y), s)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)
    assert np.linalg.norm(apply_A(op, s)) <= np.linalg.norm(s) * (1 + 1e-12)


def test_matmul_and_shape(rng):
    op = SensingOperator(select_rows("wh", 64, 5, 0))
    s = rng.random((8, 8))
    np.testing.assert_array_equal(op @ s, apply_A(op, s))
    assert op.shape == (5, 64)


def test_operator_errors(rng):
    sel = select_rows("wh", 64, 5, 0)
    with pytest.raises(SizeError):
        SensingOperator(sel, make_pof(np.ones((2, 2)), shape=(4, 4)))
    with pytest.raises(SizeError):
        SensingOperator(select_rows("wh", 128, 5, 0))
    op = SensingOperator(sel)
    with pytest.raises(SizeError):
        apply_A(op, np.ones((4, 4)))
    with pytest.raises(SizeError):
        apply_A_adjoint(op, np.ones(6))
    with pytest.raises(SizeError):
        measure(np.ones((4, 4)), sel)


def test_noise_inf_is_noop(rng):
    meas = measure(rng.random((16, 16)), select_rows("noiselet", 256, 50, 0))
    np.testing.assert_array_equal(add_noise(meas, math.inf, 3).samples, meas.samples)
    assert noise_sigma(meas.samples, math.inf) == 0.0


@pytest.mark.parametrize("basis", ["wh", "noiselet"])
def test_noise_at_0db(basis, rng):
    x = rng.random((128, 128))
    meas = measure(x, select_rows(basis, 128 * 128, 10000, 2))
    noisy = add_noise(meas, 0.0, 9)
    y = meas.samples
    signal = np.mean(np.abs(y - y.mean()) ** 2)
    noise = np.mean(np.abs(noisy.samples - y) ** 2)
    assert noise / signal == pytest.approx(1.0, abs=0.05)
    assert noisy.snr_db == 0.0


def test_noise_is_real_for_real_samples(rng):
    meas = measure(rng.random((16, 16)), select_rows("wh", 256, 50, 0))
    noisy = add_noise(meas, 10.0, 1)
    np.testing.assert_array_equal(noisy.samples.imag, 0.0)


def test_complex_noise_splits_variance(rng):
    meas = measure(rng.random((64, 64)), select_rows("noiselet", 4096, 4000, 0))
    diff = add_noise(meas, 0.0, 5).samples - meas.samples
    sigma = noise_sigma(meas.samples, 0.0)
    assert np.var(diff.real) == pytest.approx(sigma ** 2 / 2, rel=0.1)
    assert np.var(diff.imag) == pytest.approx(sigma ** 2 / 2, rel=0.1)


def test_noise_deterministic(rng):
    meas = measure(rng.random((16, 16)), select_rows("dft", 256, 50, 0))
    a = add_noise(meas, 3.0, 17).samples
    b = add_noise(meas, 3.0, 17).samples
    c = add_noise(meas, 3.0, 18).samples
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_measurement_deterministic(rng):
    x = rng.random((32, 32))
    a = add_noise(measure(x, select_rows("noiselet", 1024, 100, 4)), 0.0, 8)
    b = add_noise(measure(x, select_rows("noiselet", 1024, 100, 4)), 0.0, 8)
    assert a.samples.tobytes() == b.samples.tobytes()


def test_wh_samples_are_real(rng):
    meas = measure(rng.random((16, 16)), select_rows("wh", 256, 30, 0))
    np.testing.assert_array_equal(meas.samples.imag, 0.0)


def test_wh_rows_oracle():
    rows = wh_rows([0, 3, 5], 8)
    dense = np.round(ORACLES[BasisKind.WALSH_HADAMARD](8) * np.sqrt(8)).astype(int)
    np.testing.assert_array_equal(rows, dense[[0, 3, 5]])


def test_differential_identity(rng):
    x = rng.random((32, 32)) * 255
    sel = select_rows("wh", 1024, 100, 3)
    ref = math.sqrt(1024) * measure(x, sel).samples
    for bias in (0.0, 17.5, 1e6):
        diff = measure_differential_binary(x, sel, bias=bias).samples
        np.testing.assert_allclose(diff, ref, rtol=0, atol=1e-12 * (np.abs(ref).max() + bias))


def test_differential_bias_cancels_exactly_for_integers():
    x = np.arange(64, dtype=float).reshape(8, 8)
    sel = select_rows("wh", 64, 20, 1)
    a = measure_differential_binary(x, sel, bias=0.0).samples
    b = measure_differential_binary(x, sel, bias=1e6).samples
    np.testing.assert_array_equal(a, b)


def test_differential_noise_variance_doubles(rng):
    x = rng.random((8, 8))
    sel = select_rows("wh", 64, 64, 0)
    clean = measure_differential_binary(x, sel).samples
    diffs = np.concatenate([
        measure_differential_binary(x, sel, read_noise_std=0.5, noise_seed=s).samples - clean
        for s in range(200)])
    assert np.var(diffs.real) == pytest.approx(2 * 0.25, rel=0.05)


def test_differential_errors(rng):
    with pytest.raises(UnsupportedModeError):
        measure_differential_binary(np.ones((4, 4)), select_rows("noiselet", 16, 4, 0))
    with pytest.raises(ParameterError):
        measure_differential_binary(-np.ones((4, 4)), select_rows("wh", 16, 4, 0))


def test_quantize(rng):
    meas = measure(rng.random((16, 16)), select_rows("noiselet", 256, 100, 0))
    q = quantize(meas, 4).samples
    assert len(np.unique(q.real)) <= 16
    step = np.ptp(meas.samples.real) / 15
    assert np.abs(q.real - meas.samples.real).max() <= step / 2 + 1e-12
    with pytest.raises(ParameterError):
        quantize(meas, 0)
