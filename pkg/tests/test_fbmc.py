import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbmcmimo.fbmc import (
    ParameterError,
    SignalLengthError,
    SymbolFrame,
    analyze,
    basis_pulse,
    design_phydyas,
    orthogonality_residual,
    signal_length,
    synthesize,
    synthesize_single,
)

PHYDYAS_H = {4: (1.0, 0.971960, np.sqrt(2) / 2, 0.235147)}


def idft_prototype(M, kappa):
    """Prototype from its frequency samples via an inverse DFT."""
    H = PHYDYAS_H[kappa]
    G = np.zeros(kappa * M)
    for k in range(-(kappa - 1), kappa):
        G[k % (kappa * M)] = (-1) ** abs(k) * H[abs(k)]
    f = np.real(np.fft.ifft(G)) * kappa * M
    f[0] = 0.0
    return f / np.linalg.norm(f)


def test_prototype_shape_symmetry_energy(filt64):
    f = filt64.coeffs
    assert f.shape == (256,)
    assert f[0] == 0.0
    np.testing.assert_allclose(f[1:], f[1:][::-1], atol=1e-15)
    assert np.sum(f**2) == pytest.approx(1.0, abs=1e-12)


def test_prototype_matches_frequency_sampling_oracle():
    f = design_phydyas(8, 4).coeffs
    np.testing.assert_allclose(f, idft_prototype(8, 4), atol=1e-12)
    # frozen from the oracle
    np.testing.assert_allclose(
        f[:6], [0.0, 0.00079193, 0.00212825, 0.00147038, -0.00371328, -0.01413531], atol=5e-9
    )


@pytest.mark.parametrize("kappa", [1, 5])
def test_unsupported_overlap(kappa):
    with pytest.raises(ParameterError):
        design_phydyas(64, kappa)


def test_odd_subcarriers_rejected():
    with pytest.raises(ParameterError):
        design_phydyas(63, 4)


def test_basis_pulse_identity_cases(filt64):
    f = filt64.coeffs
    np.testing.assert_allclose(basis_pulse(filt64, 0, 0), f, atol=1e-15)
    p = basis_pulse(filt64, 0, 1)
    np.testing.assert_allclose(p[:32], 0)
    np.testing.assert_allclose(p[32:], 1j * f, atol=1e-15)


def test_basis_pulse_self_inner_product(filt64):
    p = basis_pulse(filt64, 1, 0)
    assert np.real(np.vdot(p, p)) == pytest.approx(1.0, abs=1e-12)


def test_orthogonality_residual(filt64):
    r = orthogonality_residual(filt64, 3, 5)
    assert r < 1e-2
    assert orthogonality_residual(filt64, 3, 9) == pytest.approx(r, abs=1e-15)


def test_synthesis_single_symbol_is_basis_pulse(filt64):
    grid = np.zeros((64, 1))
    grid[0, 0] = 1.0
    np.testing.assert_allclose(synthesize_single(grid, filt64), basis_pulse(filt64, 0, 0), atol=1e-14)


def test_synthesis_zero_frame(filt64):
    x = synthesize(SymbolFrame(np.zeros((2, 64, 6))), filt64)
    assert x.shape == (2, signal_length(filt64, 6))
    assert not np.any(x)


def test_synthesis_matches_direct_sum_of_pulses(rng):
    filt = design_phydyas(8, 4)
    s = rng.standard_normal((8, 5))
    direct = np.zeros(signal_length(filt, 5), dtype=complex)
    for m in range(8):
        for n in range(5):
            p = basis_pulse(filt, m, n)
            direct[: p.size] += s[m, n] * p
    np.testing.assert_allclose(synthesize_single(s, filt), direct, atol=1e-12)


def test_synthesis_is_linear_over_users(filt64, rng):
    s = rng.standard_normal((2, 64, 6))
    mu = np.array([0.5, 2.0])
    x = synthesize(SymbolFrame(s, mu), filt64)
    for k in range(2):
        np.testing.assert_allclose(x[k], np.sqrt(mu[k]) * synthesize_single(s[k], filt64), atol=1e-13)


def test_analysis_matches_direct_inner_products(rng):
    filt = design_phydyas(16, 4)
    n_slots = 4
    r = rng.standard_normal((2, signal_length(filt, n_slots) + 5)) + 1j * rng.standard_normal(
        (2, signal_length(filt, n_slots) + 5)
    )
    z = analyze(r, filt, n_slots)
    for m in range(16):
        for n in range(n_slots):
            p = basis_pulse(filt, m, n)
            direct = r[:, : p.size] @ np.conj(p)
            np.testing.assert_allclose(z[:, m, n], direct, atol=1e-12)


def test_analysis_of_zero_signal(filt64):
    assert not np.any(analyze(np.zeros(signal_length(filt64, 3)), filt64, 3))


def test_analysis_short_signal(filt64):
    with pytest.raises(SignalLengthError):
        analyze(np.zeros(100), filt64, 3)


def test_loopback_sir_above_50db(filt64, rng):
    s = rng.choice([-1.0, 1.0], size=(64, 40))
    z = analyze(synthesize_single(s, filt64), filt64, 40)
    err = z.real - s
    sir = 10 * np.log10(np.mean(s**2) / np.mean(err**2))
    assert sir > 50


def test_noise_covariance_matches_gram(rng):
    filt = design_phydyas(8, 4)
    n_slots, trials = 3, 20000
    idx = [(0, 1), (1, 1), (0, 2)]
    pulses = []
    for m, n in idx:
        p = np.zeros(signal_length(filt, n_slots), dtype=complex)
        b = basis_pulse(filt, m, n)
        p[: b.size] = b
        pulses.append(p)
    P = np.array(pulses)
    gram = np.conj(P) @ P.T  # E[z_i conj(z_j)] = <f_j, f_i>
    noise = (rng.standard_normal((trials, P.shape[1])) + 1j * rng.standard_normal((trials, P.shape[1]))) / np.sqrt(2)
    z = analyze(noise, filt, n_slots)
    zs = np.stack([z[:, m, n] for m, n in idx], axis=1)
    emp = zs.T @ np.conj(zs) / trials
    np.testing.assert_allclose(emp, gram, atol=0.03)


@settings(max_examples=25, deadline=None)
@given(
    M=st.sampled_from([8, 16, 32]),
    kappa=st.sampled_from([2, 3, 4]),
    n_slots=st.integers(1, 12),
    seed=st.integers(0, 2**32 - 1),
)
def test_loopback_error_bounded_by_residual(M, kappa, n_slots, seed):
    filt = design_phydyas(M, kappa)
    s = np.random.default_rng(seed).choice([-1.0, 1.0], size=(M, n_slots))
    z = analyze(synthesize_single(s, filt), filt, n_slots)
    # pulses overlap over 4*kappa - 1 slots; neighbours sit within +/-2 subcarriers
    span = 4 * kappa - 1
    bound = 5 * span * orthogonality_residual(filt, 5, span)
    assert np.max(np.abs(z.real - s)) <= bound + 1e-12
