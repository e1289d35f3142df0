import numpy as np
import pytest
import scipy.linalg

from fbmcmimo.channel import ChannelRealization, apply_channel, complex_noise
from fbmcmimo.estimation import (
    CapacityError,
    assemble_model,
    build_pilot_plan,
    error_stats,
    estimate_channels,
    extract_pilots,
)
from fbmcmimo.fbmc import basis_pulse, design_phydyas, analyze, synthesize, SymbolFrame


def pilot_frame(plan, n_slots=None):
    n_slots = plan.num_pilot_slots if n_slots is None else n_slots
    return np.stack([plan.user_grid(k, n_slots) for k in range(plan.num_users)])


def receive(plan, filt, taps, noise_var, rng):
    """Pilot samples through the modem for taps ``(N, K, L)``."""
    n_slots = plan.num_pilot_slots
    x = synthesize(SymbolFrame(pilot_frame(plan)), filt)
    r = apply_channel(x, ChannelRealization(taps, np.ones(taps.shape)))
    if noise_var > 0:
        r += complex_noise(r.shape, noise_var, rng)
    return extract_pilots(analyze(r, filt, n_slots), plan)


def test_plan_single_user_full_band():
    plan = build_pilot_plan(1, 8, 8)
    np.testing.assert_array_equal(plan.subcarriers[0], np.arange(8))


def test_plan_four_disjoint_combs():
    plan = build_pilot_plan(4, 16, 64)
    allm = np.concatenate(plan.subcarriers)
    assert sorted(allm.tolist()) == list(range(64))
    for k in range(4):
        assert np.all(plan.subcarriers[k] % 4 == k)
        assert set(np.unique(plan.values[k])) <= {-1.0, 1.0}
    assert plan.guard_symbols == 3 and plan.data_start == 4


def test_plan_capacity():
    with pytest.raises(CapacityError):
        build_pilot_plan(4, 17, 64)


def literal_system(plan, filt):
    """A[(k, j), (k', l)] = sum over user k' pilots of <f_{m'n'}(t - l), f_{m_j n_j}(t)>."""
    K, L = plan.num_users, plan.channel_length
    Np = plan.pilots_per_user
    size = filt.kappa * filt.M + 64
    def pulse(m, n, delay=0):
        p = np.zeros(size, dtype=complex)
        b = basis_pulse(filt, m, n)
        p[delay : delay + b.size] = b
        return p
    A = np.zeros((K * Np, K * L), dtype=complex)
    for k in range(K):
        for j in range(Np):
            rx = pulse(plan.subcarriers[k][j], plan.slots[k][j])
            for k2 in range(K):
                for l in range(L):
                    total = 0
                    for m2, n2, v in zip(plan.subcarriers[k2], plan.slots[k2], plan.values[k2]):
                        total += v * np.vdot(rx, pulse(m2, n2, l))
                    A[k * Np + j, k2 * L + l] = total
    return A


def test_system_matches_literal_sum():
    filt = design_phydyas(8, 4)
    plan = build_pilot_plan(2, 3, 8)
    model = assemble_model(plan, filt, 1.0)
    np.testing.assert_allclose(model.system, literal_system(plan, filt), atol=1e-12)


def test_noiseless_modem_consistency(filt64, rng):
    plan = build_pilot_plan(4, 16, 64)
    model = assemble_model(plan, filt64, 0.1)
    h = (rng.standard_normal((2, 4, 16)) + 1j * rng.standard_normal((2, 4, 16))) / np.sqrt(32)
    z = receive(plan, filt64, h, 0.0, rng)
    np.testing.assert_allclose(z, h.reshape(2, -1) @ model.system.T, atol=1e-9)


def test_noise_gram_properties(filt64):
    model = assemble_model(build_pilot_plan(4, 16, 64), filt64, 0.5)
    C = model.noise_covariance
    np.testing.assert_allclose(np.diag(C).real, 0.5, atol=1e-12)
    np.testing.assert_array_equal(C, C.conj().T)


def test_zero_noise_exact_recovery(filt64, rng):
    plan = build_pilot_plan(4, 16, 64)
    model = assemble_model(plan, filt64, 0.0)
    h = (rng.standard_normal((3, 4, 16)) + 1j * rng.standard_normal((3, 4, 16))) / 4
    est = estimate_channels(model, receive(plan, filt64, h, 0.0, rng))
    assert np.max(np.abs(est - h)) < 1e-9


def test_tiny_instance_matches_gls_oracle(rng):
    filt = design_phydyas(8, 4)
    plan = build_pilot_plan(1, 2, 8)
    model = assemble_model(plan, filt, 0.3)
    A, C = model.system, model.noise_covariance
    # GLS via the symmetric inverse square root of C
    w, V = np.linalg.eigh(C)
    Ci_half = V @ np.diag(w**-0.5) @ V.conj().T
    z = rng.standard_normal(A.shape[0]) + 1j * rng.standard_normal(A.shape[0])
    oracle = np.linalg.lstsq(Ci_half @ A, Ci_half @ z, rcond=None)[0]
    np.testing.assert_allclose(estimate_channels(model, z).ravel(), oracle, atol=1e-10)
    Ci = np.linalg.inv(C)
    trace = np.real(np.trace(np.linalg.inv(A.conj().T @ Ci @ A)))
    assert model.mse_total == pytest.approx(trace, rel=1e-10)


@pytest.mark.slow
def test_monte_carlo_mse_and_subcarrier_error(filt64):
    rng = np.random.default_rng(2024)
    K, L, M, trials = 4, 16, 64, 500
    noise_var = 0.1
    plan = build_pilot_plan(K, L, M)
    model = assemble_model(plan, filt64, noise_var)
    h = (rng.standard_normal((trials, K, L)) + 1j * rng.standard_normal((trials, K, L))) / np.sqrt(2 * L)
    est = estimate_channels(model, receive(plan, filt64, h, noise_var, rng))
    err = est - h
    mse = np.mean(np.sum(np.abs(err) ** 2, axis=(1, 2)))
    assert mse == pytest.approx(model.mse_total, rel=0.10)
    tap_var, freq_var = error_stats(model)
    freq_err = np.fft.fft(err, n=M, axis=-1)
    assert np.mean(np.abs(freq_err) ** 2) == pytest.approx(freq_var, rel=0.15)


def test_error_stats_ratio_and_scaling(filt64):
    plan = build_pilot_plan(4, 16, 64)
    et, ef = error_stats(assemble_model(plan, filt64, 0.1))
    assert ef / et == 16
    et2, _ = error_stats(assemble_model(plan, filt64, 0.2))
    assert et2 == pytest.approx(2 * et, rel=1e-12)
    assert error_stats(assemble_model(plan, filt64, 0.0)) == (0.0, 0.0)


def test_joint_estimation_beats_per_user(filt64):
    plan = build_pilot_plan(4, 16, 64)
    rng = np.random.default_rng(3)
    h = (rng.standard_normal((50, 4, 16)) + 1j * rng.standard_normal((50, 4, 16))) / np.sqrt(32)
    z = receive(plan, filt64, h, 0.0, rng)
    joint = estimate_channels(assemble_model(plan, filt64, 0.0), z)
    alone = estimate_channels(assemble_model(plan, filt64, 0.0, joint=False), z)
    assert np.mean(np.abs(joint - h) ** 2) < 1e-18
    assert np.mean(np.abs(alone - h) ** 2) > 1e-6


def test_pilot_gains_scale_error(filt64):
    plan = build_pilot_plan(2, 4, 64)
    base = assemble_model(plan, filt64, 1.0)
    scaled = assemble_model(plan, filt64, 1.0, pilot_gains=[2.0, 2.0])
    assert scaled.mse_total == pytest.approx(base.mse_total / 4, rel=1e-9)


def test_wrong_pilot_count(filt64):
    model = assemble_model(build_pilot_plan(1, 2, 64), filt64, 1.0)
    with pytest.raises(ValueError):
        estimate_channels(model, np.zeros(3))


def test_cholesky_of_gram_is_well_posed(filt64):
    model = assemble_model(build_pilot_plan(4, 16, 64), filt64, 1.0)
    scipy.linalg.cholesky(model.noise_shape, lower=True)
