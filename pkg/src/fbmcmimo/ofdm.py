"""CP-OFDM uplink reference chain sharing channels and combiners with FBMC."""

from dataclasses import dataclass

import numpy as np

from .equalizer import build_combiner, combine_stream, subcarrier_gains

__all__ = ["OfdmConfig", "OfdmDetection", "CyclicPrefixError", "ofdm_modulate", "ofdm_detect"]


class CyclicPrefixError(ValueError):
    """Cyclic prefix shorter than the channel memory."""


@dataclass(frozen=True)
class OfdmConfig:
    num_subcarriers: int = 64
    cp_length: int = 16
    qam_order: int = 4

    def __post_init__(self):
        if self.num_subcarriers < 1:
            raise ValueError("number of subcarriers must be >= 1")
        if self.cp_length < 0:
            raise ValueError("cyclic prefix length must be >= 0")

    @property
    def symbol_length(self):
        return self.num_subcarriers + self.cp_length


@dataclass(frozen=True, eq=False)
class OfdmDetection:
    """Combined per-subcarrier estimates ``(K, M, S)`` and the combiner used."""

    estimates: np.ndarray
    bank: object


def ofdm_modulate(symbols, config, power_coeffs=None):
    """
    Unitary IDFT per OFDM symbol with the cyclic prefix prepended.

    Parameters
    ----------
    symbols : array_like, shape (K, M, S) or (M, S)
        Complex data symbols, unit average power.
    config : OfdmConfig
    power_coeffs : array_like, shape (K,), optional
        Transmit powers; signals are scaled by ``sqrt(mu_k)``.

    Returns
    -------
    ndarray, shape (K, S * (M + cp_length))
    """
    X = np.asarray(symbols, dtype=complex)
    if X.ndim == 2:
        X = X[None]
    K, M, S = X.shape
    if M != config.num_subcarriers:
        raise ValueError("symbol grid does not match the configured subcarrier count")
    body = np.fft.ifft(X, axis=1, norm="ortho")
    cp = config.cp_length
    framed = np.concatenate([body[:, M - cp :, :], body], axis=1) if cp else body
    out = np.swapaxes(framed, 1, 2).reshape(K, S * config.symbol_length)
    if power_coeffs is not None:
        out = out * np.sqrt(np.asarray(power_coeffs, dtype=float))[:, None]
    return out


def ofdm_detect(received, channel, kind, noise_var, config, n_symbols, power_coeffs=None):
    """
    Strip the CP, apply the DFT and combine per subcarrier.

    Parameters
    ----------
    received : ndarray, shape (N, n_samples)
    channel : ChannelRealization or ndarray ``(N, K, L)``
        Channel (true or estimated) used to build the combiner.
    kind : {"mrc", "zf", "mmse"}
    noise_var : float
    config : OfdmConfig
    n_symbols : int
    power_coeffs : array_like, shape (K,), optional
        Transmit powers folded into the effective channel.

    Returns
    -------
    OfdmDetection
    """
    taps = getattr(channel, "taps", channel)
    taps = np.asarray(taps)
    L = taps.shape[-1]
    if config.cp_length < L - 1:
        raise CyclicPrefixError(
            f"cyclic prefix {config.cp_length} shorter than channel memory {L - 1}"
        )
    if power_coeffs is not None:
        taps = taps * np.sqrt(np.asarray(power_coeffs, dtype=float))[None, :, None]
    r = np.asarray(received)
    M, P = config.num_subcarriers, config.symbol_length
    need = n_symbols * P
    if r.shape[-1] < need:
        raise ValueError(f"received signal has {r.shape[-1]} samples, {need} needed")
    blocks = r[:, :need].reshape(r.shape[0], n_symbols, P)[:, :, config.cp_length :]
    Y = np.swapaxes(np.fft.fft(blocks, axis=-1, norm="ortho"), 1, 2)  # (N, M, S)
    bank = build_combiner(subcarrier_gains(taps, M), kind, noise_var)
    return OfdmDetection(combine_stream(Y, bank), bank)
