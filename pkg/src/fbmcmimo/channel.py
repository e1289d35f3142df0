"""Multipath channel models: power delay profiles, Rayleigh taps and AWGN."""

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

__all__ = [
    "PdpProfile",
    "ChannelRealization",
    "load_tdlc_table",
    "tdlc_pdp",
    "exponential_pdp",
    "draw_realization",
    "apply_channel",
    "apply_channel_awgn",
    "complex_noise",
]


@dataclass(frozen=True, eq=False)
class PdpProfile:
    """Per-lag average tap power ``p[l]`` (linear)."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float).reshape(-1)
        if taps.size == 0:
            raise ValueError("profile needs at least one tap")
        if np.any(taps < 0) or not np.all(np.isfinite(taps)):
            raise ValueError("tap powers must be finite and non-negative")
        taps = taps.copy()
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def length(self):
        return self.taps.size

    def __len__(self):
        return self.taps.size

    def normalized(self):
        total = self.taps.sum()
        if total <= 0:
            raise ValueError("cannot normalize an all-zero profile")
        return PdpProfile(self.taps / total)

    def padded(self, length):
        if length < self.length:
            raise ValueError("cannot pad to a shorter length")
        return PdpProfile(np.pad(self.taps, (0, length - self.length)))

    def rms_delay(self):
        """RMS delay spread in samples."""
        p = self.taps / self.taps.sum()
        l = np.arange(p.size)
        mean = np.sum(p * l)
        return float(np.sqrt(np.sum(p * (l - mean) ** 2)))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """
    Complex tap gains ``h[i, k, l]`` for antenna ``i``, user ``k`` and lag ``l``.

    ``variances`` holds the per-tap variances the taps were drawn from.
    """

    taps: np.ndarray
    variances: np.ndarray

    @property
    def num_antennas(self):
        return self.taps.shape[0]

    @property
    def num_users(self):
        return self.taps.shape[1]

    @property
    def length(self):
        return self.taps.shape[2]

    def padded(self, length):
        extra = length - self.length
        if extra < 0:
            raise ValueError("cannot pad to a shorter length")
        pad = ((0, 0), (0, 0), (0, extra))
        return ChannelRealization(np.pad(self.taps, pad), np.pad(self.variances, pad))

    def scaled(self, user_gains):
        """Realization with user ``k``'s taps multiplied by ``user_gains[k]``."""
        g = np.asarray(user_gains)[None, :, None]
        return ChannelRealization(self.taps * g, self.variances * np.abs(g) ** 2)


@lru_cache(maxsize=None)
def load_tdlc_table():
    """Return ``(normalized_delays, powers_db)`` of the embedded TDL-C table."""
    text = resources.files("fbmcmimo").joinpath("data/tdl_c.txt").read_text()
    rows = [
        line.split()
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    table = np.array(rows, dtype=float)
    return table[:, 0], table[:, 1]


def tdlc_pdp(rms_delay, sample_rate, threshold_db=-30.0):
    """
    Sample-spaced TDL-C power delay profile.

    Parameters
    ----------
    rms_delay : float
        Target RMS delay spread [s].
    sample_rate : float
        Sampling rate [Hz].
    threshold_db : float
        Taps weaker than this, relative to the strongest tap, are dropped.

    Returns
    -------
    PdpProfile
        Unit-sum profile; taps landing in the same sample bin add up.
    """
    if rms_delay <= 0 or sample_rate <= 0:
        raise ValueError("rms_delay and sample_rate must be positive")
    delays, powers_db = load_tdlc_table()
    keep = powers_db >= powers_db.max() + threshold_db
    bins = np.floor(delays[keep] * rms_delay * sample_rate + 0.5).astype(int)
    taps = np.zeros(bins.max() + 1)
    np.add.at(taps, bins, 10.0 ** (powers_db[keep] / 10))
    return PdpProfile(taps / taps.sum())


def exponential_pdp(length, decay):
    """Unit-sum exponential profile ``p[l] ~ exp(-decay * l)``."""
    taps = np.exp(-decay * np.arange(length))
    return PdpProfile(taps / taps.sum())


def _variance_grid(pdp, N, K):
    if isinstance(pdp, PdpProfile):
        var = pdp.taps[None, None, :]
    elif isinstance(pdp, (list, tuple)) and pdp and isinstance(pdp[0], PdpProfile):
        L = max(p.length for p in pdp)
        var = np.stack([p.padded(L).taps for p in pdp])[None, :, :]
    else:
        var = np.asarray(pdp, dtype=float)
        if var.ndim == 1:
            var = var[None, None, :]
        elif var.ndim == 2:
            var = var[None, :, :]
    return np.broadcast_to(var, (N, K, var.shape[-1]))


def draw_realization(pdp, N, K, rng, large_scale=None):
    """
    Draw independent Rayleigh taps ``h[i,k,l] ~ CN(0, beta[i,k] * p[i,k,l])``.

    Parameters
    ----------
    pdp : PdpProfile, list of PdpProfile (one per user) or array
        Tap variances broadcastable to ``(N, K, L)``.
    N, K : int
        Number of receive antennas and users.
    rng : numpy.random.Generator
    large_scale : array_like, shape (N, K), optional
        Large-scale gains multiplying every tap variance of a link.
    """
    if N < 1 or K < 1:
        raise ValueError("N and K must be >= 1")
    var = _variance_grid(pdp, N, K)
    if large_scale is not None:
        var = var * np.asarray(large_scale, dtype=float)[:, :, None]
    var = np.array(var, dtype=float)
    taps = np.sqrt(var / 2) * (
        rng.standard_normal(var.shape) + 1j * rng.standard_normal(var.shape)
    )
    return ChannelRealization(taps, var)


def complex_noise(shape, variance, rng):
    """Circularly-symmetric complex Gaussian samples."""
    return np.sqrt(variance / 2) * (
        rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    )


def apply_channel(signals, realization):
    """
    Noiseless multiuser convolution.

    Parameters
    ----------
    signals : array_like, shape (K, S)
    realization : ChannelRealization

    Returns
    -------
    ndarray, shape (N, S + L - 1)
        ``r_i = sum_k x_k * h_ik`` (full linear convolution).
    """
    x = np.asarray(signals)
    if x.ndim == 1:
        x = x[None]
    h = realization.taps
    if x.shape[0] != h.shape[1]:
        raise ValueError("number of signals does not match the number of users")
    N, _, L = h.shape
    S = x.shape[1]
    out = np.zeros((N, S + L - 1), dtype=complex)
    for l in range(L):
        out[:, l : l + S] += h[:, :, l] @ x
    return out


def apply_channel_awgn(signals, realization, noise_var, rng=None):
    """Multiuser convolution plus i.i.d. ``CN(0, noise_var)`` noise per antenna."""
    out = apply_channel(signals, realization)
    if noise_var > 0:
        if rng is None:
            raise ValueError("an rng is required when noise_var > 0")
        out += complex_noise(out.shape, noise_var, rng)
    return out
