"""Link-quality metrics: regression SINR, Gray-mapped QAM BER, NMSE and empirical CDFs."""

import numpy as np
from scipy.stats import ks_2samp

__all__ = [
    "SINR_CAP_DB",
    "SinrStats",
    "measure_sinr",
    "sinr_from_stats",
    "measure_ber",
    "nmse",
    "empirical_cdf",
    "ks_distance",
    "qam_bits_per_symbol",
    "qam_modulate",
    "qam_demodulate",
    "pam_demodulate",
]

SINR_CAP_DB = 100.0
MIN_SINR_SYMBOLS = 1000


def sinr_from_stats(cross, power_truth, power_est):
    """
    Regression SINR from sufficient statistics.

    With ``a = cross / power_truth`` the signal power is
    ``|a|^2 power_truth`` and the distortion ``power_est - |a|^2 power_truth``.

    Parameters
    ----------
    cross : array_like
        ``sum s_hat * conj(s)``.
    power_truth : array_like
        ``sum |s|^2``.
    power_est : array_like
        ``sum |s_hat|^2``.

    Returns
    -------
    ndarray
        SINR in dB, capped at ``SINR_CAP_DB``.
    """
    cross = np.asarray(cross)
    pt = np.asarray(power_truth, dtype=float)
    pe = np.asarray(power_est, dtype=float)
    if np.any(pt <= 0):
        raise ValueError("reference symbols have no power")
    signal = np.abs(cross) ** 2 / pt
    distortion = pe - signal
    cap = 10.0 ** (SINR_CAP_DB / 10)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(distortion > signal / cap, signal / distortion, cap)
    return 10 * np.log10(np.maximum(ratio, 10.0 ** (-SINR_CAP_DB / 10)))


class SinrStats:
    """Running sufficient statistics for :func:`sinr_from_stats`."""

    def __init__(self, shape=()):
        self.cross = np.zeros(shape, dtype=complex)
        self.power_truth = np.zeros(shape)
        self.power_est = np.zeros(shape)

    def update(self, estimates, truth):
        """Accumulate over the last axis."""
        est = np.asarray(estimates)
        s = np.asarray(truth)
        self.cross += np.sum(est * np.conj(s), axis=-1)
        self.power_truth += np.sum(np.abs(s) ** 2, axis=-1)
        self.power_est += np.sum(np.abs(est) ** 2, axis=-1)
        return self

    def merge(self, other):
        self.cross += other.cross
        self.power_truth += other.power_truth
        self.power_est += other.power_est
        return self

    def sinr_db(self):
        return sinr_from_stats(self.cross, self.power_truth, self.power_est)

    def pooled_sinr_db(self):
        """SINR with all leading entries (e.g. users) pooled together."""
        return float(
            sinr_from_stats(self.cross.sum(), self.power_truth.sum(), self.power_est.sum())
        )


def measure_sinr(estimates, truth, min_symbols=MIN_SINR_SYMBOLS):
    """
    Output SINR [dB] per row from regression on the true symbols.

    ``a = E[s_hat s*] / E[|s|^2]``, ``SINR = |a|^2 E|s|^2 / E|s_hat - a s|^2``.
    A pure gain is not distortion, and an undistorted output is reported
    as ``SINR_CAP_DB``.

    Parameters
    ----------
    estimates, truth : array_like, shape (..., n)
    min_symbols : int
        Minimum number of symbols per row.
    """
    est = np.asarray(estimates)
    s = np.asarray(truth)
    if est.shape != s.shape:
        raise ValueError("estimates and truth must have the same shape")
    if s.shape[-1] < min_symbols:
        raise ValueError(f"need at least {min_symbols} symbols, got {s.shape[-1]}")
    stats = SinrStats(s.shape[:-1]).update(est, s)
    out = stats.sinr_db()
    return float(out) if out.ndim == 0 else out


def qam_bits_per_symbol(order):
    bits = int(round(np.log2(order)))
    if order < 4 or 2**bits != order or bits % 2:
        raise ValueError(f"QAM order must be a square power of two >= 4, got {order}")
    return bits


def _pam_scale(order):
    P = int(round(np.sqrt(order)))
    return P, np.sqrt(3.0 / (2.0 * (P * P - 1)))


def _gray_bits(index, nbits):
    gray = index ^ (index >> 1)
    shifts = np.arange(nbits - 1, -1, -1)
    return (gray[..., None] >> shifts) & 1


def qam_modulate(bits, order):
    """
    Gray-mapped square QAM with unit average power.

    Parameters
    ----------
    bits : array_like of {0, 1}, shape (..., n * log2(order))

    Returns
    -------
    ndarray, shape (..., n), complex
    """
    b = qam_bits_per_symbol(order)
    half = b // 2
    P, scale = _pam_scale(order)
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] % b:
        raise ValueError("number of bits is not a multiple of bits per symbol")
    groups = bits.reshape(bits.shape[:-1] + (-1, 2, half))
    weights = 1 << np.arange(half - 1, -1, -1)
    gray = groups @ weights
    # inverse Gray code
    index = gray.copy()
    shift = gray >> 1
    while np.any(shift):
        index ^= shift
        shift >>= 1
    amp = (2 * index - P + 1) * scale
    return amp[..., 0] + 1j * amp[..., 1]


def pam_demodulate(values, order):
    """Hard-decision Gray bits for one real dimension of square QAM."""
    P, scale = _pam_scale(order)
    half = qam_bits_per_symbol(order) // 2
    x = np.asarray(values, dtype=float)
    index = np.clip(np.floor((x / scale + P) / 2), 0, P - 1).astype(np.int64)
    return _gray_bits(index, half)


def qam_demodulate(symbols, order):
    """Hard-decision bits, shape ``(..., n * log2(order))``."""
    z = np.asarray(symbols)
    re = pam_demodulate(z.real, order)
    im = pam_demodulate(z.imag, order)
    bits = np.concatenate([re, im], axis=-1)
    return bits.reshape(z.shape[:-1] + (-1,))


def measure_ber(estimates, truth_bits, order=4):
    """
    Uncoded bit error rate of hard QAM decisions.

    Parameters
    ----------
    estimates : array_like, complex symbol estimates
    truth_bits : array_like, transmitted bits (Gray mapping of :func:`qam_modulate`)
    order : int
    """
    decided = qam_demodulate(estimates, order)
    truth = np.asarray(truth_bits)
    if decided.shape != truth.shape:
        raise ValueError("bit arrays do not match")
    return float(np.mean(decided != truth))


def nmse(estimate, truth):
    """``sum |h_hat - h|^2 / sum |h|^2``."""
    est = np.asarray(estimate)
    h = np.asarray(truth)
    if est.shape != h.shape:
        raise ValueError("estimate and truth must have the same shape")
    ref = np.sum(np.abs(h) ** 2)
    if ref == 0:
        raise ValueError("reference channel has no energy")
    return float(np.sum(np.abs(est - h) ** 2) / ref)


def empirical_cdf(samples):
    """
    Step CDF at the distinct sorted sample values.

    Returns
    -------
    (ndarray, ndarray)
        Values and the fraction of samples ``<=`` each value.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("need at least one sample")
    values, counts = np.unique(x, return_counts=True)
    return values, np.cumsum(counts) / x.size


def ks_distance(a, b):
    """Two-sample Kolmogorov-Smirnov statistic."""
    return float(ks_2samp(np.ravel(a), np.ravel(b)).statistic)
