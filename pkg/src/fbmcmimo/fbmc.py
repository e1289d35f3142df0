"""
SMT/OQAM filter bank: PHYDYAS prototype design, synthesis and analysis.

Conventions
-----------
The basis pulse carrying the real symbol ``s[m, n]`` is::

    f_mn[l] = f[l - n*M/2] * exp(j*2*pi*m*l/M) * exp(j*pi*(m+n)/2)

Analysis returns ``z[m, n] = <r, f_mn>``, i.e. the correlation with the
modulated pulse with the phase factor ``exp(j*pi*(m+n)/2)`` already removed,
so that ``Re{z}`` recovers the transmitted symbols over an ideal channel.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PrototypeFilter",
    "SymbolFrame",
    "design_phydyas",
    "basis_pulse",
    "synthesize",
    "synthesize_single",
    "analyze",
    "signal_length",
    "orthogonality_residual",
    "ParameterError",
    "SignalLengthError",
]

# Published PHYDYAS frequency-sampling coefficients, one set per overlap factor.
PHYDYAS_COEFFS = {
    2: (np.sqrt(2) / 2,),
    3: (0.911438, 0.411438),
    4: (0.971960, np.sqrt(2) / 2, 0.235147),
}


class ParameterError(ValueError):
    """Invalid design or configuration parameter."""


class SignalLengthError(ValueError):
    """Input signal does not cover the requested number of slots."""


@dataclass(frozen=True, eq=False)
class PrototypeFilter:
    """Real, unit-energy prototype pulse of length ``overlap * num_subcarriers``."""

    coeffs: np.ndarray
    num_subcarriers: int
    overlap: int

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 1 or coeffs.size != self.overlap * self.num_subcarriers:
            raise ParameterError("filter length must equal overlap * num_subcarriers")
        coeffs = coeffs.copy()
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def M(self):
        return self.num_subcarriers

    @property
    def kappa(self):
        return self.overlap

    @property
    def hop(self):
        """Slot spacing in samples (M/2)."""
        return self.num_subcarriers // 2

    def __len__(self):
        return self.coeffs.size


@dataclass
class SymbolFrame:
    """Real symbols indexed ``(user, subcarrier, slot)`` plus per-user power scale."""

    symbols: np.ndarray
    power_coeffs: np.ndarray = None

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=float)
        if self.symbols.ndim == 2:
            self.symbols = self.symbols[np.newaxis]
        if self.symbols.ndim != 3:
            raise ParameterError("symbols must be indexed (user, subcarrier, slot)")
        if not np.all(np.isfinite(self.symbols)):
            raise ParameterError("symbols must be finite")
        if self.power_coeffs is None:
            self.power_coeffs = np.ones(self.num_users)
        self.power_coeffs = np.broadcast_to(
            np.asarray(self.power_coeffs, dtype=float), (self.num_users,)
        ).copy()
        if np.any(self.power_coeffs <= 0):
            raise ParameterError("power coefficients must be positive")

    @property
    def num_users(self):
        return self.symbols.shape[0]

    @property
    def num_subcarriers(self):
        return self.symbols.shape[1]

    @property
    def num_slots(self):
        return self.symbols.shape[2]


def design_phydyas(M, kappa=4):
    """
    Design the PHYDYAS prototype filter.

    Parameters
    ----------
    M : int
        Number of subcarriers (even).
    kappa : int
        Overlap factor, one of 2, 3, 4.

    Returns
    -------
    PrototypeFilter
        Unit-energy filter of length ``kappa * M``. Sample 0 is zero and the
        remaining samples are symmetric, ``f[l] == f[kappa*M - l]``.
    """
    if kappa not in PHYDYAS_COEFFS:
        raise ParameterError(f"unsupported overlap factor {kappa}; use 2, 3 or 4")
    if M < 2 or M % 2:
        raise ParameterError(f"number of subcarriers must be even and >= 2, got {M}")
    length = kappa * M
    l = np.arange(1, length)
    f = np.ones(length - 1)
    for q, H in enumerate(PHYDYAS_COEFFS[kappa], start=1):
        f += 2 * (-1) ** q * H * np.cos(2 * np.pi * q * l / length)
    coeffs = np.concatenate(([0.0], f))
    coeffs /= np.sqrt(np.sum(coeffs**2))
    return PrototypeFilter(coeffs, M, kappa)


def signal_length(filt, n_slots):
    """Number of samples spanned by ``n_slots`` consecutive slots."""
    return (n_slots - 1) * filt.hop + len(filt)


def basis_pulse(filt, m, n):
    """
    Modulated, phase-adjusted pulse for slot ``(m, n)``.

    Returned on the sample grid ``0 .. n*M/2 + kappa*M - 1`` (``n >= 0``).
    """
    M = filt.M
    if not 0 <= m < M:
        raise IndexError(f"subcarrier index {m} out of range [0, {M})")
    if n < 0:
        raise IndexError("slot index must be non-negative")
    start = n * filt.hop
    l = np.arange(start + len(filt))
    shifted = np.zeros(l.size)
    shifted[start:] = filt.coeffs
    return shifted * np.exp(2j * np.pi * m * l / M) * np.exp(0.5j * np.pi * (m + n))


def _slot_twiddle(M, n_slots):
    # exp(j*pi*(m+n)/2) * exp(j*pi*m*n): phase factor plus the modulation
    # offset between absolute and slot-local sample index.
    m = np.arange(M)[:, None]
    n = np.arange(n_slots)[None, :]
    return np.exp(0.5j * np.pi * (m + n)) * np.where((m * n) % 2, -1.0, 1.0)


def synthesize_single(symbols, filt):
    """Synthesis filter bank for one ``(M, n_slots)`` real symbol grid."""
    symbols = np.asarray(symbols)
    M, n_slots = symbols.shape
    if M != filt.M:
        raise ParameterError("symbol grid does not match the filter's subcarrier count")
    hop, kappa = filt.hop, filt.kappa
    # per-slot periodic waveform sum_m c[m] exp(j*2*pi*m*l/M), l = 0..M-1
    blocks = M * np.fft.ifft(symbols * _slot_twiddle(M, n_slots), axis=0)
    segments = (np.tile(blocks.T, (1, kappa)) * filt.coeffs).reshape(
        n_slots, 2 * kappa, hop
    )
    out = np.zeros((n_slots - 1 + 2 * kappa, hop), dtype=complex)
    for j in range(2 * kappa):
        out[j : j + n_slots] += segments[:, j]
    return out.reshape(-1)


def synthesize(frame, filt):
    """
    Synthesize every user's transmit signal.

    Returns
    -------
    ndarray, shape (K, n_slots*M/2 + kappa*M - M/2)
        ``x_k = sqrt(mu_k) * sum_{m,n} s_k[m, n] f_mn``.
    """
    if not isinstance(frame, SymbolFrame):
        frame = SymbolFrame(frame)
    gains = np.sqrt(frame.power_coeffs)
    return np.stack(
        [g * synthesize_single(s, filt) for g, s in zip(gains, frame.symbols)]
    )


def analyze(signal, filt, n_slots):
    """
    Analysis filter bank.

    Parameters
    ----------
    signal : array_like, shape (..., n_samples)
        Received samples; leading axes (e.g. antennas) are batched.
    filt : PrototypeFilter
    n_slots : int
        Number of slots to demodulate, starting at slot 0.

    Returns
    -------
    ndarray, shape (..., M, n_slots)
        Phase-adjusted samples ``z[m, n] = <r, f_mn>``.
    """
    signal = np.asarray(signal)
    need = signal_length(filt, n_slots)
    if signal.shape[-1] < need:
        raise SignalLengthError(
            f"signal has {signal.shape[-1]} samples, {need} needed for {n_slots} slots"
        )
    M, hop, kappa = filt.M, filt.hop, filt.kappa
    lead = signal.shape[:-1]
    sig = signal[..., :need].reshape(lead + (n_slots - 1 + 2 * kappa, hop))
    # windows[..., n, :] = signal[n*hop : n*hop + kappa*M]
    idx = np.arange(n_slots)[:, None] + np.arange(2 * kappa)[None, :]
    windows = sig[..., idx, :].reshape(lead + (n_slots, kappa * M))
    folded = (windows * filt.coeffs).reshape(lead + (n_slots, kappa, M)).sum(axis=-2)
    spectra = np.fft.fft(folded, axis=-1)
    z = np.swapaxes(spectra, -1, -2)
    return z * np.conj(_slot_twiddle(M, n_slots))


def orthogonality_residual(filt, freq_span=3, time_span=5):
    """
    Worst-case deviation from real-field orthogonality around slot (0, 0).

    Compares the reference pulse at the centre of a ``freq_span x time_span``
    neighbourhood against every pulse in it and returns the maximum of
    ``|Re<f_mn, f_m'n'>|`` over distinct pairs and ``|Re<f_mn, f_mn> - 1|``.
    """
    if freq_span < 1 or time_span < 1:
        raise ParameterError("spans must be >= 1")
    M = filt.M
    m0 = M // 2  # interior subcarrier avoids wrap-around aliasing in the span
    n0 = time_span // 2
    ref = basis_pulse(filt, m0, n0)
    worst = 0.0
    for dm in range(-(freq_span // 2), freq_span - freq_span // 2):
        for n in range(time_span):
            pulse = basis_pulse(filt, (m0 + dm) % M, n)
            size = max(pulse.size, ref.size)
            a = np.zeros(size, dtype=complex)
            b = np.zeros(size, dtype=complex)
            a[: ref.size] = ref
            b[: pulse.size] = pulse
            value = np.real(np.vdot(b, a))
            target = 1.0 if (dm == 0 and n == n0) else 0.0
            worst = max(worst, abs(value - target))
    return worst
