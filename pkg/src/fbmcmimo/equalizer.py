"""
Two-stage FBMC receiver: per-subcarrier linear combining followed by
per-(user, subcarrier) fractionally spaced equalizers (FSE).

Pulse conventions
-----------------
Composite pulses are sampled at the slot rate (T/2) and stored centred: an
array ``g`` of odd length ``2J+1`` holds lags ``-J..J`` with lag 0 at index
``J``. For a baseband (demodulated) channel ``b[tau]``::

    g[j] = (f * b * f)[kappa*M + j*M/2] = sum_tau b[tau] R_f[j*M/2 - tau]

where ``R_f`` is the prototype autocorrelation. Within one subcarrier the
combined stream obeys ``y[n] = sum_j (-1j)**j g[j] s[n-j]`` so the FSE is
designed on ``g`` and applied with the quarter-turn rotation folded in.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, PdpProfile

__all__ = [
    "CombinerBank",
    "EquivalentChannel",
    "FseBank",
    "ErrorStatsView",
    "DegeneratePulseError",
    "subcarrier_gains",
    "build_combiner",
    "combine_stream",
    "equivalent_channel",
    "pulse_halfwidth",
    "autocorrelation_matrix",
    "nyquist_target",
    "composite_pulse",
    "composite_pulses",
    "design_fse",
    "design_fse_bank",
    "equalize_stream",
    "approximate_pdp",
    "apply_csi_correction",
]

COMBINERS = ("mrc", "zf", "mmse")
PINV_RTOL = 1e-10
MIN_PULSE_ENERGY = 1e-12


class DegeneratePulseError(ValueError):
    """Pulse has (numerically) no energy; an equalizer cannot be designed."""


def _taps_of(channel):
    return channel.taps if isinstance(channel, ChannelRealization) else np.asarray(channel)


def subcarrier_gains(channel, M):
    """
    Channel gains at subcarrier centres.

    Returns
    -------
    ndarray, shape (M, N, K)
        ``H[m, i, k] = sum_l h[i, k, l] exp(-j 2 pi m l / M)``.
    """
    h = _taps_of(channel)
    if h.shape[-1] > M:
        raise ValueError("channel longer than the number of subcarriers")
    return np.moveaxis(np.fft.fft(h, n=M, axis=-1), -1, 0)


@dataclass(frozen=True, eq=False)
class CombinerBank:
    """Per-subcarrier ``N x K`` combining matrices, stacked as ``(M, N, K)``."""

    weights: np.ndarray
    kind: str
    normalizers: np.ndarray = None
    rank_deficient: np.ndarray = None

    @property
    def num_subcarriers(self):
        return self.weights.shape[0]

    def noise_gain(self):
        """``tr(W_m^H W_m) / K`` per subcarrier."""
        K = self.weights.shape[2]
        return np.sum(np.abs(self.weights) ** 2, axis=(1, 2)) / K


def build_combiner(H, kind="zf", noise_var=0.0):
    """
    MRC, ZF or MMSE combiners from centre-frequency gains ``H`` ``(M, N, K)``.

    MRC uses ``W = H D^-1`` with ``D = diag(sum_i |H_ik|^2)``; ZF
    ``H (H^H H)^-1``; MMSE ``H (H^H H + noise_var I)^-1``. Rank-deficient
    Gram matrices under ZF fall back to a truncated pseudo-inverse and are
    flagged in ``rank_deficient``.
    """
    kind = kind.lower()
    if kind not in COMBINERS:
        raise ValueError(f"unknown combiner {kind!r}; choose from {COMBINERS}")
    H = np.asarray(H, dtype=complex)
    M, N, K = H.shape
    flags = np.zeros(M, dtype=bool)
    if kind == "mrc":
        D = np.sum(np.abs(H) ** 2, axis=1)
        return CombinerBank(H / D[:, None, :], kind, normalizers=D, rank_deficient=flags)
    gram = np.conj(np.swapaxes(H, 1, 2)) @ H
    if kind == "mmse":
        gram = gram + noise_var * np.eye(K)
        return CombinerBank(H @ np.linalg.inv(gram), kind, rank_deficient=flags)
    s = np.linalg.svd(gram, compute_uv=False)
    flags = s[:, -1] <= PINV_RTOL * s[:, 0]
    inv = np.empty_like(gram)
    if np.any(~flags):
        inv[~flags] = np.linalg.inv(gram[~flags])
    if np.any(flags):
        inv[flags] = np.linalg.pinv(gram[flags], rcond=PINV_RTOL, hermitian=True)
    return CombinerBank(H @ inv, kind, rank_deficient=flags)


def combine_stream(grid, bank):
    """
    Apply ``W_m^H`` to the demodulated grid.

    Parameters
    ----------
    grid : ndarray, shape (N, M, S)
    bank : CombinerBank

    Returns
    -------
    ndarray, shape (K, M, S)
    """
    grid = np.asarray(grid)
    if grid.ndim == 2:
        grid = grid[None]
    M, N, _ = bank.weights.shape
    if grid.shape[:2] != (N, M):
        raise ValueError(f"grid shape {grid.shape[:2]} does not match combiner (N={N}, M={M})")
    return np.einsum("mik,ims->kms", np.conj(bank.weights), grid)


@dataclass(frozen=True, eq=False)
class EquivalentChannel:
    """
    Combined channel taps ``h_eq[k, k', m, l]`` from user ``k'`` to combiner
    output ``k`` on subcarrier ``m``.
    """

    taps: np.ndarray
    mode: str = "exact"

    @property
    def num_subcarriers(self):
        return self.taps.shape[2]

    def own(self):
        """Own-user taps ``h_eq[k, k, m, l]``, shape ``(K, M, L)``."""
        K = self.taps.shape[0]
        return self.taps[np.arange(K), np.arange(K)]


def equivalent_channel(bank, channel, power_coeffs=None, mode="exact"):
    """
    Equivalent channel seen at the combiner outputs.

    Parameters
    ----------
    bank : CombinerBank
        Ignored in ``"asymptotic"`` mode.
    channel : ChannelRealization, ndarray ``(N, K, L)`` or, for asymptotic
        mode, per-user PDPs (list of PdpProfile or ``(K, L)`` array).
    power_coeffs : array_like, shape (K,), optional
        Per-user transmit powers; taps of user ``k'`` are scaled by ``sqrt(mu)``.
    mode : {"exact", "asymptotic"}
        ``exact``: ``sum_i conj(W[m,i,k]) sqrt(mu_k') h[i,k',l]``.
        ``asymptotic``: ``p_k[l] exp(j 2 pi l m / M) delta_kk'``.
    """
    if mode == "asymptotic":
        pdp = _pdp_array(channel)
        K, L = pdp.shape
        M = bank.num_subcarriers if bank is not None else None
        if M is None:
            raise ValueError("asymptotic mode needs the subcarrier count from a bank")
        phase = np.exp(2j * np.pi * np.outer(np.arange(M), np.arange(L)) / M)
        taps = np.zeros((K, K, M, L), dtype=complex)
        taps[np.arange(K), np.arange(K)] = pdp[:, None, :] * phase[None]
        return EquivalentChannel(taps, mode)
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    h = _taps_of(channel)
    if power_coeffs is not None:
        h = h * np.sqrt(np.asarray(power_coeffs, dtype=float))[None, :, None]
    if h.shape[0] != bank.weights.shape[1]:
        raise ValueError("channel and combiner antenna counts do not match")
    taps = np.einsum("mik,ijl->kjml", np.conj(bank.weights), h)
    return EquivalentChannel(taps, mode)


def _pdp_array(pdp):
    if isinstance(pdp, PdpProfile):
        return pdp.taps[None, :]
    if isinstance(pdp, (list, tuple)) and pdp and isinstance(pdp[0], PdpProfile):
        L = max(p.length for p in pdp)
        return np.stack([p.padded(L).taps for p in pdp])
    arr = np.asarray(pdp)
    return arr[None, :] if arr.ndim == 1 else arr


def pulse_halfwidth(filt, channel_length):
    """Half-width ``J`` covering the full support of ``f * b * f``."""
    return 2 * filt.kappa + -(-2 * (channel_length - 1) // filt.M)


def autocorrelation_matrix(filt, channel_length, halfwidth=None):
    """
    Matrix ``R[tau, j] = R_f[(j-J)*M/2 - tau]`` mapping baseband channel taps
    to centred composite-pulse samples.
    """
    J = pulse_halfwidth(filt, channel_length) if halfwidth is None else halfwidth
    f = filt.coeffs
    R = np.correlate(f, f, mode="full")  # R[c + x] = sum_u f[u + x] f[u]
    c = f.size - 1
    lags = (np.arange(-J, J + 1) * filt.hop)[None, :] - np.arange(channel_length)[:, None]
    out = np.zeros(lags.shape)
    valid = np.abs(lags) <= c
    out[valid] = R[c + lags[valid]]
    return out


def nyquist_target(filt, halfwidth):
    """Ideal-channel pulse ``(f * f)`` at slot spacing, centred, length ``2J+1``."""
    return autocorrelation_matrix(filt, 1, halfwidth)[0]


def composite_pulse(source, filt, m=None, mode="pdp", halfwidth=None):
    """
    Composite transmit-channel-receive pulse at slot spacing.

    Parameters
    ----------
    source : PdpProfile or array_like
        PDP ``p[l]`` (``mode="pdp"``) or modulated equivalent channel taps
        ``h_eq[l]`` of one subcarrier (``mode="subcarrier"``).
    filt : PrototypeFilter
    m : int
        Subcarrier index, required in subcarrier mode.
    mode : {"pdp", "subcarrier"}
        ``pdp``: ``g[n] = (f * p * f)`` decimated by M/2, independent of m.
        ``subcarrier``: ``(f_m * h_eq * f_m)`` decimated by M/2 and brought
        to baseband, i.e. the taps are demodulated by ``exp(-j2 pi m l/M)``.

    Returns
    -------
    ndarray, shape (2J+1,)
        Centred pulse, lag 0 at index J.
    """
    taps = source.taps if isinstance(source, PdpProfile) else np.asarray(source)
    if taps.ndim != 1:
        raise ValueError("composite_pulse takes a single tap vector")
    if taps.size > filt.M:
        raise ValueError("channel longer than the number of subcarriers")
    if mode == "subcarrier":
        if m is None:
            raise ValueError("subcarrier mode needs the subcarrier index m")
        taps = taps * np.exp(-2j * np.pi * m * np.arange(taps.size) / filt.M)
    elif mode != "pdp":
        raise ValueError(f"unknown mode {mode!r}")
    R = autocorrelation_matrix(filt, taps.size, halfwidth)
    return taps @ R


def composite_pulses(eq_channel, filt, halfwidth=None):
    """Own-user subcarrier-mode pulses for a whole bank, shape ``(K, M, 2J+1)``."""
    own = eq_channel.own()
    K, M, L = own.shape
    demod = np.exp(-2j * np.pi * np.outer(np.arange(M), np.arange(L)) / M)
    return (own * demod[None]) @ autocorrelation_matrix(filt, L, halfwidth)


@dataclass(frozen=True, eq=False)
class FseBank:
    """
    Fractionally spaced equalizers, one per ``(user, subcarrier)``.

    ``taps`` are applied directly to the combined stream (rotation folded
    in); ``delays`` are decision delays in slots; ``design_taps`` are the
    un-rotated solutions of the design problem.
    """

    taps: np.ndarray
    delays: np.ndarray
    kind: str
    design_taps: np.ndarray = None
    residuals: np.ndarray = None
    regularized: np.ndarray = None

    @property
    def length(self):
        return self.taps.shape[-1]


def _conv_matrices(pulses, L_fse):
    B, Lg = pulses.shape
    G = np.zeros((B, Lg + L_fse - 1, L_fse), dtype=complex)
    for i in range(L_fse):
        G[:, i : i + Lg, i] = pulses
    return G


def design_fse_bank(pulses, target, L_fse, kind="zf", noise_level=0.0):
    """
    Vectorized FSE design for a batch of centred pulses.

    Minimizes ``||G c - t_d||^2`` (``kind="zf"``) or the ridge-regularized
    version with ``noise_level * I`` added to the normal equations
    (``kind="mmse"``), where ``t_d`` is the Nyquist target placed at output
    index ``d = (L_fse-1)/2 + argmax|g|``.

    Parameters
    ----------
    pulses : ndarray, shape (..., 2J+1)
    target : ndarray, odd length, centred
    L_fse : int
        Odd number of taps.
    kind : {"zf", "mmse"}
    noise_level : float or ndarray broadcastable to the batch shape

    Returns
    -------
    FseBank
    """
    if L_fse < 1 or L_fse % 2 == 0:
        raise ValueError("FSE length must be odd and >= 1")
    if kind not in ("zf", "mmse"):
        raise ValueError(f"unknown FSE design {kind!r}")
    pulses = np.asarray(pulses, dtype=complex)
    batch = pulses.shape[:-1]
    g = pulses.reshape(-1, pulses.shape[-1])
    Lg = g.shape[1]
    if Lg % 2 == 0:
        raise ValueError("pulses must be centred (odd length)")
    energy = np.sum(np.abs(g) ** 2, axis=1)
    if np.any(energy < MIN_PULSE_ENERGY):
        raise DegeneratePulseError("pulse energy below threshold; cannot design an FSE")
    target = np.asarray(target)
    Jg, Jt = Lg // 2, target.size // 2
    centre = (L_fse - 1) // 2
    peaks = np.argmax(np.abs(g), axis=1)
    out_len = Lg + L_fse - 1
    d = centre + peaks
    # desired output: target centred at index d, clipped to the output window
    t = np.zeros((g.shape[0], out_len), dtype=complex)
    rows = np.arange(g.shape[0])[:, None]
    pos = d[:, None] + np.arange(-Jt, Jt + 1)[None, :]
    ok = (pos >= 0) & (pos < out_len)
    t[np.broadcast_to(rows, pos.shape)[ok], pos[ok]] = np.broadcast_to(target, pos.shape)[ok]

    G = _conv_matrices(g, L_fse)
    GH = np.conj(np.swapaxes(G, 1, 2))
    A = GH @ G
    rhs = (GH @ t[:, :, None])[:, :, 0]
    lam = np.zeros(g.shape[0])
    if kind == "mmse":
        lam = lam + np.broadcast_to(np.asarray(noise_level, dtype=float), batch).reshape(-1)
    A = A + lam[:, None, None] * np.eye(L_fse)
    # near-singular normal equations get a small ridge instead of NaNs
    scale = np.real(np.trace(A, axis1=1, axis2=2)) / L_fse
    cond = np.linalg.cond(A)
    regularized = ~np.isfinite(cond) | (cond > 1e12)
    if np.any(regularized):
        A[regularized] += (1e-9 * scale[regularized])[:, None, None] * np.eye(L_fse)
    c = np.linalg.solve(A, rhs[:, :, None])[:, :, 0]
    residual = np.linalg.norm((G @ c[:, :, None])[:, :, 0] - t, axis=1)

    delays = d - Jg  # decision delay in slots relative to FSE tap 0
    idx = np.arange(L_fse)[None, :]
    rot = (-1j) ** ((idx - delays[:, None]) % 4)
    applied = c * rot
    shape = batch + (L_fse,)
    return FseBank(
        taps=applied.reshape(shape),
        delays=delays.reshape(batch),
        kind=kind,
        design_taps=c.reshape(shape),
        residuals=residual.reshape(batch),
        regularized=regularized.reshape(batch),
    )


def design_fse(pulse, target, L_fse, kind="zf", noise_level=0.0):
    """Design a single FSE; see :func:`design_fse_bank`."""
    pulse = np.asarray(pulse)
    if pulse.ndim != 1:
        raise ValueError("design_fse takes a single pulse")
    return design_fse_bank(pulse, target, L_fse, kind, noise_level)


def equalize_stream(stream, fse):
    """
    Run the FSEs over the combined streams and slice real symbol estimates.

    ``s_hat[n] = Re{(c * y)[n + d]}`` per ``(user, subcarrier)``.

    Parameters
    ----------
    stream : ndarray, shape (..., S)
        Combined samples ``y[k, m, n]`` at slot rate.
    fse : FseBank
        Taps of shape ``stream.shape[:-1] + (L_fse,)`` or broadcastable to it
        (e.g. one equalizer per user, shape ``(K, 1, L_fse)``).

    Returns
    -------
    ndarray, same shape as ``stream``, real
    """
    y = np.asarray(stream)
    S = y.shape[-1]
    taps = np.broadcast_to(fse.taps, y.shape[:-1] + (fse.length,))
    delays = np.broadcast_to(fse.delays, y.shape[:-1])
    L = fse.length
    pad = L + int(np.max(np.abs(delays)))
    ypad = np.concatenate(
        [np.zeros(y.shape[:-1] + (pad,)), y, np.zeros(y.shape[:-1] + (pad,))], axis=-1
    )
    n = np.arange(S)
    out = np.zeros(y.shape, dtype=complex)
    for i in range(L):
        # (c * y)[n + d] picks y[n + d - i]
        idx = pad + n + delays[..., None] - i
        out += taps[..., i : i + 1] * np.take_along_axis(ypad, idx, axis=-1)
    return out.real


def approximate_pdp(estimated_taps):
    """
    PDP estimate from channel estimates, averaged over antennas.

    Parameters
    ----------
    estimated_taps : ndarray, shape (N, K, L)

    Returns
    -------
    list of PdpProfile
        ``p_hat_k[l] = mean_i |h_hat[i, k, l]|^2`` (not normalized).
    """
    h = _taps_of(estimated_taps)
    if h.ndim != 3 or h.shape[0] < 1:
        raise ValueError("estimates must be indexed (antenna, user, lag)")
    p = np.mean(np.abs(h) ** 2, axis=0)
    return [PdpProfile(row) for row in p]


CORRECTIONS = ("none", "colocated-scale", "subtract-term-small", "subtract-term-cellfree")


@dataclass(frozen=True)
class ErrorStatsView:
    """Estimation-error variances (per tap and per subcarrier) and correction mode.

    Variances may be scalars or per-user arrays of shape ``(K,)``.
    """

    tap_var: object
    freq_var: object
    mode: str = "none"
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in CORRECTIONS:
            raise ValueError(f"unknown correction mode {self.mode!r}")
        if np.any(np.asarray(self.tap_var) < 0) or np.any(np.asarray(self.freq_var) < 0):
            raise ValueError("error variances must be non-negative")


def apply_csi_correction(target, stats, context=None):
    """
    Compensate a PDP or equivalent channel for channel-estimation errors.

    Modes
    -----
    ``colocated-scale``
        ``p / (1 + sigma_ef^2)`` for PDP inputs (PdpProfile, list or array).
    ``subtract-term-small``
        Subtract ``sigma_et^2 / (1 + sigma_ef^2) exp(j 2 pi l m / M)`` from the
        own-user taps of an :class:`EquivalentChannel`.
    ``subtract-term-cellfree``
        Subtract ``N sigma_et^2 sqrt(mu_k) / (sum_i beta_ik + N sigma_ef^2)
        exp(j 2 pi l m / M)``; ``context`` provides ``N``, ``power_coeffs``
        and ``beta_sum`` (per user).
    """
    context = {**stats.context, **(context or {})}
    mode = stats.mode
    et = np.asarray(stats.tap_var, dtype=float)
    ef = np.asarray(stats.freq_var, dtype=float)
    if np.any(et < 0) or np.any(ef < 0):
        raise ValueError("error variances must be non-negative")
    if mode == "none":
        return target
    if mode == "colocated-scale":
        if isinstance(target, EquivalentChannel):
            return EquivalentChannel(target.taps / (1 + ef), target.mode)
        if isinstance(target, PdpProfile):
            return PdpProfile(target.taps / (1 + ef))
        if isinstance(target, (list, tuple)):
            efk = np.broadcast_to(ef, (len(target),))
            return [PdpProfile(p.taps / (1 + e)) for p, e in zip(target, efk)]
        arr = np.asarray(target)
        return arr / (1 + (ef[:, None] if ef.ndim else ef))
    if not isinstance(target, EquivalentChannel):
        raise TypeError(f"{mode} applies to an EquivalentChannel")
    K, _, M, L = target.taps.shape
    if mode == "subtract-term-small":
        term = np.broadcast_to(et / (1 + ef), (K,))
    else:
        N = context["N"]
        mu = np.broadcast_to(np.asarray(context.get("power_coeffs", 1.0), float), (K,))
        beta_sum = np.broadcast_to(np.asarray(context["beta_sum"], float), (K,))
        term = N * et * np.sqrt(mu) / (beta_sum + N * ef)
        term = np.broadcast_to(term, (K,))
    phase = np.exp(2j * np.pi * np.outer(np.arange(M), np.arange(L)) / M)
    taps = target.taps.copy()
    k = np.arange(K)
    taps[k, k] -= term[:, None, None] * phase[None]
    return EquivalentChannel(taps, target.mode)
