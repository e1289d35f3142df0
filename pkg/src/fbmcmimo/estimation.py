"""
Joint multiuser time-domain channel estimation from interleaved FBMC pilots.

The demodulated pilot samples of all users obey ``z = A h + eta`` where the
block matrix ``A`` holds each user's own pilot gains on its diagonal blocks
and the intrinsic interference from the other users' pilots off the diagonal.
The minimum variance unbiased (generalized least squares) estimate accounts
for the correlated noise of the overlapping subcarrier filters.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .fbmc import PrototypeFilter, analyze, synthesize_single

__all__ = [
    "DEFAULT_PILOT_SEED",
    "PilotPlan",
    "EstimationModel",
    "CapacityError",
    "IllPosedPlanError",
    "build_pilot_plan",
    "assemble_model",
    "extract_pilots",
    "estimate_channels",
    "error_stats",
]

DEFAULT_PILOT_SEED = 0x5EED


class CapacityError(ValueError):
    """Not enough subcarriers for the requested pilots."""


class IllPosedPlanError(np.linalg.LinAlgError):
    """The pilot plan does not identify all channel taps."""


@dataclass(frozen=True, eq=False)
class PilotPlan:
    """
    Pilot positions and values per user.

    ``subcarriers[k]`` and ``slots[k]`` list the time-frequency indices of
    user ``k``'s pilots, ``values[k]`` the real pilot symbols.
    """

    num_users: int
    channel_length: int
    num_subcarriers: int
    subcarriers: tuple
    slots: tuple
    values: tuple
    guard_symbols: int
    seed: int = DEFAULT_PILOT_SEED

    @property
    def pilots_per_user(self):
        return len(self.subcarriers[0])

    @property
    def num_pilot_slots(self):
        return int(max(max(s) for s in self.slots)) + 1

    @property
    def data_start(self):
        """First slot available for data."""
        return self.num_pilot_slots + self.guard_symbols

    def positions(self):
        """All pilot positions ``(m, n)`` stacked user by user."""
        m = np.concatenate(self.subcarriers)
        n = np.concatenate(self.slots)
        return m, n

    def user_grid(self, k, n_slots=None):
        """``(M, n_slots)`` real grid holding only user ``k``'s pilots."""
        n_slots = self.num_pilot_slots if n_slots is None else n_slots
        grid = np.zeros((self.num_subcarriers, n_slots))
        grid[self.subcarriers[k], self.slots[k]] = self.values[k]
        return grid


def build_pilot_plan(K, L, M, seed=DEFAULT_PILOT_SEED, kappa=4):
    """
    Comb-interleaved pilots on slot 0: user ``k`` gets subcarriers
    ``k + j*K`` (``j = 0..L-1``) carrying +/-1 values, followed by
    ``kappa - 1`` guard slots.
    """
    if K < 1 or L < 1:
        raise ValueError("K and L must be >= 1")
    if K * L > M:
        raise CapacityError(f"K*L = {K * L} pilots exceed {M} subcarriers")
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(K, L))
    subcarriers = tuple((k + K * np.arange(L)) % M for k in range(K))
    slots = tuple(np.zeros(L, dtype=int) for _ in range(K))
    values = tuple(1.0 - 2.0 * bits[k] for k in range(K))
    return PilotPlan(K, L, M, subcarriers, slots, values, guard_symbols=kappa - 1, seed=seed)


def extract_pilots(grid, plan):
    """
    Stack demodulated pilot samples user by user.

    Parameters
    ----------
    grid : ndarray, shape (..., M, n_slots)

    Returns
    -------
    ndarray, shape (..., K * N_p)
    """
    m, n = plan.positions()
    return np.asarray(grid)[..., m, n]


@dataclass(frozen=True, eq=False)
class EstimationModel:
    """
    Linear pilot model ``z = A h + eta`` with the cached MVU solution.

    Attributes
    ----------
    system : ndarray, shape (K*N_p, K*L)
        Block matrix with own-pilot blocks ``A_k`` on the diagonal and the
        inter-user intrinsic-interference blocks off the diagonal.
    noise_shape : ndarray, shape (K*N_p, K*N_p)
        Noise covariance for unit noise power (Gram matrix of the analysis
        pulses at the pilot positions).
    noise_var : float
        Receiver noise power; the full covariance is ``noise_var * noise_shape``.
    operator : ndarray, shape (K*L, K*N_p)
        ``(A^H C^-1 A)^-1 A^H C^-1``.
    error_shape : ndarray, shape (K*L, K*L)
        ``(A^H C^-1 A)^-1`` at unit noise power.
    """

    plan: PilotPlan
    system: np.ndarray
    noise_shape: np.ndarray
    noise_var: float
    operator: np.ndarray
    error_shape: np.ndarray
    pilot_gains: np.ndarray

    @property
    def noise_covariance(self):
        return self.noise_var * self.noise_shape

    @property
    def error_covariance(self):
        return self.noise_var * self.error_shape

    @property
    def mse_total(self):
        return float(self.noise_var * np.real(np.trace(self.error_shape)))

    def block(self, k1, k2):
        """Block ``(k1, k2)``: ``A_k`` when equal, otherwise the interference block."""
        Np, L = self.plan.pilots_per_user, self.plan.channel_length
        return self.system[k1 * Np : (k1 + 1) * Np, k2 * L : (k2 + 1) * L]

    def tap_error_variances(self):
        """Per-user mean tap error variance, shape ``(K,)``."""
        K, L = self.plan.num_users, self.plan.channel_length
        diag = np.real(np.diag(self.error_covariance)).reshape(K, L)
        return diag.mean(axis=1)


def _pilot_responses(plan, filt, gains):
    """Demodulated pilot samples for each (user, tap delay) unit channel."""
    K, L, M = plan.num_users, plan.channel_length, plan.num_subcarriers
    n_slots = plan.num_pilot_slots
    m, n = plan.positions()
    span = (n_slots - 1) * filt.hop + len(filt)
    columns = []
    for k in range(K):
        x = gains[k] * synthesize_single(plan.user_grid(k), filt)
        delayed = np.zeros((L, span + L), dtype=complex)
        for l in range(L):
            delayed[l, l : l + x.size] = x
        z = analyze(delayed, filt, n_slots)
        columns.append(z[:, m, n].T)
    return np.concatenate(columns, axis=1)


def _noise_gram(plan, filt):
    m, n = plan.positions()
    n_slots = plan.num_pilot_slots
    pulses = []
    for mi, ni in zip(m, n):
        grid = np.zeros((plan.num_subcarriers, n_slots))
        grid[mi, ni] = 1.0
        pulses.append(synthesize_single(grid, filt))
    z = analyze(np.stack(pulses), filt, n_slots)
    # gram[i, j] = <f_j, f_i> = E[z_i conj(z_j)] at unit noise power
    gram = z[:, m, n].T
    return (gram + gram.conj().T) / 2


def assemble_model(plan, filt, noise_var, pilot_gains=None, joint=True):
    """
    Build the estimation model for a pilot plan.

    Parameters
    ----------
    plan : PilotPlan
    filt : PrototypeFilter
    noise_var : float
        Receiver noise power.
    pilot_gains : array_like, shape (K,), optional
        Amplitude scaling of each user's pilots (``sqrt(mu_k)``).
    joint : bool
        If False the inter-user blocks are zeroed, i.e. every user is
        estimated as if the other users' pilots were absent.

    Raises
    ------
    IllPosedPlanError
        If ``A^H C^-1 A`` cannot be factored.
    """
    if not isinstance(filt, PrototypeFilter):
        raise TypeError("filt must be a PrototypeFilter")
    if plan.num_subcarriers != filt.M:
        raise ValueError("plan and filter disagree on the number of subcarriers")
    if noise_var < 0:
        raise ValueError("noise variance must be non-negative")
    K = plan.num_users
    gains = np.ones(K) if pilot_gains is None else np.broadcast_to(
        np.asarray(pilot_gains, dtype=float), (K,)
    )
    A = _pilot_responses(plan, filt, gains)
    if not joint:
        Np, L = plan.pilots_per_user, plan.channel_length
        mask = np.kron(np.eye(K, dtype=bool), np.ones((Np, L), dtype=bool))
        A = np.where(mask, A, 0)
    gram = _noise_gram(plan, filt)
    try:
        chol = scipy.linalg.cholesky(gram, lower=True)
        white = scipy.linalg.solve_triangular(chol, A, lower=True)
        info = white.conj().T @ white
        info_chol = scipy.linalg.cho_factor(info, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise IllPosedPlanError(f"pilot plan does not identify the channel: {exc}") from exc
    error_shape = scipy.linalg.cho_solve(info_chol, np.eye(info.shape[0]))
    # A^H C^-1 = (L^-1 A)^H L^-1
    whitener = scipy.linalg.solve_triangular(chol, np.eye(chol.shape[0]), lower=True)
    operator = scipy.linalg.cho_solve(info_chol, white.conj().T @ whitener)
    return EstimationModel(
        plan=plan,
        system=A,
        noise_shape=gram,
        noise_var=float(noise_var),
        operator=operator,
        error_shape=(error_shape + error_shape.conj().T) / 2,
        pilot_gains=np.array(gains),
    )


def estimate_channels(model, z):
    """
    MVU estimate ``(A^H C^-1 A)^-1 A^H C^-1 z``.

    Parameters
    ----------
    z : ndarray, shape (..., K*N_p)
        Stacked demodulated pilot samples (one row per antenna).

    Returns
    -------
    ndarray, shape (..., K, L)
        Tap estimates per user.
    """
    z = np.asarray(z)
    if z.shape[-1] != model.operator.shape[1]:
        raise ValueError(
            f"expected {model.operator.shape[1]} pilot samples, got {z.shape[-1]}"
        )
    h = z @ model.operator.T
    return h.reshape(z.shape[:-1] + (model.plan.num_users, model.plan.channel_length))


def error_stats(model):
    """
    Tap- and subcarrier-domain estimation error variances.

    Returns
    -------
    (float, float)
        ``sigma_et^2 = MSE / (K L)`` and ``sigma_ef^2 = L sigma_et^2``.
    """
    K, L = model.plan.num_users, model.plan.channel_length
    tap_var = model.mse_total / (K * L)
    return tap_var, L * tap_var
