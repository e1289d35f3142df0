"""
Cell-free deployment: AP grid, wrap-around distances, COST-Hata large-scale
fading, thermal noise and fractional uplink power control.
"""

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BOLTZMANN",
    "CellFreeLayout",
    "PowerControl",
    "LayoutError",
    "build_layout",
    "wrap_distances",
    "cost_hata_db",
    "noise_power",
    "fractional_power_control",
    "write_layout_csv",
]

BOLTZMANN = 1.3e-23
MIN_DISTANCE_KM = 0.010
SHADOWING_STD_DB = 8.0
MAX_RESAMPLES = 10_000


class LayoutError(ValueError):
    """Invalid deployment parameters."""


@dataclass(frozen=True, eq=False)
class CellFreeLayout:
    """
    One drop of APs and users on a square torus.

    Per-antenna arrays have shape ``(N_AP * antennas_per_ap, K)``; antenna
    ``i`` belongs to AP ``i // antennas_per_ap``.
    """

    ap_positions: np.ndarray
    antennas_per_ap: int
    user_positions: np.ndarray
    area_side: float
    distances: np.ndarray
    shadowing_db: np.ndarray
    beta: np.ndarray

    @property
    def num_aps(self):
        return self.ap_positions.shape[0]

    @property
    def num_users(self):
        return self.user_positions.shape[0]

    @property
    def num_antennas(self):
        return self.beta.shape[0]

    def beta_sums(self):
        """``sum_i beta[i, k]`` over all antennas, shape ``(K,)``."""
        return self.beta.sum(axis=0)


@dataclass(frozen=True, eq=False)
class PowerControl:
    """Per-user transmit powers ``mu`` [W] for exponent ``nu`` and cap ``p_max``."""

    mu: np.ndarray
    nu: float
    p_max: float


def wrap_distances(a, b, side):
    """
    Torus distances between point sets ``a`` ``(P, 2)`` and ``b`` ``(Q, 2)``:
    the minimum over the 9 translated images of ``b``.
    """
    a = np.asarray(a, dtype=float)[:, None, :]
    b = np.asarray(b, dtype=float)[None, :, :]
    best = np.full((a.shape[0], b.shape[1]), np.inf)
    for dx in (-side, 0.0, side):
        for dy in (-side, 0.0, side):
            d = np.hypot(a[..., 0] - b[..., 0] - dx, a[..., 1] - b[..., 1] - dy)
            best = np.minimum(best, d)
    return best


def cost_hata_db(distance_km, shadowing_db=0.0):
    """``10 log10(beta) = -135 - 35 log10(d) - X``."""
    return -135.0 - 35.0 * np.log10(distance_km) - shadowing_db


def build_layout(n_aps, antennas_per_ap, K, area_side, rng, min_distance=MIN_DISTANCE_KM,
                 shadowing_std_db=SHADOWING_STD_DB):
    """
    Drop ``K`` users uniformly in a square with APs on a regular grid.

    Parameters
    ----------
    n_aps : int
        Number of APs, a perfect square.
    antennas_per_ap : int
    K : int
        Number of users.
    area_side : float
        Side of the square [km].
    rng : numpy.random.Generator
    min_distance : float
        Users closer than this to any AP (on the torus) are redrawn [km].
    shadowing_std_db : float
        Standard deviation of the log-normal shadowing [dB].

    Returns
    -------
    CellFreeLayout
    """
    side = int(round(np.sqrt(n_aps)))
    if n_aps < 1 or side * side != n_aps:
        raise LayoutError(f"number of APs must be a perfect square, got {n_aps}")
    if area_side <= 0:
        raise LayoutError("area side must be positive")
    if antennas_per_ap < 1 or K < 1:
        raise LayoutError("antennas per AP and users must be >= 1")
    spacing = area_side / side
    centres = (np.arange(side) + 0.5) * spacing
    gx, gy = np.meshgrid(centres, centres, indexing="xy")
    aps = np.column_stack([gx.ravel(), gy.ravel()])

    users = np.empty((K, 2))
    for k in range(K):
        for _ in range(MAX_RESAMPLES):
            p = rng.uniform(0.0, area_side, size=2)
            if wrap_distances(aps, p[None], area_side).min() >= min_distance:
                break
        else:
            raise LayoutError("could not place a user away from every AP")
        users[k] = p

    d_ap = wrap_distances(aps, users, area_side)
    x_ap = shadowing_std_db * rng.standard_normal(d_ap.shape)
    beta_ap = 10.0 ** (cost_hata_db(d_ap, x_ap) / 10)
    rep = lambda a: np.repeat(a, antennas_per_ap, axis=0)
    return CellFreeLayout(
        ap_positions=aps,
        antennas_per_ap=antennas_per_ap,
        user_positions=users,
        area_side=float(area_side),
        distances=rep(d_ap),
        shadowing_db=rep(x_ap),
        beta=rep(beta_ap),
    )


def noise_power(temperature=290.0, boltzmann=BOLTZMANN, bandwidth=20e6, nf_db=9.0):
    """Thermal noise power ``T k_B B 10^(NF/10)`` [W]."""
    if temperature <= 0 or boltzmann <= 0 or bandwidth <= 0:
        raise ValueError("temperature, Boltzmann constant and bandwidth must be positive")
    return temperature * boltzmann * bandwidth * 10.0 ** (nf_db / 10)


def fractional_power_control(beta, nu=0.5, p_max=0.2):
    """
    ``mu_k = p_max * (sum_i beta_ik)^-nu / max_j (sum_i beta_ij)^-nu``.

    Parameters
    ----------
    beta : array_like, shape (N, K)
        Large-scale gains (or their per-user sums, shape ``(K,)``).
    """
    if not 0.0 <= nu <= 1.0:
        raise ValueError("nu must lie in [0, 1]")
    if p_max <= 0:
        raise ValueError("p_max must be positive")
    beta = np.asarray(beta, dtype=float)
    sums = beta.sum(axis=0) if beta.ndim == 2 else beta
    if np.any(sums <= 0):
        raise ValueError("large-scale gains must be positive")
    # work in logs: sums are ~1e-12 and nu-th powers stay well scaled this way
    log_w = -nu * np.log(sums)
    mu = p_max * np.exp(log_w - log_w.max())
    return PowerControl(mu=mu, nu=float(nu), p_max=float(p_max))


def write_layout_csv(path, layout, power=None):
    """Dump AP and user positions, per-(AP, user) beta [dB] and mu [mW]."""
    step = layout.antennas_per_ap
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "index", "x_km", "y_km", "user", "beta_db", "mu_mw"])
        for a, (x, y) in enumerate(layout.ap_positions):
            w.writerow(["ap", a, f"{x:.6f}", f"{y:.6f}", "", "", ""])
        for k, (x, y) in enumerate(layout.user_positions):
            mu = "" if power is None else f"{1e3 * power.mu[k]:.6f}"
            w.writerow(["user", k, f"{x:.6f}", f"{y:.6f}", "", "", mu])
        beta_db = 10 * np.log10(layout.beta[::step])
        for a in range(layout.num_aps):
            for k in range(layout.num_users):
                w.writerow(["link", a, "", "", k, f"{beta_db[a, k]:.4f}", ""])
