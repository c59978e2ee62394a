"""Minimal multiband dispersion for n copropagating polaritons.

Outside the blockade volume the stationary amplitudes obey, in momentum
space, the linear block

    k_i psi_i = -(w~/c) psi_i + (w/(n c)) sum_j psi_j,

with w = rho g^2/delta_1 the dispersive shift, w~ = w + rabi^2/delta_1, and
k_i the momentum of slot i. Writing k_i = K/sqrt(n) + dk_i(kappa) with K the
momentum conjugate to the symmetric coordinate (x_1+..+x_n)/sqrt(n) and
kappa the orthonormal relative momenta, the collective propagation constant
K(kappa) is sqrt(n) times an eigenvalue of

    M(kappa) = -diag(dk_i) - (w~/c) I + (w/(n c)) J.

M is real symmetric: n real bands, one massive symmetric mode gapped by
sqrt(n) w/c above n-1 modes degenerate at kappa = 0. All momenta here are
1/um; to_model_units rescales to the natural unit w/c.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import MediumProfile, jacobi_matrix


@dataclass(frozen=True)
class BandModel:
    """Dispersion inputs: the two shifts (MHz) and the light speed (um/us)."""

    omega_d: float
    omega_d_tilde: float
    light_speed: float

    @classmethod
    def from_profile(cls, profile: MediumProfile) -> "BandModel":
        return cls(omega_d=profile.omega_d_peak,
                   omega_d_tilde=profile.omega_d_tilde_peak,
                   light_speed=profile.params.light_speed)

    @property
    def unit(self) -> float:
        """Natural momentum unit w/c (1/um)."""
        return self.omega_d / self.light_speed

    def to_model_units(self, k):
        return np.asarray(k) / self.unit


@dataclass(frozen=True)
class DispersionBands:
    """Bands K_nu over a momentum grid; momenta (..., n-1), bands (..., n)."""

    momenta: np.ndarray
    bands: np.ndarray
    eigvecs: np.ndarray | None = None


def relative_to_slot_momenta(n: int, kappa) -> np.ndarray:
    """Map orthonormal relative momenta (..., n-1) to slot offsets dk (..., n)."""
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    return kappa @ jacobi_matrix(n)[1:]


def bands_n(n: int, kappa, model: BandModel, eigvecs: bool = False) -> DispersionBands:
    """Eigenvalues (ascending) of the n-band block over relative momenta.

    kappa has shape (..., n-1) in the orthonormal relative basis; for n > 4
    that basis is the Helmert complement of the symmetric mode.
    """
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape[-1] != n - 1:
        raise ValueError("kappa must have n-1 components")
    dk = relative_to_slot_momenta(n, kappa)
    w = model.omega_d / model.light_speed
    wt = model.omega_d_tilde / model.light_speed
    m = np.zeros(kappa.shape[:-1] + (n, n))
    idx = np.arange(n)
    m[..., idx, idx] = -dk - wt
    m += w / n
    if eigvecs:
        vals, vecs = np.linalg.eigh(m)
        return DispersionBands(momenta=kappa, bands=np.sqrt(n) * vals, eigvecs=vecs)
    vals = np.linalg.eigvalsh(m)
    return DispersionBands(momenta=kappa, bands=np.sqrt(n) * vals)


# ---------------------------------------------------------------------------
# closed forms and convenience wrappers


def bands_two(k, model: BandModel):
    """(K_plus, K_minus) closed form for the pair problem; k is the relative momentum."""
    k = np.asarray(k, dtype=float)
    w = model.omega_d / model.light_speed
    wt = model.omega_d_tilde / model.light_speed
    base = -np.sqrt(2.0) * wt + np.sqrt(2.0) * w / 2.0
    root = np.sqrt(0.5 * w**2 + k**2)
    return base + root, base - root


def schrodinger_two(k, model: BandModel):
    """Parabolic small-k approximation of the massive pair band."""
    k = np.asarray(k, dtype=float)
    k_plus_0 = bands_two(0.0, model)[0]
    return k_plus_0 + model.light_speed * k**2 / (np.sqrt(2.0) * model.omega_d)


def bands_three(k_eta, k_zeta, model: BandModel, eigvecs: bool = False) -> DispersionBands:
    kappa = np.stack(np.broadcast_arrays(np.asarray(k_eta, dtype=float),
                                         np.asarray(k_zeta, dtype=float)), axis=-1)
    return bands_n(3, kappa, model, eigvecs=eigvecs)


def bands_four(kappa1, kappa2, kappa3, model: BandModel, eigvecs: bool = False) -> DispersionBands:
    kappa = np.stack(np.broadcast_arrays(np.asarray(kappa1, dtype=float),
                                         np.asarray(kappa2, dtype=float),
                                         np.asarray(kappa3, dtype=float)), axis=-1)
    return bands_n(4, kappa, model, eigvecs=eigvecs)


def warping_metric(model: BandModel, k_mag: float, n: int = 3,
                   n_theta: int = 720) -> np.ndarray:
    """Angular spread (max-min)/|mean| of each band on the circle |kappa| = k_mag.

    For n = 3 the circle lives in the (k_eta, k_zeta) plane; for n = 4 in the
    (kappa1, kappa2) plane at kappa3 = 0. Zero for rotationally symmetric
    bands; positive once the discrete slot structure warps them.
    """
    if k_mag <= 0:
        raise ValueError("k_mag must be positive")
    theta = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    kap = np.zeros((n_theta, n - 1))
    kap[:, 0] = k_mag * np.cos(theta)
    kap[:, 1] = k_mag * np.sin(theta)
    bands = bands_n(n, kap, model).bands
    spread = bands.max(axis=0) - bands.min(axis=0)
    mean = np.abs(bands.mean(axis=0))
    return spread / np.where(mean > 0, mean, 1.0)


def track_bands(kappa_path, model: BandModel, n: int = 3) -> DispersionBands:
    """Bands along a momentum path, re-threaded by eigenvector continuity.

    Ascending sort kinks bands at degeneracies; matching consecutive
    eigenvector frames by maximal overlap keeps each curve smooth.
    """
    out = bands_n(n, kappa_path, model, eigvecs=True)
    bands = out.bands.copy()
    vecs = out.eigvecs.copy()
    for i in range(1, bands.shape[0]):
        overlap = np.abs(vecs[i - 1].conj().T @ vecs[i])
        row, col = linear_sum_assignment(-overlap)
        order = np.empty_like(col)
        order[row] = col
        bands[i] = bands[i][order]
        vecs[i] = vecs[i][:, order]
    return DispersionBands(momenta=out.momenta, bands=bands, eigvecs=vecs)
