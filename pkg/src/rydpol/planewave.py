"""Spectral propagation of the three-photon relative amplitude.

The relative coordinates live on a triangular superlattice of period D
chosen much larger than the blockade radius, so one unit cell holds an
effectively isolated copy of the interaction star. The amplitude is
expanded over the reciprocal lattice, the blockaded potential enters
through its Fourier components, and propagation in the symmetric
coordinate R reduces to one Hermitian eigenproblem: 3N x 3N coupling the
photon-like component to the two relative modes, or N x N for the scalar
single-band comparison. The spinor block warps the field down to the
three-fold point group; the scalar keeps the full six-fold symmetry of
the potential.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import MediumProfile, jacobi_matrix, potential_vn

__all__ = [
    "PlaneWaveBasis",
    "PropagationResult",
    "evaluate_field",
    "multiband_operator",
    "planewave_propagate",
    "singleband_operator",
    "v3_components",
]

_SQ2 = math.sqrt(2.0)
_SQ3 = math.sqrt(3.0)


def _shell_numbers(indices: np.ndarray) -> np.ndarray:
    n, m = indices[..., 0], indices[..., 1]
    return n * n + n * m + m * m


@dataclass(frozen=True)
class PlaneWaveBasis:
    """Reciprocal vectors n*b1 + m*b2 of a triangular lattice of period D.

    b1 points along e1 and b2 at sixty degrees, both of length
    4 pi / (sqrt(3) D); inclusion by |b| cutoff keeps complete shells of
    the squared integer norm n^2 + nm + m^2, so the set is closed under
    the twelve lattice automorphisms.
    """

    period: float
    indices: np.ndarray

    @classmethod
    def from_cutoff(cls, period: float, b_max: float) -> "PlaneWaveBasis":
        if period <= 0 or b_max <= 0:
            raise ValueError("period and b_max must be positive")
        g = 4.0 * math.pi / (_SQ3 * period)
        q_max = int(math.floor((b_max / g) ** 2 + 1e-9))
        r = int(math.ceil(2.0 * math.sqrt(max(q_max, 1)) / _SQ3)) + 1
        n, m = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1),
                           indexing="ij")
        idx = np.stack([n.ravel(), m.ravel()], axis=1)
        idx = idx[_shell_numbers(idx) <= q_max]
        order = np.lexsort((idx[:, 1], idx[:, 0], _shell_numbers(idx)))
        return cls(period=period, indices=np.ascontiguousarray(idx[order]))

    @classmethod
    def with_count(cls, period: float, count: int) -> "PlaneWaveBasis":
        """Complete-shell basis whose size is closest to the requested count."""
        if count < 1:
            raise ValueError("count must be positive")
        q = 0
        best = cls.from_cutoff(period, 4.0 * math.pi / (_SQ3 * period) * 0.5)
        while True:
            q += 1
            g = 4.0 * math.pi / (_SQ3 * period)
            cand = cls.from_cutoff(period, g * math.sqrt(q + 0.5))
            if cand.n_vectors >= count:
                if (cand.n_vectors - count) < (count - best.n_vectors):
                    return cand
                return best
            best = cand

    @property
    def n_vectors(self) -> int:
        return len(self.indices)

    @property
    def spacing(self) -> float:
        return 4.0 * math.pi / (_SQ3 * self.period)

    @property
    def cell_area(self) -> float:
        return _SQ3 * self.period**2 / 2.0

    @cached_property
    def vectors(self) -> np.ndarray:
        g = self.spacing
        b1 = g * np.array([1.0, 0.0])
        b2 = g * np.array([0.5, _SQ3 / 2.0])
        return self.indices[:, 0, None] * b1 + self.indices[:, 1, None] * b2

    def _lookup(self) -> dict:
        return {(int(n), int(m)): k
                for k, (n, m) in enumerate(self.indices)}

    def _permutation(self, mapper) -> np.ndarray:
        table = self._lookup()
        out = np.empty(self.n_vectors, dtype=np.int64)
        for k, (n, m) in enumerate(self.indices):
            key = mapper(int(n), int(m))
            if key not in table:
                raise ValueError("basis is not closed under the map")
            out[k] = table[key]
        return out

    def rotation_permutation(self, steps: int = 2) -> np.ndarray:
        """Index permutation rotating every vector by steps * 60 degrees."""
        def once(n, m):
            return -m, n + m

        def mapper(n, m):
            for _ in range(steps % 6):
                n, m = once(n, m)
            return n, m

        return self._permutation(mapper)

    def mirror_permutation(self) -> np.ndarray:
        """Index permutation flipping the zeta component of every vector."""
        return self._permutation(lambda n, m: (n + m, -m))


# ---------------------------------------------------------------------------
# potential components


def _hex_orbit_average(table: np.ndarray) -> np.ndarray:
    """Average a periodic frequency table over the twelve lattice rotations
    and reflections, making the stored coefficients exactly covariant."""
    m = table.shape[0]
    p, q = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    acc = np.zeros_like(table)
    for flip in (False, True):
        pp, qq = ((p + q) % m, (-q) % m) if flip else (p, q)
        for _ in range(6):
            acc += table[pp, qq]
            pp, qq = (-qq) % m, (pp + qq) % m
    return acc / 12.0


def v3_components(basis: PlaneWaveBasis, profile: MediumProfile,
                  samples_per_rb: float = 8.0) -> np.ndarray:
    """Matrix of potential Fourier components V_[3, b_i - b_j].

    Nodes are folded to minimum-image positions, sampled once, transformed,
    and the frequency table is averaged over the full hexagonal point group,
    so the matrix carries the exact six-fold covariance of the continuum
    potential; with the interaction off it is diagonal.
    """
    n = basis.n_vectors
    omega = profile.omega_d_peak
    if profile.params.c6 == 0.0:
        return omega * np.eye(n)
    rb = profile.r_b
    m_side = int(math.ceil(samples_per_rb * basis.period / rb))
    diff = basis.indices[:, None, :] - basis.indices[None, :, :]
    span = int(np.max(np.abs(diff)))
    if m_side <= 2 * span:
        raise ValueError("sampling grid too coarse for the basis span")
    frac = (np.arange(m_side) / m_side + 0.5) % 1.0 - 0.5
    f1, f2 = np.meshgrid(frac, frac, indexing="ij")
    a1 = basis.period * np.array([_SQ3 / 2.0, -0.5])
    a2 = basis.period * np.array([0.0, 1.0])
    pts = f1[..., None] * a1 + f2[..., None] * a2
    # fold every node to its minimum-image representative: the potential is
    # not lattice periodic, and the hexagonal Wigner-Seitz cell keeps the
    # fold seam where the potential is flat, unlike the parallelogram cell
    # whose edges cut straight through the pair-coincidence channels
    shifts = np.array([i * a1 + j * a2
                       for i in (-1, 0, 1) for j in (-1, 0, 1)])
    cand = pts[..., None, :] + shifts
    best = np.argmin(np.sum(cand**2, axis=-1), axis=-1)
    pts = np.take_along_axis(cand, best[..., None, None], axis=-2)[..., 0, :]
    coords = np.zeros(pts.shape[:-1] + (3,))
    coords[..., 1] = pts[..., 0]
    coords[..., 2] = pts[..., 1]
    values = potential_vn(coords @ jacobi_matrix(3), profile)
    table = np.fft.fft2(values) / m_side**2
    table = _hex_orbit_average(table).real
    # weight the basis fails to carry: components beyond twice the cutoff
    kn, km = np.meshgrid(np.arange(m_side), np.arange(m_side), indexing="ij")
    kn = np.where(kn > m_side // 2, kn - m_side, kn)
    km = np.where(km > m_side // 2, km - m_side, km)
    q = kn * kn + kn * km + km * km
    q_basis = int(np.max(_shell_numbers(basis.indices)))
    power = table**2
    tail = float(np.sum(power[q > 4 * q_basis]))
    if tail > 0.01 * float(np.sum(power)):
        warnings.warn("potential weight beyond the basis cutoff exceeds 1%;"
                      " enlarge the basis", UserWarning, stacklevel=2)
    return table[diff[..., 0] % m_side, diff[..., 1] % m_side]


# ---------------------------------------------------------------------------
# operators


def multiband_operator(basis: PlaneWaveBasis, profile: MediumProfile,
                       samples_per_rb: float = 8.0) -> np.ndarray:
    """Hermitian 3N x 3N generator of i d/dR for the three-component field."""
    vv = v3_components(basis, profile, samples_per_rb)
    n = basis.n_vectors
    c = profile.params.light_speed
    wt = profile.omega_d_tilde_peak
    be = basis.vectors[:, 0]
    bz = basis.vectors[:, 1]
    h = np.zeros((n, 3, n, 3))
    idx = np.arange(n)
    h[idx, 0, idx, 1] = be
    h[idx, 1, idx, 0] = be
    h[idx, 0, idx, 2] = bz
    h[idx, 2, idx, 0] = bz
    h[idx, 1, idx, 1] = bz / _SQ2
    h[idx, 2, idx, 2] = -bz / _SQ2
    h[idx, 1, idx, 2] = be / _SQ2
    h[idx, 2, idx, 1] = be / _SQ2
    for s in range(3):
        h[idx, s, idx, s] += _SQ3 * wt / c
    h[:, 0, :, 0] -= _SQ3 * vv / c
    return h.reshape(3 * n, 3 * n)


def singleband_operator(basis: PlaneWaveBasis, profile: MediumProfile,
                        samples_per_rb: float = 8.0) -> np.ndarray:
    """Hermitian N x N generator of the scalar parabolic comparison model."""
    vv = v3_components(basis, profile, samples_per_rb)
    c = profile.params.light_speed
    w = profile.omega_d_peak
    wt = profile.omega_d_tilde_peak
    kinetic = -c / (_SQ3 * w) * np.sum(basis.vectors**2, axis=1)
    return np.diag(kinetic + _SQ3 * wt / c) - _SQ3 * vv / c


# ---------------------------------------------------------------------------
# propagation


def evaluate_field(basis: PlaneWaveBasis, coefficients: np.ndarray,
                   eta: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    """Plane-wave sum of per-vector coefficients on an (eta, zeta) grid.

    coefficients has shape (..., N); the result appends the two grid axes.
    """
    eta = np.asarray(eta, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    pe = np.exp(1j * np.outer(eta, basis.vectors[:, 0]))
    pz = np.exp(1j * np.outer(zeta, basis.vectors[:, 1]))
    return np.einsum("...k,ak,bk->...ab", np.asarray(coefficients), pe, pz)


@dataclass
class PropagationResult:
    """Propagated first-component field and the full spectral data."""

    basis: PlaneWaveBasis
    mode: str
    r_values: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    field: np.ndarray
    coefficients: np.ndarray
    constants: np.ndarray


def planewave_propagate(basis: PlaneWaveBasis, profile: MediumProfile,
                        r_values, mode: str = "multiband", eta=None,
                        zeta=None,
                        samples_per_rb: float = 8.0) -> PropagationResult:
    """Evolve the homogeneous initial state through distance R spectrally.

    One diagonalization serves every requested distance. The initial
    condition is the uniform photon-like component: weight one on the zero
    vector, first slot. Returns the first-component field on the (eta,
    zeta) grid (default: plus or minus a quarter period) along with the
    per-vector coefficients and the propagation constants K, ascending.
    """
    r_values = np.atleast_1d(np.asarray(r_values, dtype=float))
    if mode == "multiband":
        h = multiband_operator(basis, profile, samples_per_rb)
        n_comp = 3
    elif mode == "singleband":
        h = singleband_operator(basis, profile, samples_per_rb)
        n_comp = 1
    else:
        raise ValueError("mode must be multiband or singleband")
    home = np.flatnonzero((basis.indices == 0).all(axis=1))
    if len(home) != 1:
        raise ValueError("basis must contain the zero vector exactly once")
    vals, vecs = np.linalg.eigh(h)
    amp = vecs[int(home[0]) * n_comp].conj()
    phases = np.exp(-1j * np.outer(r_values, vals)) * amp
    coefficients = (phases @ vecs.T).reshape(len(r_values), basis.n_vectors,
                                             n_comp)
    if eta is None:
        eta = np.linspace(-basis.period / 4.0, basis.period / 4.0, 97)
    if zeta is None:
        zeta = np.linspace(-basis.period / 4.0, basis.period / 4.0, 97)
    field = evaluate_field(basis, coefficients[:, :, 0], eta, zeta)
    return PropagationResult(basis=basis, mode=mode, r_values=r_values,
                             eta=np.asarray(eta, dtype=float),
                             zeta=np.asarray(zeta, dtype=float),
                             field=field, coefficients=coefficients,
                             constants=np.sort(-vals))
