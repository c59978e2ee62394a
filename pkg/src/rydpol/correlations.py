"""Detector correlation functions from conditional evolution.

Each virtual detection removes one photon at the output plane and leaves the
remaining excitations in a conditional state that keeps evolving while fresh
drive photons enter at x = 0. Those conditional equations are integrated on
the steady march's own spatial stencil: at the physical light speed the
medium transit is a ~1e-6 fraction of the EIT group delay, so every
component carrying a photon slot is quasi-static and solved level by level,
while the pure P/S components step with implicit second-order differences in
the detection-time separation. The steady state is then an exact fixed point
of the march, which pins the large-separation tails of g at exactly 1 and
phi at 0: the interaction-free pipeline is uncorrelated to roundoff, not to
integrator accuracy.

The per-point level matrices do not depend on the level, so their inverses
are precomputed once (a startup stack for the first-order first step, a main
stack for the second-order levels) and the numba kernels assemble one right
hand side per point and apply the inverse, marching points in entry order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import MediumProfile, blockade_radius, vdw_pair
from .evolver import (HierarchyResult, PolaritonField, SteadyResult,
                      local_matrix)

__all__ = [
    "CorrelationMap",
    "conditional_single_after_one",
    "conditional_two_after_one",
    "default_tau_grid",
    "g2_phi2",
    "g3_phi3",
    "to_jacobi_times",
]


@dataclass
class CorrelationMap:
    """Detector-level correlation data.

    Pair maps fill tau1 only and hold 1-D arrays; triple maps fill tau1 and
    tau2 with g_values indexed [i_tau1, i_tau2]; Jacobi maps fill eta and
    zeta instead, indexed [i_eta, i_zeta], with points outside the unfolded
    wedge image masked as NaN. ratio holds the complex detector amplitude
    over the uncorrelated one, so g_values = |ratio|**2 and phi_values =
    arg(ratio) in (-pi, pi].
    """

    g_values: np.ndarray
    phi_values: np.ndarray
    tau1: np.ndarray | None = None
    tau2: np.ndarray | None = None
    eta: np.ndarray | None = None
    zeta: np.ndarray | None = None
    ratio: np.ndarray | None = None

    def tail(self, fraction: float = 0.1) -> tuple[float, float]:
        """(mean g, max |phi|) over the outer `fraction` of every tau axis."""
        if self.tau1 is None:
            raise ValueError("tail is defined for tau maps")
        k = max(1, int(math.ceil(fraction * len(self.tau1))))
        g = self.g_values[-k:]
        ph = self.phi_values[-k:]
        if self.tau2 is not None:
            g = g[:, -k:]
            ph = ph[:, -k:]
        return float(np.mean(g)), float(np.max(np.abs(ph)))


def default_tau_grid(profile: MediumProfile, n_points: int = 128,
                     span: float = 3.0) -> np.ndarray:
    """Uniform detection-time separations over span*(transit + EIT delay)."""
    return np.linspace(0.0, span * profile.transit_time(), n_points)


# ---------------------------------------------------------------------------
# level matrices


def _uniform_step(tau: np.ndarray) -> float:
    d = np.diff(tau)
    if d.size == 0:
        return 0.0
    if np.any(d <= 0.0) or (d.max() - d.min()) > 1e-9 * d.max():
        raise ValueError("tau grid must be uniform and increasing")
    return float(d[0])


def _inverse_stack_1(mloc: np.ndarray, cdx: float, theta: complex
                     ) -> np.ndarray:
    """(N,3,3) inverted level matrices; theta sits on the P and S diagonals."""
    n = mloc.shape[0]
    a = -mloc.astype(complex).copy()
    a[:, 1, 1] += theta
    a[:, 2, 2] += theta
    a[0, 0, :] = 0.0
    a[0, 0, 0] = 1.0
    if n > 1:
        a[1, 0, 0] += cdx
    if n > 2:
        a[2:, 0, 0] += 1.5 * cdx
    return np.linalg.inv(a)


def _inverse_stack_2(mloc: np.ndarray, vpair: np.ndarray, cdx: float,
                     theta: complex) -> np.ndarray:
    """(N,N,9,9) inverted level matrices of the conditional pair system."""
    n = mloc.shape[0]
    s1 = np.arange(9) // 3
    s2 = np.arange(9) % 3
    a = np.zeros((n, n, 9, 9), dtype=complex)
    for c in range(9):
        for t in range(3):
            if t != s1[c]:
                a[:, :, c, 3 * t + s2[c]] -= mloc[:, None, s1[c], t]
            if t != s2[c]:
                a[:, :, c, 3 * s1[c] + t] -= mloc[None, :, s2[c], t]
        diag = np.zeros((n, n), dtype=complex)
        diag -= mloc[:, None, s1[c], s1[c]] + mloc[None, :, s2[c], s2[c]]
        if s1[c] == 2 and s2[c] == 2:
            diag += 1j * vpair
        if s1[c] != 0 and s2[c] != 0:
            diag += theta
        if s1[c] == 0:
            if n > 1:
                diag[1, :] += cdx
            if n > 2:
                diag[2:, :] += 1.5 * cdx
        if s2[c] == 0:
            if n > 1:
                diag[:, 1] += cdx
            if n > 2:
                diag[:, 2:] += 1.5 * cdx
        a[:, :, c, c] += diag
    for c in range(9):
        if s1[c] == 0:
            a[0, :, c, :] = 0.0
            a[0, :, c, c] = 1.0
        if s2[c] == 0:
            a[:, 0, c, :] = 0.0
            a[:, 0, c, c] = 1.0
    return np.linalg.inv(a.reshape(n * n, 9, 9)).reshape(n, n, 9, 9)


def _pair_potential(profile: MediumProfile) -> np.ndarray:
    x = profile.grid.x
    d_min = blockade_radius(profile.params) / 16.0 if profile.params.c6 else 1.0
    return vdw_pair(x[:, None], x[None, :], profile.params,
                    min_separation=d_min)


# ---------------------------------------------------------------------------
# marches


_PS_1 = np.array([1, 2])
_PS_2 = np.array([4, 5, 7, 8])


def _single_march(ic: np.ndarray, e_in: np.ndarray, profile: MediumProfile,
                  tau: np.ndarray, keep: bool = False):
    """Batch of conditional one-photon marches.

    ic: (B,N,3) initial conditions; e_in: (B,) boundary amplitudes. Returns
    the detector photon amplitude (B, n_tau) and, with keep, the full
    trajectory (n_tau, B, N, 3).
    """
    n_t = len(tau)
    v = np.ascontiguousarray(ic, dtype=np.complex128).copy()
    e_vec = np.ascontiguousarray(e_in, dtype=np.complex128)
    out = np.empty((v.shape[0], n_t), dtype=np.complex128)
    out[:, 0] = v[:, -1, 0]
    traj = None
    if keep:
        traj = np.empty((n_t,) + v.shape, dtype=np.complex128)
        traj[0] = v
    if n_t == 1:
        return out, traj
    d_tau = _uniform_step(tau)
    inv_dt = 1.0 / d_tau
    mloc = local_matrix(profile, profile.grid.x)
    cdx = profile.params.light_speed / profile.grid.dx
    stacks = (_inverse_stack_1(mloc, cdx, inv_dt),
              _inverse_stack_1(mloc, cdx, 1.5 * inv_dt))
    prev = v.copy()
    prev2 = np.empty_like(v)
    rhs = np.zeros_like(v)
    for m in range(1, n_t):
        first = m == 1
        if first:
            rhs[..., _PS_1] = inv_dt * prev[..., _PS_1]
        else:
            rhs[..., _PS_1] = inv_dt * (2.0 * prev[..., _PS_1]
                                        - 0.5 * prev2[..., _PS_1])
        _kernels.tau_apply_1(v, rhs, stacks[0] if first else stacks[1],
                             e_vec, cdx)
        prev2[...] = prev
        prev[...] = v
        out[:, m] = v[:, -1, 0]
        if keep:
            traj[m] = v
    return out, traj


def _two_march_levels(ic: np.ndarray, faces: np.ndarray,
                      profile: MediumProfile, tau: np.ndarray):
    """Yield (level, values) through the conditional pair march.

    faces: (n_tau, N, 3) entering-photon data per level. The yielded array is
    a live buffer; callers copy what they keep.
    """
    n_t = len(tau)
    v = np.ascontiguousarray(ic, dtype=np.complex128).copy()
    yield 0, v
    if n_t == 1:
        return
    d_tau = _uniform_step(tau)
    inv_dt = 1.0 / d_tau
    mloc = local_matrix(profile, profile.grid.x)
    cdx = profile.params.light_speed / profile.grid.dx
    vpair = _pair_potential(profile)
    stacks = (_inverse_stack_2(mloc, vpair, cdx, inv_dt),
              _inverse_stack_2(mloc, vpair, cdx, 1.5 * inv_dt))
    prev = v.copy()
    prev2 = np.empty_like(v)
    rhs = np.zeros_like(v)
    for m in range(1, n_t):
        first = m == 1
        if first:
            rhs[..., _PS_2] = inv_dt * prev[..., _PS_2]
        else:
            rhs[..., _PS_2] = inv_dt * (2.0 * prev[..., _PS_2]
                                        - 0.5 * prev2[..., _PS_2])
        face = np.ascontiguousarray(faces[m])
        _kernels.tau_apply_2(v, rhs, stacks[0] if first else stacks[1],
                             face, face, cdx)
        prev2[...] = prev
        prev[...] = v
        yield m, v


# ---------------------------------------------------------------------------
# state plumbing


def _values(state, n: int) -> np.ndarray:
    if isinstance(state, SteadyResult):
        state = state.field
    if isinstance(state, PolaritonField):
        state = state.values
    arr = np.asarray(state)
    if arr.ndim != n + 1 or arr.shape[-1] != 3**n:
        raise ValueError("expected an n=%d state with %d components"
                         % (n, 3**n))
    return np.ascontiguousarray(arr, dtype=np.complex128)


def _grid_tau(profile: MediumProfile, tau) -> np.ndarray:
    if tau is None:
        return default_tau_grid(profile)
    tau = np.asarray(tau, dtype=float)
    if tau.ndim != 1 or tau.size < 1 or tau[0] != 0.0:
        raise ValueError("tau grid must be 1-D and start at 0")
    return tau


def _steps_for(profile: MediumProfile, tau1: float, n_steps: int | None
               ) -> np.ndarray:
    if tau1 < 0.0:
        raise ValueError("tau1 must be nonnegative")
    if tau1 == 0.0:
        return np.zeros(1)
    if n_steps is None:
        base = default_tau_grid(profile)
        n_steps = max(2, int(math.ceil(tau1 / (base[1] - base[0]))) + 1)
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    return np.linspace(0.0, tau1, n_steps)


# ---------------------------------------------------------------------------
# public pipelines


def conditional_single_after_one(two, single, profile: MediumProfile,
                                 tau1: float, n_steps: int | None = None,
                                 amplitude: complex = 1.0) -> PolaritonField:
    """Remaining one-photon state a time tau1 after a detection at x_out.

    Initial data are the detector rows of the pair state; the boundary keeps
    injecting the drive against the detected photon's steady amplitude.
    """
    two = _values(two, 2)
    single = _values(single, 1)
    tau = _steps_for(profile, tau1, n_steps)
    e_in = amplitude * single[-1, 0]
    _, traj = _single_march(two[-1, :, :3][None], np.array([e_in]),
                            profile, tau, keep=True)
    return PolaritonField(traj[-1, 0].copy(), profile.grid, time=tau1)


def conditional_two_after_one(states: HierarchyResult,
                              profile: MediumProfile, tau1: float,
                              n_steps: int | None = None,
                              amplitude: complex = 1.0) -> PolaritonField:
    """Remaining two-photon state a time tau1 after a detection at x_out.

    The 9 conditional amplitudes start from the detector slice of the
    three-photon steady state and carry time-dependent entering-photon faces
    from the one-photon conditional solve.
    """
    if states.three is None:
        raise ValueError("needs the three-photon level of the hierarchy")
    one = _values(states.one, 1)
    two = _values(states.two, 2)
    three = _values(states.three, 3)
    tau = _steps_for(profile, tau1, n_steps)
    e_in = amplitude * one[-1, 0]
    _, c1 = _single_march(two[-1, :, :3][None], np.array([e_in]),
                          profile, tau, keep=True)
    faces = amplitude * c1[:, 0]
    last = None
    for _, v in _two_march_levels(three[-1, :, :, :9], faces, profile, tau):
        last = v
    return PolaritonField(last.copy(), profile.grid, time=tau1)


def g2_phi2(two, single, profile: MediumProfile, tau=None,
            amplitude: complex = 1.0) -> CorrelationMap:
    """Pair correlation g2 and conditional phase phi2 on the tau grid."""
    two = _values(two, 2)
    single = _values(single, 1)
    tau = _grid_tau(profile, tau)
    e_out = complex(single[-1, 0])
    rows, _ = _single_march(two[-1, :, :3][None],
                            np.array([amplitude * e_out]), profile, tau)
    ratio = rows[0] / e_out**2
    return CorrelationMap(g_values=np.abs(ratio) ** 2,
                          phi_values=np.angle(ratio),
                          tau1=tau, ratio=ratio)


def g3_phi3(states: HierarchyResult, profile: MediumProfile, tau=None,
            amplitude: complex = 1.0) -> CorrelationMap:
    """Triple correlation g3 and phase phi3 over the (tau1, tau2) wedge.

    Stage one evolves the one-photon conditional state and caches its full
    trajectory; stage two marches the conditional pair with those faces,
    recording the detector slice at every tau1; stage three marches all tau1
    columns at once through the second detection.
    """
    if states.three is None:
        raise ValueError("needs the three-photon level of the hierarchy")
    one = _values(states.one, 1)
    two = _values(states.two, 2)
    three = _values(states.three, 3)
    tau = _grid_tau(profile, tau)
    n_t = len(tau)
    npts = profile.grid.n_points
    e_out = complex(one[-1, 0])
    a2, c1 = _single_march(two[-1, :, :3][None],
                           np.array([amplitude * e_out]), profile, tau,
                           keep=True)
    faces = amplitude * c1[:, 0]
    slices = np.empty((n_t, npts, 3), dtype=np.complex128)
    for m, v in _two_march_levels(three[-1, :, :, :9], faces, profile, tau):
        slices[m] = v[-1, :, :3]
    rows, _ = _single_march(slices, amplitude * a2[0], profile, tau)
    ratio = rows / e_out**3
    return CorrelationMap(g_values=np.abs(ratio) ** 2,
                          phi_values=np.angle(ratio),
                          tau1=tau, tau2=tau.copy(), ratio=ratio)


# ---------------------------------------------------------------------------
# temporal Jacobi unfolding


def _bilinear(vals: np.ndarray, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    i = np.clip(np.floor(fx).astype(np.int64), 0, vals.shape[0] - 2)
    j = np.clip(np.floor(fy).astype(np.int64), 0, vals.shape[1] - 2)
    tx = np.clip(fx - i, 0.0, 1.0)
    ty = np.clip(fy - j, 0.0, 1.0)
    return ((1.0 - tx) * (1.0 - ty) * vals[i, j]
            + tx * (1.0 - ty) * vals[i + 1, j]
            + (1.0 - tx) * ty * vals[i, j + 1]
            + tx * ty * vals[i + 1, j + 1])


def to_jacobi_times(cmap: CorrelationMap, n_points: int = 121,
                    eta=None, zeta=None) -> CorrelationMap:
    """Unfold a (tau1, tau2) wedge map onto the temporal Jacobi plane.

    Every target (eta, zeta) is inverted to detection times, sorted into the
    wedge by permutation symmetry, and sampled bilinearly from the complex
    ratio map; the unfolded map is exactly invariant under the detection
    permutation group by construction. Points whose separations exceed the
    wedge extent are NaN.
    """
    if cmap.tau2 is None:
        raise ValueError("needs a (tau1, tau2) map")
    if cmap.ratio is not None:
        base = cmap.ratio
    else:
        base = np.sqrt(cmap.g_values) * np.exp(1j * cmap.phi_values)
    t1_max = float(cmap.tau1[-1])
    t2_max = float(cmap.tau2[-1])
    if eta is None or zeta is None:
        radius = math.sqrt(t1_max**2 / 2.0 + (t1_max + 2.0 * t2_max)**2 / 6.0)
        axis = np.linspace(-radius, radius, n_points)
        axis = 0.5 * (axis - axis[::-1])
        if eta is None:
            eta = axis.copy()
        if zeta is None:
            zeta = axis.copy()
    eta = np.asarray(eta, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    ee, zz = np.meshgrid(eta, zeta, indexing="ij")
    half_sum = math.sqrt(2.0 / 3.0) * zz
    diff = math.sqrt(2.0) * ee
    t1 = 0.5 * (diff + half_sum)
    t2 = 0.5 * (half_sum - diff)
    t3 = -half_sum
    ts = np.stack([t1, t2, t3])
    ts.sort(axis=0)
    q1 = ts[1] - ts[0]
    q2 = ts[2] - ts[1]
    valid = (q1 <= t1_max * (1.0 + 1e-12)) & (q2 <= t2_max * (1.0 + 1e-12))
    d1 = _uniform_step(cmap.tau1)
    d2 = _uniform_step(cmap.tau2)
    u = _bilinear(base, q1 / d1, q2 / d2)
    u = np.where(valid, u, np.nan * (1.0 + 1.0j))
    return CorrelationMap(g_values=np.abs(u) ** 2, phi_values=np.angle(u),
                          eta=eta, zeta=zeta, ratio=u)
