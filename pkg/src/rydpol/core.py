"""Shared physical model: parameters, medium profile, interactions, coordinates.

Units are micrometers, microseconds and MHz (half-width convention, no 2*pi
factors) everywhere. Densities are linear densities in 1/um, so g_coupling
carries MHz*um^(1/2) and g_coupling**2 * density is a MHz**2 quantity.

The light speed is a configuration knob rather than a constant: at fixed
optical depth the steady-state field observables acquire only O(freq*l/c)
corrections from the value of c (l being the attenuation length), so solvers
run at a tamed c where transport and internal dynamics are both resolvable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.special import erf

SPEED_OF_LIGHT = 2.99792458e8  # um/us, vacuum value

# Boundary density above this fraction of peak invalidates a profile: the
# boundary planes carry pure-photon data, so the cloud must be contained.
BOUNDARY_DENSITY_TOL = 1e-5


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class AtomicParams:
    """Single-atom and coupling constants.

    Attributes
    ----------
    g_coupling : float
        Photon-atom coupling g in MHz*um^(1/2). Only g**2 * density enters
        any observable, so this is a gauge choice; the default 1.0 puts all
        density scaling into the medium profile.
    rabi : float
        Control Rabi frequency Omega (MHz, half-width).
    gamma_p : float
        Decay of the intermediate state (MHz).
    gamma_s : float
        Rydberg decoherence (MHz).
    delta_1 : float
        One-photon detuning (MHz).
    delta_2 : float
        Two-photon detuning (MHz).
    c6 : float
        van der Waals coefficient (MHz*um^6).
    light_speed : float
        Photon speed in um/us. See module docstring.
    """

    g_coupling: float = 1.0
    rabi: float = 9.5
    gamma_p: float = 3.03
    gamma_s: float = 0.07
    delta_1: float = 28.5
    delta_2: float = 1.03
    c6: float = 0.0
    light_speed: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.gamma_p < 0 or self.gamma_s < 0:
            raise ValueError("decay rates must be non-negative")
        if self.light_speed <= 0:
            raise ValueError("light_speed must be positive")

    @property
    def far_detuned(self) -> bool:
        """True when |delta_1| >= 3 gamma_p, where the dispersive formulas hold."""
        return abs(self.delta_1) >= 3.0 * self.gamma_p

    @classmethod
    def reference(cls, r_b: float = 15.3, light_speed: float = SPEED_OF_LIGHT,
                  **overrides) -> "AtomicParams":
        """Standard cold-cloud parameter set with c6 fixed by a target blockade
        radius; an explicit c6 override wins over the r_b-derived value."""
        p = cls(light_speed=light_speed, **overrides)
        if "c6" in overrides:
            return p
        return replace(p, c6=2.0 * p.rabi**2 * r_b**6 / p.delta_1)

    def with_light_speed(self, c: float) -> "AtomicParams":
        return replace(self, light_speed=c)


def blockade_radius(params: AtomicParams) -> float:
    """r_b = (C6 * delta_1 / (2 rabi^2))^(1/6)."""
    if params.rabi <= 0:
        raise ValueError("rabi must be positive")
    arg = params.c6 * params.delta_1 / (2.0 * params.rabi**2)
    if arg <= 0:
        raise ValueError("c6 * delta_1 must be positive")
    return arg ** (1.0 / 6.0)


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class GridSpec:
    """Spatial grid and time-stepping bounds.

    dx is uniform, x[0] = 0, x[-1] = (n_points-1)*dx. t_step = None lets the
    stepper derive its own dt from the cell-transit time; t_max = None lets
    the steady-state driver size its horizon from transit + group delay.
    """

    n_points: int
    dx: float
    t_step: float | None = None
    t_max: float | None = None

    def __post_init__(self):
        if self.n_points < 2 or self.dx <= 0:
            raise ValueError("need n_points >= 2 and dx > 0")

    @classmethod
    def for_domain(cls, n_points: int, x_max: float, **kw) -> "GridSpec":
        return cls(n_points=n_points, dx=x_max / (n_points - 1), **kw)

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.n_points)

    @property
    def x_max(self) -> float:
        return self.dx * (self.n_points - 1)

    def resolves(self, r_b: float) -> bool:
        """Blockade resolution rule: at least 4 cells per blockade radius."""
        return self.dx <= r_b / 4.0


# ---------------------------------------------------------------------------
# medium


@dataclass(frozen=True)
class MediumProfile:
    """Gaussian cloud inside [0, x_out] plus everything derived from it.

    The optical depth od is the density knob: the peak density is fixed by
    od = 2 g^2 Integral(rho) / (gamma_p c), the resonant two-level intensity
    attenuation exponent. calibration rescales the dimensionless interaction
    parameters (lambda, phi) only; it never touches the field equations.
    """

    params: AtomicParams
    od: float
    sigma: float = 75.0 / math.sqrt(2.0 * math.pi)
    center: float = None  # type: ignore[assignment]
    x_out: float = None  # type: ignore[assignment]
    grid: GridSpec = None  # type: ignore[assignment]
    calibration: float = 1.0

    def __post_init__(self):
        if self.od < 0 or self.sigma <= 0:
            raise ValueError("need od >= 0 and sigma > 0")
        if self.center is None:
            object.__setattr__(self, "center", 5.0 * self.sigma)
        if self.x_out is None:
            object.__setattr__(self, "x_out", 2.0 * self.center)
        if self.grid is None:
            object.__setattr__(self, "grid", GridSpec.for_domain(96, self.x_out))
        if self.x_out < self.center + 5.0 * self.sigma - 1e-9:
            raise ValueError("cloud not contained: x_out < center + 5 sigma")
        edge = max(self._gauss(0.0), self._gauss(self.x_out))
        if edge > BOUNDARY_DENSITY_TOL:
            raise ValueError("density at the boundary exceeds %g of peak" % BOUNDARY_DENSITY_TOL)

    def _gauss(self, x) -> float:
        return np.exp(-((x - self.center) ** 2) / (2.0 * self.sigma**2))

    @cached_property
    def l_eff(self) -> float:
        """Uniform-equivalent length sqrt(2 pi) sigma."""
        return math.sqrt(2.0 * math.pi) * self.sigma

    @cached_property
    def rho_peak(self) -> float:
        p = self.params
        return self.od * p.gamma_p * p.light_speed / (2.0 * p.g_coupling**2 * self.l_eff)

    def density(self, x):
        """Gaussian rho(x), peak fixed by the od convention."""
        return self.rho_peak * self._gauss(np.asarray(x, dtype=float))

    def cumulative_density(self, x):
        """Integral of rho from 0 to x, closed form."""
        s = self.sigma * math.sqrt(2.0)
        x = np.asarray(x, dtype=float)
        return self.rho_peak * self.sigma * math.sqrt(math.pi / 2.0) * (
            erf((x - self.center) / s) - erf((0.0 - self.center) / s))

    def coupling(self, x):
        """Collective coupling g*sqrt(rho(x)) in MHz."""
        return self.params.g_coupling * np.sqrt(self.density(x))

    @cached_property
    def r_b(self) -> float:
        return blockade_radius(self.params)

    def omega_d(self, x):
        """Local dispersive shift rho(x) g^2 / delta_1."""
        return self.density(x) * self.params.g_coupling**2 / self.params.delta_1

    @cached_property
    def omega_d_peak(self) -> float:
        return float(self.omega_d(self.center))

    @cached_property
    def omega_d_tilde_peak(self) -> float:
        p = self.params
        return self.omega_d_peak + p.rabi**2 / p.delta_1

    @cached_property
    def u_param(self) -> float:
        """Refraction-index change U = sqrt(2) rho_pk g^2 / (delta_1 c), in 1/um."""
        p = self.params
        return self.calibration * math.sqrt(2.0) * self.rho_peak * p.g_coupling**2 / (
            p.delta_1 * p.light_speed)

    @cached_property
    def mass(self) -> float:
        """Effective pair mass m = -U/(2c); negative for delta_1 > 0."""
        return -self.u_param / (2.0 * self.params.light_speed)

    @cached_property
    def lambda_param(self) -> float:
        return abs(self.u_param * self.mass) * self.params.light_speed * self.r_b**2

    @cached_property
    def phi_param(self) -> float:
        return self.u_param * self.l_eff / math.sqrt(2.0)

    def transit_time(self) -> float:
        """Vacuum transit plus EIT group delay od*gamma_p/(2 rabi^2)."""
        p = self.params
        return self.x_out / p.light_speed + self.od * p.gamma_p / (2.0 * p.rabi**2)


def density_profile(profile: MediumProfile, x):
    return profile.density(x)


def interaction_parameters(profile: MediumProfile) -> tuple[float, float]:
    """(lambda, phi): interaction strength and accumulated interaction phase."""
    return profile.lambda_param, profile.phi_param


# ---------------------------------------------------------------------------
# interactions


def vdw_pair(x1, x2, params: AtomicParams, min_separation: float = 0.0):
    """Pair potential C6/|x1-x2|^6, capped at the min_separation value.

    Separations below min_separation are clamped to it; with the default 0
    the coincident value is +inf, which downstream blockade formulas treat
    as a hard blockade.
    """
    d = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
    d = np.maximum(d, min_separation)
    with np.errstate(divide="ignore"):
        return params.c6 / d**6


def potential_vn(positions, profile: MediumProfile):
    """Blockaded n-photon potential.

    omega_D / (1 + (2/n) sum_{i != j} r_b^6 / |x_i - x_j|^6) over ordered
    pairs; approaches omega_D at large separations and vanishes whenever any
    two positions coincide. positions has shape (..., n).
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[-1]
    if n < 2:
        raise ValueError("need at least two positions")
    r_b6 = profile.r_b**6
    s = np.zeros(pos.shape[:-1])
    for i in range(n):
        for j in range(i + 1, n):
            d6 = (pos[..., i] - pos[..., j]) ** 6
            with np.errstate(divide="ignore"):
                s = s + 2.0 * np.where(d6 > 0, r_b6 / d6, np.inf)
    with np.errstate(invalid="ignore"):
        out = profile.omega_d_peak / (1.0 + (2.0 / n) * s)
    return np.where(np.isfinite(s), out, 0.0)


def pair_potential_well(r, profile: MediumProfile, form: str = "eq4"):
    """Near-square two-photon well U/(1 + a (r/r_b)^6) in the rotated frame.

    r is the relative coordinate (x1-x2)/sqrt(2). form picks the numeric
    constant a: "eq4" uses 4 (substituting the pair separation into the
    blockaded potential), "methods" uses 8 (the alternative printed form).
    Diagnostic only; the propagation solvers never consume it.
    """
    a = {"eq4": 4.0, "methods": 8.0}[form]
    r = np.asarray(r, dtype=float)
    return profile.u_param / (1.0 + a * r**6 / profile.r_b**6)


# ---------------------------------------------------------------------------
# Jacobi coordinates

def jacobi_matrix(n: int) -> np.ndarray:
    """Orthogonal transform rows: symmetric mode first, then relative modes.

    n=2: R=(x1+x2)/sqrt2, r=(x1-x2)/sqrt2.
    n=3: R=(x1+x2+x3)/sqrt3, eta=(x1-x2)/sqrt2, zeta=(x1+x2-2x3)/sqrt6.
    n=4: R=sum/2, eta1=(x1-x2)/sqrt2, eta2=(x3-x4)/sqrt2, eta3=(x1+x2-x3-x4)/2.
    n>=5: symmetric row plus the Helmert complement.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if n == 2:
        q = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    elif n == 3:
        q = np.array([
            [1.0, 1.0, 1.0],
            [math.sqrt(1.5), -math.sqrt(1.5), 0.0],
            [1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0), -math.sqrt(2.0)],
        ]) / math.sqrt(3.0)
    elif n == 4:
        s = 1.0 / math.sqrt(2.0)
        q = np.array([
            [0.5, 0.5, 0.5, 0.5],
            [s, -s, 0.0, 0.0],
            [0.0, 0.0, s, -s],
            [0.5, 0.5, -0.5, -0.5],
        ])
    else:
        q = np.zeros((n, n))
        q[0] = 1.0 / math.sqrt(n)
        for j in range(1, n):
            q[j, :j] = 1.0
            q[j, j] = -j
            q[j] /= math.sqrt(j * (j + 1))
    return q


def jacobi_forward(x, n: int | None = None) -> np.ndarray:
    """Positions (..., n) -> (R, relative...) along the last axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] if n is None else n
    return x @ jacobi_matrix(n).T


def jacobi_inverse(y, n: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    n = y.shape[-1] if n is None else n
    return y @ jacobi_matrix(n)


@dataclass(frozen=True)
class JacobiCoords:
    """Named view of the transformed coordinates for n up to 4."""

    values: np.ndarray  # (..., n), symmetric mode first

    @classmethod
    def from_positions(cls, x) -> "JacobiCoords":
        return cls(jacobi_forward(x))

    def to_positions(self) -> np.ndarray:
        return jacobi_inverse(self.values)

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def com(self):
        return self.values[..., 0]

    @property
    def eta(self):
        return self.values[..., 1]

    @property
    def zeta(self):
        if self.n < 3:
            raise AttributeError("zeta needs n >= 3")
        return self.values[..., 2]
