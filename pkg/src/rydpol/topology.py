"""Phase-singularity analysis of multi-photon wavefunctions.

Winding numbers on grid plaquettes, 2-D vortex detection with sub-cell
refinement, 3-D vortex-tube tracing, and phase-diagram scans over the
dimensionless interaction parameters (lambda, phi).

Conventions. Plaquette windings come from wrapped nearest-neighbour phase
differences and are exact integers. In three dimensions windings are
evaluated on all three face orientations with cyclic axis order, so the six
face windings of every grid cube cancel exactly; a vortex line threads a
cube through the two faces it pierces. Classification uses the
exchange-adapted Jacobi coordinate: at each point the close pair (p, q) and
the single s are picked by coordinate gaps and zeta = (x_p + x_q - 2 x_s) /
sqrt(6). zeta > 0 means the pair leads the single toward the output face
(pair-ahead), zeta < 0 the opposite (single-ahead); |zeta| < dx is too close
to the exchange boundary to call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .core import AtomicParams, GridSpec, MediumProfile

__all__ = [
    "PhaseDiagram",
    "Vortex2D",
    "VortexSet",
    "VortexTube",
    "find_vortices_2d",
    "phase_gradient_magnitude",
    "scan_phase_diagram",
    "trace_vortex_tubes_3d",
    "winding_number",
]

_TWO_PI = 2.0 * math.pi


def _wrap(a):
    return (a + math.pi) % _TWO_PI - math.pi


# ---------------------------------------------------------------------------
# winding numbers


def winding_number(field: np.ndarray, loop) -> int:
    """Net phase winding of a 2-D complex field around a closed vertex loop.

    loop is an (m, 2) integer index sequence; the path closes back to the
    first vertex automatically. Zero amplitude anywhere on the loop makes
    the phase undefined and raises ValueError.
    """
    field = np.asarray(field)
    loop = np.asarray(loop, dtype=int)
    vals = field[loop[:, 0], loop[:, 1]]
    if np.any(np.abs(vals) == 0.0):
        raise ValueError("zero amplitude on winding loop")
    ph = np.angle(vals)
    total = np.sum(_wrap(np.diff(ph))) + _wrap(ph[0] - ph[-1])
    return int(round(total / _TWO_PI))


def _plaquette_windings_2d(field: np.ndarray) -> np.ndarray:
    """Integer winding of every grid plaquette; entry (i, j) is the cell
    with lower corner (i, j), traversed counterclockwise in (x1, x2)."""
    ph = np.angle(field)
    d0 = _wrap(np.diff(ph, axis=0))
    d1 = _wrap(np.diff(ph, axis=1))
    circ = d0[:, :-1] + d1[1:, :] - d0[:, 1:] - d1[:-1, :]
    return np.rint(circ / _TWO_PI).astype(np.int64)


def _face_windings_3d(field: np.ndarray):
    """Face windings on all three orientations of a 3-D grid.

    W[a] is the winding on faces normal to axis a, traversed so the flux of
    a positive winding points along +a (cyclic axis order). Shapes: W[0] is
    (N, N-1, N-1), W[1] (N-1, N, N-1), W[2] (N-1, N-1, N). For every cube
    the six oriented face windings cancel, which is what lets tubes thread.
    """
    ph = np.angle(field)
    d0 = _wrap(np.diff(ph, axis=0))
    d1 = _wrap(np.diff(ph, axis=1))
    d2 = _wrap(np.diff(ph, axis=2))
    w0 = d1[:, :, :-1] + d2[:, 1:, :] - d1[:, :, 1:] - d2[:, :-1, :]
    w1 = d2[:-1, :, :] + d0[:, :, 1:] - d2[1:, :, :] - d0[:, :, :-1]
    w2 = d0[:, :-1, :] + d1[1:, :, :] - d0[:, 1:, :] - d1[:-1, :, :]
    return [np.rint(w / _TWO_PI).astype(np.int64) for w in (w0, w1, w2)]


# ---------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class Vortex2D:
    """One phase singularity of a 2-D field."""

    position: tuple[float, float]
    cell: tuple[int, int]
    winding: int
    core_amplitude: float


@dataclass(frozen=True)
class VortexTube:
    """One threaded singularity line of a 3-D field.

    points are pierced-face centers in physical coordinates, in threading
    order; closed marks a ring. zeta holds the exchange-adapted Jacobi
    coordinate per point and label the tube-level class: "single-ahead",
    "pair-ahead", or "merged" when the tube spans the exchange boundary or
    sits within one cell of it.
    """

    points: np.ndarray
    cells: tuple
    windings: np.ndarray
    zeta: np.ndarray
    core_amplitudes: np.ndarray
    closed: bool
    label: str


@dataclass
class VortexSet:
    """Detected singularities: isolated points (2-D) or tubes (3-D)."""

    points: list = dataclass_field(default_factory=list)
    tubes: list = dataclass_field(default_factory=list)

    @property
    def rings(self) -> list:
        return [t for t in self.tubes if t.closed]

    def census(self) -> dict:
        """Tube count per class label."""
        out: dict = {}
        for t in self.tubes:
            out[t.label] = out.get(t.label, 0) + 1
        return out

    def total_winding(self) -> int:
        return int(sum(v.winding for v in self.points))


# ---------------------------------------------------------------------------
# 2-D detection


def _refine_bilinear(z00, z10, z01, z11):
    """Newton zero of (Re, Im) of the bilinear interpolant on the unit cell.

    Returns (u, v) in [0, 1]^2; falls back to the cell center if the
    iteration leaves the cell and cannot be pulled back.
    """
    u = v = 0.5
    for _ in range(12):
        f = (z00 * (1 - u) * (1 - v) + z10 * u * (1 - v)
             + z01 * (1 - u) * v + z11 * u * v)
        fu = (z10 - z00) * (1 - v) + (z11 - z01) * v
        fv = (z01 - z00) * (1 - u) + (z11 - z10) * u
        det = fu.real * fv.imag - fu.imag * fv.real
        if det == 0.0:
            break
        du = (f.real * fv.imag - f.imag * fv.real) / det
        dv = (fu.real * f.imag - fu.imag * f.real) / det
        u, v = u - du, v - dv
        if abs(du) + abs(dv) < 1e-12:
            break
    if not (-0.25 <= u <= 1.25 and -0.25 <= v <= 1.25):
        return 0.5, 0.5
    return min(max(u, 0.0), 1.0), min(max(v, 0.0), 1.0)


def find_vortices_2d(field: np.ndarray, grid: GridSpec | None = None,
                     amplitude_fraction: float | None = None) -> VortexSet:
    """Locate all phase singularities of a 2-D complex field.

    Scans every plaquette for nonzero winding, then refines each hit to the
    common zero of Re and Im of the bilinear interpolant inside the cell.
    With amplitude_fraction set, cells whose corner-minimum amplitude is not
    below that fraction of the median amplitude are discarded; this is the
    wrap-noise guard used by the phase-diagram scan.
    """
    field = np.asarray(field)
    if field.ndim != 2:
        raise ValueError("find_vortices_2d needs a 2-D field")
    x = grid.x if grid is not None else np.arange(field.shape[0], dtype=float)
    dx = x[1] - x[0]
    w = _plaquette_windings_2d(field)
    amp = np.abs(field)
    cut = None
    if amplitude_fraction is not None:
        cut = amplitude_fraction * float(np.median(amp))
    out = VortexSet()
    for i, j in zip(*np.nonzero(w)):
        corners = amp[i:i + 2, j:j + 2]
        core = float(corners.min())
        if cut is not None and core >= cut:
            continue
        u, v = _refine_bilinear(field[i, j], field[i + 1, j],
                                field[i, j + 1], field[i + 1, j + 1])
        out.points.append(Vortex2D(
            position=(float(x[i] + u * dx), float(x[j] + v * dx)),
            cell=(int(i), int(j)),
            winding=int(w[i, j]),
            core_amplitude=core,
        ))
    return out


# ---------------------------------------------------------------------------
# 3-D tube tracing


def _adapted_zeta(p: np.ndarray) -> float:
    """Exchange-adapted Jacobi coordinate: positive when the close pair
    leads the single photon, negative when it trails."""
    s = np.sort(p)
    if s[1] - s[0] <= s[2] - s[1]:
        pair_sum, single = s[0] + s[1], s[2]
    else:
        pair_sum, single = s[1] + s[2], s[0]
    return (pair_sum - 2.0 * single) / math.sqrt(6.0)


def _face_center(axis: int, idx, x: np.ndarray, dx: float) -> np.ndarray:
    c = np.array([x[idx[0]], x[idx[1]], x[idx[2]]], dtype=float)
    for a in range(3):
        if a != axis:
            c[a] += 0.5 * dx
    return c


def _face_corner_min(axis: int, idx, amp: np.ndarray) -> float:
    i, j, k = idx
    sl = [slice(i, i + 1), slice(j, j + 1), slice(k, k + 1)]
    for a in range(3):
        if a != axis:
            sl[a] = slice(idx[a], idx[a] + 2)
    return float(amp[tuple(sl)].min())


def _classify(zeta: np.ndarray, dx: float) -> str:
    hard = zeta[np.abs(zeta) >= dx]
    if hard.size == 0:
        return "merged"
    if np.all(hard > 0):
        return "pair-ahead"
    if np.all(hard < 0):
        return "single-ahead"
    return "merged"


def trace_vortex_tubes_3d(field: np.ndarray, grid: GridSpec | None = None,
                          amplitude_fraction: float | None = None) -> VortexSet:
    """Thread the phase-singularity lines of a 3-D complex field.

    Every grid face with nonzero winding is pierced by a vortex line; since
    the six face windings of a cube cancel, lines continue cube-to-cube and
    either close into rings or end on the domain boundary. Each tube is
    classified by the exchange-adapted zeta along it. amplitude_fraction, if
    given, keeps only tubes whose core amplitude somewhere drops below that
    fraction of the median amplitude; filtering whole tubes rather than
    single faces keeps threading connected through shallow stretches.
    """
    field = np.asarray(field)
    if field.ndim != 3:
        raise ValueError("trace_vortex_tubes_3d needs a 3-D field")
    n = field.shape[0]
    x = grid.x if grid is not None else np.arange(n, dtype=float)
    dx = x[1] - x[0]
    amp = np.abs(field)
    wmaps = _face_windings_3d(field)

    faces: dict = {}
    for axis in range(3):
        for idx in zip(*np.nonzero(wmaps[axis])):
            faces[(axis,) + tuple(int(v) for v in idx)] = int(wmaps[axis][idx])

    def cube_faces(cube):
        ci, cj, ck = cube
        return (((0, ci, cj, ck), -1), ((0, ci + 1, cj, ck), +1),
                ((1, ci, cj, ck), -1), ((1, ci, cj + 1, ck), +1),
                ((2, ci, cj, ck), -1), ((2, ci, cj, ck + 1), +1))

    def on_boundary(key):
        axis = key[0]
        return key[1 + axis] in (0, n - 1)

    def cube_ahead(key, w):
        # the cube the line enters when crossing this face along sign(w)
        axis = key[0]
        idx = list(key[1:])
        if w < 0:
            idx[axis] -= 1
        return tuple(idx)

    unused = set(faces)
    tubes: list[VortexTube] = []

    def walk(start_key):
        key = start_key
        w = faces[key]
        unused.discard(key)
        path = [key]
        closed = False
        while True:
            cube = cube_ahead(key, w)
            if any(c < 0 or c > n - 2 for c in cube):
                break
            nxt = None
            for fkey, side in cube_faces(cube):
                if fkey == start_key and len(path) > 1:
                    closed = True
                    break
                if fkey not in unused:
                    continue
                fw = faces[fkey]
                if (1 if fw > 0 else -1) != side:
                    continue  # inflow, belongs to another strand
                if nxt is None or fkey[0] == key[0]:
                    nxt = fkey  # prefer straight-through at junctions
            if closed or nxt is None:
                break
            key = nxt
            w = faces[key]
            unused.discard(key)
            path.append(key)
        return path, closed

    def emit(path, closed):
        pts = np.array([_face_center(k[0], k[1:], x, dx) for k in path])
        zeta = np.array([_adapted_zeta(p) for p in pts])
        cores = np.array([_face_corner_min(k[0], k[1:], amp) for k in path])
        wind = np.array([faces[k] for k in path], dtype=int)
        tubes.append(VortexTube(
            points=pts, cells=tuple(cube_ahead(k, faces[k]) for k in path),
            windings=wind, zeta=zeta, core_amplitudes=cores,
            closed=closed, label=_classify(zeta, dx)))

    # open tubes first: start from every face where a line enters the domain
    for key in sorted(faces):
        if key not in unused or not on_boundary(key):
            continue
        axis, w = key[0], faces[key]
        entering = (key[1 + axis] == 0 and w > 0) or \
                   (key[1 + axis] == n - 1 and w < 0)
        if entering:
            path, closed = walk(key)
            emit(path, closed)
    # what remains belongs to closed rings
    while unused:
        key = min(unused)
        path, closed = walk(key)
        emit(path, closed)
    if amplitude_fraction is not None:
        cut = amplitude_fraction * float(np.median(amp))
        tubes = [t for t in tubes if float(t.core_amplitudes.min()) < cut]
    return VortexSet(points=[], tubes=tubes)


# ---------------------------------------------------------------------------
# phase gradient magnitude


def phase_gradient_magnitude(field: np.ndarray,
                             grid: GridSpec | None = None) -> np.ndarray:
    """|grad arg(field)| from wrapped forward differences.

    Evaluated at cell centers (one point fewer per axis); the two parallel
    cell edges of each axis are averaged. Large values flag singularities.
    """
    field = np.asarray(field)
    dx = (grid.x[1] - grid.x[0]) if grid is not None else 1.0
    ph = np.angle(field)
    total = None
    nd = field.ndim
    for a in range(nd):
        d = _wrap(np.diff(ph, axis=a)) / dx
        # average the 2^(nd-1) parallel edges of each cell
        for b in range(nd):
            if b == a:
                continue
            lo = [slice(None)] * nd
            hi = [slice(None)] * nd
            lo[b] = slice(None, -1)
            hi[b] = slice(1, None)
            d = 0.5 * (d[tuple(lo)] + d[tuple(hi)])
        total = d * d if total is None else total + d * d
    return np.sqrt(total)


# ---------------------------------------------------------------------------
# phase-diagram scan


@dataclass
class PhaseDiagram:
    """Vortex-class regions over the (lambda, phi) plane.

    Masks are indexed [i_phi, i_lambda]. converged is False where the runner
    failed; such points are excluded from both class masks. thresholds maps
    each class to marching-squares boundary segments, an (m, 2, 2) array of
    (lambda, phi) endpoint pairs per contiguous boundary piece.
    """

    lambda_values: np.ndarray
    phi_values: np.ndarray
    single_ahead: np.ndarray
    pair_ahead: np.ndarray
    converged: np.ndarray
    thresholds: dict

    @property
    def no_vortex(self) -> np.ndarray:
        return self.converged & ~self.single_ahead & ~self.pair_ahead

    @property
    def single_only(self) -> np.ndarray:
        return self.single_ahead & ~self.pair_ahead

    @property
    def both(self) -> np.ndarray:
        return self.single_ahead & self.pair_ahead


_MS_EDGES = {  # marching-squares: case -> crossed cell-edge pairs
    1: ((3, 0),), 2: ((0, 1),), 3: ((3, 1),), 4: ((1, 2),),
    5: ((3, 0), (1, 2)), 6: ((0, 2),), 7: ((3, 2),), 8: ((2, 3),),
    9: ((0, 2),), 10: ((0, 1), (2, 3)), 11: ((1, 2),), 12: ((1, 3),),
    13: ((0, 1),), 14: ((0, 3),),
}


def _iso_segments(xs: np.ndarray, ys: np.ndarray, z: np.ndarray,
                  level: float) -> np.ndarray:
    """Marching-squares segments of the z == level contour; z is indexed
    [i_y, i_x]. Returns an (m, 2, 2) array of (x, y) endpoint pairs."""
    segs = []
    for i in range(z.shape[0] - 1):
        for j in range(z.shape[1] - 1):
            v = (z[i, j], z[i, j + 1], z[i + 1, j + 1], z[i + 1, j])
            case = sum(1 << k for k in range(4) if v[k] > level)
            if case in (0, 15):
                continue

            def cross(edge):
                a, b = edge, (edge + 1) % 4
                t = (level - v[a]) / (v[b] - v[a])
                cx = (j, j + 1, j + 1, j)
                cy = (i, i, i + 1, i + 1)
                px = cx[a] + t * (cx[b] - cx[a])
                py = cy[a] + t * (cy[b] - cy[a])
                fx = np.interp(px, np.arange(len(xs)), xs)
                fy = np.interp(py, np.arange(len(ys)), ys)
                return (fx, fy)

            for e1, e2 in _MS_EDGES[case]:
                segs.append((cross(e1), cross(e2)))
    return np.array(segs) if segs else np.empty((0, 2, 2))


def _profile_for(lam: float, phi: float, n_points: int,
                 calibration: float) -> MediumProfile:
    """Medium realizing dimensionless (lambda, phi).

    phi fixes the optical depth (phi is proportional to od at fixed cloud
    shape) and the ratio sqrt(lambda)/phi fixes the blockade radius through
    lambda/phi^2 = (r_b/l_eff)^2; that ratio is calibration-free.
    """
    probe = MediumProfile(AtomicParams.reference(), od=1.0,
                          calibration=calibration)
    od = phi / probe.phi_param
    r_b = probe.l_eff * math.sqrt(lam) / phi
    params = AtomicParams.reference(r_b=r_b)
    return MediumProfile(params, od=od, calibration=calibration,
                         grid=GridSpec.for_domain(n_points, probe.x_out))


def scan_phase_diagram(lambda_values, phi_values, runner=None, *,
                       n_points: int = 48, calibration: float = 1.0,
                       amplitude_fraction: float = 0.1) -> PhaseDiagram:
    """Map vortex classes of the three-photon steady state over (lambda, phi).

    runner(lam, phi) must return (field, grid, converged) with field the
    3-D detected-component amplitude; None marks the point failed. The
    default runner solves the steady hierarchy on an n_points^3 grid at the
    medium realizing (lambda, phi). A class counts as present when a traced
    tube of that class has a core amplitude below amplitude_fraction of the
    median amplitude, which is also the face filter used while tracing.
    """
    from .evolver import hierarchical_solve

    lambda_values = np.asarray(lambda_values, dtype=float)
    phi_values = np.asarray(phi_values, dtype=float)

    def default_runner(lam, phi):
        if lam <= 0.0 or phi <= 0.0:
            prof = _profile_for(max(lam, 1e-6), max(phi, 1e-2), n_points,
                                calibration)
            if lam <= 0.0:
                prof = MediumProfile(
                    AtomicParams.reference(r_b=0.0), od=prof.od,
                    calibration=calibration, grid=prof.grid)
        else:
            prof = _profile_for(lam, phi, n_points, calibration)
        res = hierarchical_solve(prof, n=3, mode="sweep")
        fld = res.three.field
        return fld.component("EEE"), fld.grid, res.converged

    run = runner if runner is not None else default_runner
    shape = (len(phi_values), len(lambda_values))
    single = np.zeros(shape, dtype=bool)
    pair = np.zeros(shape, dtype=bool)
    conv = np.zeros(shape, dtype=bool)
    for i, phi in enumerate(phi_values):
        for j, lam in enumerate(lambda_values):
            out = run(lam, phi)
            if out is None:
                continue
            fld, grid, ok = out
            if not ok:
                continue
            conv[i, j] = True
            vs = trace_vortex_tubes_3d(fld, grid,
                                       amplitude_fraction=amplitude_fraction)
            labels = {t.label for t in vs.tubes}
            single[i, j] = bool({"single-ahead", "merged"} & labels)
            pair[i, j] = bool({"pair-ahead", "merged"} & labels)
    thresholds = {
        "single-ahead": _iso_segments(lambda_values, phi_values,
                                      single.astype(float), 0.5),
        "pair-ahead": _iso_segments(lambda_values, phi_values,
                                    pair.astype(float), 0.5),
    }
    return PhaseDiagram(lambda_values=lambda_values, phi_values=phi_values,
                        single_ahead=single, pair_ahead=pair, converged=conv,
                        thresholds=thresholds)
