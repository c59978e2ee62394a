"""Command-line front end: verbs, pipelines, and artifact layout.

Each verb maps onto one library pipeline and drops its artifacts in the
output directory along with manifest.json, which echoes the fully resolved
configuration and its content hash; re-running from the same manifest
reproduces the outputs (bitwise at c128 single-threaded).

Thread accounting is best effort on the BLAS side: the environment
variables are set before the numeric modules load when this module is the
entry point, and the kernel thread count is always applied. The default
comes from RYDPOL_THREADS.

Exit codes: 0 ok, 2 configuration error, 3 solver non-convergence,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_threads(count: int) -> None:
    for name in _BLAS_VARS:
        os.environ[name] = str(count)
    try:
        import numba

        numba.set_num_threads(count)
    except (ImportError, ValueError):
        pass


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="INI run configuration")
    common.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (default from config or .)")
    common.add_argument("--threads", type=int, default=None, metavar="N")
    common.add_argument("--precision", choices=("c64", "c128"), default=None)
    common.add_argument("--od", type=float, default=None,
                        help="override the optical depth")
    common.add_argument("--grid", type=int, default=None, metavar="N",
                        help="override grid points per axis")
    parser = argparse.ArgumentParser(
        prog="rydpol",
        description="interacting Rydberg-polariton simulations")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in (
            ("single", "one-photon steady transmission"),
            ("two", "two-photon steady field"),
            ("three", "three-photon steady field"),
            ("g2", "pair correlation g2 and phase"),
            ("g3", "triple correlation g3 and phase maps"),
            ("bands", "dispersion band surfaces"),
            ("planewave", "spectral propagation on the relative plane"),
            ("vortices", "phase-singularity detection"),
            ("scan", "vortex-class phase diagram"),
            ("export", "slice a stored field to columns")):
        p = sub.add_parser(verb, parents=[common], help=text)
        if verb in ("vortices", "export"):
            p.add_argument("field", nargs="?" if verb == "vortices" else None,
                           help="field container to read")
        if verb == "export":
            p.add_argument("--slice", default="all", dest="slice_spec",
                           help="'all', 'axis=A,index=I', or 'diag=AB'")
            p.add_argument("--component", default=None,
                           help="component label (default: detected slot)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    threads = args.threads
    if threads is None:
        raw = os.environ.get("RYDPOL_THREADS", "")
        threads = int(raw) if raw.isdigit() and int(raw) > 0 else None
    if threads is not None:
        _apply_threads(threads)

    from .config import ConfigError, load_config

    try:
        cfg = load_config(args.config, mode=args.verb, out=args.out,
                          precision=args.precision, threads=threads)
        if args.threads is None and threads is None:
            _apply_threads(cfg.threads)
        runner = _RUNNERS[args.verb]
        os.makedirs(cfg.out, exist_ok=True)
        code, artifacts = runner(cfg, args)
        _write_manifest(cfg, args, artifacts)
        return code
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except ValueError as exc:
        print("invalid input: %s" % exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print("i/o error: %s" % exc, file=sys.stderr)
        return 4


def _write_manifest(cfg, args, artifacts: list) -> None:
    resolved = cfg.resolved(args.od, args.grid)
    payload = {"config": resolved,
               "hash": cfg.content_hash(args.od, args.grid),
               "artifacts": sorted(artifacts)}
    path = os.path.join(cfg.out, "manifest.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _out(cfg, name: str) -> str:
    return os.path.join(cfg.out, name)


# ---------------------------------------------------------------------------
# verb pipelines


def _cmd_single(cfg, args):
    from .io import write_columns, write_container
    from .single import solve_single_steady

    prof = cfg.profile(args.od, args.grid)
    state = solve_single_steady(prof)
    cols = state.as_columns()
    names = ["x", "re_e", "im_e", "re_p", "im_p", "re_s", "im_s"]
    meta = {"transmission": repr(state.transmission),
            "output_phase": repr(state.output_phase), "od": repr(prof.od)}
    write_columns(_out(cfg, "single.txt"), names, list(cols.T), meta)
    write_container(_out(cfg, "single.rpb"),
                    {"x": prof.grid.x, "e": state.e_field,
                     "p": state.p_field, "s": state.s_field},
                    {"kind": "single", "od": prof.od,
                     "transmission": state.transmission,
                     "units": {"x": "um", "fields": "1"}})
    return 0, ["single.txt", "single.rpb"]


def _steady(cfg, args, n: int):
    from .evolver import hierarchical_solve

    prof = cfg.profile(args.od, args.grid)
    solver = cfg.option("solver", "mode", "sweep", str)
    tol = cfg.option("solver", "tol", 1e-6)
    t_max = cfg.option("solver", "t_max", None)
    result = hierarchical_solve(prof, n=n, mode=solver, tol=tol,
                                t_max=t_max, dtype=cfg.dtype)
    return prof, result


def _save_steady(cfg, prof, result, n: int):
    from .io import save_field, write_container

    fld = (result.three if n == 3 else result.two).field
    name = "three" if n == 3 else "two"
    meta = {"od": prof.od, "converged": bool(result.converged),
            "params_hash": cfg.content_hash()}
    artifacts = []
    if n == 2 or cfg.option(name, "full", False, bool):
        save_field(_out(cfg, name + ".rpb"), fld, meta)
        artifacts.append(name + ".rpb")
    if n == 3:
        detected = fld.values[..., 0]
        write_container(_out(cfg, "three_det.rpb"), {"psi": detected},
                        dict(meta, kind="component", labels=["EEE"],
                             grid={"n_points": fld.grid.n_points,
                                   "dx": fld.grid.dx,
                                   "t_step": fld.grid.t_step,
                                   "t_max": fld.grid.t_max}))
        artifacts.append("three_det.rpb")
    return artifacts


def _cmd_two(cfg, args):
    prof, result = _steady(cfg, args, 2)
    artifacts = _save_steady(cfg, prof, result, 2)
    return (0 if result.converged else 3), artifacts


def _cmd_three(cfg, args):
    prof, result = _steady(cfg, args, 3)
    artifacts = _save_steady(cfg, prof, result, 3)
    return (0 if result.converged else 3), artifacts


def _tau_grid(cfg, prof):
    from .correlations import default_tau_grid

    return default_tau_grid(prof,
                            int(cfg.option("correlations", "tau_points", 96)),
                            cfg.option("correlations", "tau_span", 6.0))


def _cmd_g2(cfg, args):
    from .correlations import g2_phi2
    from .io import write_columns, write_container

    prof, result = _steady(cfg, args, 2)
    cmap = g2_phi2(result.two.field, result.one, prof, _tau_grid(cfg, prof))
    write_columns(_out(cfg, "g2.txt"), ["tau", "g2", "phi2"],
                  [cmap.tau1, cmap.g_values, cmap.phi_values],
                  {"od": repr(prof.od), "tau_unit": "us"})
    write_container(_out(cfg, "g2.rpb"),
                    {"tau": cmap.tau1, "ratio": cmap.ratio},
                    {"kind": "g2", "od": prof.od,
                     "converged": bool(result.converged),
                     "units": {"tau": "us", "ratio": "1"}})
    return (0 if result.converged else 3), ["g2.txt", "g2.rpb"]


def _cmd_g3(cfg, args):
    import numpy as np

    from .correlations import g3_phi3, to_jacobi_times
    from .io import write_columns, write_container

    prof, result = _steady(cfg, args, 3)
    emit = cfg.option("g3", "emit", "both", str)
    if emit not in ("taus", "jacobi", "both"):
        raise ValueError("[g3] emit must be taus, jacobi, or both")
    cmap = g3_phi3(result, prof, _tau_grid(cfg, prof))
    artifacts = []
    if emit in ("taus", "both"):
        t1, t2 = [a.ravel() for a in
                  np.meshgrid(cmap.tau1, cmap.tau2, indexing="ij")]
        write_columns(_out(cfg, "g3_taus.txt"),
                      ["tau1", "tau2", "g3", "phi3"],
                      [t1, t2, cmap.g_values.ravel(),
                       cmap.phi_values.ravel()],
                      {"od": repr(prof.od), "tau_unit": "us"})
        write_container(_out(cfg, "g3_taus.rpb"),
                        {"tau1": cmap.tau1, "tau2": cmap.tau2,
                         "ratio": cmap.ratio},
                        {"kind": "g3", "axes": "tau", "od": prof.od,
                         "converged": bool(result.converged),
                         "units": {"tau": "us", "ratio": "1"}})
        artifacts += ["g3_taus.txt", "g3_taus.rpb"]
    if emit in ("jacobi", "both"):
        jac = to_jacobi_times(
            cmap, n_points=int(cfg.option("g3", "jacobi_points", 121)))
        write_container(_out(cfg, "g3_jacobi.rpb"),
                        {"eta": jac.eta, "zeta": jac.zeta,
                         "ratio": jac.ratio},
                        {"kind": "g3", "axes": "jacobi", "od": prof.od,
                         "converged": bool(result.converged),
                         "units": {"eta": "us", "zeta": "us", "ratio": "1"}})
        artifacts.append("g3_jacobi.rpb")
    return (0 if result.converged else 3), artifacts


def _cmd_bands(cfg, args):
    import numpy as np

    from .bands import (BandModel, bands_four, bands_three, bands_two,
                        schrodinger_two)
    from .io import write_columns, write_container

    prof = cfg.profile(args.od, args.grid)
    model = BandModel.from_profile(prof)
    photons = int(cfg.option("bands", "photons", 3))
    k_max = cfg.option("bands", "k_max", 1.0) * model.unit
    points = int(cfg.option("bands", "k_points", 61))
    axis = np.linspace(-k_max, k_max, points)
    meta = {"unit": repr(model.unit), "unit_name": "omega_D/c",
            "od": repr(prof.od)}
    if photons == 2:
        plus, minus = bands_two(axis, model)
        para = schrodinger_two(axis, model)
        write_columns(_out(cfg, "bands2.txt"),
                      ["k", "k_plus", "k_minus", "k_parabolic"],
                      [axis / model.unit, plus / model.unit,
                       minus / model.unit, para / model.unit], meta)
        write_container(_out(cfg, "bands2.rpb"),
                        {"k": axis, "k_plus": plus, "k_minus": minus,
                         "k_parabolic": para},
                        {"kind": "bands", "photons": 2, "unit": model.unit})
        return 0, ["bands2.txt", "bands2.rpb"]
    if photons == 3:
        ke, kz = np.meshgrid(axis, axis, indexing="ij")
        bands = bands_three(ke, kz, model).bands
        write_columns(_out(cfg, "bands3.txt"),
                      ["k_eta", "k_zeta", "k1", "k2", "k3"],
                      [ke.ravel() / model.unit, kz.ravel() / model.unit]
                      + [bands[..., i].ravel() / model.unit
                         for i in range(3)], meta)
        write_container(_out(cfg, "bands3.rpb"),
                        {"k_eta": axis, "k_zeta": axis, "bands": bands},
                        {"kind": "bands", "photons": 3, "unit": model.unit})
        return 0, ["bands3.txt", "bands3.rpb"]
    if photons == 4:
        k1, k2 = np.meshgrid(axis, axis, indexing="ij")
        bands = bands_four(k1, k2, np.zeros_like(k1), model).bands
        write_columns(_out(cfg, "bands4.txt"),
                      ["kappa1", "kappa2", "k1", "k2", "k3", "k4"],
                      [k1.ravel() / model.unit, k2.ravel() / model.unit]
                      + [bands[..., i].ravel() / model.unit
                         for i in range(4)], meta)
        write_container(_out(cfg, "bands4.rpb"),
                        {"kappa": axis, "bands": bands},
                        {"kind": "bands", "photons": 4, "unit": model.unit})
        return 0, ["bands4.txt", "bands4.rpb"]
    raise ValueError("[bands] photons must be 2, 3, or 4")


def _cmd_planewave(cfg, args):
    import numpy as np

    from .io import write_columns, write_container
    from .planewave import PlaneWaveBasis, planewave_propagate

    prof = cfg.profile(args.od, args.grid)
    count = int(cfg.option("planewave", "vectors", 331))
    lattice = cfg.option("planewave", "lattice_rb", 120.0)
    mode = cfg.option("planewave", "mode", "multiband", str)
    r_max = cfg.option("planewave", "r_max", 40.0)
    r_points = int(cfg.option("planewave", "r_points", 9))
    spr = cfg.option("planewave", "samples_per_rb", 8.0)
    basis = PlaneWaveBasis.with_count(lattice * prof.r_b, count)
    r_values = np.linspace(0.0, r_max, r_points)
    res = planewave_propagate(basis, prof, r_values, mode=mode,
                              samples_per_rb=spr)
    write_container(_out(cfg, "planewave.rpb"),
                    {"r": res.r_values, "eta": res.eta, "zeta": res.zeta,
                     "field": res.field, "constants": res.constants,
                     "indices": basis.indices},
                    {"kind": "planewave", "mode": mode, "od": prof.od,
                     "vectors": basis.n_vectors, "lattice_rb": lattice,
                     "units": {"r": "um", "eta": "um", "zeta": "um",
                               "constants": "1/um"}})
    ee, zz = np.meshgrid(res.eta, res.zeta, indexing="ij")
    final = res.field[-1]
    write_columns(_out(cfg, "planewave_final.txt"),
                  ["eta", "zeta", "re", "im", "abs", "arg"],
                  [ee.ravel(), zz.ravel(), final.real.ravel(),
                   final.imag.ravel(), np.abs(final).ravel(),
                   np.angle(final).ravel()],
                  {"r": repr(float(res.r_values[-1])), "mode": mode,
                   "vectors": repr(basis.n_vectors)})
    return 0, ["planewave.rpb", "planewave_final.txt"]


def _vortex_field(cfg, args):
    """(complex array, GridSpec, converged) from a container or a fresh solve."""
    from .core import GridSpec
    from .io import load_field, read_container

    if getattr(args, "field", None):
        try:
            fld, meta = load_field(args.field)
            return fld.values[..., 0], fld.grid, bool(meta.get("converged",
                                                               True))
        except OSError:
            arrays, meta = read_container(args.field)
            if meta.get("kind") != "component":
                raise
            g = meta["grid"]
            grid = GridSpec(g["n_points"], g["dx"], g.get("t_step"),
                            g.get("t_max"))
            return arrays["psi"], grid, bool(meta.get("converged", True))
    photons = int(cfg.option("vortices", "photons", 2))
    if photons not in (2, 3):
        raise ValueError("[vortices] photons must be 2 or 3")
    prof, result = _steady(cfg, args, photons)
    fld = (result.three if photons == 3 else result.two).field
    return fld.values[..., 0], fld.grid, result.converged


def _cmd_vortices(cfg, args):
    import numpy as np

    from .io import write_columns
    from .topology import find_vortices_2d, trace_vortex_tubes_3d

    field, grid, converged = _vortex_field(cfg, args)
    frac = cfg.option("vortices", "amplitude_fraction",
                      None if field.ndim == 2 else 0.1)
    artifacts = []
    tree: dict = {"converged": converged}
    if field.ndim == 2:
        found = find_vortices_2d(field, grid, amplitude_fraction=frac)
        tree["points"] = [
            {"position": list(v.position), "cell": list(v.cell),
             "winding": v.winding, "core_amplitude": v.core_amplitude}
            for v in found.points]
        if found.points:
            write_columns(_out(cfg, "vortex_points.txt"),
                          ["x1", "x2", "winding", "core_amplitude"],
                          [np.array([v.position[0] for v in found.points]),
                           np.array([v.position[1] for v in found.points]),
                           np.array([v.winding for v in found.points],
                                    dtype=float),
                           np.array([v.core_amplitude
                                     for v in found.points])])
            artifacts.append("vortex_points.txt")
    elif field.ndim == 3:
        found = trace_vortex_tubes_3d(field, grid, amplitude_fraction=frac)
        tree["census"] = found.census()
        tree["tubes"] = [
            {"label": t.label, "closed": t.closed,
             "n_points": int(len(t.points)),
             "min_core_amplitude": float(t.core_amplitudes.min())}
            for t in found.tubes]
        if found.tubes:
            rows = []
            for i, t in enumerate(found.tubes):
                for j in range(len(t.points)):
                    rows.append([float(i), float(j), *t.points[j],
                                 t.zeta[j], float(t.windings[j]),
                                 t.core_amplitudes[j]])
            table = np.array(rows)
            write_columns(_out(cfg, "vortex_tubes.txt"),
                          ["tube", "vertex", "x1", "x2", "x3", "zeta",
                           "winding", "core_amplitude"],
                          list(table.T))
            artifacts.append("vortex_tubes.txt")
    else:
        raise ValueError("vortex detection wants a 2-D or 3-D field")
    with open(_out(cfg, "vortices.json"), "w", encoding="utf-8") as handle:
        json.dump(tree, handle, indent=2, sort_keys=True)
        handle.write("\n")
    artifacts.append("vortices.json")
    return (0 if converged else 3), artifacts


def _cmd_scan(cfg, args):
    import numpy as np

    from .io import write_columns, write_container
    from .topology import scan_phase_diagram

    def axis(name, lo, hi, count):
        return np.linspace(cfg.option("scan", name + "_min", lo),
                           cfg.option("scan", name + "_max", hi),
                           int(cfg.option("scan", name + "_count", count)))

    lams = axis("lambda", 0.5, 2.0, 4)
    phis = axis("phi", 2.0, 9.0, 4)
    n_points = int(cfg.option("scan", "n", 32))
    diag = scan_phase_diagram(lams, phis, n_points=n_points)
    ll, pp = np.meshgrid(diag.lambda_values, diag.phi_values, indexing="xy")
    write_columns(_out(cfg, "scan_mask.txt"),
                  ["lambda", "phi", "single_ahead", "pair_ahead",
                   "converged"],
                  [ll.ravel(), pp.ravel(),
                   diag.single_ahead.ravel().astype(float),
                   diag.pair_ahead.ravel().astype(float),
                   diag.converged.ravel().astype(float)])
    write_container(_out(cfg, "scan.rpb"),
                    {"lambda": diag.lambda_values, "phi": diag.phi_values,
                     "single_ahead": diag.single_ahead.astype(np.int64),
                     "pair_ahead": diag.pair_ahead.astype(np.int64),
                     "converged": diag.converged.astype(np.int64)},
                    {"kind": "scan", "n": n_points})
    artifacts = ["scan_mask.txt", "scan.rpb"]
    for label, segments in diag.thresholds.items():
        if len(segments) == 0:
            continue
        seg = np.asarray(segments, dtype=float).reshape(-1, 2, 2)
        name = "threshold_%s.txt" % label.replace("-", "_")
        write_columns(_out(cfg, name),
                      ["lambda0", "phi0", "lambda1", "phi1"],
                      [seg[:, 0, 0], seg[:, 0, 1], seg[:, 1, 0],
                       seg[:, 1, 1]])
        artifacts.append(name)
    return 0, artifacts


def _cmd_export(cfg, args):
    from .io import regrid_and_export

    regrid_and_export(args.field, args.slice_spec, _out(cfg, "export.txt"),
                      component=args.component)
    return 0, ["export.txt"]


_RUNNERS = {
    "single": _cmd_single,
    "two": _cmd_two,
    "three": _cmd_three,
    "g2": _cmd_g2,
    "g3": _cmd_g3,
    "bands": _cmd_bands,
    "planewave": _cmd_planewave,
    "vortices": _cmd_vortices,
    "scan": _cmd_scan,
    "export": _cmd_export,
}


if __name__ == "__main__":
    sys.exit(main())
