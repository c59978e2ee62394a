"""Run configuration: INI files resolved into solver objects.

One INI file describes one run. [atom], [medium], and [grid] feed
AtomicParams, MediumProfile, and GridSpec; [run] holds mode, output
directory, precision, and thread count; one optional section per mode
carries its specific knobs. Everything downstream works from the resolved
mapping with defaults expanded, which is also what the manifest echoes,
so a manifest is always enough to reproduce a run.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .core import AtomicParams, GridSpec, MediumProfile

THREADS_ENV = "RYDPOL_THREADS"

MODES = ("single", "two", "three", "g2", "g3", "bands", "planewave",
         "vortices", "scan", "export")

_PRECISIONS = {"c64": np.complex64, "c128": np.complex128}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration; message names the field."""


def _convert(section: str, option: str, raw: str, kind):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError("[%s] %s: cannot read %r as %s"
                          % (section, option, raw, kind.__name__)) from None


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description.

    sections holds every option actually present in the file, typed;
    mode/out/precision/threads are pulled out because every verb needs
    them. Helper constructors build the physics objects on demand.
    """

    mode: str
    out: str
    precision: str
    threads: int
    sections: dict = field(default_factory=dict)
    source: str = ""

    @property
    def dtype(self):
        return _PRECISIONS[self.precision]

    def option(self, section: str, option: str, default=None, kind=float):
        sec = self.sections.get(section, {})
        if option not in sec:
            return default
        value = sec[option]
        if isinstance(value, str) and kind is not str:
            return _convert(section, option, value, kind)
        return value

    def params(self) -> AtomicParams:
        atom = dict(self.sections.get("atom", {}))
        r_b = atom.pop("r_b", None)
        if r_b is not None and "c6" in atom:
            raise ConfigError("[atom] r_b and c6 are mutually exclusive")
        known = ("g_coupling", "rabi", "gamma_p", "gamma_s", "delta_1",
                 "delta_2", "c6", "light_speed")
        extra = set(atom) - set(known)
        if extra:
            raise ConfigError("[atom] unknown option %r" % sorted(extra)[0])
        kwargs = {k: _convert("atom", k, v, float) if isinstance(v, str) else v
                  for k, v in atom.items()}
        try:
            if r_b is not None:
                r_b = _convert("atom", "r_b", r_b, float) \
                    if isinstance(r_b, str) else r_b
                return AtomicParams.reference(r_b=r_b, **kwargs)
            return AtomicParams(**kwargs)
        except ValueError as exc:
            raise ConfigError("[atom] %s" % exc) from None

    def grid(self, x_out: float, n_override: int | None = None) -> GridSpec:
        n = n_override if n_override is not None else \
            self.option("grid", "n", 96, int)
        x_max = self.option("grid", "x_max", x_out)
        kw = {}
        for name in ("t_step", "t_max"):
            value = self.option("grid", name)
            if value is not None:
                kw[name] = value
        try:
            return GridSpec.for_domain(n, x_max, **kw)
        except ValueError as exc:
            raise ConfigError("[grid] %s" % exc) from None

    def profile(self, od_override: float | None = None,
                n_override: int | None = None) -> MediumProfile:
        medium = self.sections.get("medium", {})
        od = od_override if od_override is not None else medium.get("od")
        if od is None:
            raise ConfigError("[medium] od is required (or pass --od)")
        od = _convert("medium", "od", od, float) if isinstance(od, str) else od
        kw = {}
        for name in ("sigma", "center", "x_out", "calibration"):
            if name in medium:
                kw[name] = _convert("medium", name, medium[name], float) \
                    if isinstance(medium[name], str) else medium[name]
        unknown = set(medium) - {"od", "sigma", "center", "x_out",
                                 "calibration"}
        if unknown:
            raise ConfigError("[medium] unknown option %r"
                              % sorted(unknown)[0])
        params = self.params()
        sigma = kw.get("sigma", 75.0 / math.sqrt(2.0 * math.pi))
        x_out = kw.get("x_out", 2.0 * kw.get("center", 5.0 * sigma))
        try:
            return MediumProfile(params, od=od,
                                 grid=self.grid(x_out, n_override), **kw)
        except ValueError as exc:
            raise ConfigError("[medium] %s" % exc) from None

    def resolved(self, od_override: float | None = None,
                 n_override: int | None = None) -> dict:
        """Every default expanded into one plain mapping.

        The mapping is JSON-ready and stable under re-serialization, so its
        hash identifies the run.
        """
        out: dict = {"run": {"mode": self.mode, "out": self.out,
                             "precision": self.precision,
                             "threads": self.threads}}
        params = self.params()
        out["atom"] = {k: getattr(params, k) for k in
                       ("g_coupling", "rabi", "gamma_p", "gamma_s",
                        "delta_1", "delta_2", "c6", "light_speed")}
        medium = self.sections.get("medium", {})
        if od_override is not None or "od" in medium:
            prof = self.profile(od_override, n_override)
            out["medium"] = {"od": prof.od, "sigma": prof.sigma,
                             "center": prof.center, "x_out": prof.x_out,
                             "calibration": prof.calibration}
            out["grid"] = {"n": prof.grid.n_points, "dx": prof.grid.dx,
                           "t_step": prof.grid.t_step,
                           "t_max": prof.grid.t_max}
        for name, sec in self.sections.items():
            if name in ("atom", "medium", "grid", "run"):
                continue
            out[name] = dict(sec)
        return out

    def content_hash(self, od_override: float | None = None,
                     n_override: int | None = None) -> str:
        payload = json.dumps(self.resolved(od_override, n_override),
                             sort_keys=True, default=str)
        digest = hashlib.sha256()
        digest.update(payload.encode())
        digest.update(self.source.encode())
        return digest.hexdigest()


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def load_config(path: str | None, mode: str = "",
                out: str | None = None,
                precision: str | None = None,
                threads: int | None = None) -> RunConfig:
    """Read an INI file (optional) and fold in command-line overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    source = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as handle:
                source = handle.read()
        except OSError as exc:
            raise ConfigError("cannot read config %s: %s" % (path, exc)) \
                from None
        try:
            parser.read_string(source, source=path)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
    sections = {name: dict(parser[name]) for name in parser.sections()}
    run = sections.pop("run", {})
    mode = mode or run.get("mode", "")
    if mode and mode not in MODES:
        raise ConfigError("[run] mode must be one of %s, not %r"
                          % ("/".join(MODES), mode))
    precision = precision or run.get("precision", "c128")
    if precision not in _PRECISIONS:
        raise ConfigError("[run] precision must be c64 or c128, not %r"
                          % precision)
    if threads is None:
        threads = _convert("run", "threads", run["threads"], int) \
            if "threads" in run else default_threads()
    if threads < 1:
        raise ConfigError("[run] threads must be >= 1")
    return RunConfig(mode=mode, out=out or run.get("out", "."),
                     precision=precision, threads=threads,
                     sections=sections, source=source)
