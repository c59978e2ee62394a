"""Persistence: the binary grid container and columnar text exports.

The container is a single file: an 8-byte magic, a version word, a JSON
header, then raw little-endian array payloads. The header carries enough
to reconstruct every array (name, dtype, shape, byte offset) plus free
metadata, so a file is self-describing and round-trips bitwise. Fields
are stored component-major: the flat component axis moves in front of the
spatial axes, keeping each component contiguous on disk.

Text output is reserved for 1-D and 2-D data: '#'-prefixed metadata lines,
one 'columns:' line naming the columns, then rows at %.17g, which is
lossless for doubles.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .core import GridSpec
from .evolver import PolaritonField, component_labels

MAGIC = b"RPOLGRID"
VERSION = 1

_DTYPES = {
    "c64": np.dtype("<c8"),
    "c128": np.dtype("<c16"),
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "i64": np.dtype("<i8"),
}
_NAMES = {np.dtype(k): v for v, k in
          (("c64", "complex64"), ("c128", "complex128"), ("f32", "float32"),
           ("f64", "float64"), ("i64", "int64"))}


class ContainerError(OSError):
    """File is not a readable container of a supported version."""


def _dtype_name(arr: np.ndarray) -> str:
    base = arr.dtype.newbyteorder("=")
    if base not in _NAMES:
        raise ContainerError("unsupported dtype %s" % arr.dtype)
    return _NAMES[base]


def write_container(path: str, arrays: dict, meta: dict | None = None) -> None:
    """Write named arrays plus a metadata mapping to one container file."""
    entries = []
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        kind = _dtype_name(arr)
        data = arr.astype(_DTYPES[kind], copy=False).tobytes()
        entries.append({"name": name, "dtype": kind,
                        "shape": list(arr.shape), "offset": offset})
        payloads.append(data)
        offset += len(data)
    header = json.dumps({"meta": meta or {}, "arrays": entries},
                        sort_keys=True).encode()
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", VERSION))
        handle.write(struct.pack("<Q", len(header)))
        handle.write(header)
        for data in payloads:
            handle.write(data)


def read_container(path: str) -> tuple[dict, dict]:
    """Load a container; returns ({name: array}, meta)."""
    with open(path, "rb") as handle:
        magic = handle.read(8)
        if magic != MAGIC:
            raise ContainerError("%s: bad magic %r" % (path, magic))
        version, = struct.unpack("<I", handle.read(4))
        if version != VERSION:
            raise ContainerError("%s: unsupported version %d" % (path, version))
        length, = struct.unpack("<Q", handle.read(8))
        try:
            header = json.loads(handle.read(length).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerError("%s: corrupt header (%s)" % (path, exc)) \
                from None
        payload = handle.read()
    arrays = {}
    for entry in header["arrays"]:
        dt = _DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        stop = start + count * dt.itemsize
        if stop > len(payload):
            raise ContainerError("%s: truncated array %r"
                                 % (path, entry["name"]))
        arrays[entry["name"]] = np.frombuffer(
            payload[start:stop], dtype=dt).reshape(shape).copy()
    return arrays, header["meta"]


# ---------------------------------------------------------------------------
# field containers


def save_field(path: str, fld: PolaritonField, meta: dict | None = None) -> None:
    """Store an n-photon field component-major with its grid and labels."""
    values = np.moveaxis(fld.values, -1, 0)
    grid = fld.grid
    info = {"kind": "field", "n": fld.n,
            "labels": component_labels(fld.n),
            "grid": {"n_points": grid.n_points, "dx": grid.dx,
                     "t_step": grid.t_step, "t_max": grid.t_max},
            "time": fld.time,
            "units": {"x": "um", "time": "us", "psi": "1"}}
    info.update(meta or {})
    write_container(path, {"psi": values}, info)


def load_field(path: str) -> tuple[PolaritonField, dict]:
    arrays, meta = read_container(path)
    if meta.get("kind") != "field" or "psi" not in arrays:
        raise ContainerError("%s: not a field container" % path)
    g = meta["grid"]
    grid = GridSpec(n_points=g["n_points"], dx=g["dx"],
                    t_step=g.get("t_step"), t_max=g.get("t_max"))
    values = np.moveaxis(arrays["psi"], 0, -1)
    return PolaritonField(np.ascontiguousarray(values), grid,
                          time=meta.get("time", 0.0)), meta


# ---------------------------------------------------------------------------
# columnar text


def write_columns(path: str, names: list, columns: list,
                  meta: dict | None = None) -> None:
    """Whitespace-separated text: meta lines, a columns line, %.17g rows."""
    table = np.column_stack([np.asarray(c, dtype=float).ravel()
                             for c in columns])
    lines = ["rydpol columns 1"]
    for key in sorted(meta or {}):
        lines.append("%s = %s" % (key, (meta or {})[key]))
    lines.append("columns: " + " ".join(names))
    np.savetxt(path, table, fmt="%.17g", header="\n".join(lines))


def read_columns(path: str) -> tuple[list, np.ndarray, dict]:
    names: list = []
    meta: dict = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("columns:"):
                names = body.split(":", 1)[1].split()
            elif " = " in body:
                key, value = body.split(" = ", 1)
                meta[key.strip()] = value
    table = np.loadtxt(path, ndmin=2)
    return names, table, meta


# ---------------------------------------------------------------------------
# slice export


def _complex_columns(values: np.ndarray) -> list:
    return [values.real, values.imag, np.abs(values), np.angle(values)]


def parse_slice(spec: str) -> dict:
    """Slice mini-language.

    'all' takes every grid point; 'axis=A,index=I' fixes spatial axis A at
    grid index I; 'diag=AB' takes the plane x_A = x_B (the corresponding
    relative coordinate set to zero, exact on the grid diagonal).
    """
    spec = spec.strip().lower()
    if spec == "all":
        return {"kind": "all"}
    parts = dict(item.split("=", 1) for item in spec.split(",") if "=" in item)
    if "axis" in parts:
        if "index" not in parts:
            raise ValueError("axis slice needs index=")
        return {"kind": "axis", "axis": int(parts["axis"]),
                "index": int(parts["index"])}
    if "diag" in parts:
        pair = parts["diag"]
        if len(pair) != 2 or not pair.isdigit():
            raise ValueError("diag wants two axis digits, e.g. diag=01")
        return {"kind": "diag", "axes": (int(pair[0]), int(pair[1]))}
    raise ValueError("cannot parse slice %r" % spec)


def regrid_and_export(field_path: str, spec: str, out_path: str,
                      component: str | None = None) -> None:
    """Cut one component of a stored field and emit plot-ready columns.

    Columns are the surviving coordinates followed by Re, Im, modulus, and
    phase. The component defaults to the all-photon slot (first label).
    """
    fld, meta = load_field(field_path)
    labels = meta.get("labels", component_labels(fld.n))
    label = component or labels[0]
    if label not in labels:
        raise ValueError("component %r not in %s" % (label, labels))
    values = fld.values[..., labels.index(label)]
    x = fld.grid.x
    n = values.ndim
    cut = parse_slice(spec)
    if cut["kind"] == "all":
        coords = np.meshgrid(*([x] * n), indexing="ij")
        names = ["x%d" % (i + 1) for i in range(n)]
        picked = values
    elif cut["kind"] == "axis":
        axis, index = cut["axis"], cut["index"]
        if not 0 <= axis < n:
            raise ValueError("axis %d out of range for %d-D field"
                             % (axis, n))
        if not 0 <= index < values.shape[axis]:
            raise ValueError("index %d outside grid" % index)
        picked = np.take(values, index, axis=axis)
        rest = [i for i in range(n) if i != axis]
        coords = np.meshgrid(*([x] * len(rest)), indexing="ij")
        names = ["x%d" % (i + 1) for i in rest]
    else:
        a, b = cut["axes"]
        if not (0 <= a < n and 0 <= b < n) or a == b:
            raise ValueError("diag axes (%d,%d) invalid for %d-D field"
                             % (a, b, n))
        picked = np.diagonal(values, axis1=min(a, b), axis2=max(a, b))
        # diagonal axis arrives last; the common coordinate comes first
        picked = np.moveaxis(picked, -1, 0)
        rest = [i for i in range(n) if i not in (a, b)]
        coords = np.meshgrid(x, *([x] * len(rest)), indexing="ij")
        names = ["x%d%d" % (min(a, b) + 1, max(a, b) + 1)] + \
                ["x%d" % (i + 1) for i in rest]
    columns = [c.ravel() for c in coords] + _complex_columns(picked)
    write_columns(out_path, names + ["re", "im", "abs", "arg"], columns,
                  meta={"component": label, "slice": spec,
                        "source": field_path})
