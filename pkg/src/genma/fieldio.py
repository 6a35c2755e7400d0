"""Reading and writing fields, problem files and reports.

Field files start with the 8-byte magic ``GMAFIELD``, a little-endian
``uint64`` header length and a UTF-8 JSON header, followed by the raw
little-endian samples in C order.  Scalars are stored as ``<f8`` with shape
``grid.shape``; (p,p)-forms as ``<c16`` with shape ``grid.shape + (N, N)``
where rows and columns run over increasing multi-indices in lexicographic
order.
"""
from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidProblem
from .forms import EllipticityParams, PPForm, multi_indices
from .torus import FormField, ScalarField, TorusGrid, band_limited, spectral_ddbar

MAGIC = b"GMAFIELD"
FORMAT_VERSION = 1


# ---- JSON with fixed 17-digit floats ------------------------------------

def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(None)
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float printed at 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


# ---- binary fields ------------------------------------------------------

def _header(field) -> dict:
    grid = field.grid
    head = {"version": FORMAT_VERSION, "n": grid.n, "sizes": list(grid.sizes), "axes": "x1,y1,...,xn,yn"}
    if isinstance(field, ScalarField):
        head.update(kind="scalar", degree=0, dtype="<f8", shape=list(grid.shape))
    else:
        N = field.coeffs.shape[-1]
        head.update(kind="form", degree=field.degree, dtype="<c16",
                    shape=list(grid.shape) + [N, N],
                    indices=[list(I) for I in multi_indices(grid.n, field.degree)])
    return head


def write_field(path, field) -> None:
    head = json.dumps(_header(field), sort_keys=True).encode()
    data = field.values if isinstance(field, ScalarField) else field.coeffs
    dtype = "<f8" if isinstance(field, ScalarField) else "<c16"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(np.ascontiguousarray(data, dtype=dtype).tobytes())


def read_field(path):
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a field file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    head = json.loads(raw[16:16 + hlen])
    if head.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported field format version {head.get('version')}")
    grid = TorusGrid(head["n"], head["sizes"])
    data = np.frombuffer(raw[16 + hlen:], dtype=head["dtype"]).reshape(head["shape"])
    if head["kind"] == "scalar":
        return ScalarField(grid, data.copy())
    return FormField(grid, PPForm(data.copy(), grid.n, head["degree"]))


# ---- problem files ------------------------------------------------------

def _complex_matrix(rows) -> np.ndarray:
    a = np.asarray(rows, dtype=float)
    if a.ndim == 3:
        return a[..., 0] + 1j * a[..., 1]
    return a.astype(complex)


def _modes(spec):
    return [(m["k"], m.get("a", 0.0), m.get("b", 0.0)) for m in spec]


def form_from_spec(spec, grid: TorusGrid, degree: int, omega: FormField | None = None) -> FormField:
    """Build a field from a JSON form description.

    Keys: ``omega_power`` (use ``omega^degree``) or ``matrix`` (constant
    coefficient matrix, real or ``[re, im]`` entries) or ``euclidean``;
    ``scale``; ``modulation`` (multiply by ``1 + sum of modes``); ``ddbar``
    (add ``i ddbar`` of a trigonometric potential, degree 1 only).
    """
    n = grid.n
    if not isinstance(spec, dict):
        raise InvalidProblem(f"form description must be an object, got {spec!r}", check="schema")
    if "matrix" in spec:
        c = _complex_matrix(spec["matrix"])
        form = FormField.constant(grid, PPForm(c, n, degree))
    elif spec.get("omega_power"):
        if omega is None:
            raise InvalidProblem("omega_power used before omega is defined", check="schema")
        form = omega.power(degree)
    elif spec.get("euclidean", False) or not spec:
        form = FormField.constant(grid, PPForm.euclidean(n).power(degree))
    else:
        form = None
    if form is None and "ddbar" not in spec:
        raise InvalidProblem(f"cannot interpret form description {spec!r}", check="schema")
    if form is None:
        form = FormField.constant(grid, PPForm.zero(n, degree))
    form = form * float(spec.get("scale", 1.0))
    if "modulation" in spec:
        form = form * (1.0 + band_limited(grid, _modes(spec["modulation"])))
    if "ddbar" in spec:
        if degree != 1:
            raise InvalidProblem("ddbar perturbations are only defined for (1,1) forms", check="schema")
        psi = ScalarField(grid, band_limited(grid, _modes(spec["ddbar"])))
        form = form + spectral_ddbar(psi)
    return form


def grid_from_config(cfg: dict, override=None) -> TorusGrid:
    n = int(cfg["n"])
    sizes = cfg.get("grid", 16)
    sizes = [int(sizes)] * n if np.isscalar(sizes) else [int(s) for s in sizes]
    if override is not None:
        if np.isscalar(override):
            # a single number refines the first coordinate, where fixtures vary
            sizes[0] = int(override)
        else:
            sizes = [int(s) for s in override]
    return TorusGrid(n, tuple(sizes))


def witness_from_config(spec):
    if spec is None or spec == "auto":
        return None
    return EllipticityParams(float(spec["delta"]), int(spec["k0"]))


def load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidProblem(f"{path}: not valid JSON ({exc})", check="schema") from exc


def problem_from_config(cfg: dict, grid_override=None, validate: bool = True):
    """GmaProblem from the plain ``alphas`` schema."""
    from .core import GmaProblem, fit_witness

    grid = grid_from_config(cfg, grid_override)
    n = grid.n
    omega = form_from_spec(cfg.get("omega", {"euclidean": True}), grid, 1)
    specs = cfg.get("alphas")
    if not isinstance(specs, list) or len(specs) != n:
        raise InvalidProblem(f"'alphas' must list {n} entries (null for zero)", check="schema")
    alphas = [None if s is None else form_from_spec(s, grid, k, omega) for k, s in enumerate(specs, start=1)]
    witness = witness_from_config(cfg.get("witness"))
    if witness is None:
        witness = fit_witness(omega, alphas)
    return GmaProblem(grid, omega, alphas, witness, validate=validate,
                      allow_zero_top=bool(cfg.get("allow_zero_top", False)))


def chern_from_config(cfg: dict, grid_override=None):
    from .chern_weil import ChernData

    block = cfg["chern"]
    grid = grid_from_config(cfg, grid_override)
    omega = form_from_spec(block.get("omega", {"euclidean": True}), grid, 1)
    theta = form_from_spec(block["Theta0"], grid, 1, omega)
    eta = form_from_spec(block["eta"], grid, grid.n, omega)
    return ChernData(theta, omega, eta)


def slag_from_config(cfg: dict, grid_override=None):
    from .slag import SlagData

    block = cfg["slag"]
    grid = grid_from_config(cfg, grid_override)
    if grid.n != 3:
        raise InvalidProblem("the slag block needs n = 3", check="schema")
    omega = form_from_spec(block.get("omega", {"euclidean": True}), grid, 1)
    if "proportional" in block:
        theta = omega * float(block["proportional"])
    else:
        theta = form_from_spec(block["Theta"], grid, 1, omega)
    return SlagData.from_fields(omega, theta)


def problem_kind(cfg: dict) -> str:
    for kind in ("chern", "slag"):
        if kind in cfg:
            return kind
    return "gma"
