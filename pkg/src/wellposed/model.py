"""System description: coefficient functions, the system record, validation, file format.

A system is

    dx/dt = (P2 d^2/dz^2 + P1 d/dz + P0(z)) H(z) x,   z in [0, 1],
    u = WB1 tau(Hx),   0 = WB2 tau(Hx),   y = WC tau(Hx),

with the trace ``tau(h) = (h(1), h'(1), h(0), h'(0))`` stacked into a vector of
length 4n.  The state space carries the energy inner product
``<f, g> = 1/2 int g* H f``.

Spec files are JSON.  Matrices are lists of rows; an entry is either a number
or a two-element ``[re, im]`` list.  Coefficient functions are objects
``{"kind": ..., "coeffs": [...], "breakpoints": [...]}``.
"""
from __future__ import annotations

import dataclasses
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linalg
from .errors import DimensionError, SchemaError, SpecIOError

KINDS = ("constant", "polynomial", "piecewise-constant")

#: Number of uniform samples of [0, 1] used for pointwise checks on H and P0.
VALIDATION_SAMPLES = 101

#: Absolute/relative tolerance for the structural (adjointness) checks.
STRUCTURE_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


class CoefficientFunction:
    """Matrix-valued function of ``z`` on [0, 1].

    ``kind="constant"``
        ``coeffs = [C]``.
    ``kind="polynomial"``
        ``coeffs = [C0, C1, ...]`` and the value is ``sum_k Ck z**k``.
    ``kind="piecewise-constant"``
        ``coeffs = [C0, ..., Cp]`` and ``breakpoints = [b1, ..., bp]`` strictly
        increasing in (0, 1); ``Ci`` holds on ``[b_i, b_{i+1})`` with
        ``b_0 = 0`` and the last piece closed at 1.
    """

    def __init__(self, kind: str, coeffs, breakpoints=()):
        if kind not in KINDS:
            raise SchemaError(f"unknown coefficient kind {kind!r}; expected one of {KINDS}")
        mats = [linalg.as_cmatrix(c, "coefficient") for c in coeffs]
        if not mats:
            raise SchemaError("coefficient function needs at least one coefficient matrix")
        shape = mats[0].shape
        if shape[0] != shape[1] or any(c.shape != shape for c in mats):
            raise DimensionError(f"coefficient matrices must be square and equal-sized, got "
                                 f"{[c.shape for c in mats]}")
        bps = tuple(float(b) for b in breakpoints)
        if kind == "constant" and len(mats) != 1:
            raise SchemaError("constant coefficient takes exactly one matrix")
        if kind == "piecewise-constant":
            if len(bps) != len(mats) - 1:
                raise SchemaError(f"{len(mats)} pieces need {len(mats) - 1} breakpoints, got {len(bps)}")
            if any(not 0.0 < b < 1.0 for b in bps) or any(a >= b for a, b in zip(bps, bps[1:])):
                raise SchemaError(f"breakpoints must increase strictly inside (0, 1): {bps}")
        elif bps:
            raise SchemaError(f"breakpoints are only allowed for piecewise-constant, kind={kind}")
        self.kind = kind
        self.coeffs = tuple(_frozen(c) for c in mats)
        self.breakpoints = bps

    @classmethod
    def constant(cls, C) -> "CoefficientFunction":
        return cls("constant", [C])

    @property
    def size(self) -> int:
        return self.coeffs[0].shape[0]

    def __call__(self, z: float) -> np.ndarray:
        z = float(z)
        if not 0.0 <= z <= 1.0:
            raise ValueError(f"z = {z} outside [0, 1]")
        if self.kind == "constant":
            return np.array(self.coeffs[0])
        if self.kind == "polynomial":
            out = np.zeros_like(self.coeffs[0])
            for c in reversed(self.coeffs):
                out = out * z + c
            return out
        idx = int(np.searchsorted(self.breakpoints, z, side="right"))
        return np.array(self.coeffs[idx])

    def sample(self, zs) -> np.ndarray:
        """Values at every point of ``zs``, shape ``(len(zs), n, n)``."""
        return np.stack([self(z) for z in zs]) if len(zs) else np.zeros((0, self.size, self.size), complex)

    def is_constant(self) -> bool:
        first = self.coeffs[0]
        if self.kind == "polynomial":
            return all(not np.any(c) for c in self.coeffs[1:])
        return all(np.array_equal(c, first) for c in self.coeffs)

    def map(self, fn) -> "CoefficientFunction":
        """Apply a linear map to every coefficient matrix (e.g. negation or skew part)."""
        return CoefficientFunction(self.kind, [fn(c) for c in self.coeffs], self.breakpoints)

    def validation_points(self) -> np.ndarray:
        pts = np.linspace(0.0, 1.0, VALIDATION_SAMPLES)
        if self.breakpoints:
            pts = np.unique(np.concatenate([pts, self.breakpoints]))
        return pts

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "coeffs": [encode_matrix(c) for c in self.coeffs]}
        if self.breakpoints:
            d["breakpoints"] = list(self.breakpoints)
        return d

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoefficientFunction):
            return NotImplemented
        return (self.kind == other.kind and self.breakpoints == other.breakpoints
                and len(self.coeffs) == len(other.coeffs)
                and all(np.array_equal(a, b) for a, b in zip(self.coeffs, other.coeffs)))

    __hash__ = None

    def __repr__(self) -> str:
        return f"CoefficientFunction(kind={self.kind!r}, pieces={len(self.coeffs)}, n={self.size})"


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """One boundary control and observation system.

    Shapes are checked on construction (``DimensionError``); the structural
    hypotheses on ``P1, P2, H`` are *not* enforced here, see :func:`validate`.
    """

    n: int
    m: int
    P2: np.ndarray
    P1: np.ndarray
    P0: CoefficientFunction
    H: CoefficientFunction
    WB1: np.ndarray
    WB2: np.ndarray
    WC: np.ndarray
    name: str = ""

    def __post_init__(self):
        n, m = int(self.n), int(self.m)
        if n < 1:
            raise DimensionError(f"n must be positive, got {n}")
        if not 0 < m <= 2 * n:
            raise DimensionError(f"need 0 < m <= 2n = {2 * n}, got m = {m}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        expected = {"P2": (n, n), "P1": (n, n), "WB1": (m, 4 * n),
                    "WB2": (2 * n - m, 4 * n), "WC": (m, 4 * n)}
        for key, shape in expected.items():
            raw = np.array(getattr(self, key), dtype=complex)
            if raw.size == 0:
                raw = raw.reshape(shape if 0 in shape else (0, 0))
            if raw.ndim != 2 or raw.shape != shape:
                raise DimensionError(f"{key} has shape {raw.shape}, expected {shape}")
            if not np.all(np.isfinite(raw)):
                raise DimensionError(f"{key} has non-finite entries")
            object.__setattr__(self, key, _frozen(raw))
        for key in ("P0", "H"):
            cf = getattr(self, key)
            if not isinstance(cf, CoefficientFunction):
                cf = CoefficientFunction.constant(cf)
                object.__setattr__(self, key, cf)
            if cf.size != n:
                raise DimensionError(f"{key} is {cf.size}x{cf.size}, expected {n}x{n}")

    @property
    def W(self) -> np.ndarray:
        """Stacked control rows ``[WB1; WB2]`` (2n x 4n)."""
        return np.vstack([self.WB1, self.WB2])

    def replace(self, **changes) -> "SystemSpec":
        return dataclasses.replace(self, **changes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SystemSpec):
            return NotImplemented
        mats = ("P2", "P1", "WB1", "WB2", "WC")
        return (self.n == other.n and self.m == other.m and self.name == other.name
                and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in mats)
                and self.P0 == other.P0 and self.H == other.H)

    __hash__ = None


@dataclass(frozen=True)
class GridFunction:
    """Values of a C^n-valued function on the uniform grid of [0, 1] with N nodes."""

    values: np.ndarray  # shape (N, n)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 3:
            raise DimensionError(f"grid function needs shape (N >= 3, n), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def zeta(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N)

    @classmethod
    def from_callable(cls, fn, N: int, n: int | None = None) -> "GridFunction":
        zs = np.linspace(0.0, 1.0, N)
        vals = np.array([np.atleast_1d(fn(z)) for z in zs], dtype=complex)
        if n is not None and vals.shape[1] != n:
            raise DimensionError(f"callable returns {vals.shape[1]} components, expected {n}")
        return cls(vals)


def trapezoid_weights(N: int) -> np.ndarray:
    w = np.full(N, 1.0 / (N - 1))
    w[0] = w[-1] = 0.5 / (N - 1)
    return w


def energy_norm(f: GridFunction, H: CoefficientFunction) -> float:
    """``sqrt(1/2 int f* H f)`` by the composite trapezoid rule on the grid of ``f``."""
    if H.size != f.values.shape[1]:
        raise DimensionError(f"H is {H.size}x{H.size}, grid function has {f.values.shape[1]} components")
    Hs = H.sample(f.zeta)
    dens = np.einsum("ji,jik,jk->j", f.values.conj(), Hs, f.values).real
    val = 0.5 * float(trapezoid_weights(f.N) @ dens)
    return float(np.sqrt(max(val, 0.0)))


# ---------------------------------------------------------------- validation


@dataclass
class Check:
    name: str
    passed: bool
    defect: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    p0_skew: bool = False
    p0_skew_defect: float = 0.0
    H_min_eig: float = float("nan")
    H_max_eig: float = float("nan")
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        """True when every condition of the standing hypotheses holds."""
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def render(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            extra = f"  ({c.detail})" if c.detail else ""
            lines.append(f"{status:4s}  {c.name:<22s} defect={c.defect:.3e}{extra}")
        lines.append(f"info  P0 skew-adjoint        {str(self.p0_skew).lower()} "
                     f"(defect={self.p0_skew_defect:.3e})")
        for w in self.warnings:
            lines.append(f"warn  {w}")
        lines.append("assumptions: " + ("satisfied" if self.ok else "VIOLATED"))
        return "\n".join(lines)


def _rel(defect: float, scale: float) -> bool:
    return defect <= STRUCTURE_TOL * max(1.0, scale)


def validate(spec: SystemSpec) -> ValidationReport:
    """Check the standing hypotheses on a spec; never raises on a failed condition."""
    rep = ValidationReport()
    P1, P2 = spec.P1, spec.P2

    d1 = float(np.linalg.norm(P1 - linalg.dagger(P1), 2))
    rep.checks.append(Check("P1 self-adjoint", _rel(d1, np.linalg.norm(P1, 2)), d1))

    d2 = float(np.linalg.norm(P2 + linalg.dagger(P2), 2))
    rep.checks.append(Check("P2 skew-adjoint", _rel(d2, np.linalg.norm(P2, 2)), d2))

    sv = linalg.singular_values(P2)
    ratio = sv[-1] / sv[0] if sv[0] > 0 else 0.0
    rep.checks.append(Check("P2 invertible", bool(ratio > linalg.INVERTIBILITY_RTOL), float(sv[-1]),
                            f"sigma_min/sigma_max={ratio:.3e}"))

    pts = spec.H.validation_points()
    Hs = spec.H.sample(pts)
    dh = max(float(np.linalg.norm(h - linalg.dagger(h), 2)) for h in Hs)
    hscale = max(float(np.linalg.norm(h, 2)) for h in Hs)
    herm = _rel(dh, hscale)
    rep.checks.append(Check("H Hermitian", herm, dh))
    if herm:
        eigs = np.array([linalg.hermitian_eigenvalues(h, tol=1e-8) for h in Hs])
        rep.H_min_eig, rep.H_max_eig = float(eigs.min()), float(eigs.max())
        rep.checks.append(Check("H coercive", rep.H_min_eig > 0.0, max(0.0, -rep.H_min_eig),
                                f"m_H={rep.H_min_eig:.4g}, M_H={rep.H_max_eig:.4g} "
                                f"on {len(pts)} points"))
    else:
        rep.checks.append(Check("H coercive", False, float("nan"), "H not Hermitian"))
    if spec.H.kind == "piecewise-constant" and not spec.H.is_constant():
        rep.warnings.append("H is piecewise constant; C^1 regularity cannot be certified")

    stacked = np.vstack([spec.WB1, spec.WB2, spec.WC])
    rank = linalg.numerical_rank(stacked)
    rows = stacked.shape[0]
    rep.checks.append(Check("W full row rank", rank == rows, float(rows - rank),
                            f"rank {rank} of {rows} rows"))

    P0s = spec.P0.sample(spec.P0.validation_points())
    d0 = max(float(np.linalg.norm(p + linalg.dagger(p), 2)) for p in P0s)
    p0scale = max(float(np.linalg.norm(p, 2)) for p in P0s)
    rep.p0_skew = _rel(d0, p0scale)
    rep.p0_skew_defect = d0
    return rep


# ---------------------------------------------------------------- file format

_FIELDS = ("n", "m", "P2", "P1", "P0", "H", "WB1", "WB2", "WC")
_OPTIONAL = ("name",)


def encode_scalar(z):
    """Real values stay plain numbers; complex ones become ``[re, im]``."""
    z = complex(z)
    return z.real if z.imag == 0.0 else [z.real, z.imag]


def encode_matrix(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[encode_scalar(v) for v in row] for row in a]


def _decode_scalar(v, where: str) -> complex:
    if isinstance(v, bool):
        raise SchemaError(f"{where}: boolean is not a number")
    if isinstance(v, (int, float)):
        return complex(v)
    if (isinstance(v, list) and len(v) == 2
            and all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in v)):
        return complex(v[0], v[1])
    raise SchemaError(f"{where}: expected a number or [re, im], got {v!r}")


def _decode_matrix(rows, where: str, cols: int | None = None) -> np.ndarray:
    if not isinstance(rows, list) or any(not isinstance(r, list) for r in rows):
        raise SchemaError(f"{where}: a matrix is a list of rows")
    if not rows:
        return np.zeros((0, cols if cols is not None else 0), dtype=complex)
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DimensionError(f"{where}: ragged rows of lengths {sorted(widths)}")
    return np.array([[_decode_scalar(v, f"{where}[{i}][{j}]") for j, v in enumerate(r)]
                     for i, r in enumerate(rows)], dtype=complex)


def _decode_coefficient(obj, where: str) -> CoefficientFunction:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object with kind/coeffs")
    extra = set(obj) - {"kind", "coeffs", "breakpoints"}
    missing = {"kind", "coeffs"} - set(obj)
    if extra or missing:
        raise SchemaError(f"{where}: missing {sorted(missing)} / unknown {sorted(extra)} fields")
    if not isinstance(obj["coeffs"], list):
        raise SchemaError(f"{where}.coeffs must be a list of matrices")
    coeffs = [_decode_matrix(c, f"{where}.coeffs[{k}]") for k, c in enumerate(obj["coeffs"])]
    bps = obj.get("breakpoints", [])
    if not isinstance(bps, list):
        raise SchemaError(f"{where}.breakpoints must be a list")
    return CoefficientFunction(obj["kind"], coeffs, bps)


def parse_spec(document: str | dict) -> SystemSpec:
    """Build a :class:`SystemSpec` from JSON text (or an already-decoded dict)."""
    if isinstance(document, (str, bytes)):
        try:
            obj = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    else:
        obj = document
    if not isinstance(obj, dict):
        raise SchemaError("top level must be an object")
    missing = [k for k in _FIELDS if k not in obj]
    extra = [k for k in obj if k not in _FIELDS + _OPTIONAL]
    if missing or extra:
        raise SchemaError(f"missing fields {missing}, unknown fields {extra}")
    n, m = obj["n"], obj["m"]
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (n, m)):
        raise SchemaError("n and m must be integers")
    name = obj.get("name", "")
    if not isinstance(name, str):
        raise SchemaError("name must be a string")
    return SystemSpec(
        n=n, m=m,
        P2=_decode_matrix(obj["P2"], "P2"),
        P1=_decode_matrix(obj["P1"], "P1"),
        P0=_decode_coefficient(obj["P0"], "P0"),
        H=_decode_coefficient(obj["H"], "H"),
        WB1=_decode_matrix(obj["WB1"], "WB1", 4 * n),
        WB2=_decode_matrix(obj["WB2"], "WB2", 4 * n),
        WC=_decode_matrix(obj["WC"], "WC", 4 * n),
        name=name,
    )


def load_spec(path) -> SystemSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecIOError(f"cannot read {path}: {exc}") from exc
    return parse_spec(text)


def spec_to_dict(spec: SystemSpec) -> dict:
    d = {"n": spec.n, "m": spec.m,
         "P2": encode_matrix(spec.P2), "P1": encode_matrix(spec.P1),
         "P0": spec.P0.to_dict(), "H": spec.H.to_dict(),
         "WB1": encode_matrix(spec.WB1), "WB2": encode_matrix(spec.WB2),
         "WC": encode_matrix(spec.WC)}
    if spec.name:
        d = {"name": spec.name, **d}
    return d


def _dump_value(v, indent: str) -> str:
    # one matrix row per line keeps fixture files readable
    if isinstance(v, dict):
        inner = indent + "  "
        items = [f"{inner}{json.dumps(k)}: {_dump_value(x, inner)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + indent + "}"
    if isinstance(v, list) and v and all(isinstance(r, list) for r in v) and not _is_complex(v):
        inner = indent + "  "
        return "[\n" + ",\n".join(inner + _dump_value(r, inner) for r in v) + "\n" + indent + "]"
    return json.dumps(v)


def _is_complex(v) -> bool:
    return len(v) == 2 and all(isinstance(p, float) for p in v)


def dumps_spec(spec: SystemSpec) -> str:
    return _dump_value(spec_to_dict(spec), "") + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".",
                                   prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise SpecIOError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        Path(tmp).unlink(missing_ok=True)
        raise SpecIOError(f"cannot write {path}: {exc}") from exc


def emit_spec(spec: SystemSpec, path) -> None:
    atomic_write_text(path, dumps_spec(spec))


__all__ = [
    "CoefficientFunction", "SystemSpec", "GridFunction", "ValidationReport", "Check",
    "validate", "energy_norm", "parse_spec", "load_spec", "dumps_spec", "emit_spec",
    "spec_to_dict", "trapezoid_weights", "atomic_write_text",
]
